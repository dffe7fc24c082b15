import numpy as np
import pytest

from redistrib.net import Mlp


def two_node_optimal_net():
    """h(x, y) = 2/3 relu(x+y-1) + 1/6 relu(5x+3y-2) + 2/3, optimal for n=3."""
    return Mlp(
        2, (2,),
        (np.array([[1.0, 1.0], [5.0, 3.0]]), np.array([[2 / 3, 1 / 6]])),
        (np.array([-1.0, -2.0]), np.array([2 / 3])),
    )


def zero_net(input_dim, hidden=1):
    return Mlp(
        input_dim, (hidden,),
        (np.zeros((hidden, input_dim)), np.zeros((1, hidden))),
        (np.zeros(hidden), np.zeros(1)),
    )


@pytest.fixture
def optimal3():
    return two_node_optimal_net()


@pytest.fixture
def zero3():
    return zero_net(2)

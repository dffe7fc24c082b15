"""Known redistribution mechanisms as ReLU networks, for regression tests.

Closed forms written with max terms are rewritten through
max(a, b) = b + ReLU(a - b); direct linear tails become either an
always-active hidden node (when the tail is provably positive on the input
domain, which keeps the published node count) or the network's affine skip
term.  All nine 3-agent mechanisms are exactly optimal at ratio 2/3; the
4- and 5-agent networks are near optimal with published gaps below 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, RefusalError
from .mechanism import Mechanism, TypeProfile
from .net import Mlp, forward_batch, serialize

DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True)
class KnownMechanism:
    name: str
    n: int
    mechanism: Mechanism
    note: str


def _mlp(rows, out_weights, out_bias, skip=None):
    """rows: list of (w..., bias) per hidden node; single hidden layer."""
    rows = np.array(rows, dtype=np.float64)
    w1, b1 = rows[:, :-1], rows[:, -1]
    w2 = np.array([out_weights], dtype=np.float64)
    b2 = np.array([float(out_bias)])
    skip_arr = None if skip is None else np.array(skip, dtype=np.float64)
    return Mlp(w1.shape[1], (w1.shape[0],), (w1, w2), (b1, b2), skip_arr)


def _three_agent_mechanisms():
    third, half, sixth = 1.0 / 3.0, 0.5, 1.0 / 6.0
    two3 = 2.0 / 3.0
    mechs = [
        ("two-node", _mlp([(1, 1, -1), (5, 3, -2)], [two3, sixth], two3),
         "smallest known optimal form, 2 hidden nodes"),
        ("naroditskiy12", _mlp([(1, 1, -1), (1, 1, -half), (0, 1, -half)],
                               [5 / 6, two3, -third], two3),
         "prior optimal form via max terms"),
        ("guo19", _mlp([(1, 1, -two3), (1, 1, -1), (0, 1, -two3)],
                       [1, half, -half], two3),
         "prior optimal form via max terms"),
        ("linear-tail-a", _mlp([(1, 1, -two3), (1, 1, -1)], [half, two3], two3,
                               skip=[third, 0]),
         "trained form with x/3 tail"),
        ("linear-tail-b", _mlp([(1, 1, -two3), (-1, -1, 1)], [half, two3], 0.0,
                               skip=[1, two3]),
         "trained form with reversed hinge"),
        ("linear-tail-c", _mlp([(1, 1, -1), (0.7, 0.5, -third)], [two3, 1], two3,
                               skip=[2 / 15, 0]),
         "trained form with asymmetric hinge"),
        ("linear-tail-d", _mlp([(-5 / 6, -half, third), (1, 1, -1)], [1, two3], third,
                               skip=[5 / 6, half]),
         "trained form with negative hinge"),
        ("linear-tail-e", _mlp([(-1, -1, 1), (-5 / 6, -half, third)], [two3, 1], -third,
                               skip=[1.5, 7 / 6]),
         "trained form with steep tail"),
        ("linear-tail-f", _mlp([(1, 1, -1), (-half, -half, third)], [two3, 1], third,
                               skip=[5 / 6, half]),
         "trained form with symmetric negative hinge"),
    ]
    return [KnownMechanism(name, 3, Mechanism(3, net, 0.0), note)
            for name, net, note in mechs]


def _four_agent_mechanism():
    # The published linear tail is strictly positive on the input box, so it
    # is representable as a fifth always-active hidden node, matching the
    # published five-node count.
    rows = [
        (-0.72198910, -0.59272164, -0.59252590, 0.59262365),
        (-0.44851873, -0.59390205, -0.38576084, 0.38560897),
        (0.19248982, 0.45704255, 0.44363350, -0.22181663),
        (-0.48196214, -0.30973950, -0.09149375, 0.36671883),
        (0.91974893, 0.65584177, 0.66457125, 0.22181873),
    ]
    net = _mlp(rows, [1, 1, 1, -1, 1], 0.0)
    return [KnownMechanism("five-node", 4, Mechanism(4, net, 0.0),
                           "near optimal, published gap below 1e-4")]


def _five_agent_mechanism():
    rows = [
        (0.07415187, 0.07656296, -0.01386362, -0.02645663, 0.04038201),
        (-0.02817636, -0.02131834, 0.15407732, 0.10997507, 0.0),
        (-0.00030150, -0.19296961, -0.14009516, -0.13931695, 0.21839742),
        (0.09233555, 0.11879063, 0.22207867, 0.05774284, -0.09739726),
        (-0.02110755, -0.16953833, -0.08211072, -0.15426219, 0.07712195),
        (-0.09167415, -0.16804517, 0.01678468, -0.37599716, 0.12932928),
        (0.06884780, 0.04966597, 0.05180322, 0.01322317, -0.00402523),
        (-0.06963717, -0.05677436, 0.09816764, -0.03466703, -0.06411558),
        (-0.45287389, -0.43648976, -0.43619680, -0.43692699, 0.43656296),
        (0.25219166, 0.41010812, 0.28310004, 0.23790778, -0.23790598),
        (-0.22243375, -0.15597281, -0.21871096, -0.13584307, 0.12931196),
        (-0.01024520, 0.09695699, 0.10965593, 0.11288858, 0.06615839),
        (0.30046332, 0.24649654, 0.24621379, 0.24596024, -0.24610433),
        (-0.08688652, -0.07597235, -0.10597801, 0.04476466, 0.03060341),
        (0.36045450, 0.23456469, 0.14923730, 0.36828747, -0.18414603),
        (-0.00403373, 0.03397270, 0.09138362, 0.03633371, 0.05691386),
        (0.79493202, 0.54317321, 0.42426067, 0.36043567, -0.61394592),
    ]
    out = [1, 1, 1, 1, 1, -1, 1, 1, 1, 1, 1, 1, 1, -1, 1, 1, -1]
    skip = [0.40339699, 0.48773447, 0.15870629, 0.27166277]
    net = _mlp(rows, out, -0.00777263, skip=skip)
    return [KnownMechanism("seventeen-node", 5, Mechanism(5, net, 0.0),
                           "near optimal, published gap 5.8159e-05")]


def known_mechanisms(n):
    """All published mechanisms for n agents (supported: 3, 4, 5)."""
    if n == 3:
        return _three_agent_mechanisms()
    if n == 4:
        return _four_agent_mechanism()
    if n == 5:
        return _five_agent_mechanism()
    raise ContractViolation(f"no published mechanisms for n={n}")


def distinctness_check(mechs, resolution=201):
    """Pairwise max |h_i - h_j| over a sorted input grid; > 1e-6 is distinct."""
    if not mechs:
        return np.zeros((0, 0))
    dims = {m.mechanism.net.input_dim for m in mechs}
    if len(dims) != 1:
        raise ContractViolation("mechanisms must share the agent count")
    d = dims.pop()
    from math import comb
    from itertools import combinations_with_replacement
    if comb(d + resolution - 1, d) > 10**7:
        raise RefusalError("distinctness grid too large")
    levels = np.linspace(0.0, 1.0, resolution)
    pts = levels[np.array(list(combinations_with_replacement(range(resolution), d)))]
    values = [forward_batch(m.mechanism.net, pts) + m.mechanism.shift for m in mechs]
    k = len(mechs)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = float(np.max(np.abs(values[i] - values[j])))
    return out


def fixture_filename(km):
    return f"n{km.n}_{km.name}.json"


def write_fixture_files(directory=DATA_DIR):
    """Regenerate the shipped mechanism files; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for n in (3, 4, 5):
        for km in known_mechanisms(n):
            path = directory / fixture_filename(km)
            path.write_text(serialize(km.mechanism.net, km.n, km.mechanism.shift),
                            encoding="utf-8")
            paths.append(path)
    return paths

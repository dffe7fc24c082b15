import numpy as np
import pytest

from conftest import two_node_optimal_net, zero_net
from oracles import enumerate_worst_case
from redistrib.certifier import (
    activation_bounds,
    build_left_mip,
    build_right_mip,
    certify,
    grid_oracle,
    preactivation_intervals,
    solve_mip,
)
from redistrib.errors import ContractViolation, RefusalError
from redistrib.mechanism import Mechanism, TypeProfile, violations
from redistrib.net import Mlp, forward_batch, init_random


def tiny_net(seed, hidden, input_dim=2):
    net = init_random(input_dim, (hidden,), seed)
    # zero-initialized biases leave half the encodings degenerate; nudge them
    rng = np.random.default_rng(seed + 999)
    biases = (rng.uniform(-0.4, 0.4, hidden), np.array([rng.uniform(-0.2, 0.2)]))
    return Mlp(input_dim, (hidden,), net.weights, tuple(biases))


class TestActivationBounds:
    def test_simple_node(self):
        net = Mlp(2, (1,), (np.array([[1.0, 1.0]]), np.ones((1, 1))),
                  (np.array([-1.0]), np.zeros(1)))
        (lo, hi), = activation_bounds(net)
        assert lo[0] == pytest.approx(-1.0)
        assert hi[0] == pytest.approx(1.0)

    def test_published_node(self, optimal3):
        (lo, hi), = activation_bounds(optimal3)
        assert lo[1] == pytest.approx(-2.0)
        assert hi[1] == pytest.approx(6.0)

    def test_zero_weight_node(self):
        net = Mlp(2, (1,), (np.zeros((1, 2)), np.ones((1, 1))),
                  (np.array([0.7]), np.zeros(1)))
        (lo, hi), = activation_bounds(net)
        assert lo[0] == hi[0] == pytest.approx(0.7)

    @pytest.mark.parametrize("seed", range(8))
    def test_random_inputs_stay_inside(self, seed):
        net = init_random(3, (6, 4), seed)
        rng = np.random.default_rng(seed)
        intervals = activation_bounds(net)
        from redistrib.net import _forward_full
        xs = rng.random((1000, 3))
        pre, _ = _forward_full(net, xs)
        for (lo, hi), z in zip(intervals, pre):
            assert np.all(z >= lo - 1e-12)
            assert np.all(z <= hi + 1e-12)

    def test_sorted_domain_is_tighter(self):
        # mixed-sign weights: the box allows descending inputs, the sorted
        # polytope does not
        net = Mlp(2, (1,), (np.array([[1.0, -1.0]]), np.ones((1, 1))),
                  (np.zeros(1), np.zeros(1)))
        (lo_box, hi_box), = preactivation_intervals(net, sorted_inputs=False)
        (lo_sorted, hi_sorted), = preactivation_intervals(net, sorted_inputs=True)
        assert hi_box == pytest.approx(1.0)
        assert hi_sorted == pytest.approx(0.0)  # x <= y forces x - y <= 0
        assert lo_box == lo_sorted == pytest.approx(-1.0)

    @pytest.mark.parametrize("seed", range(6))
    def test_sorted_bounds_contain_sorted_inputs(self, seed):
        net = init_random(4, (8,), seed)
        rng = np.random.default_rng(seed)
        intervals = preactivation_intervals(net, sorted_inputs=True)
        from redistrib.net import _forward_full
        xs = np.sort(rng.random((2000, 4)), axis=1)
        pre, _ = _forward_full(net, xs)
        for (lo, hi), z in zip(intervals, pre):
            assert np.all(z >= lo - 1e-12)
            assert np.all(z <= hi + 1e-12)


class TestMipConstruction:
    def test_binary_count_small(self, optimal3):
        prob = build_left_mip(optimal3, 3)
        assert len(prob.binary_indices) == 2 * 3 + 1

    def test_binary_count_large(self):
        net = init_random(4, (20,), 0)
        prob = build_left_mip(net, 5)
        assert len(prob.binary_indices) == 101

    def test_input_dim_checked(self, optimal3):
        with pytest.raises(ContractViolation):
            build_left_mip(optimal3, 4)

    def test_alpha_checked(self, optimal3):
        with pytest.raises(ContractViolation):
            build_right_mip(optimal3, 3, 1.5)


class TestSolveMip:
    def test_zero_net_left_maximum(self, zero3):
        res = solve_mip(build_left_mip(zero3, 3), budget=10_000)
        assert res.exact
        assert res.optimum == pytest.approx(6.0, abs=1e-9)
        assert np.allclose(res.theta, [1, 1, 1], atol=1e-9)

    def test_zero_net_right_never_positive(self, zero3):
        res = solve_mip(build_right_mip(zero3, 3, 1.0), budget=10_000)
        assert res.optimum == pytest.approx(-2.0, abs=1e-9)

    def test_all_binaries_fixed_equals_lp(self, zero3):
        # zero weights force every interval to [bias, bias] = [0, 0], so all
        # node binaries are pinned and the MIP is its own relaxation up to
        # the s indicator
        prob = build_left_mip(zero3, 3)
        fixed = prob.lp.upper[prob.binary_indices[:-1]]
        assert np.all(fixed == 0.0)

    def test_budget_exhaustion_flagged(self, optimal3):
        res = solve_mip(build_right_mip(optimal3, 3, 2 / 3), budget=2)
        assert not res.exact

    def test_budget_validation(self, optimal3):
        with pytest.raises(ContractViolation):
            solve_mip(build_left_mip(optimal3, 3), budget=0)


class TestCertify:
    def test_optimal_fixture_is_optimal(self, optimal3):
        cert = certify(optimal3, 3, 2 / 3)
        assert cert.exact
        assert cert.total <= 1e-6

    def test_above_bound_goal_fails(self, optimal3):
        cert = certify(optimal3, 3, 0.7)
        assert cert.eps_right > 1e-4

    def test_certificate_soundness(self, optimal3):
        # the reported worst-case profile re-evaluates to the reported amount
        cert = certify(optimal3, 3, 0.75)
        mech = Mechanism(3, optimal3, 0.0)
        v = violations(mech, cert.theta_right, 0.75)
        assert v.right == pytest.approx(cert.eps_right, abs=1e-7)

    @pytest.mark.parametrize("seed", range(6))
    def test_shift_restores_non_deficit(self, seed):
        # the shifted mechanism is non-deficit everywhere and loses at most
        # eps_left + eps_right of ratio (the goal may go negative here)
        from redistrib.mechanism import shift_to_feasible
        net = tiny_net(seed, 3)
        cert = certify(net, 3, 0.5)
        mech = shift_to_feasible(net, cert.eps_left, 3)
        recert = certify(mech.net, 3, 0.5 - cert.total, shift=mech.shift)
        assert recert.eps_left <= 1e-7
        assert recert.eps_right <= 1e-7


class TestExactness:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_enumeration_left(self, seed):
        net = tiny_net(seed, 2 + seed % 3)
        res = solve_mip(build_left_mip(net, 3), budget=100_000)
        ref, _ = enumerate_worst_case(net, 3, "left")
        assert res.exact
        assert res.optimum == pytest.approx(ref, abs=1e-9)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_enumeration_right(self, seed):
        net = tiny_net(seed + 50, 2)
        alpha = 0.5 + 0.04 * seed
        res = solve_mip(build_right_mip(net, 3, alpha), budget=100_000)
        ref, _ = enumerate_worst_case(net, 3, "right", alpha=alpha)
        assert res.exact
        assert res.optimum == pytest.approx(ref, abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_dominates_random_profiles(self, seed):
        net = tiny_net(seed + 20, 4)
        rng = np.random.default_rng(seed)
        res = solve_mip(build_left_mip(net, 3), budget=100_000)
        thetas = np.sort(rng.random((1000, 3)), axis=1)
        prob = build_left_mip(net, 3)
        values = [prob.objective_at(t) for t in thetas]
        assert res.optimum >= max(values) - 1e-9


class TestGridOracle:
    def test_zero_net_left(self, zero3):
        value, profile = grid_oracle(zero3, 3, 0.5, 11, side="left")
        assert value == pytest.approx(6.0)
        assert profile.values == (1.0, 1.0, 1.0)

    def test_never_beats_mip(self, optimal3):
        res = solve_mip(build_left_mip(optimal3, 3), budget=100_000)
        value, _ = grid_oracle(optimal3, 3, 0.5, 51, side="left")
        assert value <= res.optimum + 1e-9

    def test_optimal_fixture_grid_clean(self, optimal3):
        value, _ = grid_oracle(optimal3, 3, 2 / 3, 101, side="both")
        assert value <= 1e-6

    def test_resolution_validated(self, optimal3):
        with pytest.raises(ContractViolation):
            grid_oracle(optimal3, 3, 0.5, 1)

    def test_size_guard(self, optimal3):
        net = init_random(7, (2,), 0)
        with pytest.raises(RefusalError):
            grid_oracle(net, 8, 0.5, 101)

    def test_shifted_network(self, zero3):
        value, _ = grid_oracle(zero3, 3, 0.5, 11, side="left", shift=0.5)
        assert value == pytest.approx(6.0 - 1.5)

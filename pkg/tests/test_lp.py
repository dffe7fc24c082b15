import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from redistrib.errors import ContractViolation
from redistrib.lp import EQ, GE, LE, LinearProgram, Simplex, solve_lp


def box_lp(c, A, rels, b, lo, hi, const=0.0):
    return LinearProgram(np.array(c, float), np.array(A, float), list(rels),
                         np.array(b, float), np.array(lo, float),
                         np.array(hi, float), objective_constant=const)


class TestBasics:
    def test_single_bound(self):
        lp = box_lp([1], [[1]], [LE], [3], [0], [10])
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(3.0, abs=1e-9)

    def test_infeasible_pair(self):
        lp = box_lp([1], [[1], [1]], [LE, GE], [1, 2], [0], [10])
        assert solve_lp(lp).status == "infeasible"

    def test_unbounded(self):
        lp = box_lp([1], np.zeros((0, 1)), [], [], [0], [np.inf])
        assert solve_lp(lp).status == "unbounded"

    def test_equality_row(self):
        lp = box_lp([1, 1], [[1, 1]], [EQ], [1], [0, 0], [1, 1])
        sol = solve_lp(lp)
        assert sol.value == pytest.approx(1.0, abs=1e-9)

    def test_objective_constant(self):
        lp = box_lp([1], [[1]], [LE], [2], [0], [5], const=10.0)
        assert solve_lp(lp).value == pytest.approx(12.0, abs=1e-9)

    def test_free_variables(self):
        # minimize |structure|: maximize -x with x free but pinned by equality
        lp = box_lp([1, 0], [[1, 2], [1, -1]], [EQ, EQ], [4, 1],
                    [-np.inf, -np.inf], [np.inf, np.inf])
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.x[0] == pytest.approx(2.0, abs=1e-9)
        assert sol.x[1] == pytest.approx(1.0, abs=1e-9)

    def test_negative_lower_bounds(self):
        lp = box_lp([-1, -1], [[1, 1]], [GE], [-3], [-5, -5], [5, 5])
        sol = solve_lp(lp)
        assert sol.value == pytest.approx(3.0, abs=1e-9)

    def test_bound_validation(self):
        with pytest.raises(ContractViolation):
            box_lp([1], [[1]], [LE], [1], [2], [1])

    def test_start_point_feasible_no_phase1(self):
        lp = box_lp([1, 2], [[1, 1], [1, 0]], [LE, LE], [1.5, 1], [0, 0], [1, 1])
        sol = solve_lp(lp)
        assert sol.value == pytest.approx(2.5, abs=1e-9)  # x = (0.5, 1)


class TestResolve:
    def test_fix_and_resolve_matches_cold(self):
        rng = np.random.default_rng(5)
        c = rng.standard_normal(6)
        A = rng.standard_normal((4, 6))
        b = rng.random(4) + 1.0
        lp = box_lp(c, A, [LE] * 4, b, np.zeros(6), np.ones(6))
        sx = Simplex(lp)
        sol0 = sx.solve()
        assert sol0.status == "optimal"
        warm = sx.fix_and_resolve([(2, 1.0)], exact=True)
        lower = lp.lower.copy()
        upper = lp.upper.copy()
        lower[2] = upper[2] = 1.0
        cold = solve_lp(lp, lower=lower, upper=upper)
        assert warm.status == cold.status == "optimal"
        assert warm.value == pytest.approx(cold.value, abs=1e-8)

    def test_resolve_detects_infeasible(self):
        lp = box_lp([1, 1], [[1, 1]], [LE], [0.5], [0, 0], [1, 1])
        sx = Simplex(lp)
        sx.solve()
        sol = sx.fix_and_resolve([(0, 1.0)])
        assert sol is not None and sol.status == "infeasible"

    def test_export_resume_round_trip(self):
        rng = np.random.default_rng(11)
        c = rng.standard_normal(8)
        A = rng.standard_normal((5, 8))
        b = rng.random(5) + 1.0
        lp = box_lp(c, A, [LE] * 5, b, np.zeros(8), np.ones(8))
        sx = Simplex(lp)
        base = sx.solve()
        snap = sx.export_state()
        assert snap is not None
        lower = lp.lower.copy()
        upper = lp.upper.copy()
        lower[1] = upper[1] = 0.0
        resumed = Simplex.resume(lp, lower, upper, snap)
        sol = resumed.resolve(exact=True)
        cold = solve_lp(lp, lower=lower, upper=upper)
        assert sol.value == pytest.approx(cold.value, abs=1e-8)


def _scipy_reference(lp):
    from scipy.optimize import linprog
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, rel, rhs in zip(lp.lhs, lp.relations, lp.rhs):
        if rel == LE:
            A_ub.append(row)
            b_ub.append(rhs)
        elif rel == GE:
            A_ub.append(-row)
            b_ub.append(-rhs)
        else:
            A_eq.append(row)
            b_eq.append(rhs)
    res = linprog(
        -lp.objective,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=list(zip(lp.lower, lp.upper)),
        method="highs",
    )
    return res


class TestAgainstScipy:
    @pytest.mark.parametrize("seed", range(25))
    def test_random_bounded_lps(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, 7))
        c = rng.standard_normal(n)
        A = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        rels = [(LE, GE, EQ)[int(k)] for k in rng.integers(0, 3, m)]
        lo = np.where(rng.random(n) < 0.2, -np.inf, -rng.random(n))
        hi = np.where(rng.random(n) < 0.2, np.inf, rng.random(n) + 0.5)
        lp = box_lp(c, A, rels, b, lo, hi)
        ref = _scipy_reference(lp)
        sol = solve_lp(lp)
        if ref.status == 2:
            assert sol.status == "infeasible"
        elif ref.status == 3:
            assert sol.status in ("unbounded", "optimal")
            if sol.status == "optimal":  # highs can call dual-degenerate unbounded
                pytest.skip("status mismatch tolerated only one way")
        else:
            assert sol.status == "optimal"
            assert sol.value == pytest.approx(-ref.fun, abs=1e-7, rel=1e-7)

    @pytest.mark.parametrize("seed", range(12))
    def test_degenerate_lps(self, seed):
        # many duplicated rows and zero rhs force degenerate pivoting
        rng = np.random.default_rng(seed + 500)
        n = 5
        base = rng.standard_normal((2, n))
        A = np.vstack([base, base, base * 2.0])
        b = np.zeros(6)
        c = rng.standard_normal(n)
        lp = box_lp(c, A, [LE] * 6, b, np.zeros(n), np.ones(n))
        ref = _scipy_reference(lp)
        sol = solve_lp(lp)
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(-ref.fun, abs=1e-7)

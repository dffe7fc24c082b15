"""Exact worst-case analysis of rebate networks via mixed-integer programming.

Two maximization problems are built per network: the left problem maximizes
the non-deficit violation (n-1)s - sum_i h(p_-i) and the right problem
maximizes sum_i h(p_-i) - (n-alpha)s.  Each hidden node gets one binary
activation indicator per agent copy (a node may be active when evaluating
h(p_-i) but inactive for h(p_-j)), linearized with interval-derived big-M
constants; s = max(sum p, 1) takes one more binary.  The problems are solved
by depth-first branch and bound with best-bound backtracking over an
in-module simplex solver.

Every incumbent is the true objective re-evaluated at a concrete profile, so
a finished search returns an exactly attained optimum, never an LP artifact.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, RefusalError, SolverError
from .lp import LE, LinearProgram, Simplex, solve_lp
from .mechanism import TypeProfile
from .net import forward_batch

_PRUNE_SLACK = 5e-10   # node bound must beat the incumbent by more than this
_INT_TOL = 1e-6        # binary integrality tolerance
_GRID_GUARD = 10**7    # grid_oracle refuses beyond this many profiles


# -- pre-activation intervals --------------------------------------------------

def _interval_step(weights, bias, in_lo, in_hi):
    wp = np.maximum(weights, 0.0)
    wn = np.minimum(weights, 0.0)
    lo = wp @ in_lo + wn @ in_hi + bias
    hi = wp @ in_hi + wn @ in_lo + bias
    return lo, hi


def _first_layer_sorted(weights, bias):
    """Exact range of w @ x + b over 0 <= x_1 <= ... <= x_d <= 1.

    The vertices of that polytope are the suffix indicator vectors, so the
    range is spanned by the suffix sums of w (and the all-zero vertex).
    """
    suffix = np.cumsum(weights[:, ::-1], axis=1)[:, ::-1]
    lo = np.minimum(suffix.min(axis=1), 0.0) + bias
    hi = np.maximum(suffix.max(axis=1), 0.0) + bias
    return lo, hi


def preactivation_intervals(net, sorted_inputs=False):
    """Per-hidden-layer (lo, hi) arrays containing every reachable pre-activation.

    With sorted_inputs=True the first layer is bounded exactly over the
    ascending-input polytope instead of the full unit box; deeper layers use
    interval propagation either way.
    """
    out = []
    n_hidden = len(net.hidden_sizes)
    in_lo = np.zeros(net.input_dim)
    in_hi = np.ones(net.input_dim)
    for l in range(n_hidden):
        if l == 0 and sorted_inputs:
            lo, hi = _first_layer_sorted(net.weights[0], net.biases[0])
        else:
            lo, hi = _interval_step(net.weights[l], net.biases[l], in_lo, in_hi)
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ContractViolation(f"non-finite interval in layer {l}")
        out.append((lo, hi))
        in_lo, in_hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return out


def activation_bounds(net):
    """Interval-arithmetic pre-activation bounds over the unit input box."""
    return preactivation_intervals(net, sorted_inputs=False)


# -- problem construction --------------------------------------------------------

@dataclass
class MipProblem:
    """One worst-case-violation MIP over a fixed network."""

    lp: LinearProgram
    n: int
    side: str                  # "left" | "right"
    alpha: float | None
    shift: float
    net: object
    theta_indices: np.ndarray
    s_index: int
    binary_indices: np.ndarray  # node binaries followed by the s binary
    s_binary_index: int
    big_m_plus: list            # per hidden layer, per node
    big_m_minus: list
    big_m_s: float

    def objective_at(self, theta_sorted):
        """True violation objective at a concrete sorted profile."""
        theta = np.asarray(theta_sorted, dtype=np.float64)
        n = self.n
        grid = np.tile(theta, (n, 1))
        rows = grid[~np.eye(n, dtype=bool)].reshape(n, n - 1)
        total = float(forward_batch(self.net, rows).sum()) + n * self.shift
        s = max(float(theta.sum()), 1.0)
        if self.side == "left":
            return (n - 1) * s - total
        return total - (n - self.alpha) * s

    def seed_profiles(self):
        from .bounds import bound_profiles
        n = self.n
        seeds = [np.zeros(n), np.ones(n)]
        seeds += [p.as_array() for p in bound_profiles(n)]
        return seeds


def _build_mip(net, n, side, alpha, shift):
    if net.input_dim != n - 1:
        raise ContractViolation(f"net takes {net.input_dim} inputs, need {n - 1}")
    intervals = preactivation_intervals(net, sorted_inputs=True)
    sizes = net.hidden_sizes
    hidden_total = int(sum(sizes))
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    num_theta = n
    s_index = n
    y_base = n + 1
    a_base = y_base + n * hidden_total
    s_bin = a_base + n * hidden_total
    num_vars = s_bin + 1

    m_plus = [np.maximum(hi, 0.0) for _, hi in intervals]
    m_minus = [np.maximum(-lo, 0.0) for lo, _ in intervals]
    m_s = float(n - 1)

    lower = np.zeros(num_vars)
    upper = np.ones(num_vars)
    lower[s_index], upper[s_index] = 1.0, float(n)
    for i in range(n):
        for l in range(len(sizes)):
            sl = y_base + i * hidden_total + offsets[l]
            upper[sl:sl + sizes[l]] = m_plus[l]
    # binaries fixed by their intervals never need branching
    for l, (lo, hi) in enumerate(intervals):
        for j in range(sizes[l]):
            if hi[j] <= 0.0:
                for i in range(n):
                    upper[a_base + i * hidden_total + offsets[l] + j] = 0.0
            elif lo[j] >= 0.0:
                for i in range(n):
                    lower[a_base + i * hidden_total + offsets[l] + j] = 1.0

    rows, rels, rhs = [], [], []

    def add_row(coeffs, b):
        row = np.zeros(num_vars)
        for idx, v in coeffs:
            row[idx] += v
        rows.append(row)
        rels.append(LE)
        rhs.append(b)

    for k in range(n - 1):  # ascending profile
        add_row([(k, 1.0), (k + 1, -1.0)], 0.0)
    # s = max(sum theta, 1) via one indicator
    add_row([(k, 1.0) for k in range(n)] + [(s_index, -1.0)], 0.0)
    add_row([(s_index, 1.0)] + [(k, -1.0) for k in range(n)] + [(s_bin, m_s)], m_s)
    add_row([(s_index, 1.0), (s_bin, -m_s)], 1.0)
    # upper envelope of max(sum theta, 1): implied at integrality, but it
    # caps the relaxation exactly along the chord from (0,1) to (n,n)
    add_row([(s_index, 1.0)] + [(k, -(n - 1.0) / n) for k in range(n)], 1.0)

    for i in range(n):
        prev_cols = [k for k in range(n) if k != i]  # stays sorted after deletion
        for l in range(len(sizes)):
            w, b = net.weights[l], net.biases[l]
            for j in range(sizes[l]):
                y_idx = y_base + i * hidden_total + offsets[l] + j
                a_idx = a_base + i * hidden_total + offsets[l] + j
                z = [(prev_cols[t], w[j, t]) for t in range(len(prev_cols))] if l == 0 \
                    else [(y_base + i * hidden_total + offsets[l - 1] + t, w[j, t])
                          for t in range(sizes[l - 1])]
                mp, mn = m_plus[l][j], m_minus[l][j]
                add_row(z + [(y_idx, -1.0)], -b[j])                    # y >= z
                add_row([(c, -v) for c, v in z] + [(y_idx, 1.0), (a_idx, mn)],
                        mn + b[j])                                     # y <= z + M-(1-a)
                add_row([(y_idx, 1.0), (a_idx, -mp)], 0.0)             # y <= M+ a
            # next layer reads this copy's post-activations
        # output handled through the objective below

    objective = np.zeros(num_vars)
    w_out, b_out = net.weights[-1], net.biases[-1]
    last = len(sizes) - 1
    sign = -1.0 if side == "left" else 1.0
    for i in range(n):
        base = y_base + i * hidden_total + offsets[last]
        objective[base:base + sizes[last]] += sign * w_out[0]
        if net.skip_weights is not None:
            prev_cols = [k for k in range(n) if k != i]
            for t, k in enumerate(prev_cols):
                objective[k] += sign * net.skip_weights[t]
    constant = sign * n * (float(b_out[0]) + shift)
    if side == "left":
        objective[s_index] = n - 1
    else:
        objective[s_index] = -(n - alpha)

    lp = LinearProgram(objective, np.array(rows), rels, np.array(rhs),
                       lower, upper, objective_constant=constant)
    node_bins = np.arange(a_base, a_base + n * hidden_total)
    return MipProblem(lp, n, side, alpha, shift, net,
                      np.arange(n), s_index,
                      np.concatenate([node_bins, [s_bin]]), s_bin,
                      m_plus, m_minus, m_s)


def build_left_mip(net, n, shift=0.0):
    """Maximize the non-deficit violation (n-1)s - sum_i h(p_-i)."""
    return _build_mip(net, n, "left", None, shift)


def build_right_mip(net, n, alpha, shift=0.0):
    """Maximize the ratio-goal violation sum_i h(p_-i) - (n-alpha)s.

    The goal may be negative: shifted mechanisms with large violations have
    effective ratios below zero, and the inequality stays linear either way.
    """
    if not np.isfinite(alpha) or alpha > 1.0:
        raise ContractViolation(f"alpha must be a real at most 1, got {alpha}")
    return _build_mip(net, n, "right", float(alpha), shift)


# -- branch and bound ------------------------------------------------------------

@dataclass
class MipResult:
    optimum: float
    theta: np.ndarray
    nodes: int
    exact: bool


def solve_mip(problem, budget=5_000_000):
    """Globally maximize the violation objective.

    Depth-first dives branch on the most fractional binary (lowest index on
    ties), preferring the rounded side; the sibling is parked with its
    parent's bound and backtracking resumes from the best-bound open node.
    Dive children re-solve warm (dual simplex from the parent basis); popped
    nodes solve cold.  When the node budget runs out the best incumbent is
    returned flagged non-exact.
    """
    if budget <= 0:
        raise ContractViolation("node budget must be positive")
    lp = problem.lp
    bins = problem.binary_indices

    incumbent = -np.inf
    inc_theta = None
    for seed in problem.seed_profiles():
        v = problem.objective_at(seed)
        if v > incumbent:
            incumbent, inc_theta = v, seed

    # open nodes: (-bound, tiebreak, lower, upper, parent basis snapshot)
    open_heap = [(-np.inf, 0, lp.lower.copy(), lp.upper.copy(), None)]
    counter = 1
    nodes = 0
    exact = True
    # fathom decisions always use certified LP values; uncertified ones are
    # padded by this margin wherever they act as bounds
    drift_pad = 1e-6

    while open_heap:
        neg_bound, _, cur_lo, cur_up, snapshot = heapq.heappop(open_heap)
        if -neg_bound <= incumbent + _PRUNE_SLACK:
            continue
        solver = None
        sol = None
        if snapshot is not None:
            solver = Simplex.resume(lp, cur_lo, cur_up, snapshot)
            if solver is not None:
                sol = solver.resolve()
                if sol is None:
                    solver = None
        while True:  # dive
            if nodes >= budget:
                exact = False
                open_heap.clear()
                break
            if solver is None:
                solver = Simplex(lp, lower=cur_lo, upper=cur_up)
                sol = solver.solve()
            nodes += 1
            if sol.status == "infeasible":
                break
            if sol.status != "optimal":
                raise SolverError(f"unexpected LP status {sol.status}")
            theta = np.clip(np.sort(sol.x[problem.theta_indices]), 0.0, 1.0)
            cand = problem.objective_at(theta)
            if cand > incumbent:
                incumbent, inc_theta = cand, theta
            if not sol.certified and sol.value <= incumbent + drift_pad:
                sol = solver.certify_exact()
                theta = np.clip(np.sort(sol.x[problem.theta_indices]), 0.0, 1.0)
                cand = problem.objective_at(theta)
                if cand > incumbent:
                    incumbent, inc_theta = cand, theta
            if sol.value <= incumbent + _PRUNE_SLACK:
                break
            # reduced-cost fixing: a nonbasic binary whose flip provably
            # cannot reach the incumbent is pinned for this whole subtree
            room = sol.value - incumbent - _PRUNE_SLACK + 1e-6
            dj = np.abs(solver.reduced_costs()[bins])
            pinnable = ((cur_up[bins] - cur_lo[bins] > 0.0)
                        & ~solver.in_basis[bins] & (dj >= room))
            if pinnable.any():
                pins = bins[pinnable]
                solver.pin_variables(pins)
                cur_lo[pins] = cur_up[pins] = solver.val[pins]
            free = cur_up[bins] - cur_lo[bins] > 0.0
            if not free.any():
                break  # fully fixed cell: its LP optimum is already attained
            xb = sol.x[bins]
            frac = np.where(free, np.abs(xb - np.round(xb)), -1.0)
            pick = int(np.argmax(frac))
            if frac[pick] <= _INT_TOL and sol.value <= cand + drift_pad:
                if not sol.certified:
                    sol = solver.certify_exact()
                if sol.value <= cand + _PRUNE_SLACK:
                    break  # integral solution certified by direct evaluation
                xb = sol.x[bins]
                frac = np.where(free, np.abs(xb - np.round(xb)), -1.0)
                pick = int(np.argmax(frac))
            var = int(bins[pick])
            bound_key = sol.value if sol.certified else sol.value + drift_pad
            sib_lo, sib_up = cur_lo.copy(), cur_up.copy()
            cur_lo, cur_up = cur_lo.copy(), cur_up.copy()
            child = 1.0 if xb[pick] >= 0.5 else 0.0
            if child == 1.0:
                cur_lo[var] = 1.0
                sib_up[var] = 0.0
            else:
                cur_up[var] = 0.0
                sib_lo[var] = 1.0
            heapq.heappush(open_heap, (-bound_key, counter, sib_lo, sib_up,
                                       solver.export_state()))
            counter += 1
            sol = solver.fix_and_resolve([(var, child)])
            if sol is None:  # dual repair stalled; redo this child cold
                solver = None

    return MipResult(float(incumbent), np.asarray(inc_theta), nodes, exact)


# -- certification ----------------------------------------------------------------

@dataclass
class Certificate:
    """Exact worst-case violations and their attaining profiles."""

    eps_left: float
    eps_right: float
    theta_left: TypeProfile
    theta_right: TypeProfile
    alpha_goal: float
    nodes_left: int = 0
    nodes_right: int = 0
    exact: bool = True

    @property
    def total(self):
        return self.eps_left + self.eps_right


def certify(net, n, alpha_goal, shift=0.0, node_budget=5_000_000):
    """Run the two violation MIPs; violations are clamped at zero."""
    left = solve_mip(build_left_mip(net, n, shift=shift), budget=node_budget)
    right = solve_mip(build_right_mip(net, n, alpha_goal, shift=shift),
                      budget=node_budget)
    return Certificate(
        eps_left=max(0.0, left.optimum),
        eps_right=max(0.0, right.optimum),
        theta_left=TypeProfile.of(left.theta),
        theta_right=TypeProfile.of(right.theta),
        alpha_goal=float(alpha_goal),
        nodes_left=left.nodes,
        nodes_right=right.nodes,
        exact=left.exact and right.exact,
    )


def certify_mechanism(mech, alpha_goal, node_budget=5_000_000):
    return certify(mech.net, mech.n, alpha_goal, shift=mech.shift,
                   node_budget=node_budget)


# -- brute-force oracle -------------------------------------------------------------

def _sorted_grid_count(n, resolution):
    from math import comb
    return comb(n + resolution - 1, n)


def grid_oracle(net, n, alpha, resolution, side="both", shift=0.0):
    """Exhaustive scan over the sorted grid with spacing 1/(resolution-1).

    Lower-bounds the true worst case; refuses combinatorially large scans.
    """
    if resolution < 2:
        raise ContractViolation("resolution must be at least 2")
    count = _sorted_grid_count(n, resolution)
    if count > _GRID_GUARD:
        raise RefusalError(
            f"grid of {count} profiles exceeds the {_GRID_GUARD} point guard")

    best = -np.inf
    best_profile = None
    levels = np.linspace(0.0, 1.0, resolution)
    chunk = []

    def flush(chunk_rows):
        nonlocal best, best_profile
        if not chunk_rows:
            return
        thetas = levels[np.array(chunk_rows)]
        s = np.maximum(thetas.sum(axis=1), 1.0)
        total = np.full(len(thetas), n * shift)
        keep = ~np.eye(n, dtype=bool)
        for i in range(n):
            total += forward_batch(net, thetas[:, keep[i]])
        left = (n - 1) * s - total
        right = total - (n - alpha) * s
        if side == "left":
            vals = left
        elif side == "right":
            vals = right
        else:
            vals = np.maximum(left, right)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best = float(vals[k])
            best_profile = TypeProfile.of(thetas[k])

    for combo in itertools.combinations_with_replacement(range(resolution), n):
        chunk.append(combo)
        if len(chunk) >= 200_000:
            flush(chunk)
            chunk = []
    flush(chunk)
    return best, best_profile

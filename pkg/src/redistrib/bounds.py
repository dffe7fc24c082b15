"""Efficiency-ratio bounds for n agents.

The manual lower bound is (n+1)/(2n).  The theoretical upper bound is the
optimum of a small LP: over the n+1 profiles whose coordinates are either 0
or c = 1/floor(n/2), any mechanism's rebate values h_j (at the sorted input
with j coordinates equal to c) must satisfy

    (n-1) s_k  <=  k h_{k-1} + (n-k) h_k  <=  (n - alpha) s_k,   s_k = max(k c, 1)

for k = 0..n, so maximizing alpha over free h_j bounds every mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, SolverError
from .lp import GE, LE, LinearProgram, solve_lp
from .mechanism import TypeProfile


@dataclass(frozen=True)
class BoundResult:
    n: int
    alpha_upper: float
    alpha_lower_manual: float
    defining_profiles: tuple
    rebate_values: tuple  # optimal h_j at the LP maximum, j = 0..n-1


def manual_lower_bound(n):
    """Best manually achieved worst-case efficiency ratio, (n+1)/(2n)."""
    if n < 3:
        raise ContractViolation(f"need at least 3 agents, got {n}")
    return (n + 1) / (2 * n)


def bound_profiles(n):
    """The n+1 profiles with k coordinates at 1/floor(n/2) and the rest 0."""
    if n < 3:
        raise ContractViolation(f"need at least 3 agents, got {n}")
    c = 1.0 / (n // 2)
    return [TypeProfile.of([0.0] * (n - k) + [c] * k) for k in range(n + 1)]


def _bound_lp(n):
    # variables: alpha, h_0 .. h_{n-1}
    c = 1.0 / (n // 2)
    num_vars = n + 1
    objective = np.zeros(num_vars)
    objective[0] = 1.0
    rows, rels, rhs = [], [], []
    for k in range(n + 1):
        s_k = max(k * c, 1.0)
        coeff = np.zeros(num_vars)
        if k > 0:
            coeff[1 + (k - 1)] += k
        if k < n:
            coeff[1 + k] += n - k
        rows.append(coeff.copy())
        rels.append(GE)
        rhs.append((n - 1) * s_k)
        upper = coeff.copy()
        upper[0] = s_k
        rows.append(upper)
        rels.append(LE)
        rhs.append(n * s_k)
    lower = np.full(num_vars, -np.inf)
    upper_b = np.full(num_vars, np.inf)
    lower[0], upper_b[0] = 0.0, 1.0
    return LinearProgram(objective, np.array(rows), rels, np.array(rhs),
                         lower, upper_b)


def theoretical_upper_bound(n, with_rebates=False):
    """LP maximum of alpha over the bound-defining profiles."""
    if n < 3:
        raise ContractViolation(f"need at least 3 agents, got {n}")
    sol = solve_lp(_bound_lp(n))
    if sol.status != "optimal":
        # alpha = 0 with large h is always feasible, so this cannot happen
        raise SolverError(f"bound LP unexpectedly {sol.status}")
    if with_rebates:
        return float(sol.x[0]), tuple(float(v) for v in sol.x[1:])
    return float(sol.x[0])


def compute_bounds(n):
    alpha_u, rebates = theoretical_upper_bound(n, with_rebates=True)
    return BoundResult(
        n=n,
        alpha_upper=alpha_u,
        alpha_lower_manual=manual_lower_bound(n),
        defining_profiles=tuple(bound_profiles(n)),
        rebate_values=rebates,
    )

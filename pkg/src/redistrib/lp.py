"""Dense linear programming: bounded-variable simplex with a full tableau.

Solves   maximize c @ x   subject to   A x (<=|==|>=) b,   l <= x <= u
with any mix of finite and infinite bounds.  Two phases: infeasible rows get
artificial columns that phase 1 drives to zero.  Pivot selection is largest
reduced cost with lowest-index tie-breaking; after a long degenerate stall
the solver switches to Bland's rule, which cannot cycle.  Every reported
optimum is re-derived from a fresh factorization of the final basis, so the
returned value and point stay accurate well below the 1e-9
feasibility/optimality tolerances even after thousands of tableau updates.

For branch-and-bound workloads a solved instance can be re-solved after
tightening variable bounds: the previous optimal basis stays dual feasible,
so a bounded-variable dual simplex repairs primal feasibility in a few
pivots instead of restarting from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, SolverError

LE, EQ, GE = "<=", "==", ">="

_PIV_TOL = 1e-9      # smallest pivot magnitude admitted to a ratio test
_TIE_TOL = 1e-12     # ratio-test tie window
_STALL_LIMIT = 2000  # degenerate iterations before switching to Bland's rule


@dataclass
class LinearProgram:
    """maximize objective @ x + objective_constant under rows and box bounds."""

    objective: np.ndarray
    lhs: np.ndarray
    relations: list
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    objective_constant: float = 0.0

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64)
        self.lhs = np.asarray(self.lhs, dtype=np.float64)
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        n = self.objective.size
        if self.lhs.size == 0:
            self.lhs = self.lhs.reshape(0, n)
        if self.lhs.shape[1] != n:
            raise ContractViolation("objective length must match column count")
        if self.rhs.shape != (self.lhs.shape[0],) or len(self.relations) != self.lhs.shape[0]:
            raise ContractViolation("rhs/relations must match row count")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ContractViolation("bounds must match column count")
        if not (np.isfinite(self.lhs).all() and np.isfinite(self.rhs).all()
                and np.isfinite(self.objective).all()):
            raise ContractViolation("coefficients must be finite")
        if np.any(self.lower > self.upper):
            raise ContractViolation("lower bound exceeds upper bound")

    @property
    def num_vars(self):
        return self.objective.size

    @property
    def num_rows(self):
        return self.lhs.shape[0]


@dataclass
class LpSolution:
    status: str          # "optimal" | "infeasible" | "unbounded"
    value: float | None
    x: np.ndarray | None
    iterations: int = 0
    certified: bool = True  # value re-derived from a fresh basis factorization


class Simplex:
    """Mutable solver state, reusable for bound-tightening re-solves."""

    def __init__(self, lp, lower=None, upper=None, tol=1e-9, max_iter=None,
                 slim=False):
        m, n = lp.num_rows, lp.num_vars
        A = lp.lhs.copy()
        b = lp.rhs.astype(np.float64).copy()
        slack_up = np.full(m, np.inf)
        for i, rel in enumerate(lp.relations):
            if rel == GE:
                A[i] *= -1.0
                b[i] *= -1.0
            elif rel == EQ:
                slack_up[i] = 0.0
            elif rel != LE:
                raise ContractViolation(f"unknown relation {rel!r}")
        L = np.asarray(lp.lower if lower is None else lower, np.float64).copy()
        U = np.asarray(lp.upper if upper is None else upper, np.float64).copy()
        if np.any(L > U):
            raise ContractViolation("lower bound exceeds upper bound")

        self.m, self.n_struct = m, n
        self.b_norm = b
        self.art_start = n + m
        # slim instances carry no artificial block; they can only be seeded
        # from a snapshot whose basis is artificial-free
        n_art = 0 if slim else m
        self.N = n + m + n_art
        cols = [A, np.eye(m)] + ([np.eye(m)] if n_art else [])
        self.A_full = np.concatenate(cols, axis=1)
        self.L = np.concatenate([L, np.zeros(m), np.zeros(n_art)])
        self.U = np.concatenate([U, slack_up, np.zeros(n_art)])
        self.c2 = np.concatenate([lp.objective, np.zeros(m + n_art)])
        self.constant = lp.objective_constant
        self.tol = tol
        self.max_iter = max_iter or max(20000, 40 * (m + n))
        self.iterations = 0
        self._slim = slim
        self._bland = False
        self._solved = False
        self._outer_buf = None

    # -- setup -----------------------------------------------------------------

    def _install_start_basis(self):
        """Slack basis; rows violated at the start point activate artificials."""
        m, n = self.m, self.n_struct
        Ls, Us = self.L[:n], self.U[:n]
        nbv = np.where(np.isfinite(Ls), Ls,
                       np.where(np.isfinite(Us), Us, 0.0))
        resid = self.b_norm - self.A_full[:, :n] @ nbv
        sl_lo, sl_up = self.L[n:n + m], self.U[n:n + m]
        viol = (resid < sl_lo - 1e-12) | (resid > sl_up + 1e-12)
        art_rows = np.where(viol)[0]
        sigma = np.sign(resid[art_rows])
        sigma[sigma == 0] = 1.0
        cols = self.art_start + art_rows
        self.A_full[art_rows, cols] = sigma
        self.U[cols] = np.inf

        self.val = np.zeros(self.N)
        self.val[:n] = nbv
        self.basis = n + np.arange(m)
        self.basis[art_rows] = cols
        self.in_basis = np.zeros(self.N, bool)
        self.in_basis[self.basis] = True
        self.beta = resid.copy()
        self.beta[art_rows] = np.abs(resid[art_rows])
        self.T = self.A_full.copy()
        self.T[art_rows] *= sigma[:, None]
        return art_rows.size

    # -- pivoting ----------------------------------------------------------------

    def _pivot(self, r, j, d, step, leave_bound):
        """Move the entering variable by step, swap it into basis row r."""
        T, beta = self.T, self.beta
        k = self.basis[r]
        x_new = self.val[j] + step
        beta -= step * T[:, j]
        piv = T[r, j]
        row = T[r] / piv
        col = T[:, j].copy()
        if self._outer_buf is None:
            self._outer_buf = np.empty_like(T)
        np.multiply(col[:, None], row[None, :], out=self._outer_buf)
        T -= self._outer_buf
        T[r] = row
        T[:, j] = 0.0
        T[r, j] = 1.0
        dj = d[j]
        d -= dj * row
        d[j] = 0.0
        beta[r] = x_new
        self.val[k] = leave_bound
        self.in_basis[k] = False
        self.in_basis[j] = True
        self.basis[r] = j

    def _nonbasic_masks(self):
        nb = ~self.in_basis
        movable = nb & (self.U - self.L > 0)
        at_low = movable & (self.val == self.L)
        at_up = movable & (self.val == self.U)
        free = movable & ~np.isfinite(self.L) & ~np.isfinite(self.U)
        return at_low, at_up, free

    def _primal(self, c):
        """Primal iterations to optimality; returns 'optimal' | 'unbounded'."""
        T, beta = self.T, self.beta
        L, U = self.L, self.U
        d = c - c[self.basis] @ T
        stall = 0
        while True:
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise SolverError("cycling guard exceeded")
            at_low, at_up, free = self._nonbasic_masks()
            up_ok = (at_low | free) & (d > self.tol)
            dn_ok = ((at_up & ~at_low) | free) & (d < -self.tol)
            score = np.where(up_ok, d, 0.0) + np.where(dn_ok, -d, 0.0)
            if self._bland:
                cands = np.where(score > 0.0)[0]
                if cands.size == 0:
                    return "optimal"
                j = int(cands[0])
            else:
                j = int(np.argmax(score))
                if score[j] <= 0.0:
                    return "optimal"
            direction = 1.0 if up_ok[j] else -1.0
            g = direction * T[:, j]

            span = U[j] - L[j] if np.isfinite(U[j]) and np.isfinite(L[j]) else np.inf
            t = np.full(self.m, np.inf)
            Lb, Ub = L[self.basis], U[self.basis]
            dec = (g > _PIV_TOL) & np.isfinite(Lb)
            t[dec] = (beta[dec] - Lb[dec]) / g[dec]
            inc = (g < -_PIV_TOL) & np.isfinite(Ub)
            t[inc] = (beta[inc] - Ub[inc]) / g[inc]
            np.maximum(t, 0.0, out=t)
            t_row = t.min() if self.m else np.inf

            if span <= t_row:
                if not np.isfinite(span):
                    return "unbounded"
                # bound flip: the entering variable crosses to its other bound
                beta -= span * g
                self.val[j] = U[j] if direction > 0 else L[j]
                stall = stall + 1 if span <= _TIE_TOL else 0
            else:
                if not np.isfinite(t_row):
                    return "unbounded"
                cand = np.where(t <= t_row + _TIE_TOL)[0]
                if self._bland:
                    r = int(cand[np.argmin(self.basis[cand])])
                else:
                    gg = np.abs(g[cand])
                    strong = cand[gg >= gg.max() - 1e-15]
                    r = int(strong[np.argmin(self.basis[strong])])
                leave_bound = L[self.basis[r]] if g[r] > 0 else U[self.basis[r]]
                self._pivot(r, j, d, direction * t[r], leave_bound)
                stall = stall + 1 if t[r] <= _TIE_TOL else 0
            if stall > _STALL_LIMIT:
                self._bland = True

    def _dual(self, c, iter_cap):
        """Dual iterations from a dual-feasible basis until primal feasible.

        Returns 'feasible' | 'infeasible' | 'stalled'; callers treat a stall
        by falling back to a cold solve.
        """
        T, beta = self.T, self.beta
        L, U = self.L, self.U
        d = c - c[self.basis] @ T
        for _ in range(iter_cap):
            self.iterations += 1
            Lb, Ub = L[self.basis], U[self.basis]
            low_viol = np.where(np.isfinite(Lb), Lb - beta, -np.inf)
            up_viol = np.where(np.isfinite(Ub), beta - Ub, -np.inf)
            worst_low = low_viol.max() if self.m else -np.inf
            worst_up = up_viol.max() if self.m else -np.inf
            if max(worst_low, worst_up) <= self.tol:
                return "feasible"
            below = worst_low >= worst_up
            r = int(np.argmax(low_viol if below else up_viol))
            alpha = T[r]
            at_low, at_up, free = self._nonbasic_masks()
            if below:  # basic r sits under its lower bound and must increase
                elig = ((at_low | free) & (alpha < -_PIV_TOL)) | \
                       ((at_up | free) & (alpha > _PIV_TOL))
            else:
                elig = ((at_low | free) & (alpha > _PIV_TOL)) | \
                       ((at_up | free) & (alpha < -_PIV_TOL))
            idx = np.where(elig)[0]
            if idx.size == 0:
                self._infeasibility = float(max(worst_low, worst_up))
                return "infeasible"
            ratios = np.abs(d[idx] / alpha[idx])
            j = int(idx[np.argmin(ratios)])
            bound = Lb[r] if below else Ub[r]
            step = (beta[r] - bound) / T[r, j]
            self._pivot(r, j, d, step, bound)
        return "stalled"

    # -- exact recomputation -----------------------------------------------------

    def _basis_solution(self, c):
        """Exact basic solution, reduced costs, and full point for the basis."""
        B = self.A_full[:, self.basis]
        nb_idx = np.where(~self.in_basis)[0]
        rhs = self.b_norm - self.A_full[:, nb_idx] @ self.val[nb_idx]
        try:
            beta = np.linalg.solve(B, rhs)
            y = np.linalg.solve(B.T, c[self.basis])
        except np.linalg.LinAlgError as e:
            raise SolverError(f"singular basis: {e}") from e
        d = c - y @ self.A_full
        x_full = self.val.copy()
        x_full[self.basis] = beta
        return beta, d, x_full

    def _certified(self, c):
        """True when the exact basic solution is feasible and optimal."""
        beta, d, _ = self._basis_solution(c)
        Lb, Ub = self.L[self.basis], self.U[self.basis]
        feas = max(np.max(np.where(np.isfinite(Lb), Lb - beta, -np.inf), initial=0.0),
                   np.max(np.where(np.isfinite(Ub), beta - Ub, -np.inf), initial=0.0))
        if feas > self.tol:
            return False
        at_low, at_up, free = self._nonbasic_masks()
        bad = np.any((at_low | free) & (d > self.tol)) or \
            np.any(((at_up & ~at_low) | free) & (d < -self.tol))
        if bad:
            return False
        self.beta = beta
        return True

    def _refactorize(self):
        B = self.A_full[:, self.basis]
        nb_idx = np.where(~self.in_basis)[0]
        rhs = self.b_norm - self.A_full[:, nb_idx] @ self.val[nb_idx]
        try:
            both = np.linalg.solve(B, np.concatenate([rhs[:, None], self.A_full],
                                                     axis=1))
        except np.linalg.LinAlgError as e:
            raise SolverError(f"singular basis: {e}") from e
        self.beta = both[:, 0].copy()
        self.T = both[:, 1:].copy()

    def _run_phase(self, c, label):
        for _ in range(4):
            status = self._primal(c)
            if status == "unbounded":
                return status
            if self._certified(c):
                return "optimal"
            # numerical drift: rebuild the tableau from the basis and continue
            self._refactorize()
            self._bland = True
        raise SolverError(f"{label} failed to certify after refactorizations")

    def _solution(self):
        _, _, x_full = self._basis_solution(self.c2)
        value = float(self.c2 @ x_full) + self.constant
        return LpSolution("optimal", value, x_full[:self.n_struct].copy(),
                          self.iterations)

    def _fast_solution(self):
        """Solution from the running tableau, skipping the exact recompute."""
        x_full = self.val.copy()
        x_full[self.basis] = self.beta
        value = float(self.c2 @ x_full) + self.constant
        return LpSolution("optimal", value, x_full[:self.n_struct].copy(),
                          self.iterations, certified=False)

    def _expel_artificials(self, c):
        """Swap basic artificials for structural/slack columns (degenerate)."""
        d = c - c[self.basis] @ self.T
        for r in range(self.m):
            if self.basis[r] < self.art_start:
                continue
            row = self.T[r, :self.art_start]
            cand = np.where(~self.in_basis[:self.art_start] & (np.abs(row) > 1e-7))[0]
            if cand.size == 0:
                continue  # dependent row; the artificial stays pinned at zero
            j = int(cand[np.argmax(np.abs(row[cand]))])
            self._pivot(r, j, d, 0.0, 0.0)

    # -- drivers -------------------------------------------------------------------

    def solve(self):
        if self._slim:
            raise SolverError("slim instances only resume from snapshots")
        n_art = self._install_start_basis()
        if n_art:
            c1 = np.zeros(self.N)
            c1[self.art_start:] = -1.0
            status = self._run_phase(c1, "phase 1")
            if status == "unbounded":
                raise SolverError("phase 1 cannot be unbounded")
            _, _, x_full = self._basis_solution(c1)
            if float(c1 @ x_full) < -self.tol:
                return LpSolution("infeasible", None, None, self.iterations)
            self._expel_artificials(c1)
            # artificials are pinned at zero for phase 2
            self.U[self.art_start:] = 0.0
            self._bland = False
        status = self._run_phase(self.c2, "phase 2")
        if status == "unbounded":
            return LpSolution("unbounded", None, None, self.iterations)
        self._solved = True
        return self._solution()

    def certify_exact(self):
        """Re-derive the current optimum exactly (basis refactorization)."""
        status = self._run_phase(self.c2, "certification")
        if status == "unbounded":
            return LpSolution("unbounded", None, None, self.iterations)
        self._solved = True
        return self._solution()

    def export_state(self):
        """Snapshot (basis, values) for a later resume; None if not portable."""
        if not self._solved or np.any(self.basis >= self.art_start):
            return None
        return self.basis.copy(), self.val[:self.art_start].copy()

    @classmethod
    def resume(cls, lp, lower, upper, state, tol=1e-9, max_iter=None):
        """Rebuild a solver around a snapshot taken under nearby bounds.

        The snapshot basis is artificial-free, so the rebuilt instance skips
        the artificial block entirely.  Nonbasic values are clamped into the
        new bounds; the caller then calls resolve() to repair feasibility.
        Returns None when the snapshot cannot seed this instance.
        """
        sx = cls(lp, lower=lower, upper=upper, tol=tol, max_iter=max_iter,
                 slim=True)
        basis, val = state
        if basis.size != sx.m or val.size != sx.N:
            return None
        sx.basis = basis.copy()
        sx.in_basis = np.zeros(sx.N, bool)
        sx.in_basis[sx.basis] = True
        sx.val = np.minimum(np.maximum(val, sx.L), sx.U)
        try:
            sx._refactorize()
        except SolverError:
            return None
        sx._solved = True
        return sx

    def reduced_costs(self):
        """Reduced costs from the running tableau (uncertified, fast)."""
        return self.c2 - self.c2[self.basis] @ self.T

    def pin_variables(self, variables):
        """Fix nonbasic-at-bound variables at their current values.

        Used for reduced-cost fixing: callers must have proven that the
        opposite bound cannot contain a better solution.
        """
        for var in variables:
            self.L[var] = self.U[var] = self.val[var]

    def resolve(self, iter_cap=None, exact=False):
        """Dual-repair the current (bound-violated) state back to optimality.

        Returns an LpSolution, or None when the dual repair stalls and the
        caller should solve cold.
        """
        cap = iter_cap or (400 + 2 * self.m)
        status = self._dual(self.c2, cap)
        if status == "stalled":
            self._solved = False
            return None
        if status == "infeasible":
            if self._infeasibility > 1e-6:
                return LpSolution("infeasible", None, None, self.iterations)
            # marginal call: confirm against an exactly rebuilt tableau
            self._refactorize()
            status = self._dual(self.c2, cap)
            if status == "infeasible":
                return LpSolution("infeasible", None, None, self.iterations)
            if status == "stalled":
                self._solved = False
                return None
        status = self._primal(self.c2)
        if status == "unbounded":
            return LpSolution("unbounded", None, None, self.iterations)
        if exact:
            return self.certify_exact()
        return self._fast_solution()

    def fix_and_resolve(self, fixes, iter_cap=None, exact=False):
        """Pin variables and re-solve warm from the last optimal basis.

        ``fixes`` is a list of (variable index, value).  Returns an
        LpSolution, or None when the dual repair stalls and the caller
        should solve cold.
        """
        if not self._solved:
            raise SolverError("fix_and_resolve requires a solved instance")
        for var, value in fixes:
            delta = value - self.val[var]
            if not self.in_basis[var] and delta != 0.0:
                self.beta -= delta * self.T[:, var]
                self.val[var] = value
            self.L[var] = value
            self.U[var] = value
        return self.resolve(iter_cap=iter_cap, exact=exact)


def solve_lp(lp, *, lower=None, upper=None, tol=1e-9, max_iter=None):
    """Solve an LP; bounds may be overridden without copying the program."""
    return Simplex(lp, lower=lower, upper=upper, tol=tol, max_iter=max_iter).solve()

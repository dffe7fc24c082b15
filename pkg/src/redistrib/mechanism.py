"""VCG redistribution mechanism semantics for the binary public project.

``n`` agents report values in [0, 1]; the project (cost 1) is built iff the
reported sum reaches 1.  A mechanism is a rebate function over the other
agents' sorted reports (an ReLU network) plus a nonnegative additive shift.
The two design constraints are, for every profile,

    (n-1) * s(p)  <=  sum_i h(p_-i)  <=  (n - alpha) * s(p)

with s(p) = max(sum p, 1): the left side is the non-deficit constraint, the
right side pins the worst-case efficiency ratio alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import net as netmod
from .errors import ContractViolation
from .net import Mlp, forward, forward_batch

_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class TypeProfile:
    """Sorted vector of n agent valuations, each in [0, 1]."""

    values: tuple

    @staticmethod
    def of(values):
        vals = sorted(float(v) for v in values)
        if not vals:
            raise ContractViolation("profile must be nonempty")
        if vals[0] < -_BOUND_TOL or vals[-1] > 1.0 + _BOUND_TOL:
            raise ContractViolation(f"profile values outside [0, 1]: {vals}")
        vals = [min(1.0, max(0.0, v)) for v in vals]
        return TypeProfile(tuple(vals))

    @property
    def n(self):
        return len(self.values)

    def as_array(self):
        return np.array(self.values)

    def others(self, i):
        """The sorted (n-1)-subvector with coordinate i removed."""
        return self.values[:i] + self.values[i + 1:]


@dataclass(frozen=True)
class Mechanism:
    """A rebate network for n agents plus its additive feasibility shift."""

    n: int
    net: Mlp
    shift: float = 0.0

    def __post_init__(self):
        if self.net.input_dim != self.n - 1:
            raise ContractViolation(
                f"net takes {self.net.input_dim} inputs, mechanism needs {self.n - 1}"
            )
        if not np.isfinite(self.shift):
            raise ContractViolation("shift must be finite")


@dataclass(frozen=True)
class Violations:
    """Nonnegative slack of the two constraint sides at one profile."""

    left: float
    right: float


def s_value(profile):
    """First-best total utility: max(sum of values, 1)."""
    return max(float(sum(profile.values)), 1.0)


def rebate_inputs(profile):
    """(n, n-1) array whose row i is the profile with coordinate i deleted.

    Deleting one coordinate of a sorted vector keeps it sorted, so the rows
    are valid rebate-network inputs without re-sorting.
    """
    v = profile.as_array()
    n = len(v)
    grid = np.tile(v, (n, 1))
    keep = ~np.eye(n, dtype=bool)
    return grid[keep].reshape(n, n - 1)


def sum_h(mech, profile):
    """Sum over agents of the shifted rebate term at their deleted profile."""
    if profile.n != mech.n:
        raise ContractViolation(f"profile has {profile.n} agents, mechanism {mech.n}")
    outs = forward_batch(mech.net, rebate_inputs(profile))
    return float(outs.sum()) + mech.n * mech.shift


def violations(mech, profile, alpha):
    """Constraint violations at one profile for goal ratio alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractViolation(f"alpha must lie in [0, 1], got {alpha}")
    s = s_value(profile)
    total = sum_h(mech, profile)
    left = max(0.0, (mech.n - 1) * s - total)
    right = max(0.0, total - (mech.n - alpha) * s)
    return Violations(left, right)


def payments(mech, profile):
    """Build decision and each agent's received payment.

    Agent i receives (sum of the others' values) - h'(p_-i) when the project
    is built and (n-1)/n - h'(p_-i) otherwise.  The total received is
    (n-1) s - sum_i h'(p_-i) in both cases.
    """
    if profile.n != mech.n:
        raise ContractViolation(f"profile has {profile.n} agents, mechanism {mech.n}")
    total_value = float(sum(profile.values))
    build = total_value >= 1.0
    rebates = forward_batch(mech.net, rebate_inputs(profile)) + mech.shift
    if build:
        pays = [total_value - v - r for v, r in zip(profile.values, rebates)]
    else:
        pays = [(mech.n - 1) / mech.n - r for r in rebates]
    return build, pays


def shift_to_feasible(net, eps_left, n):
    """Mechanism with shift eps_left / n, restoring non-deficit everywhere."""
    if eps_left < 0:
        raise ContractViolation(f"eps_left must be nonnegative, got {eps_left}")
    return Mechanism(n, net, float(eps_left) / n)


# -- text forms ---------------------------------------------------------------

def profile_to_line(profile):
    return ",".join(netmod.format_real(v) for v in profile.values)


def profiles_to_text(profiles):
    return "".join(profile_to_line(p) + "\n" for p in profiles)


def parse_profiles(text):
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(TypeProfile.of(float(f) for f in line.split(",")))
        except (ValueError, ContractViolation) as e:
            raise ContractViolation(f"bad profile on line {lineno}: {e}") from e
    return out


def save_mechanism(mech, path):
    Path(path).write_text(netmod.serialize(mech.net, mech.n, mech.shift),
                          encoding="utf-8")


def load_mechanism(path):
    text = Path(path).read_text(encoding="utf-8")
    network, n, shift = netmod.deserialize(text)
    return Mechanism(n, network, shift)

"""Worst-case training: gradient rounds gated by exact MIP certification.

Each round trains the rebate network for a fixed number of full-batch Adam
steps on a batch mixing the latest certified worst-case profiles, a random
sample of older ones, fresh random profiles, and the n+1 bound-defining
profiles.  The two violation MIPs only run once the round's mean loss drops
under a threshold that grows with consecutive stalls (cheap gradient work
first, expensive exact search only when it is likely to bind).  A goal ratio
is adjusted by binary search between the best ratio achieved so far and the
theoretical upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import net as netmod
from .bounds import bound_profiles, manual_lower_bound, theoretical_upper_bound
from .certifier import certify
from .errors import ContractViolation
from .mechanism import Mechanism, TypeProfile, rebate_inputs, s_value, shift_to_feasible

_GROUP = 16  # profiles per batch group


@dataclass
class WcpStore:
    """Append-only store of certified worst-case profiles."""

    profiles: list = field(default_factory=list)

    def append(self, profile):
        self.profiles.append(profile)

    def latest(self, k=_GROUP):
        return list(self.profiles[-k:])

    def earlier(self, k=_GROUP):
        return list(self.profiles[:-k])

    def __len__(self):
        return len(self.profiles)


@dataclass(frozen=True)
class GoalState:
    """Achieved ratio, training goal, and the constant upper bound."""

    alpha_low: float
    alpha_goal: float
    alpha_upper: float

    def __post_init__(self):
        if not self.alpha_low <= self.alpha_goal <= self.alpha_upper:
            raise ContractViolation(
                f"need low <= goal <= upper, got {self.alpha_low}, "
                f"{self.alpha_goal}, {self.alpha_upper}")

    @staticmethod
    def initial(n):
        low = manual_lower_bound(n)
        # the LP optimum can round a few ulp under an exactly-achieved bound
        return GoalState(low, low, max(theoretical_upper_bound(n), low))


def goal_update(state, success):
    """Binary-search step: successes raise the floor, failures lower the goal."""
    if success:
        return GoalState(state.alpha_goal,
                         (state.alpha_upper + state.alpha_goal) / 2.0,
                         state.alpha_upper)
    return GoalState(state.alpha_low,
                     (state.alpha_low + state.alpha_goal) / 2.0,
                     state.alpha_upper)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0001
    epochs_per_round: int = 500
    mip_rounds: int = 10
    success_tolerance: float = 0.001
    seed: int = 0
    threshold_unit: float = 0.0001
    threshold_period: int = 10
    node_budget: int = 5_000_000

    def __post_init__(self):
        if min(self.learning_rate, self.epochs_per_round, self.success_tolerance,
               self.threshold_unit, self.threshold_period, self.node_budget) <= 0:
            raise ContractViolation("config values must be positive")
        if self.mip_rounds < 0:
            raise ContractViolation("mip_rounds must be nonnegative")


def loss_threshold(stall_count, unit=0.0001, period=10):
    """Cumulative stall threshold: sum_{j<=k} unit * 2^ceil(j/period)."""
    if stall_count < 0:
        raise ContractViolation("stall count must be nonnegative")
    total = 0.0
    for j in range(1, stall_count + 1):
        total += unit * 2.0 ** math.ceil(j / period)
    return total


def sample_random_profile(n, rng):
    """Each coordinate: 1/3 zero, 1/3 the bound value 1/floor(n/2), 1/3 uniform."""
    c = 1.0 / (n // 2)
    cats = rng.integers(0, 3, size=n)
    uniforms = rng.random(n)
    vals = np.where(cats == 0, 0.0, np.where(cats == 1, c, uniforms))
    return TypeProfile.of(vals)


def build_batch(store, n, rng):
    """Latest worst cases, a sample of older ones, fresh random, bound profiles."""
    batch = store.latest(_GROUP)
    earlier = store.earlier(_GROUP)
    if earlier:
        picks = rng.integers(0, len(earlier), size=min(_GROUP, len(earlier)))
        batch += [earlier[i] for i in picks]
    batch += [sample_random_profile(n, rng) for _ in range(_GROUP)]
    batch += bound_profiles(n)
    return batch


def _batch_arrays(batch, n):
    thetas = np.stack([p.as_array() for p in batch])
    inputs = np.stack([rebate_inputs(p) for p in batch]).reshape(-1, n - 1)
    s = np.maximum(thetas.sum(axis=1), 1.0)
    return thetas, inputs, s


def batch_loss(net, batch, alpha_goal, n):
    """Mean over the batch of left + right violation (unshifted network)."""
    if not batch:
        raise ContractViolation("batch must be nonempty")
    _, inputs, s = _batch_arrays(batch, n)
    totals = netmod.forward_batch(net, inputs).reshape(len(batch), n).sum(axis=1)
    left = np.maximum(0.0, (n - 1) * s - totals)
    right = np.maximum(0.0, totals - (n - alpha_goal) * s)
    return float(np.mean(left + right))


def _loss_and_grads_arrays(net, inputs, s, alpha_goal, n):
    count = s.size
    outs = netmod.forward_batch(net, inputs).reshape(count, n)
    totals = outs.sum(axis=1)
    left = (n - 1) * s - totals
    right = totals - (n - alpha_goal) * s
    loss = float(np.mean(np.maximum(0.0, left) + np.maximum(0.0, right)))
    # d loss / d total: -1 where the left side binds, +1 where the right does
    dtotal = (-(left > 0).astype(float) + (right > 0).astype(float)) / count
    upstream = np.repeat(dtotal, n)
    grads = netmod.gradients_arrays(net, inputs, upstream)
    return loss, grads


def _loss_and_grads(net, batch, alpha_goal, n):
    _, inputs, s = _batch_arrays(batch, n)
    return _loss_and_grads_arrays(net, inputs, s, alpha_goal, n)


def _train_round(net, adam, batch, alpha_goal, n, epochs):
    """Full-batch Adam steps on one fixed batch; returns the loss curve."""
    _, inputs, s = _batch_arrays(batch, n)
    losses = np.empty(epochs)
    for e in range(epochs):
        loss, grads = _loss_and_grads_arrays(net, inputs, s, alpha_goal, n)
        losses[e] = loss
        net, adam = netmod.adam_step(net, adam, grads)
    return net, adam, losses


@dataclass(frozen=True)
class RoundRecord:
    round: int
    alpha_goal: float
    mean_loss: float
    eps_left: float
    eps_right: float
    achieved_ratio: float
    stall_count: int
    theta_left: TypeProfile
    theta_right: TypeProfile
    exact: bool


@dataclass
class WctResult:
    best_mechanism: Mechanism
    best_ratio: float | None
    store: WcpStore
    history: list
    goal: GoalState
    net: object
    adam: netmod.AdamState


def wct_run(net, n, config, store=None, goal=None):
    """Train toward higher certified worst-case ratios.

    Runs epochs_per_round full-batch Adam steps per round; when the round's
    mean loss is at or under the stall threshold, certifies the network at
    the current goal, stores both worst-case profiles, and updates the goal
    (success means the certified violations sum to at most the tolerance).
    Returns the best shifted mechanism by certified achieved ratio.
    """
    if net.input_dim != n - 1:
        raise ContractViolation(f"net takes {net.input_dim} inputs, need {n - 1}")
    store = store if store is not None else WcpStore()
    goal = goal if goal is not None else GoalState.initial(n)
    rng = np.random.default_rng(config.seed)
    adam = netmod.init_adam(net, learning_rate=config.learning_rate)

    history = []
    best_mech = Mechanism(n, net, 0.0)
    best_ratio = None
    stalls = 0
    mip_round = 0
    while mip_round < config.mip_rounds:
        batch = build_batch(store, n, rng)
        net, adam, losses = _train_round(net, adam, batch, goal.alpha_goal, n,
                                         config.epochs_per_round)
        mean_loss = float(losses.mean())
        if mean_loss > loss_threshold(stalls, config.threshold_unit,
                                      config.threshold_period):
            stalls += 1
            continue

        cert = certify(net, n, goal.alpha_goal, node_budget=config.node_budget)
        store.append(cert.theta_left)
        store.append(cert.theta_right)
        mip_round += 1
        achieved = goal.alpha_goal - cert.total
        history.append(RoundRecord(mip_round, goal.alpha_goal, mean_loss,
                                   cert.eps_left, cert.eps_right, achieved,
                                   stalls, cert.theta_left, cert.theta_right,
                                   cert.exact))
        if cert.exact and (best_ratio is None or achieved > best_ratio):
            best_ratio = achieved
            best_mech = shift_to_feasible(net, cert.eps_left, n)
        success = cert.exact and cert.total <= config.success_tolerance
        goal = goal_update(goal, success)
        stalls = 0

    return WctResult(best_mech, best_ratio, store, history, goal, net, adam)

"""Ticket drawing: train a large network, prune to a tiny trainable subnetwork.

A draw restores the large network to its initial weights and trains it on
batches that include worst-case profiles shared from all earlier draws; each
time a round's mean loss clears the stall threshold one hidden node is
removed (the one with the smallest relative importance, measured by outgoing
absolute weight mass normalized within its layer).  Scratching a ticket runs
worst-case training on the pruned subnetwork and feeds its last 16 certified
worst-case profiles back into the shared store, steering later draws toward
different subnetworks.  Mechanisms with different worst cases combine into a
half/half ensemble that is again a plain ReLU network.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import net as netmod
from .errors import ContractViolation
from .mechanism import Mechanism
from .net import Mlp
from .trainer import (
    GoalState,
    WcpStore,
    _train_round,
    build_batch,
    goal_update,
    loss_threshold,
    wct_run,
)

log = logging.getLogger(__name__)

_SHARE_COUNT = 16  # worst-case profiles fed back per scratch


# -- pruning --------------------------------------------------------------------

def _outgoing_importance(net, layer):
    """Per-node sum of absolute outgoing weights for one hidden layer."""
    return np.abs(net.weights[layer + 1]).sum(axis=0)


def node_relative_importance(net, layer, node):
    """Importance of one hidden node normalized within its layer."""
    if not 0 <= layer < len(net.hidden_sizes):
        raise ContractViolation(f"no hidden layer {layer}")
    if not 0 <= node < net.hidden_sizes[layer]:
        raise ContractViolation(f"no node {node} in layer {layer}")
    imps = _outgoing_importance(net, layer)
    total = imps.sum()
    if total == 0.0:
        log.warning("layer %d has zero total importance; treating nodes as equal",
                    layer)
        return 1.0 / len(imps)
    return float(imps[node] / total)


def least_important_node(net):
    """Globally least relatively-important prunable hidden node.

    Layers reduced to a single node are not prunable (a hidden layer never
    empties).  Ties break toward the earliest layer, then the lowest index.
    """
    best = None
    for l, size in enumerate(net.hidden_sizes):
        if size <= 1:
            continue
        imps = _outgoing_importance(net, l)
        total = imps.sum()
        rel = imps / total if total > 0 else np.full(size, 1.0 / size)
        j = int(np.argmin(rel))
        if best is None or rel[j] < best[0]:
            best = (float(rel[j]), l, j)
    if best is None:
        raise ContractViolation("no prunable hidden node")
    return best[1], best[2]


def remove_node(net, layer, node):
    """Drop one hidden node: its row in its layer, its column in the next."""
    w = list(net.weights)
    b = list(net.biases)
    w[layer] = np.delete(w[layer], node, axis=0)
    b[layer] = np.delete(b[layer], node)
    w[layer + 1] = np.delete(w[layer + 1], node, axis=1)
    hidden = list(net.hidden_sizes)
    hidden[layer] -= 1
    return Mlp(net.input_dim, tuple(hidden), tuple(w), tuple(b), net.skip_weights)


def prune_one_node(net):
    """Remove the least relatively-important hidden node."""
    if net.hidden_node_count() <= 1:
        raise ContractViolation("network must keep at least one hidden node")
    layer, node = least_important_node(net)
    return remove_node(net, layer, node)


def _prune_adam(state, layer, node):
    def cut(g):
        w = list(g.weights)
        b = list(g.biases)
        w[layer] = np.delete(w[layer], node, axis=0)
        b[layer] = np.delete(b[layer], node)
        w[layer + 1] = np.delete(w[layer + 1], node, axis=1)
        return netmod.MlpGrads(tuple(w), tuple(b), g.skip_weights)
    return netmod.AdamState(state.step, cut(state.first_moment),
                            cut(state.second_moment), state.learning_rate,
                            state.beta1, state.beta2, state.epsilon)


def subnetwork(net, retained):
    """Restrict a network to the retained original node indices per layer."""
    if len(retained) != len(net.hidden_sizes):
        raise ContractViolation("retained index sets must match the layer count")
    w = [np.array(x) for x in net.weights]
    b = [np.array(x) for x in net.biases]
    for l, keep in enumerate(retained):
        keep = list(keep)
        if not keep:
            raise ContractViolation(f"layer {l} would be empty")
        w[l] = w[l][keep, :]
        b[l] = b[l][keep]
        w[l + 1] = w[l + 1][:, keep]
    hidden = tuple(len(k) for k in retained)
    return Mlp(net.input_dim, hidden, tuple(w), tuple(b), net.skip_weights)


# -- tickets ----------------------------------------------------------------------

@dataclass(frozen=True)
class Ticket:
    """A subnetwork identity drawn from the large network."""

    retained: tuple           # original node indices kept, per hidden layer
    init_subnet: Mlp          # large-net initial weights restricted to retained
    trained_subnet: Mlp       # state at the end of the drawing phase
    draw_ordinal: int
    best_ratio: float | None = None
    best_mechanism: Mechanism | None = None
    scratched: bool = False


@dataclass
class DrawHistory:
    """Shared state across draws: profiles, goal, and the frozen large net."""

    initial_net: Mlp
    shared_store: WcpStore
    goal: GoalState
    rng: np.random.Generator
    tickets: list = field(default_factory=list)


def new_history(n, large_sizes, seed):
    return DrawHistory(
        initial_net=netmod.init_random(n - 1, large_sizes, seed),
        shared_store=WcpStore(),
        goal=GoalState.initial(n),
        rng=np.random.default_rng([seed, 1]),
    )


def draw_ticket(history, n, target_size, config):
    """Restore the large network and prune it down to the target size.

    Training rounds use the shared store's profiles; whenever a round's mean
    loss is at or under the stall threshold, the least relatively-important
    node is pruned and the stall counter resets.
    """
    net = history.initial_net
    if target_size >= net.hidden_node_count():
        raise ContractViolation("target size must be below the large network's")
    if net.input_dim != n - 1:
        raise ContractViolation(f"net takes {net.input_dim} inputs, need {n - 1}")
    adam = netmod.init_adam(net, learning_rate=config.learning_rate)
    retained = [list(range(k)) for k in net.hidden_sizes]
    stalls = 0
    while net.hidden_node_count() > target_size:
        batch = build_batch(history.shared_store, n, history.rng)
        net, adam, losses = _train_round(net, adam, batch,
                                         history.goal.alpha_goal, n,
                                         config.epochs_per_round)
        if losses.mean() > loss_threshold(stalls, config.threshold_unit,
                                          config.threshold_period):
            stalls += 1
            continue
        layer, node = least_important_node(net)
        net = remove_node(net, layer, node)
        adam = _prune_adam(adam, layer, node)
        del retained[layer][node]
        stalls = 0
    retained = tuple(tuple(k) for k in retained)
    return Ticket(
        retained=retained,
        init_subnet=subnetwork(history.initial_net, retained),
        trained_subnet=net,
        draw_ordinal=len(history.tickets),
    )


def scratch_ticket(ticket, n, config, history):
    """Evaluate a ticket by worst-case training from its trained subnetwork.

    The scratch gets its own empty profile store; afterwards its last 16
    worst-case profiles join the shared store and the draw-level goal is
    updated (success: the scratch certified within tolerance at a goal at
    least as high as the current one).
    """
    scratch_seed = int(history.rng.integers(2**63))
    run = wct_run(ticket.trained_subnet, n,
                  replace(config, seed=scratch_seed),
                  store=WcpStore(), goal=history.goal)
    for profile in run.store.profiles[-_SHARE_COUNT:]:
        history.shared_store.append(profile)
    success = any(
        rec.exact
        and rec.alpha_goal >= history.goal.alpha_goal - 1e-12
        and rec.eps_left + rec.eps_right <= config.success_tolerance
        for rec in run.history
    )
    if run.history:
        history.goal = goal_update(history.goal, success)
    updated = replace(ticket, best_ratio=run.best_ratio,
                      best_mechanism=run.best_mechanism if run.best_ratio is not None
                      else None,
                      scratched=True)
    return updated, history


def is_new_ticket(ticket, history):
    """True unless some other recorded ticket retained exactly the same nodes."""
    return all(t.retained != ticket.retained for t in history.tickets
               if t.draw_ordinal != ticket.draw_ordinal)


# -- ensembles ---------------------------------------------------------------------

def _lift_depth(net, depth):
    """Append exact identity hidden layers (post-ReLU values are nonnegative)."""
    while len(net.hidden_sizes) < depth:
        k = net.hidden_sizes[-1]
        w = list(net.weights)
        b = list(net.biases)
        w.insert(len(w) - 1, np.eye(k))
        b.insert(len(b) - 1, np.zeros(k))
        net = Mlp(net.input_dim, (*net.hidden_sizes, k), tuple(w), tuple(b),
                  net.skip_weights)
    return net


def ensemble(m1, m2):
    """Half/half mixture as one network: block-diagonal hidden layers.

    The result computes 0.5 h1 + 0.5 h2 exactly at every input; its shift is
    the average of the member shifts.  Members of unequal depth are first
    lifted with exact identity layers.
    """
    if m1.n != m2.n:
        raise ContractViolation(f"agent counts differ: {m1.n} vs {m2.n}")
    depth = max(len(m1.net.hidden_sizes), len(m2.net.hidden_sizes))
    a, b = _lift_depth(m1.net, depth), _lift_depth(m2.net, depth)

    weights = [np.vstack([a.weights[0], b.weights[0]])]
    biases = [np.concatenate([a.biases[0], b.biases[0]])]
    for l in range(1, depth):
        ka, kb = a.hidden_sizes[l], b.hidden_sizes[l]
        pa, pb = a.hidden_sizes[l - 1], b.hidden_sizes[l - 1]
        w = np.zeros((ka + kb, pa + pb))
        w[:ka, :pa] = a.weights[l]
        w[ka:, pa:] = b.weights[l]
        weights.append(w)
        biases.append(np.concatenate([a.biases[l], b.biases[l]]))
    weights.append(np.hstack([0.5 * a.weights[-1], 0.5 * b.weights[-1]]))
    biases.append(0.5 * (a.biases[-1] + b.biases[-1]))

    skip = None
    if a.skip_weights is not None or b.skip_weights is not None:
        sa = a.skip_weights if a.skip_weights is not None else 0.0
        sb = b.skip_weights if b.skip_weights is not None else 0.0
        skip = 0.5 * (np.zeros(a.input_dim) + sa + sb)

    hidden = tuple(a.hidden_sizes[l] + b.hidden_sizes[l] for l in range(depth))
    net = Mlp(a.input_dim, hidden, tuple(weights), tuple(biases), skip)
    return Mechanism(m1.n, net, 0.5 * (m1.shift + m2.shift))


# -- full runs ---------------------------------------------------------------------

@dataclass(frozen=True)
class DrawRecord:
    draw: int
    novel: bool
    ticket_ratio: float | None
    best_ratio: float | None   # running maximum over draws
    gap: float | None          # alpha_upper - best_ratio


@dataclass
class LotteryResult:
    best_mechanism: Mechanism | None
    best_ratio: float | None
    history: DrawHistory
    records: list


def lottery_run(n, large_sizes, target_size, draws, config, seed,
                fresh_store=False):
    """Repeat draw-and-scratch, tracking novelty and the running best ratio.

    With fresh_store the shared worst-case store is emptied before every
    draw, disabling cross-draw steering (kept for comparison runs).
    """
    if draws < 1:
        raise ContractViolation("need at least one draw")
    history = new_history(n, large_sizes, seed)
    alpha_upper = history.goal.alpha_upper
    best_ratio = None
    best_mech = None
    records = []
    for d in range(draws):
        if fresh_store:
            history.shared_store = WcpStore()
        ticket = draw_ticket(history, n, target_size, config)
        novel = is_new_ticket(ticket, history)
        ticket, history = scratch_ticket(ticket, n, config, history)
        history.tickets.append(ticket)
        if ticket.best_ratio is not None and (best_ratio is None
                                              or ticket.best_ratio > best_ratio):
            best_ratio = ticket.best_ratio
            best_mech = ticket.best_mechanism
        records.append(DrawRecord(
            draw=d,
            novel=novel,
            ticket_ratio=ticket.best_ratio,
            best_ratio=best_ratio,
            gap=None if best_ratio is None else alpha_upper - best_ratio,
        ))
        log.info("draw %d: novel=%s ratio=%s best=%s", d, novel,
                 ticket.best_ratio, best_ratio)
    return LotteryResult(best_mech, best_ratio, history, records)

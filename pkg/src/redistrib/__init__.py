"""Worst-case VCG redistribution mechanism design with exact MIP certification."""

from .bounds import bound_profiles, compute_bounds, manual_lower_bound, theoretical_upper_bound
from .certifier import (
    Certificate,
    activation_bounds,
    build_left_mip,
    build_right_mip,
    certify,
    certify_mechanism,
    grid_oracle,
    solve_mip,
)
from .mechanism import (
    Mechanism,
    TypeProfile,
    Violations,
    load_mechanism,
    payments,
    s_value,
    save_mechanism,
    shift_to_feasible,
    sum_h,
    violations,
)
from .lottery import (
    DrawHistory,
    Ticket,
    draw_ticket,
    ensemble,
    is_new_ticket,
    lottery_run,
    node_relative_importance,
    prune_one_node,
    scratch_ticket,
)
from .net import (
    AdamState,
    Mlp,
    adam_step,
    deserialize,
    forward,
    forward_batch,
    gradients,
    init_adam,
    init_random,
    serialize,
)
from .trainer import (
    GoalState,
    TrainConfig,
    WcpStore,
    batch_loss,
    build_batch,
    goal_update,
    loss_threshold,
    sample_random_profile,
    wct_run,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Tabular proto successor measures: flow-constraint bases, exact and learned
zero-shot inference, and the experiment commands."""

from ._psm import (
    DivergenceError,
    Error,
    Mdp,
    Model,
    NumericalError,
    ValidationError,
    affine_basis,
    codebook_actions,
    collect,
    evaluate,
    flow_operator,
    four_room,
    goal_reward,
    grid_layout,
    gridworld,
    infer,
    infer_w_exact_lp,
    membership_residual,
    random_mdp,
    sample_seeds,
    successor_measure,
    toy_mdp,
    train,
    value_iteration,
    visitation,
)

__all__ = [name for name in dir() if not name.startswith("_")]

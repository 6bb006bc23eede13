"""Baseline vaccination policies behind the same interface as the controller.

Age groups are ordered youngest to oldest, as in the scenario presets; the
national policy walks that order backwards.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .model import EpidemicState

POLICIES = ("none", "national", "mpc")


def no_vaccination(state: EpidemicState) -> np.ndarray:
    """The do-nothing baseline: always the zero control."""
    return np.zeros(state.n_a)


def national_allocate(state: EpidemicState, v_bar: float) -> np.ndarray:
    """Decreasing-age allocation: fill the oldest group first.

    Each group receives at most its current susceptible count; leftover
    capacity spills over to the next younger group within the same day, so
    the full capacity is spent whenever enough susceptibles remain.
    """
    u = np.zeros(state.n_a)
    remaining = float(v_bar)
    for k in range(state.n_a - 1, -1, -1):
        if remaining <= 0.0:
            break
        dose = min(remaining, float(state.s[k]))
        if dose > 0.0:
            u[k] = dose
            remaining -= dose
    return u


def apply_policy(
    policy: str,
    state: EpidemicState,
    cfg,
    params,
) -> np.ndarray:
    """Uniform single-day dispatch with shared gate semantics.

    All policies see the same rules: zero before the vaccination start day
    and zero once every group's infected count is at or below the
    eradication threshold.  ``cfg`` is an :class:`vaxmpc.mpc.MpcConfig`.
    """
    if policy not in POLICIES:
        raise ValidationError(f"unknown policy {policy!r}")
    if state.day < cfg.vaccination_start_day:
        return np.zeros(state.n_a)
    if bool(np.all(state.i <= cfg.eradication_vector(state.n_a))):
        return np.zeros(state.n_a)
    if policy == "none":
        return no_vaccination(state)
    if policy == "national":
        return national_allocate(state, cfg.v_bar)
    from . import mpc  # deferred: mpc imports this module at load time

    problem = mpc.build_ocp(state, cfg, params)
    return mpc.solve_ocp(problem).controls[0]

"""Reference controllers: instantaneous per-element Optimal and the
column-wise Realistic controller that tunes toward it and stops at t_s."""
from __future__ import annotations

import numpy as np

from .env import LcConfig, optimal_phases, reduce_to_columns
from .lc_dynamics import (
    PanelState,
    SlotTiming,
    clamp_phase,
    element_config_time,
    transition_trajectory,
)
from .scene import Snapshot


def optimal_controller(snapshot: Snapshot, t_s: float):
    """Perfect-CSI co-phasing of all elements with zero configuration time."""
    return optimal_phases(snapshot, outdated=False), SlotTiming(t_c=0.0, t_k=t_s)


def realistic_controller(snapshot: Snapshot, panel: PanelState, n_y=30, n_z=25,
                         method="circular_mean"):
    """Tune each column toward the current optimum, halting at the slot end.

    Returns the achieved column phases (short of target for columns that ran
    out of time), the slot timing, and the panel after the slot.
    """
    targets = reduce_to_columns(optimal_phases(snapshot, outdated=False), n_y, n_z, method)
    targets = clamp_phase(targets, panel.omega_max, panel.eps)
    needed = element_config_time(panel.phases, targets, panel.omega_max, panel.tau, panel.eps)
    halt = np.minimum(needed, panel.t_s)
    achieved = transition_trajectory(panel.phases, targets, panel.tau, panel.omega_max, halt)
    achieved = clamp_phase(achieved, panel.omega_max, panel.eps)
    t_c = float(min(np.max(needed), panel.t_s))
    timing = SlotTiming(t_c=t_c, t_k=panel.t_s - t_c)
    return achieved, timing, panel.with_phases(achieved)


def initial_panel(lc: LcConfig, n_columns: int, rng: np.random.Generator) -> PanelState:
    return lc.panel(rng.uniform(lc.eps, lc.omega_max - lc.eps, n_columns))

"""Liquid-crystal phase transitions.

A unit cell relaxes exponentially: upward toward the phase ceiling with time
constant ``tau_up`` and downward toward zero with ``tau_down``. Phases never
wrap; they live in the clamped interior [eps, omega_max - eps] so the
inverse (configuration time) stays finite.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

PHASE_EPS = 1e-3
TWO_PI = 2 * np.pi


class ConstraintViolation(ValueError):
    """A commanded phase is outside what the LC can reach in one slot."""


@dataclass(frozen=True)
class LcTimeConstants:
    tau_down: float = 29e-3
    tau_up: float = 9e-3

    def __post_init__(self):
        if not (self.tau_down > 0 and self.tau_up > 0):
            raise ValueError("LC time constants must be positive")


@dataclass(frozen=True)
class SlotTiming:
    t_c: float
    t_k: float

    @property
    def t_s(self) -> float:
        return self.t_c + self.t_k


@dataclass(frozen=True)
class PanelState:
    phases: np.ndarray
    omega_max: float = TWO_PI
    tau: LcTimeConstants = LcTimeConstants()
    t_s: float = 10e-3
    eps: float = PHASE_EPS

    def __post_init__(self):
        if not self.t_s > 0:
            raise ValueError("slot duration must be positive")
        p = np.asarray(self.phases, dtype=float)
        lo, hi = self.eps, self.omega_max - self.eps
        if np.any(p < lo - 1e-12) or np.any(p > hi + 1e-12):
            raise ValueError("panel phases must lie in the clamped interior")
        p = np.clip(p, lo, hi)
        p.setflags(write=False)
        object.__setattr__(self, "phases", p)

    def with_phases(self, phases) -> "PanelState":
        return replace(self, phases=np.asarray(phases, dtype=float))

    @classmethod
    def random(cls, n_columns: int, rng: np.random.Generator, **kw) -> "PanelState":
        eps = kw.get("eps", PHASE_EPS)
        omega_max = kw.get("omega_max", TWO_PI)
        return cls(phases=rng.uniform(eps, omega_max - eps, n_columns), **kw)


def clamp_phase(w, omega_max=TWO_PI, eps=PHASE_EPS):
    return np.clip(w, eps, omega_max - eps)


def _bounds(w0, t, omega_max, tau: LcTimeConstants):
    w_min = w0 * np.exp(-t / tau.tau_down)
    w_max = omega_max + (w0 - omega_max) * np.exp(-t / tau.tau_up)
    return w_min, w_max


def reachable_bounds(state: PanelState, t: float):
    """Lowest and highest phase each column can reach within ``t`` seconds.

    Bounds are clipped to the clamped interior so that every returned target
    has a finite configuration time.
    """
    if t < 0:
        raise ValueError(f"time budget must be non-negative, got {t}")
    w_min, w_max = _bounds(state.phases, t, state.omega_max, state.tau)
    lo, hi = state.eps, state.omega_max - state.eps
    return np.clip(w_min, lo, hi), np.clip(w_max, lo, hi)


def element_config_time(w0, wd, omega_max=TWO_PI, tau: LcTimeConstants = LcTimeConstants(),
                        eps=PHASE_EPS):
    """Time for a cell to move from ``w0`` to ``wd`` (vectorised)."""
    w0 = np.asarray(w0, dtype=float)
    wd = np.asarray(wd, dtype=float)
    lo, hi = eps, omega_max - eps
    tol = 1e-12
    for name, w in (("start", w0), ("target", wd)):
        if np.any(w < lo - tol) or np.any(w > hi + tol):
            raise ValueError(f"{name} phase outside clamped interval [{lo}, {hi}]")
    w0 = np.clip(w0, lo, hi)
    wd = np.clip(wd, lo, hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        up = tau.tau_up * np.log((omega_max - w0) / (omega_max - wd))
        down = tau.tau_down * np.log(w0 / wd)
    t = np.where(wd > w0, up, np.where(wd < w0, down, 0.0))
    return float(t) if t.ndim == 0 else t


def panel_config_time(state: PanelState, targets, rtol=1e-9) -> SlotTiming:
    """Panel configuration time = slowest column; serving time is the rest."""
    targets = np.asarray(targets, dtype=float)
    if targets.shape != state.phases.shape:
        raise ValueError(f"expected {state.phases.shape} targets, got {targets.shape}")
    w_min, w_max = reachable_bounds(state, state.t_s)
    slack = rtol * state.omega_max
    bad = np.flatnonzero((targets < w_min - slack) | (targets > w_max + slack))
    if bad.size:
        n = int(bad[0])
        raise ConstraintViolation(
            f"column {n}: target {targets[n]:.6f} rad outside reachable "
            f"[{w_min[n]:.6f}, {w_max[n]:.6f}] within t_s"
        )
    t_cn = element_config_time(state.phases, targets, state.omega_max, state.tau, state.eps)
    t_c = float(np.max(t_cn)) if t_cn.size else 0.0
    # bound-extreme targets can overshoot t_s by rounding only
    t_c = min(max(t_c, 0.0), state.t_s)
    return SlotTiming(t_c=t_c, t_k=state.t_s - t_c)


def effective_rate(snr_linear: float, timing: SlotTiming, bandwidth: float) -> float:
    """Shannon rate scaled by the serving-time fraction, in bit/s."""
    if snr_linear < 0 or bandwidth <= 0:
        raise ValueError("need snr >= 0 and bandwidth > 0")
    return timing.t_k / timing.t_s * bandwidth * np.log2(1 + snr_linear)


def transition_trajectory(w0, wd, tau: LcTimeConstants, omega_max, times, truncate=True):
    """Phase of cells moving from ``w0`` toward ``wd`` sampled at ``times``.

    Follows the exponential relaxation in the direction of the target. With
    ``truncate`` the phase holds at ``wd`` once reached; without it the free
    relaxation is returned, which is what the closed-form time inverts.
    """
    w0 = np.asarray(w0, dtype=float)
    wd = np.asarray(wd, dtype=float)
    t = np.asarray(times, dtype=float)
    upward = wd > w0
    rising = omega_max + (w0 - omega_max) * np.exp(-t / tau.tau_up)
    falling = w0 * np.exp(-t / tau.tau_down)
    w = np.where(upward, rising, np.where(wd < w0, falling, w0))
    if truncate:
        w = np.where(upward, np.minimum(w, wd), np.maximum(w, wd))
    return w


def integrate_relaxation(w0, wd, tau: LcTimeConstants, omega_max, t_end, steps=2000):
    """RK4 integration of the director relaxation ODE from 0 to ``t_end``.

    dw/dt = (omega_max - w) / tau_up when rising, -w / tau_down when falling.
    Independent of the closed forms above; used to cross-check them.
    """
    w = np.array(w0, dtype=float, copy=True)
    wd = np.asarray(wd, dtype=float)
    upward = wd > w
    still = wd == w
    h = np.asarray(t_end, dtype=float) / steps

    def f(x):
        return np.where(upward, (omega_max - x) / tau.tau_up, -x / tau.tau_down)

    for _ in range(steps):
        k1 = f(w)
        k2 = f(w + 0.5 * h * k1)
        k3 = f(w + 0.5 * h * k2)
        k4 = f(w + h * k3)
        w = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return np.where(still, wd, w)

"""The phase-control MDP.

Each slot the agent sees its current column phases plus outdated (slot i-1)
CSI, commands 30 column phases in [-1, 1], the LC panel moves toward them,
and the reward trades SNR against serving time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .lc_dynamics import (
    TWO_PI,
    LcTimeConstants,
    PanelState,
    SlotTiming,
    clamp_phase,
    effective_rate,
    panel_config_time,
    reachable_bounds,
)
from .scene import SceneConfig, Snapshot, SnapshotStream, build_trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardWeights:
    beta1: float = 0.2
    beta2: float = 0.8
    snr_scale: str = "db"  # "db" or "linear"
    time_scale: float = 1e3  # seconds -> milliseconds

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("reward weights must be non-negative")
        if self.snr_scale not in ("db", "linear"):
            raise ValueError("snr_scale must be 'db' or 'linear'")

    def __call__(self, snr_linear: float, t_k: float) -> float:
        s = ch.db(max(snr_linear, 1e-300)) if self.snr_scale == "db" else snr_linear
        return float(self.beta1 * s + self.beta2 * t_k * self.time_scale)


@dataclass(frozen=True)
class LcConfig:
    tau_down: float = 29e-3
    tau_up: float = 9e-3
    omega_max: float = TWO_PI
    t_s: float = 10e-3
    eps: float = 1e-3

    @property
    def tau(self) -> LcTimeConstants:
        return LcTimeConstants(self.tau_down, self.tau_up)

    def panel(self, phases) -> PanelState:
        return PanelState(phases=phases, omega_max=self.omega_max, tau=self.tau,
                          t_s=self.t_s, eps=self.eps)


@dataclass(frozen=True)
class MetricRow:
    run_id: int
    slot: int
    angle: float
    received_power_dbw: float
    snr_db: float
    t_c_ms: float
    t_k_ms: float
    rate_mbps: float
    controller: str
    pass_index: int = 0
    arrival: bool = False


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


def wrap(phases) -> np.ndarray:
    """Wrap into [0, 2pi); np.mod alone can return 2pi for tiny negatives."""
    w = np.mod(phases, TWO_PI)
    return np.where(w >= TWO_PI, 0.0, w)


def optimal_phases_from(h_au, h_ar, h_ru) -> np.ndarray:
    """Per-element phases co-phasing every RIS path with the direct path."""
    h_au = complex(np.ravel(getattr(h_au, "h", h_au))[0])
    h_ar = getattr(h_ar, "h", h_ar)
    h_ru = getattr(h_ru, "h", h_ru)
    anchor = np.angle(h_au) if h_au != 0 else 0.0
    return wrap(anchor - np.angle(h_ar * h_ru))


def optimal_phases(snapshot: Snapshot, outdated: bool = True) -> np.ndarray:
    c = snapshot.prev_channels if outdated else snapshot.channels
    return optimal_phases_from(c["A-U"], c["A-R"], c["R-U"])


def reduce_to_columns(phases, n_y=30, n_z=25, method="circular_mean") -> np.ndarray:
    """Collapse per-element phases (z-major layout) to one phase per column."""
    grid = np.asarray(phases, dtype=float).reshape(n_z, n_y)
    if method == "center_row":
        return wrap(grid[n_z // 2])
    if method != "circular_mean":
        raise ValueError(f"unknown column reduction {method!r}")
    resultant = np.exp(1j * grid).mean(axis=0)
    tie = np.abs(resultant) < 1e-12
    if np.any(tie):
        log.warning("zero circular resultant in columns %s; using 0 rad", np.flatnonzero(tie))
    out = wrap(np.angle(resultant))
    out[tie] = 0.0
    return out


def expand_columns(columns, n_z=25) -> np.ndarray:
    return np.tile(np.asarray(columns, dtype=float), n_z)


def map_action(raw, panel: PanelState) -> np.ndarray:
    """Affine map of raw actions in [-1, 1] onto each column's reachable range."""
    raw = np.clip(np.asarray(raw, dtype=float), -1.0, 1.0)
    lo, hi = reachable_bounds(panel, panel.t_s)
    return lo + (raw + 1.0) * 0.5 * (hi - lo)


def slot_quality(snapshot: Snapshot, element_phases, cfg: ch.ChannelConfig, spec=None):
    """(linear SNR, received power in W) for the true slot-i channels."""
    spec = spec or cfg.array()
    h_eff = ch.effective_channel(snapshot.h_ar, snapshot.h_ru, element_phases, spec)
    s = ch.snr(snapshot.h_au, h_eff, cfg.p_tx, cfg.noise)
    return s, s * cfg.noise


def metric_row(run_id, snapshot, snr_lin, p_r, timing: SlotTiming, bandwidth, controller,
               pass_index=0) -> MetricRow:
    rate = effective_rate(snr_lin, timing, bandwidth)
    return MetricRow(
        run_id=run_id,
        slot=int(snapshot.index),
        angle=float(snapshot.label),
        received_power_dbw=float(ch.db(max(p_r, 1e-300))),
        snr_db=float(ch.db(max(snr_lin, 1e-300))),
        t_c_ms=float(timing.t_c * 1e3),
        t_k_ms=float(timing.t_k * 1e3),
        rate_mbps=float(rate / 1e6),
        controller=controller,
        pass_index=int(pass_index),
    )


class RunningRms:
    def __init__(self):
        self.sum_sq = 0.0
        self.count = 0

    def update(self, x):
        x = np.asarray(x)
        self.sum_sq += float(np.sum(np.abs(x) ** 2))
        self.count += x.size

    @property
    def rms(self) -> float:
        if self.count == 0 or self.sum_sq == 0:
            return 1.0
        return float(np.sqrt(self.sum_sq / self.count))

    def state(self):
        return [self.sum_sq, self.count]

    def load(self, s):
        self.sum_sq, self.count = float(s[0]), int(s[1])


@dataclass
class EnvConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    channel: ch.ChannelConfig = field(default_factory=ch.ChannelConfig)
    lc: LcConfig = field(default_factory=LcConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    episode_steps: int = 19328
    state_channels: str = "full"  # or "columns"
    per_element: bool = False
    column_reduction: str = "circular_mean"


class LcRisEnv:
    """Single-episode-at-a-time environment; ``reset`` starts a fresh episode.

    Channel draws and the initial panel come from separate streams spawned
    from the episode seed, so two agents fed the same seeds see identical
    channels whatever they do.
    """

    def __init__(self, cfg: EnvConfig, run_id: int = 0):
        self.cfg = cfg
        self.run_id = run_id
        self.spec = cfg.channel.array()
        self.n_columns = self.spec.n if cfg.per_element else self.spec.n_y
        self.trajectory = build_trajectory(cfg.scene, cfg.episode_steps)
        room = np.asarray(cfg.scene.room, dtype=float)
        self.diag = float(np.linalg.norm(room))
        self.rms = {t: RunningRms() for t in ch.LINK_TAGS}
        self.panel: PanelState | None = None
        self.stream: SnapshotStream | None = None
        self.snapshot: Snapshot | None = None

    @property
    def n_channel(self) -> int:
        return self.spec.n_y if self.cfg.state_channels == "columns" else self.spec.n

    @property
    def state_dim(self) -> int:
        return 2 * self.n_columns + 2 + 2 + 4 * self.n_channel

    @property
    def action_dim(self) -> int:
        return self.n_columns

    def reset(self, seed) -> np.ndarray:
        ss = np.random.SeedSequence(seed)
        chan_seq, panel_seq = ss.spawn(2)
        self.stream = SnapshotStream(self.cfg.scene, self.trajectory, self.cfg.channel,
                                     np.random.default_rng(chan_seq))
        lc = self.cfg.lc
        init = np.random.default_rng(panel_seq).uniform(lc.eps, lc.omega_max - lc.eps,
                                                        self.n_columns)
        self.panel = lc.panel(init)
        self.snapshot = self.stream.snapshot_at(0)
        return self.observe()

    def _element_phases(self, phases) -> np.ndarray:
        if self.cfg.per_element:
            return np.asarray(phases, dtype=float)
        return expand_columns(phases, self.spec.n_z)

    def _reduce(self, per_element) -> np.ndarray:
        if self.cfg.per_element:
            return per_element
        return reduce_to_columns(per_element, self.spec.n_y, self.spec.n_z,
                                 self.cfg.column_reduction)

    def _channel_features(self, h, tag) -> np.ndarray:
        h = np.ravel(h)
        if tag != "A-U" and self.cfg.state_channels == "columns":
            h = h.reshape(self.spec.n_z, self.spec.n_y).mean(axis=0)
        self.rms[tag].update(h)
        h = h / self.rms[tag].rms
        return np.concatenate([h.real, h.imag])

    def observe(self) -> np.ndarray:
        s = self.snapshot
        prev = s.prev_channels
        w_opt = self._reduce(optimal_phases(s, outdated=True))
        parts = [
            self.panel.phases / TWO_PI,
            w_opt / TWO_PI,
            np.array([s.prev_distances["A-U"], s.prev_distances["R-U"]]) / self.diag,
            self._channel_features(prev["A-U"].h, "A-U"),
            self._channel_features(prev["A-R"].h, "A-R"),
            self._channel_features(prev["R-U"].h, "R-U"),
        ]
        obs = np.concatenate(parts)
        if not np.all(np.isfinite(obs)):
            raise FloatingPointError("non-finite observation")
        return obs

    def advance(self, element_phases, timing: SlotTiming, controller="ddpg"):
        """Score slot i with the given element phases, then move to slot i+1."""
        snr_lin, p_r = slot_quality(self.snapshot, element_phases, self.cfg.channel, self.spec)
        reward = self.cfg.reward(snr_lin, timing.t_k)
        i = self.snapshot.index
        row = metric_row(self.run_id, self.snapshot, snr_lin, p_r, timing,
                         self.cfg.channel.bandwidth, controller, self.trajectory.passes[i])
        done = i + 1 >= len(self.trajectory)
        if not done:
            self.snapshot = self.stream.snapshot_at(i + 1)
        return reward, done, row

    def step_phases(self, targets, controller="ddpg"):
        """Move the panel to feasible ``targets`` and score slot i."""
        timing = panel_config_time(self.panel, targets)
        self.panel = self.panel.with_phases(clamp_phase(targets, self.panel.omega_max,
                                                        self.panel.eps))
        reward, done, row = self.advance(self._element_phases(self.panel.phases), timing,
                                         controller)
        return self.observe(), reward, done, row

    def step(self, raw_action, controller="ddpg"):
        return self.step_phases(map_action(raw_action, self.panel), controller)

    def normalizer_state(self):
        return {t: r.state() for t, r in self.rms.items()}

    def load_normalizer(self, state):
        for t, s in state.items():
            self.rms[t].load(s)

"""Indoor geometry, mobile-user trajectory and per-slot snapshots.

Coordinates are room coordinates in metres. The RIS faces the AP, so the AP
sits on the RIS broadside (elevation 0, azimuth 0). The RIS-local frame has
x along the broadside normal, y horizontal along the array rows and z up.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelConfig, LinkChannel, LinkGeometry, build_channel

DEFAULT_ANGLES = (-60.0, -50.0, -40.0, -30.0, -20.0, 20.0, 30.0, 40.0, 50.0, 60.0)


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    room: tuple = (63.0, 36.0, 3.0)
    ris_position: tuple = (45.0, 18.0, 2.0)
    ap_position: tuple = (10.9, 18.0, 2.0)
    waypoint_angles: tuple = DEFAULT_ANGLES
    # scalar or one radius per waypoint
    waypoint_radius: float | tuple = 12.0
    max_radius: float = 15.5
    speed: float = 1.5
    t_s: float = 10e-3

    def __post_init__(self):
        if not self.speed > 0:
            raise SceneError("user speed must be positive")
        if not self.t_s > 0:
            raise SceneError("slot duration must be positive")
        ang = np.asarray(self.waypoint_angles, dtype=float)
        if ang.size == 0:
            raise SceneError("need at least one waypoint")
        if np.any(np.diff(ang) <= 0):
            raise SceneError("waypoint angles must be strictly increasing")
        radii = self.radii
        if np.any(radii <= 0) or np.any(radii > self.max_radius):
            raise SceneError(f"waypoint radii must lie in (0, {self.max_radius}] m")
        for name, p in (("RIS", self.ris_position), ("AP", self.ap_position)):
            self._check_inside(name, np.asarray(p, dtype=float))
        for a, p in zip(ang, self.waypoints()):
            self._check_inside(f"waypoint {a:g} deg", p)

    def _check_inside(self, name, p):
        room = np.asarray(self.room, dtype=float)
        if np.any(p < 0) or np.any(p > room):
            raise SceneError(f"{name} at {tuple(np.round(p, 3))} lies outside the room {self.room}")

    @property
    def radii(self) -> np.ndarray:
        n = len(self.waypoint_angles)
        r = np.atleast_1d(np.asarray(self.waypoint_radius, dtype=float))
        if r.size == 1:
            r = np.full(n, r[0])
        if r.size != n:
            raise SceneError("need one waypoint radius per waypoint angle")
        return r

    @property
    def d_ar(self) -> float:
        return float(np.linalg.norm(np.subtract(self.ap_position, self.ris_position)))

    def ris_frame(self):
        """Unit vectors (normal, y, z) of the RIS-local frame."""
        ris = np.asarray(self.ris_position, dtype=float)
        ap = np.asarray(self.ap_position, dtype=float)
        normal = ap - ris
        normal[2] = 0.0
        norm = np.linalg.norm(normal)
        if norm == 0:
            raise SceneError("AP directly above or below the RIS; broadside undefined")
        normal /= norm
        z = np.array([0.0, 0.0, 1.0])
        y = np.cross(z, normal)
        return normal, y, z

    def waypoints(self) -> np.ndarray:
        normal, y, _ = self.ris_frame()
        ang = np.deg2rad(np.asarray(self.waypoint_angles, dtype=float))
        ris = np.asarray(self.ris_position, dtype=float)
        r = self.radii[:, None]
        return ris + r * (np.cos(ang)[:, None] * normal + np.sin(ang)[:, None] * y)

    def local_angles(self, point):
        """(distance, elevation, azimuth) of ``point`` seen from the RIS."""
        normal, y, z = self.ris_frame()
        v = np.asarray(point, dtype=float) - np.asarray(self.ris_position, dtype=float)
        d = float(np.linalg.norm(v))
        theta = float(np.arcsin(np.clip(v @ z / d, -1.0, 1.0)))
        phi = float(np.arctan2(v @ y, v @ normal))
        if phi == -np.pi:
            phi = np.pi
        return d, theta, phi


@dataclass(frozen=True)
class Trajectory:
    positions: np.ndarray
    labels: np.ndarray  # nearest waypoint angle, degrees
    passes: np.ndarray  # index of the sweep each slot belongs to
    arclength: np.ndarray
    step: float

    def __len__(self):
        return len(self.positions)


def build_trajectory(cfg: SceneConfig, episode_steps: int) -> Trajectory:
    """Ping-pong walk through the waypoints, sorted by angle, at constant speed."""
    if episode_steps <= 0:
        raise ValueError("episode_steps must be positive")
    wp = cfg.waypoints()
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    length = cum[-1]
    step = cfg.speed * cfg.t_s
    s = np.arange(episode_steps) * step

    if length == 0:
        pos = np.repeat(wp[:1], episode_steps, axis=0)
        passes = np.zeros(episode_steps, dtype=int)
        along = np.zeros(episode_steps)
    else:
        passes = np.floor(s / length).astype(int)
        phase = s - passes * length
        along = np.where(passes % 2 == 0, phase, length - phase)
        pos = np.column_stack([np.interp(along, cum, wp[:, k]) for k in range(3)])

    d = np.linalg.norm(pos[:, None, :] - wp[None, :, :], axis=2)
    labels = np.asarray(cfg.waypoint_angles, dtype=float)[np.argmin(d, axis=1)]
    return Trajectory(positions=pos, labels=labels, passes=passes, arclength=s, step=step)


@dataclass(frozen=True)
class Snapshot:
    index: int
    user: np.ndarray
    label: float
    geometry: dict
    channels: dict
    prev_channels: dict
    prev_distances: dict = field(default_factory=dict)

    @property
    def h_au(self) -> LinkChannel:
        return self.channels["A-U"]

    @property
    def h_ar(self) -> LinkChannel:
        return self.channels["A-R"]

    @property
    def h_ru(self) -> LinkChannel:
        return self.channels["R-U"]


def link_geometries(cfg: SceneConfig, user) -> dict:
    ap = np.asarray(cfg.ap_position, dtype=float)
    user = np.asarray(user, dtype=float)
    d_ar, th_ar, ph_ar = cfg.local_angles(ap)
    d_ru, th_ru, ph_ru = cfg.local_angles(user)
    return {
        "A-U": LinkGeometry(float(np.linalg.norm(user - ap)), 0.0, 0.0, "A-U"),
        "A-R": LinkGeometry(d_ar, th_ar, ph_ar, "A-R"),
        "R-U": LinkGeometry(d_ru, th_ru, ph_ru, "R-U"),
    }


class SnapshotStream:
    """Sequential per-slot snapshots for one episode.

    Slot i carries the slot i-1 channels and distances as outdated CSI; slot 0
    uses its own values. Calls must be sequential since each slot depends on
    the cached previous one (and on its NLoS draw when fading is correlated).
    """

    def __init__(self, cfg: SceneConfig, trajectory: Trajectory, channel: ChannelConfig,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.trajectory = trajectory
        self.channel = channel
        self.spec = channel.array()
        self.rng = rng
        self._last: Snapshot | None = None

    def __len__(self):
        return len(self.trajectory)

    def _k(self, tag):
        return {"A-U": self.channel.k_au, "A-R": self.channel.k_ar, "R-U": self.channel.k_ru}[tag]

    def _var(self, tag):
        return self.channel.au_variance if tag == "A-U" else self.channel.nlos_variance

    def snapshot_at(self, i: int) -> Snapshot:
        if not 0 <= i < len(self.trajectory):
            raise IndexError(f"slot {i} outside episode of {len(self.trajectory)} slots")
        expected = 0 if self._last is None else self._last.index + 1
        if i != expected and i != 0:
            raise ValueError(f"snapshots are sequential: expected slot {expected}, got {i}")

        prev = None if i == 0 else self._last
        user = self.trajectory.positions[i]
        geom = link_geometries(self.cfg, user)
        channels = {}
        for tag, g in geom.items():
            prev_nlos = prev.channels[tag].nlos if prev is not None else None
            channels[tag] = build_channel(
                g, self.spec, self._k(tag), self._var(tag), self.rng,
                prev_nlos=prev_nlos, correlation=self.channel.correlation,
            )
        if prev is None:
            prev_channels = dict(channels)
            prev_geom = geom
        else:
            prev_channels = prev.channels
            prev_geom = prev.geometry
        snap = Snapshot(
            index=i,
            user=user,
            label=float(self.trajectory.labels[i]),
            geometry=geom,
            channels=channels,
            prev_channels=prev_channels,
            prev_distances={t: prev_geom[t].distance for t in geom},
        )
        self._last = snap
        return snap

    def __iter__(self):
        self._last = None
        for i in range(len(self.trajectory)):
            yield self.snapshot_at(i)

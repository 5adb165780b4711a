"""Experiment configuration: one TOML file with dotted sections.

Every key has a default, so an empty file gives the reference setup. Unknown
sections or keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli

from ..agent import DdpgConfig
from ..channel import ChannelConfig
from ..env import EnvConfig, LcConfig, RewardWeights
from ..scene import SceneConfig, SceneError


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvSection:
    episode_steps: int = 19328
    state_channels: str = "full"
    per_element: bool = False
    column_reduction: str = "circular_mean"


@dataclass(frozen=True)
class RunSection:
    seeds: tuple = tuple(range(350))
    train_seed: int = 0
    eval_steps: int | None = None  # None -> env.episode_steps
    output_dir: str = "results"
    evaluate_along_training: bool = False
    checkpoint_every: int = 1


@dataclass(frozen=True)
class SweepSection:
    speed: tuple = (1.5, 3.0)
    beta: tuple = ((0.2, 0.8), (0.8, 0.2))
    controllers: tuple = ("optimal", "realistic", "ddpg")


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    lc: LcConfig = field(default_factory=LcConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    agent: DdpgConfig = field(default_factory=DdpgConfig)
    env: EnvSection = field(default_factory=EnvSection)
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection = field(default_factory=SweepSection)

    def env_config(self, episode_steps=None) -> EnvConfig:
        return EnvConfig(
            scene=self.scene,
            channel=self.channel,
            lc=self.lc,
            reward=self.reward,
            episode_steps=episode_steps or self.env.episode_steps,
            state_channels=self.env.state_channels,
            per_element=self.env.per_element,
            column_reduction=self.env.column_reduction,
        )

    @property
    def eval_steps(self) -> int:
        return self.run.eval_steps or self.env.episode_steps

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """Replace fields inside sections, e.g. ``scene={"speed": 3.0}``."""
        out = self
        for name, values in sections.items():
            out = replace(out, **{name: replace(getattr(out, name), **values)})
        return out


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def parse_seeds(spec) -> tuple:
    """Accept an int, a list of ints, or an inclusive range string 'A..B'."""
    if isinstance(spec, int):
        return (spec,)
    if isinstance(spec, str):
        if ".." not in spec:
            return (int(spec),)
        a, b = spec.split("..", 1)
        a, b = int(a), int(b)
        if b < a:
            raise ConfigError(f"empty seed range {spec!r}")
        return tuple(range(a, b + 1))
    return tuple(int(s) for s in spec)


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


_SECTIONS = {
    "scene": SceneConfig,
    "channel": ChannelConfig,
    "lc": LcConfig,
    "reward": RewardWeights,
    "agent": DdpgConfig,
    "env": EnvSection,
    "run": RunSection,
    "sweep": SweepSection,
}


def from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    built = {}
    for name, cls in _SECTIONS.items():
        section = dict(data.get(name, {}))
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        known = {f.name for f in fields(cls)}
        bad = set(section) - known
        if bad:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        section = {k: _tuplify(v) for k, v in section.items()}
        if name == "run" and "seeds" in section:
            section["seeds"] = parse_seeds(section["seeds"])
        try:
            built[name] = cls(**section)
        except (TypeError, ValueError, SceneError) as e:
            raise ConfigError(f"[{name}]: {e}") from e
    cfg = ExperimentConfig(**built)
    if abs(cfg.scene.t_s - cfg.lc.t_s) > 1e-15:
        # one slot length drives both the trajectory and the LC budget
        cfg = cfg.with_overrides(scene={"t_s": cfg.lc.t_s})
    if cfg.env.state_channels not in ("full", "columns"):
        raise ConfigError("env.state_channels must be 'full' or 'columns'")
    if cfg.env.column_reduction not in ("circular_mean", "center_row"):
        raise ConfigError("env.column_reduction must be 'circular_mean' or 'center_row'")
    if cfg.env.episode_steps <= 0:
        raise ConfigError("env.episode_steps must be positive")
    return cfg


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return from_dict({})
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomli.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return from_dict(data)

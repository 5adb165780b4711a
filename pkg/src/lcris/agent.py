"""DDPG from scratch on numpy.

Networks are plain MLPs with hand-written backprop so gradients can be
checked against finite differences. Arrays are batch-first; weights are
(fan_in, fan_out).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1

_ACT = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
}


class Mlp:
    """Feed-forward net; optionally a second input joins at layer ``join_at``.

    With ``join_at=k`` the input of layer k is [hidden_{k-1}, extra]; this is
    how the critic takes the action at its first hidden layer.
    """

    def __init__(self, sizes, activations, rng=None, join_at=None, extra_dim=0,
                 final_scale=None):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        self.sizes = list(sizes)
        self.activations = list(activations)
        self.join_at = join_at
        self.extra_dim = extra_dim
        self.params = []
        rng = rng or np.random.default_rng(0)
        for k in range(len(sizes) - 1):
            fan_in = sizes[k] + (extra_dim if k == join_at else 0)
            bound = 1.0 / np.sqrt(fan_in)
            if final_scale is not None and k == len(sizes) - 2:
                bound = final_scale
            self.params.append(rng.uniform(-bound, bound, (fan_in, sizes[k + 1])))
            self.params.append(rng.uniform(-bound, bound, sizes[k + 1]))

    @property
    def n_layers(self):
        return len(self.activations)

    def copy(self) -> "Mlp":
        new = object.__new__(Mlp)
        new.__dict__.update(self.__dict__)
        new.params = [p.copy() for p in self.params]
        return new

    def forward(self, x, extra=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input dimension {x.shape[1]} != {self.sizes[0]}")
        if self.join_at is not None:
            extra = np.atleast_2d(np.asarray(extra, dtype=float))
            if extra.shape[1] != self.extra_dim:
                raise ValueError(f"second input dimension {extra.shape[1]} != {self.extra_dim}")
        inputs, zs, outs = [], [], []
        h = x
        for k in range(self.n_layers):
            if k == self.join_at:
                h = np.concatenate([h, extra], axis=1)
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = h @ W + b
            a = _ACT[self.activations[k]][0](z)
            inputs.append(h)
            zs.append(z)
            outs.append(a)
            h = a
        return h, (inputs, zs, outs)

    def __call__(self, x, extra=None):
        return self.forward(x, extra)[0]

    def backward(self, cache, dout):
        """Gradients of sum(dout * output) w.r.t. params, input and extra input."""
        inputs, zs, outs = cache
        grads = [None] * len(self.params)
        d = np.asarray(dout, dtype=float)
        d_extra = None
        for k in reversed(range(self.n_layers)):
            dz = d * _ACT[self.activations[k]][1](zs[k], outs[k])
            grads[2 * k] = inputs[k].T @ dz
            grads[2 * k + 1] = dz.sum(axis=0)
            d = dz @ self.params[2 * k].T
            if k == self.join_at:
                d_extra = d[:, self.sizes[k]:]
                d = d[:, : self.sizes[k]]
        return grads, d, d_extra


def make_actor(state_dim, action_dim, hidden=(256, 256), rng=None, final_scale=1e-3) -> Mlp:
    sizes = [state_dim, *hidden, action_dim]
    acts = ["relu"] * len(hidden) + ["tanh"]
    return Mlp(sizes, acts, rng, final_scale=final_scale)


def make_critic(state_dim, action_dim, hidden=(256, 256), rng=None) -> Mlp:
    """Q(s, a); the action joins at the first hidden layer (or the input if none)."""
    if not hidden:
        return Mlp([state_dim, 1], ["linear"], rng, join_at=0, extra_dim=action_dim)
    sizes = [state_dim, *hidden, 1]
    acts = ["relu"] * len(hidden) + ["linear"]
    return Mlp(sizes, acts, rng, join_at=1, extra_dim=action_dim)


def actor_forward(actor: Mlp, state) -> np.ndarray:
    return actor(state)


def critic_forward(critic: Mlp, state, action) -> np.ndarray:
    return critic(state, action)[:, 0]


def soft_update(target: Mlp, online: Mlp, rate: float) -> Mlp:
    if len(target.params) != len(online.params):
        raise ValueError("network structures differ")
    for t, o in zip(target.params, online.params):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
        t *= 1.0 - rate
        t += rate * o
    return target


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class ReplayBuffer:
    """FIFO ring buffer; states stored as float32 and grown on demand."""

    def __init__(self, capacity, state_dim, action_dim, rng=None):
        self.capacity = int(capacity)
        self.state_dim, self.action_dim = state_dim, action_dim
        self.rng = rng or np.random.default_rng(0)
        self.cursor = 0
        self.size = 0
        self._alloc = 0
        self.s = np.empty((0, state_dim), np.float32)
        self.a = np.empty((0, action_dim), np.float64)
        self.r = np.empty(0, np.float64)
        self.s2 = np.empty((0, state_dim), np.float32)
        self.d = np.empty(0, bool)

    def __len__(self):
        return self.size

    def _grow(self):
        new = min(self.capacity, max(1024, 2 * self._alloc))
        for name in ("s", "a", "r", "s2", "d"):
            old = getattr(self, name)
            arr = np.zeros((new,) + old.shape[1:], old.dtype)
            arr[: self._alloc] = old
            setattr(self, name, arr)
        self._alloc = new

    def add(self, s, a, r, s2, done):
        if self.cursor >= self._alloc:
            self._grow()
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s2[i], self.d[i] = s, a, r, s2, done
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.rng.choice(self.size, size=min(batch, self.size), replace=False)

    def sample(self, batch):
        idx = self.sample_indices(batch)
        return Batch(self.s[idx].astype(float), self.a[idx], self.r[idx],
                     self.s2[idx].astype(float), self.d[idx])


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)


@dataclass
class DdpgConfig:
    actor_lr: float = 8.8452e-5
    critic_lr: float = 1.3876e-5
    tau_actor: float = 0.0938
    tau_critic: float = 0.0938
    gamma: float = 0.9947
    buffer_size: int = 100000
    batch_size: int = 256
    episodes: int = 350
    hidden: tuple = (256, 256)
    noise_start: float = 0.3
    noise_end: float = 0.05
    noise_decay_fraction: float = 0.5
    warmup_batches: int = 10
    final_init_scale: float = 1e-3

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0 <= self.gamma <= 1:
            raise ValueError("discount must lie in [0, 1]")
        if self.buffer_size < self.batch_size:
            raise ValueError("buffer must hold at least one batch")
        if self.episodes < 0:
            raise ValueError("episode count must be non-negative")

    @classmethod
    def from_dict(cls, d) -> "DdpgConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown agent keys: {sorted(unknown)}")
        return cls(**d)


class GaussianNoise:
    """Per-dimension N(0, sigma^2); sigma decays linearly then holds."""

    def __init__(self, start, end, decay_steps):
        self.start, self.end, self.decay_steps = start, end, max(int(decay_steps), 1)

    def sigma(self, step):
        frac = min(step / self.decay_steps, 1.0)
        return self.start + frac * (self.end - self.start)

    def __call__(self, action, step, rng):
        return action + self.sigma(step) * rng.standard_normal(np.shape(action))


class Ddpg:
    def __init__(self, state_dim, action_dim, cfg: DdpgConfig, seed=0):
        self.cfg = cfg
        self.state_dim, self.action_dim = state_dim, action_dim
        ss = np.random.SeedSequence(seed)
        init_seq, self_seq, buf_seq = ss.spawn(3)
        init = np.random.default_rng(init_seq)
        self.actor = make_actor(state_dim, action_dim, cfg.hidden, init, cfg.final_init_scale)
        self.critic = make_critic(state_dim, action_dim, cfg.hidden, init)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, cfg.actor_lr)
        self.critic_opt = Adam(self.critic.params, cfg.critic_lr)
        self.rng = np.random.default_rng(self_seq)
        self.buffer = ReplayBuffer(cfg.buffer_size, state_dim, action_dim,
                                   np.random.default_rng(buf_seq))
        self.steps = 0
        self.episode = 0
        self.curve: list[float] = []

    def act(self, state, noise: GaussianNoise | None = None) -> np.ndarray:
        a = self.actor(state)[0]
        if noise is not None:
            a = noise(a, self.steps, self.rng)
        return np.clip(a, -1.0, 1.0)

    def critic_loss(self, batch: Batch):
        """Bellman MSE and dLoss/dQ against frozen targets."""
        a2 = self.actor_target(batch.s2)
        q2 = self.critic_target(batch.s2, a2)[:, 0]
        y = batch.r + self.cfg.gamma * (1.0 - batch.done) * q2
        q, cache = self.critic.forward(batch.s, batch.a)
        err = q[:, 0] - y
        return float(np.mean(err**2)), cache, (2.0 / len(batch)) * err[:, None]

    def critic_gradients(self, batch: Batch):
        loss, cache, dq = self.critic_loss(batch)
        grads, _, _ = self.critic.backward(cache, dq)
        return loss, grads

    def critic_update(self, batch: Batch) -> float:
        if len(batch) == 0:
            raise ValueError("empty batch")
        loss, grads = self.critic_gradients(batch)
        self.critic_opt.step(self.critic.params, grads)
        return loss

    def actor_gradients(self, batch: Batch, critic=None):
        """Mean Q(s, mu(s)) and gradients of -mean Q w.r.t. actor params."""
        critic = critic or self.critic
        a, a_cache = self.actor.forward(batch.s)
        q, q_cache = critic.forward(batch.s, a)
        _, _, dq_da = critic.backward(q_cache, np.full((len(batch), 1), -1.0 / len(batch)))
        grads, _, _ = self.actor.backward(a_cache, dq_da)
        return float(np.mean(q)), grads

    def actor_update(self, batch: Batch, critic=None) -> float:
        if len(batch) == 0:
            raise ValueError("empty batch")
        objective, grads = self.actor_gradients(batch, critic)
        self.actor_opt.step(self.actor.params, grads)
        return objective

    def update(self, batch: Batch):
        c = self.critic_update(batch)
        a = self.actor_update(batch)
        soft_update(self.critic_target, self.critic, self.cfg.tau_critic)
        soft_update(self.actor_target, self.actor, self.cfg.tau_actor)
        return c, a

    # checkpointing

    def _arrays(self):
        out = {}
        for name, net in (("actor", self.actor), ("critic", self.critic),
                          ("actor_target", self.actor_target),
                          ("critic_target", self.critic_target)):
            for k, p in enumerate(net.params):
                out[f"{name}.{k}"] = p
        for name, opt in (("actor_opt", self.actor_opt), ("critic_opt", self.critic_opt)):
            for k, (m, v) in enumerate(zip(opt.m, opt.v)):
                out[f"{name}.m.{k}"] = m
                out[f"{name}.v.{k}"] = v
        b = self.buffer
        for name in ("s", "a", "r", "s2", "d"):
            out[f"buffer.{name}"] = getattr(b, name)[: b._alloc]
        out["curve"] = np.asarray(self.curve, dtype=float)
        return out

    def save(self, path, extra=None):
        path = Path(path)
        meta = {
            "version": CHECKPOINT_VERSION,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "config": asdict(self.cfg),
            "steps": self.steps,
            "episode": self.episode,
            "rng": self.rng.bit_generator.state,
            "buffer_rng": self.buffer.rng.bit_generator.state,
            "buffer": [self.buffer.cursor, self.buffer.size, self.buffer._alloc],
            "opt_t": [self.actor_opt.t, self.critic_opt.t],
            "extra": extra or {},
        }
        arrays = self._arrays()
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(path, "wb") as f:
            np.savez(f, **arrays)
        return path

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta['version']}")
            cfg = DdpgConfig(**meta["config"])
            agent = cls(meta["state_dim"], meta["action_dim"], cfg)
            for name in ("actor", "critic", "actor_target", "critic_target"):
                net = getattr(agent, name)
                net.params = [z[f"{name}.{k}"].copy() for k in range(len(net.params))]
            for name in ("actor_opt", "critic_opt"):
                opt = getattr(agent, name)
                opt.m = [z[f"{name}.m.{k}"].copy() for k in range(len(opt.m))]
                opt.v = [z[f"{name}.v.{k}"].copy() for k in range(len(opt.v))]
            b = agent.buffer
            b.cursor, b.size, b._alloc = meta["buffer"]
            for name in ("s", "a", "r", "s2", "d"):
                setattr(b, name, z[f"buffer.{name}"].copy())
            agent.curve = [float(x) for x in z["curve"]]
        agent.actor_opt.t, agent.critic_opt.t = meta["opt_t"]
        agent.steps, agent.episode = meta["steps"], meta["episode"]
        agent.rng.bit_generator.state = meta["rng"]
        agent.buffer.rng.bit_generator.state = meta["buffer_rng"]
        return agent, meta["extra"]


def episode_seed(seed, episode):
    return [int(seed), int(episode)]


@dataclass
class TrainResult:
    agent: Ddpg
    curve: list = field(default_factory=list)


def train(env_factory, cfg: DdpgConfig, seed=0, agent: Ddpg | None = None,
          on_episode=None, env_state=None, on_step=None) -> TrainResult:
    """Run DDPG for ``cfg.episodes`` episodes (resuming ``agent`` if given).

    ``on_episode(agent, env)`` is called after each finished episode, e.g. to
    write a checkpoint; ``on_step(row)`` receives every slot's MetricRow.
    """
    env = env_factory()
    if env_state is not None:
        env.load_normalizer(env_state)
    if agent is None:
        agent = Ddpg(env.state_dim, env.action_dim, cfg, seed)
    total = cfg.episodes * len(env.trajectory)
    noise = GaussianNoise(cfg.noise_start, cfg.noise_end, cfg.noise_decay_fraction * total)
    warmup = cfg.warmup_batches * cfg.batch_size

    while agent.episode < cfg.episodes:
        state = env.reset(episode_seed(seed, agent.episode))
        rewards = []
        done = False
        while not done:
            if len(agent.buffer) < warmup:
                action = agent.rng.uniform(-1.0, 1.0, env.action_dim)
            else:
                action = agent.act(state, noise)
            next_state, reward, done, row = env.step(action)
            if on_step is not None:
                on_step(row)
            agent.buffer.add(state, action, reward, next_state, done)
            if len(agent.buffer) >= warmup:
                agent.update(agent.buffer.sample(cfg.batch_size))
            state = next_state
            rewards.append(reward)
            agent.steps += 1
        agent.curve.append(float(np.mean(rewards)))
        agent.episode += 1
        if on_episode is not None:
            on_episode(agent, env)
    return TrainResult(agent=agent, curve=list(agent.curve))

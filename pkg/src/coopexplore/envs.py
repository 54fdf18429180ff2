"""Tabular episodic MDPs with their exact one-hot linear embedding.

Steps are 0-based in code: ``h = 0`` is the first decision and the value at
step ``h`` is bounded by ``H - h``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, StructuralError
from .linalg import FeatureMap

ROW_TOL = 1e-12
LEFT, RIGHT = 0, 1


@dataclass(frozen=True, eq=False)
class TabularMDPSpec:
    n_states: int
    n_actions: int
    horizon: int
    transitions: np.ndarray  # (H, S, A, S)
    rewards: np.ndarray  # (H, S, A)
    initial_state: int = 0

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        r = np.asarray(self.rewards, dtype=float)
        H, S, A = self.horizon, self.n_states, self.n_actions
        if P.shape != (H, S, A, S):
            raise StructuralError(f"transitions shape {P.shape} != {(H, S, A, S)}")
        if r.shape != (H, S, A):
            raise StructuralError(f"rewards shape {r.shape} != {(H, S, A)}")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=-1) - 1.0), initial=0.0) > ROW_TOL:
            raise StructuralError("every transition row must be a probability vector")
        if np.any(r < 0) or np.any(r > 1):
            raise StructuralError("rewards must lie in [0, 1]")
        if not 0 <= self.initial_state < S:
            raise StructuralError(f"initial state {self.initial_state} out of range")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)

    @cached_property
    def _cdf(self):
        return np.cumsum(self.transitions, axis=-1)

    def same_as(self, other: "TabularMDPSpec") -> bool:
        return (
            (self.n_states, self.n_actions, self.horizon, self.initial_state)
            == (other.n_states, other.n_actions, other.horizon, other.initial_state)
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.rewards, other.rewards)
        )

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "horizon": self.horizon,
            "initial_state": self.initial_state,
            "transitions": self.transitions.ravel().tolist(),
            "rewards": self.rewards.ravel().tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMDPSpec":
        H, S, A = doc["horizon"], doc["n_states"], doc["n_actions"]
        return cls(
            S, A, H,
            np.asarray(doc["transitions"], dtype=float).reshape(H, S, A, S),
            np.asarray(doc["rewards"], dtype=float).reshape(H, S, A),
            doc.get("initial_state", 0),
        )

    @classmethod
    def from_json(cls, text: str) -> "TabularMDPSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class LinearEmbedding:
    feature_map: FeatureMap
    mu: np.ndarray  # (H, d, S)
    theta: np.ndarray  # (H, d)

    @property
    def feature_dim(self) -> int:
        return self.feature_map.dim


def one_hot_embedding(spec: TabularMDPSpec) -> LinearEmbedding:
    S, A, H = spec.n_states, spec.n_actions, spec.horizon
    feat = FeatureMap.one_hot(S, A)
    mu = spec.transitions.reshape(H, S * A, S).copy()
    theta = spec.rewards.reshape(H, S * A).copy()
    return LinearEmbedding(feat, mu, theta)


def build_nchain(n: int) -> tuple[TabularMDPSpec, LinearEmbedding]:
    """Deterministic chain of ``n`` states, start at the second state.

    Actions are left (0) and right (1), clamped at the ends.  The reward of a
    step is that of the state occupied when acting (0.001 at the left end, 1
    at the right end); the final step carries no reward.  With horizon
    ``n + 9`` the best return is exactly 10.
    """
    if n < 3:
        raise ConfigError("env.n", f"chain needs at least 3 states, got {n}")
    H = n + 9
    P = np.zeros((H, n, 2, n))
    for s in range(n):
        P[:, s, LEFT, max(s - 1, 0)] = 1.0
        P[:, s, RIGHT, min(s + 1, n - 1)] = 1.0
    state_reward = np.zeros(n)
    state_reward[0] = 0.001
    state_reward[n - 1] = 1.0
    r = np.repeat(state_reward[None, :, None], 2, axis=2).repeat(H, axis=0)
    r[H - 1] = 0.0
    spec = TabularMDPSpec(n, 2, H, P, r, initial_state=1)
    return spec, one_hot_embedding(spec)


def random_linear_mdp(n_states: int, n_actions: int, horizon: int,
                      seed: int) -> tuple[TabularMDPSpec, LinearEmbedding]:
    for name, v in (("n_states", n_states), ("n_actions", n_actions), ("horizon", horizon)):
        if v < 1:
            raise ConfigError(f"env.{name}", f"must be >= 1, got {v}")
    g = rngmod.substream(seed, purpose=rngmod.ENV_BUILD)
    shape = (horizon, n_states, n_actions)
    P = g.dirichlet(np.ones(n_states), size=shape)
    P /= P.sum(axis=-1, keepdims=True)
    r = g.uniform(0.0, 1.0, size=shape)
    spec = TabularMDPSpec(n_states, n_actions, horizon, P, r, initial_state=0)
    return spec, one_hot_embedding(spec)


@dataclass(frozen=True)
class MisspecConfig:
    zeta: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError("env.misspec.zeta", f"must lie in [0, 1], got {self.zeta}")


def misspecify(spec: TabularMDPSpec, cfg: MisspecConfig, agent_index: int) -> TabularMDPSpec:
    """Agent-specific MDP within TV radius ``zeta`` of ``spec``.

    Transitions are mixed toward a seeded random kernel and rewards are
    shifted by at most ``zeta``, then clamped to [0, 1].
    """
    if cfg.zeta == 0.0:
        return TabularMDPSpec(spec.n_states, spec.n_actions, spec.horizon,
                              spec.transitions, spec.rewards, spec.initial_state)
    g = rngmod.substream(cfg.seed, agent=agent_index, purpose=rngmod.MISSPEC)
    shape = (spec.horizon, spec.n_states, spec.n_actions)
    noise_kernel = g.dirichlet(np.ones(spec.n_states), size=shape)
    P = (1.0 - cfg.zeta) * spec.transitions + cfg.zeta * noise_kernel
    P /= P.sum(axis=-1, keepdims=True)
    r = np.clip(spec.rewards + cfg.zeta * g.uniform(-1.0, 1.0, size=shape), 0.0, 1.0)
    return TabularMDPSpec(spec.n_states, spec.n_actions, spec.horizon, P, r, spec.initial_state)


def tv_distance(p, q) -> np.ndarray:
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


def step(spec: TabularMDPSpec, h: int, state: int, action: int,
         rng: np.random.Generator) -> tuple[int, float]:
    if not (0 <= h < spec.horizon and 0 <= state < spec.n_states and 0 <= action < spec.n_actions):
        raise StructuralError(f"(h, s, a) = {(h, state, action)} out of range")
    cdf = spec._cdf[h, state, action]
    nxt = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(nxt, spec.n_states - 1), float(spec.rewards[h, state, action])


@dataclass(frozen=True, eq=False)
class OptimalValues:
    v_star: np.ndarray  # (H + 1, S), last row zero
    q_star: np.ndarray  # (H, S, A)


def optimal_values(spec: TabularMDPSpec) -> OptimalValues:
    H, S = spec.horizon, spec.n_states
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, spec.n_actions))
    for h in range(H - 1, -1, -1):
        Q[h] = spec.rewards[h] + spec.transitions[h] @ V[h + 1]
        V[h] = Q[h].max(axis=1)
    return OptimalValues(V, Q)


def evaluate_policy(spec: TabularMDPSpec, actions) -> np.ndarray:
    """Exact values ``(H + 1, S)`` of a deterministic policy ``actions[h, s]``."""
    actions = np.asarray(actions)
    H, S = spec.horizon, spec.n_states
    V = np.zeros((H + 1, S))
    idx = np.arange(S)
    for h in range(H - 1, -1, -1):
        a = actions[h]
        V[h] = spec.rewards[h, idx, a] + spec.transitions[h, idx, a] @ V[h + 1]
    return V

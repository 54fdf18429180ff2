"""Regularized least squares over agent datasets.

Holds the feature map, the transition buffers that back each agent's server
and local partitions, the Gram-matrix statistics built from them, and the
handful of dense linear-algebra routines every estimator needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, StructuralError

COND_LIMIT = 1e12
EIG_TOL = 1e-10


class Transition(NamedTuple):
    state: int
    action: int
    next_state: int
    reward: float
    episode: int = 0
    agent: int = 0


class FeatureMap:
    """Embedding of state-action pairs, stored as a ``(S, A, d)`` table."""

    def __init__(self, table):
        table = np.asarray(table, dtype=float)
        if table.ndim != 3:
            raise StructuralError(f"feature table must be (S, A, d), got shape {table.shape}")
        norms = np.linalg.norm(table, axis=2)
        if np.any(norms > 1 + 1e-9):
            raise StructuralError(f"feature norms must be <= 1, max is {norms.max():.6g}")
        self.table = table
        self.table.setflags(write=False)
        self.n_states, self.n_actions, self.dim = table.shape
        self.flat = table.reshape(-1, self.dim)

    @classmethod
    def one_hot(cls, n_states: int, n_actions: int) -> "FeatureMap":
        d = n_states * n_actions
        return cls(np.eye(d).reshape(n_states, n_actions, d))

    def __call__(self, state: int, action: int) -> np.ndarray:
        return self.table[state, action]


class TransitionBuffer:
    """Append-only columnar store of transitions with their feature rows."""

    def __init__(self, dim: int, capacity: int = 16):
        self.dim = dim
        self._n = 0
        self._alloc(max(capacity, 1))

    def _alloc(self, cap):
        old = getattr(self, "_phi", None)
        fields = {
            "_s": np.int64, "_a": np.int64, "_s2": np.int64, "_ep": np.int64,
            "_ag": np.int64, "_r": float,
        }
        for name, dt in fields.items():
            arr = np.zeros(cap, dtype=dt)
            if old is not None:
                arr[: self._n] = getattr(self, name)[: self._n]
            setattr(self, name, arr)
        phi = np.zeros((cap, self.dim))
        if old is not None:
            phi[: self._n] = old[: self._n]
        self._phi = phi

    def __len__(self):
        return self._n

    def append(self, tr: Transition, phi: np.ndarray):
        if self._n == len(self._s):
            self._alloc(2 * len(self._s))
        i = self._n
        self._s[i], self._a[i], self._s2[i] = tr.state, tr.action, tr.next_state
        self._r[i], self._ep[i], self._ag[i] = tr.reward, tr.episode, tr.agent
        self._phi[i] = phi
        self._n += 1

    def extend(self, other: "TransitionBuffer", start: int = 0, stop: int | None = None):
        stop = len(other) if stop is None else stop
        n = stop - start
        if n <= 0:
            return
        need = self._n + n
        if need > len(self._s):
            self._alloc(max(need, 2 * len(self._s)))
        sl = slice(self._n, need)
        for name in ("_s", "_a", "_s2", "_r", "_ep", "_ag", "_phi"):
            getattr(self, name)[sl] = getattr(other, name)[start:stop]
        self._n = need

    def truncate(self, n: int):
        self._n = n

    def copy(self) -> "TransitionBuffer":
        out = TransitionBuffer(self.dim, max(len(self), 16))
        out.extend(self)
        return out

    def slice(self, start: int, stop: int | None = None) -> "TransitionBuffer":
        stop = len(self) if stop is None else stop
        out = TransitionBuffer(self.dim, max(stop - start, 16))
        out.extend(self, start, stop)
        return out

    def sort_by_episode_agent(self):
        """Reorder in place by (episode, agent): the server's index order."""
        n = self._n
        order = np.lexsort((self._ag[:n], self._ep[:n]))
        for name in ("_s", "_a", "_s2", "_r", "_ep", "_ag", "_phi"):
            arr = getattr(self, name)
            arr[:n] = arr[:n][order]

    @property
    def states(self):
        return self._s[: self._n]

    @property
    def actions(self):
        return self._a[: self._n]

    @property
    def next_states(self):
        return self._s2[: self._n]

    @property
    def rewards(self):
        return self._r[: self._n]

    @property
    def episodes(self):
        return self._ep[: self._n]

    @property
    def agents(self):
        return self._ag[: self._n]

    @property
    def features(self):
        return self._phi[: self._n]

    def transitions(self) -> list[Transition]:
        return [
            Transition(int(s), int(a), int(s2), float(r), int(e), int(g))
            for s, a, s2, r, e, g in zip(self.states, self.actions, self.next_states,
                                         self.rewards, self.episodes, self.agents)
        ]

    def gram(self) -> np.ndarray:
        phi = self.features
        return phi.T @ phi


@dataclass
class SufficientStats:
    """Server/local split of one agent's data at one step.

    Transitions live in a single buffer with the server block first, so the
    stored order is already the agent's index map (server by episode then
    agent, local by episode).
    """

    dim: int
    reg: float = 1.0
    lambda_ser: np.ndarray = None
    lambda_loc: np.ndarray = None
    data: TransitionBuffer = None
    n_ser: int = 0
    _ser_logdet: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.reg <= 0:
            raise StructuralError("regularizer must be positive")
        if self.lambda_ser is None:
            self.lambda_ser = np.zeros((self.dim, self.dim))
        if self.lambda_loc is None:
            self.lambda_loc = np.zeros((self.dim, self.dim))
        if self.data is None:
            self.data = TransitionBuffer(self.dim)

    def __len__(self):
        return len(self.data)

    @property
    def n_loc(self) -> int:
        return len(self.data) - self.n_ser

    @property
    def transitions_ser(self) -> list[Transition]:
        return self.data.slice(0, self.n_ser).transitions()

    @property
    def transitions_loc(self) -> list[Transition]:
        return self.data.slice(self.n_ser).transitions()

    def gram(self) -> np.ndarray:
        return self.lambda_ser + self.lambda_loc + self.reg * np.eye(self.dim)

    def copy(self) -> "SufficientStats":
        return SufficientStats(self.dim, self.reg, self.lambda_ser.copy(),
                               self.lambda_loc.copy(), self.data.copy(), self.n_ser)


def accumulate(stats: SufficientStats, tr: Transition, feat: FeatureMap,
               into_local: bool = True) -> SufficientStats:
    """Add one transition to the local (default) or server partition, in place."""
    phi = np.asarray(feat(tr.state, tr.action), dtype=float)
    if phi.shape != (stats.dim,):
        raise StructuralError(f"feature length {phi.shape} does not match d={stats.dim}")
    outer = np.outer(phi, phi)
    if into_local:
        stats.lambda_loc += outer
        stats.data.append(tr, phi)
    else:
        stats.lambda_ser += outer
        if stats.n_loc == 0:
            stats.data.append(tr, phi)
        else:
            local = stats.data.slice(stats.n_ser)
            stats.data.truncate(stats.n_ser)
            stats.data.append(tr, phi)
            stats.data.extend(local)
        stats.n_ser += 1
    return stats


@dataclass
class RidgeSolution:
    w: np.ndarray
    lambda_inv: np.ndarray
    gram: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)


def _inverse(gram: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Gram matrix is singular") from exc
    cond = np.abs(gram).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalError(f"Gram matrix condition estimate {cond:.3g} exceeds {COND_LIMIT:.0e}")
    return inv


def ridge_solve(stats: SufficientStats, targets) -> RidgeSolution:
    """Closed-form ridge estimate ``w = Λ⁻¹ Σ y_l φ_l``."""
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (len(stats),):
        raise StructuralError(f"expected {len(stats)} targets, got shape {targets.shape}")
    gram = stats.gram()
    b = stats.data.features.T @ targets if len(stats) else np.zeros(stats.dim)
    inv = _inverse(gram)
    w = inv @ b
    return RidgeSolution(w, inv, gram, b)


def log_det_ratio(stats: SufficientStats) -> float:
    """log det(Λ_ser + Λ_loc + λI) - log det(Λ_ser + λI), never negative."""
    if stats.n_loc == 0:
        return 0.0
    eye = stats.reg * np.eye(stats.dim)
    _, full = np.linalg.slogdet(stats.lambda_ser + stats.lambda_loc + eye)
    # the server block only changes at a sync, so its log-det is cached
    key = stats.lambda_ser.tobytes()
    if stats._ser_logdet is None or stats._ser_logdet[0] != key:
        stats._ser_logdet = (key, np.linalg.slogdet(stats.lambda_ser + eye)[1])
    return max(full - stats._ser_logdet[1], 0.0)


def quad_norm(phi, lambda_inv) -> float:
    phi = np.asarray(phi, dtype=float)
    lambda_inv = np.asarray(lambda_inv, dtype=float)
    if lambda_inv.shape != (phi.shape[0], phi.shape[0]):
        raise StructuralError(f"phi of length {phi.shape[0]} against matrix {lambda_inv.shape}")
    return float(np.sqrt(max(phi @ lambda_inv @ phi, 0.0)))


def psd_sqrt(cov) -> np.ndarray:
    """Symmetric square root; tiny negative eigenvalues are clamped to zero."""
    cov = np.asarray(cov, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    if vals.size and vals.min() < -EIG_TOL:
        raise NumericalError(f"covariance has eigenvalue {vals.min():.3g} < -{EIG_TOL}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def sample_gaussian(mean, covariance, rng: np.random.Generator, size: int | None = None):
    """Draw from N(mean, covariance); ``size`` stacks independent draws on axis 0."""
    mean = np.asarray(mean, dtype=float)
    root = psd_sqrt(covariance)
    if size is None:
        return mean + root @ rng.standard_normal(mean.shape[0])
    z = rng.standard_normal((size, mean.shape[0]))
    return mean + z @ root

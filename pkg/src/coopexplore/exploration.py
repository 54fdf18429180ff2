"""Randomized least-squares value iteration estimators.

Each estimator maps one agent's step-``h`` statistics and regression targets
to a set of parameter samples; the Q-function is the elementwise max over
samples, truncated to ``[0, H - h]`` (0-based ``h``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigError, StructuralError
from .linalg import FeatureMap, SufficientStats, quad_norm, ridge_solve, sample_gaussian


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class PHE:
    sigma: float | None = None
    n_samples: int = 1
    kind: str = field(default="phe", init=False)


@dataclass(frozen=True)
class LMC:
    beta: float | None = None
    j: int | None = None
    eta: float | None = None
    n_samples: int = 1
    kind: str = field(default="lmc", init=False)


@dataclass(frozen=True)
class DirectTS:
    sigma: float | None = None
    kind: str = field(default="direct_ts", init=False)

    @property
    def n_samples(self):
        return 1


@dataclass(frozen=True)
class UCB:
    bonus: float = 1.0
    kind: str = field(default="ucb", init=False)

    @property
    def n_samples(self):
        return 1


@dataclass(frozen=True)
class Greedy:
    kind: str = field(default="greedy", init=False)

    @property
    def n_samples(self):
        return 1


ExplorationConfig = Union[PHE, LMC, DirectTS, UCB, Greedy]
STRATEGIES = {"phe": PHE, "lmc": LMC, "direct_ts": DirectTS, "ucb": UCB, "greedy": Greedy}


def default_sigma(horizon: int, dim: int) -> float:
    return horizon * math.sqrt(dim)


def default_beta(horizon: int, dim: int) -> float:
    return 1.0 / (horizon ** 2 * dim)


def default_eta(gram: np.ndarray) -> float:
    return 1.0 / (4.0 * np.linalg.eigvalsh(gram)[-1])


def default_j(gram: np.ndarray, horizon: int, episodes: int, agents: int) -> int:
    vals = np.linalg.eigvalsh(gram)
    kappa = vals[-1] / vals[0]
    d = gram.shape[0]
    return int(math.ceil(2.0 * kappa * math.log(4.0 * horizon * max(episodes, 1) * agents * d)))


def validate(cfg: ExplorationConfig, path: str = "exploration") -> None:
    if isinstance(cfg, (PHE, DirectTS)) and cfg.sigma is not None and cfg.sigma < 0:
        raise ConfigError(f"{path}.sigma", "must be >= 0")
    if isinstance(cfg, LMC):
        if cfg.beta is not None and cfg.beta <= 0:
            raise ConfigError(f"{path}.beta", "must be > 0")
        if cfg.eta is not None and cfg.eta <= 0:
            raise ConfigError(f"{path}.eta", "must be > 0")
        if cfg.j is not None and cfg.j < 0:
            raise ConfigError(f"{path}.j", "must be >= 0")
    if isinstance(cfg, (PHE, LMC)) and cfg.n_samples < 1:
        raise ConfigError(f"{path}.n_samples", "must be >= 1")
    if isinstance(cfg, UCB) and cfg.bonus < 0:
        raise ConfigError(f"{path}.bonus", "must be >= 0")


# --- estimators --------------------------------------------------------------

def lsvi_targets(stats: SufficientStats, v_next) -> np.ndarray:
    """Regression targets ``r + V_{h+1}(s')`` in stored (index-map) order."""
    v_next = np.asarray(v_next, dtype=float)
    return stats.data.rewards + v_next[stats.data.next_states]


def phe_estimate(stats: SufficientStats, targets, sigma: float, n_samples: int,
                 rng: np.random.Generator, solution=None) -> np.ndarray:
    """Perturbed-history samples, shape ``(n_samples, d)``.

    Solves the perturbed ridge problem in closed form: targets get i.i.d.
    N(0, sigma^2) noise and the regularizer is centred at a N(0, sigma^2 I)
    draw.
    """
    if sigma < 0:
        raise ConfigError("exploration.sigma", "must be >= 0")
    sol = solution if solution is not None else ridge_solve(stats, targets)
    phi = stats.data.features
    n, d = phi.shape
    eps = sigma * rng.standard_normal((n_samples, n))
    xi = sigma * rng.standard_normal((n_samples, d))
    rhs = sol.b + eps @ phi - stats.reg * xi
    return rhs @ sol.lambda_inv.T


@dataclass
class LMCChainState:
    """Current Langevin iterates for one (agent, step): shape ``(n_samples, d)``."""

    w: np.ndarray

    @classmethod
    def zeros(cls, n_samples: int, dim: int) -> "LMCChainState":
        return cls(np.zeros((n_samples, dim)))


def _affine_steps(w, A, z):
    """Apply ``w <- w A + z[i]`` for every ``i`` in order.

    Two consecutive steps compose into one with matrix ``A²`` and offset
    ``z[i] A + z[i+1]``, so the loop is evaluated by repeated pairing.
    """
    while len(z):
        if len(z) % 2:
            w = w @ A + z[0]
            z = z[1:]
        if not len(z):
            break
        z = z[0::2] @ A + z[1::2]
        A = A @ A
    return w


def lmc_estimate(chain: LMCChainState, stats: SufficientStats, targets, eta: float,
                 beta: float, j: int, rng: np.random.Generator, solution=None) -> np.ndarray:
    """Run ``j`` Langevin steps on the ridge loss from the chain's iterate.

    The update is ``w <- w - 2 eta (Λw - b) + sqrt(2 eta / beta) N(0, I)``;
    the chain keeps the final iterate for the next episode's warm start.
    """
    if eta <= 0 or beta <= 0 or j < 0:
        raise ConfigError("exploration", f"need eta > 0, beta > 0, j >= 0; got {eta}, {beta}, {j}")
    sol = solution if solution is not None else ridge_solve(stats, targets)
    gram, b = sol.gram, sol.b
    w = chain.w.copy()
    if w.shape[1] != gram.shape[0]:
        raise StructuralError(f"chain dimension {w.shape[1]} != d={gram.shape[0]}")
    # w - 2η(Λw - b) rewritten as w A + z_i with A = I - 2ηΛ (symmetric)
    A = np.eye(gram.shape[0]) - 2.0 * eta * gram
    z = 2.0 * eta * b + math.sqrt(2.0 * eta / beta) * rng.standard_normal((j,) + w.shape)
    w = _affine_steps(w, A, z)
    chain.w = w
    return w.copy()


def lmc_moments(history: Sequence, w_init) -> tuple[np.ndarray, np.ndarray]:
    """Exact Gaussian law of the Langevin iterate after a sequence of epochs.

    ``history`` holds ``(gram, w_hat, eta, j, beta)`` per epoch.  With
    ``A = I - 2 eta Λ`` each epoch maps ``(mean, cov)`` to
    ``(A^j mean + (I - A^j) w_hat, A^j cov A^j + (I - A^{2j}) Λ⁻¹ (I + A)⁻¹ / beta)``.
    """
    mean = np.asarray(w_init, dtype=float).copy()
    d = mean.shape[0]
    cov = np.zeros((d, d))
    eye = np.eye(d)
    for i, (gram, w_hat, eta, j, beta) in enumerate(history):
        gram = np.asarray(gram, dtype=float)
        lam_max = np.linalg.eigvalsh(gram)[-1]
        if not eta < 1.0 / (2.0 * lam_max):
            raise ConfigError(f"history[{i}].eta",
                              f"step {eta} violates eta < 1/(2 lambda_max) = {1 / (2 * lam_max):.6g}")
        A = eye - 2.0 * eta * gram
        Aj = np.linalg.matrix_power(A, j)
        A2j = Aj @ Aj
        mean = Aj @ mean + (eye - Aj) @ np.asarray(w_hat, dtype=float)
        fresh = (eye - A2j) @ np.linalg.inv(gram) @ np.linalg.inv(eye + A) / beta
        cov = Aj @ cov @ Aj.T + 0.5 * (fresh + fresh.T)
    return mean, cov


def direct_ts_estimate(stats: SufficientStats, targets, sigma: float,
                       rng: np.random.Generator, solution=None) -> np.ndarray:
    """``w_hat`` plus a N(0, sigma^2 Λ⁻¹) draw, shape ``(1, d)``."""
    sol = solution if solution is not None else ridge_solve(stats, targets)
    if sigma == 0:
        return sol.w[None, :].copy()
    return sample_gaussian(sol.w, sigma ** 2 * sol.lambda_inv, rng)[None, :]


def truncate(values, h: int, horizon: int):
    return np.clip(values, 0.0, float(horizon - h))


def ucb_q(stats: SufficientStats, targets, bonus: float, feat: FeatureMap, h: int,
          horizon: int, solution=None) -> np.ndarray:
    """Optimistic Q table ``(S, A)`` with an elliptical bonus."""
    sol = solution if solution is not None else ridge_solve(stats, targets)
    flat = feat.flat
    widths = np.sqrt(np.maximum(np.einsum("id,de,ie->i", flat, sol.lambda_inv, flat), 0.0))
    q = truncate(flat @ sol.w + bonus * widths, h, horizon)
    return q.reshape(feat.n_states, feat.n_actions)


# --- Q estimates ---------------------------------------------------------------

@dataclass
class QEstimate:
    """Per-step parameter samples ``w[h]`` of shape ``(N, d)`` and the Q table."""

    w: list
    q: np.ndarray  # (H, S, A)
    horizon: int
    w_hat: np.ndarray = None  # (H, d) unperturbed ridge estimates
    bonus: float = 0.0
    lambda_inv: list = None  # per step, only for UCB

    @property
    def values(self) -> np.ndarray:
        """``V_h(s) = max_a Q_h(s, a)`` with a trailing zero row."""
        v = np.zeros((self.horizon + 1, self.q.shape[1]))
        v[: self.horizon] = self.q.max(axis=2)
        return v

    def policy(self) -> np.ndarray:
        return self.q.argmax(axis=2)


def q_value(est: QEstimate, h: int, phi) -> float:
    phi = np.asarray(phi, dtype=float)
    raw = float(np.max(est.w[h] @ phi))
    if est.lambda_inv is not None:
        raw += est.bonus * quad_norm(phi, est.lambda_inv[h])
    return float(truncate(raw, h, est.horizon))


def greedy_action(est: QEstimate, h: int, state: int, feat: FeatureMap) -> int:
    qs = [q_value(est, h, feat(state, a)) for a in range(feat.n_actions)]
    return int(np.argmax(qs))


def q_table(samples: np.ndarray, feat: FeatureMap, h: int, horizon: int) -> np.ndarray:
    raw = (feat.flat @ samples.T).max(axis=1)
    return truncate(raw, h, horizon).reshape(feat.n_states, feat.n_actions)


def resolve(cfg: ExplorationConfig, horizon: int, dim: int) -> ExplorationConfig:
    """Fill analysis-scale defaults that depend only on ``H`` and ``d``."""
    if isinstance(cfg, PHE) and cfg.sigma is None:
        return PHE(default_sigma(horizon, dim), cfg.n_samples)
    if isinstance(cfg, DirectTS) and cfg.sigma is None:
        return DirectTS(default_sigma(horizon, dim))
    if isinstance(cfg, LMC) and cfg.beta is None:
        return LMC(default_beta(horizon, dim), cfg.j, cfg.eta, cfg.n_samples)
    return cfg


def backward_pass(stats_per_step: Sequence[SufficientStats], feat: FeatureMap,
                  cfg: ExplorationConfig, horizon: int,
                  rng_for_step: Callable[[int], np.random.Generator],
                  chains: Sequence[LMCChainState] | None = None,
                  episodes: int = 1, agents: int = 1) -> QEstimate:
    """Least-squares value iteration from ``h = H-1`` down to 0.

    ``episodes`` and ``agents`` only enter the default Langevin step count.
    """
    cfg = resolve(cfg, horizon, feat.dim)
    S, A, d = feat.n_states, feat.n_actions, feat.dim
    q = np.zeros((horizon, S, A))
    w_hat = np.zeros((horizon, d))
    samples = [None] * horizon
    inverses = [None] * horizon if isinstance(cfg, UCB) else None
    v_next = np.zeros(S)
    for h in range(horizon - 1, -1, -1):
        stats = stats_per_step[h]
        targets = lsvi_targets(stats, v_next)
        sol = ridge_solve(stats, targets)
        w_hat[h] = sol.w
        if isinstance(cfg, PHE):
            W = phe_estimate(stats, targets, cfg.sigma, cfg.n_samples, rng_for_step(h), sol)
        elif isinstance(cfg, LMC):
            eta = cfg.eta if cfg.eta is not None else default_eta(sol.gram)
            j = cfg.j if cfg.j is not None else default_j(sol.gram, horizon, episodes, agents)
            W = lmc_estimate(chains[h], stats, targets, eta, cfg.beta, j, rng_for_step(h), sol)
        elif isinstance(cfg, DirectTS):
            W = direct_ts_estimate(stats, targets, cfg.sigma, rng_for_step(h), sol)
        elif isinstance(cfg, UCB):
            W = sol.w[None, :].copy()
            inverses[h] = sol.lambda_inv
            q[h] = ucb_q(stats, targets, cfg.bonus, feat, h, horizon, sol)
        elif isinstance(cfg, Greedy):
            W = sol.w[None, :].copy()
        else:
            raise ConfigError("exploration", f"unknown strategy {cfg!r}")
        samples[h] = W
        if not isinstance(cfg, UCB):
            q[h] = q_table(W, feat, h, horizon)
        v_next = q[h].max(axis=1)
    bonus = cfg.bonus if isinstance(cfg, UCB) else 0.0
    return QEstimate(samples, q, horizon, w_hat, bonus, inverses)

"""Regret and communication accounting for a run."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .envs import TabularMDPSpec, evaluate_policy

log = logging.getLogger(__name__)

NEG_TOL = 1e-9


@dataclass
class CommLedger:
    rounds: int = 0  # one per agent per synchronization
    messages: int = 0  # one per agent per step per synchronization
    scalars_up: int = 0
    scalars_down: int = 0
    sync_episodes: list = field(default_factory=list)

    @property
    def scalars_sent(self) -> int:
        return self.scalars_up + self.scalars_down

    def snapshot(self) -> "CommLedger":
        return CommLedger(self.rounds, self.messages, self.scalars_up, self.scalars_down,
                          list(self.sync_episodes))


@dataclass
class RunMetrics:
    n_agents: int
    horizon: int
    per_episode_regret: list = field(default_factory=list)
    cumulative_regret: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)  # [k][m] realized
    policy_values: list = field(default_factory=list)  # [k][m] exact DP value
    optimal_values: list = field(default_factory=list)  # [m]
    synced: list = field(default_factory=list)
    rounds: list = field(default_factory=list)  # cumulative after episode k
    scalars: list = field(default_factory=list)
    ledger: CommLedger = field(default_factory=CommLedger)
    config_digest: str = ""
    regret_violations: int = 0

    @property
    def episodes(self) -> int:
        return len(self.per_episode_regret)

    @property
    def total_regret(self) -> float:
        return self.cumulative_regret[-1] if self.cumulative_regret else 0.0

    def record(self, returns, values, optimal, synced: bool, ledger: CommLedger):
        regret = group_regret(list(zip(optimal, values)))
        if regret < -NEG_TOL:
            self.regret_violations += 1
            log.warning("episode %d: negative group regret %.3g", self.episodes + 1, regret)
        regret = max(regret, 0.0)
        prev = self.total_regret
        self.per_episode_regret.append(regret)
        self.cumulative_regret.append(prev + regret)
        self.episode_returns.append([float(x) for x in returns])
        self.policy_values.append([float(x) for x in values])
        self.synced.append(bool(synced))
        self.rounds.append(ledger.rounds)
        self.scalars.append(ledger.scalars_sent)
        self.ledger = ledger.snapshot()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode"] + [f"return_{m}" for m in range(self.n_agents)]
                   + ["group_regret", "cumulative_regret", "synced", "rounds", "scalars"])
        for k in range(self.episodes):
            w.writerow([k + 1] + [_fmt(x) for x in self.episode_returns[k]]
                       + [_fmt(self.per_episode_regret[k]), _fmt(self.cumulative_regret[k]),
                          int(self.synced[k]), self.rounds[k], self.scalars[k]])
        return buf.getvalue()

    def summary(self) -> dict:
        K, M = self.episodes, self.n_agents
        return {
            "episodes": K,
            "agents": M,
            "horizon": self.horizon,
            "cumulative_regret": self.total_regret,
            "average_regret_per_episode": average_regret(self, M, K),
            "average_regret_per_transition": average_regret(self, M, K, per_step=self.horizon),
            "sync_count": len(self.ledger.sync_episodes),
            "ledger": asdict(self.ledger) | {"scalars_sent": self.ledger.scalars_sent},
            "optimal_values": self.optimal_values,
            "regret_violations": self.regret_violations,
            "config_digest": self.config_digest,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else str(x)


def policy_value(spec: TabularMDPSpec, q_estimate) -> float:
    """Exact value at the initial state of the greedy policy of ``q_estimate``.

    ``q_estimate`` may be a QEstimate or a raw ``(H, S, A)`` table.
    """
    q = q_estimate.q if hasattr(q_estimate, "q") else np.asarray(q_estimate)
    V = evaluate_policy(spec, q.argmax(axis=2))
    return float(V[0, spec.initial_state])


def group_regret(values) -> float:
    """Sum over agents of ``V* - V^pi`` from ``(v_star, v_pi)`` pairs."""
    return float(sum(v_star - v_pi for v_star, v_pi in values))


def average_regret(metrics: RunMetrics, n_agents: int, n_episodes: int, per_step: int = 1):
    """Cumulative regret over the number of samples, or None when K = 0."""
    if n_episodes < 1:
        return None
    return metrics.total_regret / (n_agents * n_episodes * per_step)


def determinant_bound(d: int, n_agents: int, n_episodes: int, gamma: float) -> float:
    """Counting bound ``(d + K/gamma) log(1 + MK/d)`` on synchronizations."""
    return (d + n_episodes / gamma) * math.log(1.0 + n_agents * n_episodes / d)


def comm_summary(ledger: CommLedger, d: int, n_agents: int, n_episodes: int,
                 gamma: float | None) -> dict:
    n = len(ledger.sync_episodes)
    bound = determinant_bound(d, n_agents, n_episodes, gamma) if gamma else None
    return {
        "sync_count": n,
        "rounds": ledger.rounds,
        "messages": ledger.messages,
        "scalars_sent": ledger.scalars_sent,
        "bound": bound,
        # +1 covers the bound's real-valued slack at the first synchronization
        "within_bound": True if bound is None else n <= bound + 1,
    }

"""Episode loop, dataset partitions, synchronization and the comm ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import exploration as ex
from . import rng as rngmod
from .config import (Determinant, EveryC, ExperimentConfig, Exponential, SyncPayload,
                     SyncRule)
from .envs import (TabularMDPSpec, build_nchain, misspecify, optimal_values,
                   random_linear_mdp, step)
from .errors import StateError, StructuralError
from .linalg import FeatureMap, SufficientStats, Transition, log_det_ratio
from .metrics import CommLedger, RunMetrics, policy_value

RAW_RECORD = 4  # (s, a, s', r)


@dataclass
class AgentState:
    """Everything one agent owns: its MDP, per-step partitions, chains, RNG key."""

    index: int
    spec: TabularMDPSpec
    stats: list  # SufficientStats per step
    chains: list | None = None
    estimate: ex.QEstimate | None = None

    @classmethod
    def fresh(cls, index: int, spec: TabularMDPSpec, dim: int, reg: float,
              n_samples: int = 1, with_chains: bool = False) -> "AgentState":
        stats = [SufficientStats(dim, reg) for _ in range(spec.horizon)]
        chains = ([ex.LMCChainState.zeros(n_samples, dim) for _ in range(spec.horizon)]
                  if with_chains else None)
        return cls(index, spec, stats, chains)


def index_map(m: int, k: int, n: int, tau: int, k_s: int, M: int) -> int:
    """Position (1-based) of agent ``n``'s episode-``tau`` sample in agent ``m``'s data.

    Server samples (``tau <= k_s``) are ordered by episode then agent;
    agent ``m``'s own later samples follow in episode order.
    """
    if not 1 <= tau <= k - 1:
        raise StructuralError(f"tau={tau} outside [1, {k - 1}]")
    if tau <= k_s:
        return (tau - 1) * M + n
    if n != m:
        raise StructuralError(f"agent {m} holds no local data of agent {n}")
    return (M - 1) * k_s + tau


def _exponential_hit(k: int, base: float) -> bool:
    j = max(1, int(math.floor(math.log(k, base))) - 1) if k > 1 else 1
    while True:
        v = round(base ** j)
        if v == k:
            return True
        if v > k:
            return False
        j += 1


def should_sync(rule: SyncRule, k: int, k_s: int, agents) -> bool:
    if isinstance(rule, EveryC):
        return k - k_s >= rule.c
    if isinstance(rule, Exponential):
        return _exponential_hit(k, rule.base)
    if isinstance(rule, Determinant):
        threshold = rule.gamma / (k - k_s)
        return any(log_det_ratio(st) >= threshold for a in agents for st in a.stats)
    raise StructuralError(f"unknown rule {rule!r}")


def synchronize(agents: list, payload: SyncPayload, ledger: CommLedger, episode: int) -> None:
    """Exchange data (or parameters) through the server; mutates ``agents``."""
    M = len(agents)
    H = len(agents[0].stats)
    d = agents[0].stats[0].dim
    if payload is SyncPayload.FEDERATED:
        if any(a.chains is None for a in agents):
            raise StateError("federated averaging needs parameter chains on every agent")
        for h in range(H):
            mean = np.mean([a.chains[h].w for a in agents], axis=0)
            for a in agents:
                a.chains[h].w = mean.copy()
                if a.estimate is not None:
                    a.estimate.w[h] = mean.copy()
        n_samples = agents[0].chains[0].w.shape[0]
        per_agent = d * n_samples * H
        ledger.scalars_up += M * per_agent
        ledger.scalars_down += M * per_agent
    else:
        for h in range(H):
            parts = [a.stats[h] for a in agents]
            ser_len = parts[0].n_ser
            merged = parts[0].data.slice(0, 0)
            for st in parts:
                merged.extend(st.data, st.n_ser)
            merged.sort_by_episode_agent()
            n_new = len(merged)
            loc_sizes = [st.n_loc for st in parts]
            if payload is SyncPayload.RAW:
                server = parts[0].data.slice(0, ser_len)
                server.extend(merged)
                gram = server.gram()
                for st in parts:
                    st.data = server.copy()
                    st.n_ser = len(server)
                    st.lambda_ser = gram.copy()
                    st.lambda_loc = np.zeros((d, d))
                ledger.scalars_up += RAW_RECORD * n_new
                ledger.scalars_down += RAW_RECORD * M * len(server)
            else:
                delta = sum(st.lambda_loc for st in parts)
                for st in parts:
                    st.data.truncate(st.n_ser)
                    st.data.extend(merged)
                    st.n_ser = len(st.data)
                    st.lambda_ser = st.lambda_ser + delta
                    st.lambda_loc = np.zeros((d, d))
                stat = d * d + d
                rec = d + 2
                ledger.scalars_up += M * stat + rec * n_new
                ledger.scalars_down += M * stat + rec * sum(n_new - n for n in loc_sizes)
    ledger.rounds += M
    ledger.messages += M * H
    ledger.sync_episodes.append(episode)


@dataclass
class EpisodeLog:
    transitions: list = field(default_factory=list)  # per agent: list of Transition
    actions: list = field(default_factory=list)
    returns: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    sync: bool = False


def run_episode(agents: list, feat: FeatureMap, exploration: ex.ExplorationConfig, seed: int,
                k: int, k_s: int, rule: SyncRule | None, episodes: int = 1,
                n_agents: int | None = None) -> EpisodeLog:
    """Backward pass, greedy rollout and local bookkeeping for every agent.

    ``k`` is the 1-based episode index.  ``rule=None`` disables the check.
    ``n_agents`` is the configured M (it only enters the default Langevin
    step count), so a subset of agents behaves as inside the full run.
    """
    log = EpisodeLog()
    M = len(agents) if n_agents is None else n_agents
    for agent in agents:
        H = agent.spec.horizon
        # one stream per (agent, episode, purpose), consumed in a fixed step order
        explore_rng = rngmod.substream(seed, agent.index, k, 0, rngmod.EXPLORE)
        env_rng = rngmod.substream(seed, agent.index, k, 0, rngmod.ENV)
        est = ex.backward_pass(agent.stats, feat, exploration, H, lambda h: explore_rng,
                               agent.chains, episodes=episodes, agents=M)
        agent.estimate = est
        s = agent.spec.initial_state
        trs, acts, ret = [], [], 0.0
        for h in range(H):
            a = int(np.argmax(est.q[h, s]))
            s2, r = step(agent.spec, h, s, a, env_rng)
            tr = Transition(s, a, s2, r, k, agent.index)
            agent.stats[h].lambda_loc += np.outer(feat(s, a), feat(s, a))
            agent.stats[h].data.append(tr, feat(s, a))
            trs.append(tr)
            acts.append(a)
            ret += r
            s = s2
        log.transitions.append(trs)
        log.actions.append(acts)
        log.returns.append(ret)
        log.estimates.append(est)
    log.sync = rule is not None and should_sync(rule, k, k_s, agents)
    return log


def build_env(cfg: ExperimentConfig):
    if cfg.env.kind == "nchain":
        return build_nchain(cfg.env.n)
    return random_linear_mdp(cfg.env.n_states, cfg.env.n_actions, cfg.env.horizon, cfg.env.seed)


def make_agents(cfg: ExperimentConfig, agent_ids=None):
    base, emb = build_env(cfg)
    ids = list(range(cfg.agents)) if agent_ids is None else list(agent_ids)
    lmc = isinstance(cfg.exploration, ex.LMC)
    agents = []
    for m in ids:
        spec = base if cfg.env.misspec is None else misspecify(base, cfg.env.misspec, m)
        agents.append(AgentState.fresh(m, spec, emb.feature_dim, cfg.reg,
                                       cfg.exploration.n_samples, with_chains=lmc))
    return base, emb.feature_map, agents


def run_experiment(cfg: ExperimentConfig, agent_ids=None,
                   observer: Callable | None = None) -> RunMetrics:
    """Run ``cfg.episodes`` episodes and return the metrics.

    ``agent_ids`` selects which agent streams to run (default ``0..M-1``);
    running a single id reproduces that agent of a no-communication run.
    ``observer(event, **info)`` is called with ``"episode_start"``,
    ``"episode_end"`` and ``"synced"`` for instrumentation.
    """
    _, feat, agents = make_agents(cfg, agent_ids)
    M = len(agents)
    H = agents[0].spec.horizon
    exploration = ex.resolve(cfg.exploration, H, feat.dim)
    v_star = [float(optimal_values(a.spec).v_star[0, a.spec.initial_state]) for a in agents]
    metrics = RunMetrics(M, H, optimal_values=v_star, config_digest=cfg.digest())
    ledger = CommLedger()
    rule = cfg.sync.rule if cfg.sync.enabled else None
    k_s = 0
    for k in range(1, cfg.episodes + 1):
        if observer:
            observer("episode_start", k=k, k_s=k_s, agents=agents)
        ep = run_episode(agents, feat, exploration, cfg.seed, k, k_s, rule, cfg.episodes,
                         cfg.agents)
        values = [policy_value(a.spec, est) for a, est in zip(agents, ep.estimates)]
        if observer:
            observer("episode_end", k=k, k_s=k_s, agents=agents, log=ep)
        if ep.sync:
            synchronize(agents, cfg.sync.payload, ledger, k)
            k_s = k
            if observer:
                observer("synced", k=k, k_s=k_s, agents=agents)
        metrics.record(ep.returns, values, v_star, ep.sync, ledger)
    return metrics

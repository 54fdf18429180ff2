"""Experiment configuration: dataclasses, parsing and validation."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from enum import Enum

from . import exploration as ex
from .envs import MisspecConfig
from .errors import ConfigError


@dataclass(frozen=True)
class EveryC:
    c: int = 1


@dataclass(frozen=True)
class Exponential:
    base: float = 2.0


@dataclass(frozen=True)
class Determinant:
    gamma: float = 1.0


SyncRule = EveryC | Exponential | Determinant


class SyncPayload(str, Enum):
    RAW = "raw"
    COMPRESSED = "compressed"
    FEDERATED = "federated"


@dataclass(frozen=True)
class SyncConfig:
    rule: SyncRule = EveryC(1)
    payload: SyncPayload = SyncPayload.RAW
    enabled: bool = True


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "nchain"
    n: int = 10
    n_states: int = 8
    n_actions: int = 3
    horizon: int = 3
    seed: int = 0
    misspec: MisspecConfig | None = None

    @property
    def dims(self) -> tuple[int, int]:
        """(H, d) for this environment under one-hot features."""
        if self.kind == "nchain":
            return self.n + 9, 2 * self.n
        return self.horizon, self.n_states * self.n_actions


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = EnvConfig()
    agents: int = 1
    episodes: int = 100
    exploration: ex.ExplorationConfig = ex.PHE()
    sync: SyncConfig = SyncConfig()
    reg: float = 1.0
    seed: int = 0
    output: str | None = None
    defaults_applied: tuple = field(default=(), compare=False)

    def digest(self) -> str:
        doc = to_dict(self)
        doc.pop("output", None)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


_TOP_KEYS = {"env", "agents", "episodes", "exploration", "sync", "reg", "seed", "output"}
_ENV_KEYS = {"nchain": {"kind", "n", "misspec"},
             "random_linear": {"kind", "n_states", "n_actions", "horizon", "seed", "misspec"}}
_RULE_KEYS = {"every": ("c", EveryC, int), "exponential": ("base", Exponential, float),
              "determinant": ("gamma", Determinant, float)}


def _check_keys(doc, allowed, path):
    if not isinstance(doc, dict):
        raise ConfigError(path, f"expected an object, got {type(doc).__name__}")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _typed(doc, key, kind, path, default=None, required=False):
    full = f"{path}.{key}" if path else key
    if key not in doc:
        if required:
            raise ConfigError(full, "missing required field")
        return default
    value = doc[key]
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, kind) or (kind in (int, float) and isinstance(value, bool)):
        raise ConfigError(full, f"expected {kind.__name__}, got {value!r}")
    return value


def _parse_env(doc) -> EnvConfig:
    kind = _typed(doc, "kind", str, "env", required=True) if isinstance(doc, dict) else None
    if kind not in _ENV_KEYS:
        raise ConfigError("env.kind", f"must be one of {sorted(_ENV_KEYS)}, got {kind!r}")
    _check_keys(doc, _ENV_KEYS[kind], "env")
    misspec = None
    if doc.get("misspec") is not None:
        _check_keys(doc["misspec"], {"zeta", "seed"}, "env.misspec")
        misspec = MisspecConfig(_typed(doc["misspec"], "zeta", float, "env.misspec", required=True),
                                _typed(doc["misspec"], "seed", int, "env.misspec", 0))
    if kind == "nchain":
        n = _typed(doc, "n", int, "env", required=True)
        if n < 3:
            raise ConfigError("env.n", f"must be >= 3, got {n}")
        return EnvConfig(kind, n=n, misspec=misspec)
    cfg = EnvConfig(kind,
                    n_states=_typed(doc, "n_states", int, "env", required=True),
                    n_actions=_typed(doc, "n_actions", int, "env", required=True),
                    horizon=_typed(doc, "horizon", int, "env", required=True),
                    seed=_typed(doc, "seed", int, "env", 0), misspec=misspec)
    for name in ("n_states", "n_actions", "horizon"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"env.{name}", "must be >= 1")
    return cfg


def _parse_exploration(doc, H, d, defaults) -> ex.ExplorationConfig:
    path = "exploration"
    name = _typed(doc, "strategy", str, path, required=True) if isinstance(doc, dict) else None
    if name not in ex.STRATEGIES:
        raise ConfigError(f"{path}.strategy", f"must be one of {sorted(ex.STRATEGIES)}, got {name!r}")
    cls = ex.STRATEGIES[name]
    params = {f.name: f for f in fields(cls) if f.init}
    _check_keys(doc, set(params) | {"strategy"}, path)
    kwargs = {}
    for pname in params:
        kind = int if pname in ("n_samples", "j") else float
        value = _typed(doc, pname, kind, path)
        if value is not None:
            kwargs[pname] = value
    cfg = cls(**kwargs)
    resolved = ex.resolve(cfg, H, d)
    if resolved != cfg:
        defaults.append(f"{path}.{'beta' if name == 'lmc' else 'sigma'}")
    ex.validate(resolved, path)
    return resolved


def _parse_sync(doc, defaults) -> SyncConfig:
    if doc is None:
        defaults.append("sync")
        return SyncConfig()
    _check_keys(doc, {"rule", "c", "base", "gamma", "payload", "enabled"}, "sync")
    rule_name = _typed(doc, "rule", str, "sync", "every")
    if rule_name not in _RULE_KEYS:
        raise ConfigError("sync.rule", f"must be one of {sorted(_RULE_KEYS)}, got {rule_name!r}")
    pname, cls, kind = _RULE_KEYS[rule_name]
    for other, _ in ((k, v) for k, v in _RULE_KEYS.items() if k != rule_name):
        if _RULE_KEYS[other][0] in doc:
            raise ConfigError(f"sync.{_RULE_KEYS[other][0]}", f"not valid for rule {rule_name!r}")
    value = _typed(doc, pname, kind, "sync")
    rule = cls() if value is None else cls(value)
    if isinstance(rule, EveryC) and rule.c < 1:
        raise ConfigError("sync.c", "must be >= 1")
    if isinstance(rule, Exponential) and rule.base <= 1:
        raise ConfigError("sync.base", "must be > 1")
    if isinstance(rule, Determinant) and rule.gamma <= 0:
        raise ConfigError("sync.gamma", "must be > 0")
    payload = _typed(doc, "payload", str, "sync", "raw")
    try:
        payload = SyncPayload(payload)
    except ValueError:
        raise ConfigError("sync.payload", f"must be one of {[p.value for p in SyncPayload]}") from None
    enabled = _typed(doc, "enabled", bool, "sync", True)
    return SyncConfig(rule, payload, enabled)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a JSON-like document and fill documented defaults."""
    doc = copy.deepcopy(doc)
    _check_keys(doc, _TOP_KEYS, "")
    if "env" not in doc:
        raise ConfigError("env", "missing required field")
    env = _parse_env(doc["env"])
    H, d = env.dims
    defaults: list[str] = []
    if "exploration" not in doc:
        raise ConfigError("exploration", "missing required field")
    exploration = _parse_exploration(doc["exploration"], H, d, defaults)
    sync = _parse_sync(doc.get("sync"), defaults)
    for key, default in (("agents", 1), ("episodes", 100), ("reg", 1.0), ("seed", 0)):
        if key not in doc:
            defaults.append(key)
    agents = _typed(doc, "agents", int, "", 1)
    episodes = _typed(doc, "episodes", int, "", 100)
    reg = _typed(doc, "reg", float, "", 1.0)
    seed = _typed(doc, "seed", int, "", 0)
    if agents < 1:
        raise ConfigError("agents", "must be >= 1")
    if episodes < 0:
        raise ConfigError("episodes", "must be >= 0")
    if reg <= 0:
        raise ConfigError("reg", "must be > 0")
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if sync.payload is SyncPayload.FEDERATED and not isinstance(exploration, ex.LMC):
        raise ConfigError("sync.payload", "federated averaging needs persistent parameters (strategy 'lmc')")
    output = _typed(doc, "output", str, "", None)
    return ExperimentConfig(env, agents, episodes, exploration, sync, reg, seed, output,
                            tuple(defaults))


def to_dict(cfg: ExperimentConfig) -> dict:
    env = {"kind": cfg.env.kind}
    if cfg.env.kind == "nchain":
        env["n"] = cfg.env.n
    else:
        env.update(n_states=cfg.env.n_states, n_actions=cfg.env.n_actions,
                   horizon=cfg.env.horizon, seed=cfg.env.seed)
    if cfg.env.misspec is not None:
        env["misspec"] = {"zeta": cfg.env.misspec.zeta, "seed": cfg.env.misspec.seed}
    strat = {"strategy": cfg.exploration.kind}
    for f in fields(cfg.exploration):
        if f.init:
            strat[f.name] = getattr(cfg.exploration, f.name)
    rule = cfg.sync.rule
    sync = {"payload": cfg.sync.payload.value, "enabled": cfg.sync.enabled}
    if isinstance(rule, EveryC):
        sync.update(rule="every", c=rule.c)
    elif isinstance(rule, Exponential):
        sync.update(rule="exponential", base=rule.base)
    else:
        sync.update(rule="determinant", gamma=rule.gamma)
    out = {"env": env, "agents": cfg.agents, "episodes": cfg.episodes, "exploration": strat,
           "sync": sync, "reg": cfg.reg, "seed": cfg.seed}
    if cfg.output is not None:
        out["output"] = cfg.output
    return out


def set_path(doc: dict, dotted: str, value) -> dict:
    """Return a copy of ``doc`` with ``a.b.c`` set to ``value``."""
    doc = copy.deepcopy(doc)
    node = doc
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return doc

"""Learning curves on the N-chain for a few exploration strategies.

Writes one CSV per (strategy, seed) plus a small table of final-window values.
"""

import argparse
import json
from pathlib import Path

import numpy as np

from coopexplore import parse_config, run_experiment

STRATEGIES = {
    "phe": {"strategy": "phe", "sigma": 5.0},
    "lmc": {"strategy": "lmc", "beta": 0.02, "j": 50},
    "ucb": {"strategy": "ucb", "bonus": 1.0},
    "greedy": {"strategy": "greedy"},
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--strategies", nargs="+", default=["phe", "lmc"], choices=sorted(STRATEGIES))
    p.add_argument("--out", default="runs/nchain")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    window = max(1, args.episodes // 10)
    table = {}
    for name in args.strategies:
        finals = []
        for seed in range(args.seeds):
            cfg = parse_config({"env": {"kind": "nchain", "n": args.n}, "agents": args.agents,
                                "episodes": args.episodes, "exploration": STRATEGIES[name],
                                "sync": {"rule": "determinant", "gamma": args.gamma}, "seed": seed})
            m = run_experiment(cfg)
            (out / f"{name}_seed{seed}.csv").write_text(m.to_csv())
            finals.append(float(np.mean(m.policy_values[-window:])) if m.episodes else 0.0)
            print(f"{name} seed {seed}: final value {finals[-1]:.3f}, syncs {len(m.ledger.sync_episodes)}")
        table[name] = {"final_values": finals, "mean": float(np.mean(finals))}
    (out / "final_values.json").write_text(json.dumps(table, indent=2))
    for name, row in table.items():
        print(f"{name:8s} {row['mean']:.3f}")


if __name__ == "__main__":
    main()

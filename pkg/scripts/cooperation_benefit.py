"""Cumulative group regret with and without synchronization on random linear MDPs."""

import argparse

import numpy as np

from coopexplore import parse_config, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--agents", type=int, nargs="+", default=[1, 2, 4])
    p.add_argument("--episodes", type=int, default=800)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=1.0)
    args = p.parse_args()

    print("M   regret(sync)   regret(alone)   ratio   syncs")
    for M in args.agents:
        shared, alone, syncs = [], [], []
        for seed in range(args.seeds):
            doc = {"env": {"kind": "random_linear", "n_states": 8, "n_actions": 3, "horizon": 3,
                           "seed": seed},
                   "agents": M, "episodes": args.episodes,
                   "exploration": {"strategy": "phe", "sigma": args.sigma},
                   "sync": {"rule": "determinant", "gamma": args.gamma}, "seed": seed}
            m = run_experiment(parse_config(doc))
            shared.append(m.total_regret)
            syncs.append(len(m.ledger.sync_episodes))
            doc["sync"] = {"enabled": False}
            alone.append(run_experiment(parse_config(doc)).total_regret)
        a, b = np.mean(shared), np.mean(alone)
        print(f"{M:<3d} {a:13.2f} {b:15.2f} {a / b:7.3f} {np.mean(syncs):7.1f}")


if __name__ == "__main__":
    main()

"""Observed synchronization counts under the determinant rule against the counting bound."""

import argparse

import numpy as np

from coopexplore import parse_config, run_experiment
from coopexplore.metrics import comm_summary


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--episodes", type=int, nargs="+", default=[100, 250, 500, 1000])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.5)
    args = p.parse_args()

    d, M = 24, args.agents
    print("K      gamma    mean count   max count   bound+1   scalars")
    for K in args.episodes:
        gamma = K / (d * M)
        counts, scalars, bound = [], [], None
        for seed in range(args.seeds):
            doc = {"env": {"kind": "random_linear", "n_states": 8, "n_actions": 3, "horizon": 3,
                           "seed": seed},
                   "agents": M, "episodes": K,
                   "exploration": {"strategy": "phe", "sigma": args.sigma},
                   "sync": {"rule": "determinant", "gamma": gamma}, "seed": seed}
            m = run_experiment(parse_config(doc))
            rep = comm_summary(m.ledger, d, M, K, gamma)
            counts.append(rep["sync_count"])
            scalars.append(rep["scalars_sent"])
            bound = rep["bound"]
        print(f"{K:<6d} {gamma:7.2f} {np.mean(counts):12.1f} {max(counts):11d} {bound + 1:9.1f} "
              f"{np.mean(scalars):9.0f}")


if __name__ == "__main__":
    main()

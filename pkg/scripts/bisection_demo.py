"""Bisection on synthetic two-sigmoid segments, deterministic and sampled.

Prints how far the recovered boundary lands from the true crossing and how
confident the model still is there.
"""
import argparse

import numpy as np

from confgate.attack import BisectionParams, Probe, bisect_deterministic, bisect_noisy
from confgate.core import QueryLedger, RngStream, fork_rng
from confgate.segment import SegmentModel, SegmentOracle, crossing_point, segment_probs


def random_model(g, eta):
    s0, s1 = g.uniform(1, 10, 2)
    z0 = g.uniform(0.15, 0.85)
    return SegmentModel(eta, s0, s1, z0, z0 + g.uniform(-0.05, 0.05), np.zeros(8), np.ones(8))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--eta", type=float, default=0.05)
    ap.add_argument("--repeats", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for sampled in (False, True):
        err, conf, queries = [], [], []
        for i in range(args.runs):
            g = fork_rng(RngStream(args.seed), i).generator()
            m = random_model(g, args.eta)
            probe = Probe(SegmentOracle(m, sample=sampled), 1, QueryLedger(10**6), g)
            if sampled:
                params = BisectionParams(tolerance=1e-2, repeats=args.repeats, check_endpoints=False)
                res = bisect_noisy(probe, m.x_t, m.x_0, params)
            else:
                res = bisect_deterministic(probe, m.x_t, m.x_0, BisectionParams(tolerance=1e-3))
            err.append(abs(res.k - crossing_point(m)))
            conf.append(segment_probs(m, res.k).max())
            queries.append(res.queries)
        err, conf = np.array(err), np.array(conf)
        name = f"sampled (m={args.repeats})" if sampled else "deterministic"
        print(f"{name:>18}: |k-k*| median {np.median(err):.4f} max {err.max():.4f}  "
              f"within 0.05: {np.mean(err <= 0.05):.0%}  "
              f"conf<=0.55: {np.mean(conf <= 0.55):.0%}  queries {np.mean(queries):.0f}")


if __name__ == "__main__":
    main()

"""Run a (nu, tau) grid from a config and print the marked table plus the frontier.

    python3 scripts/run_desk_grid.py configs/desk_rnd.toml --out runs/desk_rnd
"""
import argparse
import time

from confgate.config import load_config
from confgate.evaluation import format_point
from confgate.grid import read_results, run_grid
from confgate.report import render_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default="configs/desk_rnd.toml")
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--mode", choices=["step", "linear"], default="step")
    args = ap.parse_args()

    cfg = load_config(args.config)
    t0 = time.perf_counter()
    res = run_grid(cfg, out=args.out, workers=args.workers)
    m = res.manifest
    print(f"undefended CA {m['undefended_ca']:.4f}  T {m['temperature']:.3f}  "
          f"eps {m['epsilon']:.4f}  ({time.perf_counter() - t0:.1f}s)")
    print(render_table(read_results(res.out / "results.csv"), args.mode))
    print("\nfrontier:")
    for i in res.frontier:
        p = res.points[i]
        print(f"  nu={p.nu:g} tau={p.tau:g}  {format_point(p)}")
    print(f"\noutputs in {res.out}")


if __name__ == "__main__":
    main()

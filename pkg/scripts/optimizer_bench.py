"""Front quality on the analytic convex problems across seeds.

Runs both indicator argument orders and prints, per seed, the front size and
the largest distance of a front member from the Pareto set.

    python3 scripts/optimizer_bench.py --pop 50 --seeds 8
"""

import argparse

from mocm.cli import run_bench
from mocm.engine import OptimizerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pop", type=int, default=50)
    ap.add_argument("--max-it", type=int, default=200)
    ap.add_argument("--max-same", type=int, default=5)
    ap.add_argument("--seeds", type=int, default=8)
    args = ap.parse_args()

    for swap in (False, True):
        print(f"indicator order: {'(p, q)' if swap else '(q, p)'}")
        for seed in range(args.seeds):
            opt = OptimizerConfig(args.pop, args.max_it, args.max_same, seed, swap_indicator_args=swap)
            res = run_bench(opt)
            cells = [f"{name} front {r['front_size']:3d} dmax {r['distance_max']:.3f} it {r['iterations']:3d}"
                     for name, r in res.items()]
            print(f"  seed {seed}: " + " | ".join(cells))


if __name__ == "__main__":
    main()

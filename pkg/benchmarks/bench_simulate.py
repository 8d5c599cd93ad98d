"""Compiled kernel against the numpy fallback.

    python benchmarks/bench_simulate.py [--paths N] [--dt DT] [--measures uniform,three-atom]

Both backends read the same random streams, so the script also reports the
largest difference between their stopped values.
"""
import argparse
import time

import numpy as np

from skorokhod import measure as M
from skorokhod import simulate as S


def timed(emb, m, cfg, backend):
    t0 = time.perf_counter()
    r = S.simulate(emb, m, cfg, backend=backend)
    return r, time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--measures", default="uniform,three-atom,pareto-truncated")
    args = ap.parse_args(argv)
    if S._kernel is None:
        raise SystemExit("compiled kernel is not built; run `pip install -e . --no-build-isolation` first")
    cfg = S.SimConfig(num_paths=args.paths, dt=args.dt, seed=args.seed)
    print(f"{'measure':<18}{'rule':<9}{'cython s':>10}{'numpy s':>10}{'speedup':>9}{'paths/s (cy)':>14}"
          f"{'max |diff|':>12}")
    for name in args.measures.split(","):
        m = M.named(name)
        for emb in ("ay", "perkins", "cw"):
            a, ta = timed(emb, m, cfg, "cython")
            b, tb = timed(emb, m, cfg, "python")
            diff = max(float(np.max(np.abs(a.w_tau - b.w_tau))), float(np.max(np.abs(a.tau - b.tau))))
            print(f"{name:<18}{emb:<9}{ta:>10.3f}{tb:>10.3f}{tb / ta:>9.1f}{args.paths / ta:>14.0f}{diff:>12.1e}")


if __name__ == "__main__":
    main()

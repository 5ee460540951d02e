"""Cluster-count selection on well-separated blobs, across WCSD tie bands.

    python3 scripts/blob_selection.py --rtol 0 0.1 0.25 --seeds 20

Seven blobs (sd 0.02) sit evenly on a circle of radius 0.35 in the unit
square; each seed rotates the circle and redraws the points. The script
prints the chosen c per seed for each tie band, plus the per-candidate
diagnostics of the first seed.
"""

import argparse

import numpy as np

from fuzzyflow.fcm import FcmConfig, select_c


def blobs(seed, k=7, n_per=40, sd=0.02):
    rng = np.random.default_rng(seed)
    ang = np.linspace(0, 2 * np.pi, k, endpoint=False) + rng.uniform(0, 2 * np.pi)
    centers = 0.5 + 0.35 * np.c_[np.cos(ang), np.sin(ang)]
    return np.clip(np.vstack([c + sd * rng.standard_normal((n_per, 2)) for c in centers]), 0, 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rtol", type=float, nargs="+", default=[0.0, 0.25])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--blobs", type=int, default=7)
    ap.add_argument("--c-max", type=int, default=10)
    args = ap.parse_args()

    for rtol in args.rtol:
        chosen = []
        for seed in range(args.seeds):
            c, rows = select_c(blobs(seed, args.blobs), range(2, args.c_max + 1), FcmConfig(seed=seed),
                               wcsd_rtol=rtol)
            chosen.append(c)
            if seed == 0:
                print(f"rtol {rtol}: seed 0 diagnostics")
                for r in rows:
                    print(f"  c={r.c:<3d} wcsd={r.wcsd:9.4f} fpc={r.fpc:.4f} silhouette={r.mean_silhouette:.4f}")
        hits = sum(c == args.blobs for c in chosen)
        print(f"rtol {rtol}: chose {chosen}  ({hits}/{args.seeds} correct)")


if __name__ == "__main__":
    main()

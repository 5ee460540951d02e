"""Run the full pipeline over several seeds and summarize the metrics.

    python3 scripts/multi_seed.py --seeds 20 --out-dir runs/multi
    python3 scripts/multi_seed.py --seeds 5 --set window=50 --set wcsd_rtol=0
"""

import argparse
import json
import time
from collections import Counter
from pathlib import Path

import numpy as np

from fuzzyflow.harness import PipelineConfig, format_config, load_config, parse_config, run_pipeline


def with_overrides(base, settings, seed):
    """Base config with KEY=VALUE strings applied and the seed replaced."""
    over = {}
    for item in settings:
        key, _, value = item.partition("=")
        over[key.strip()] = value.strip()
    lines = []
    for line in format_config(base).splitlines():
        key = line.split("=")[0].strip()
        lines.append(f"{key} = {over.pop(key)}" if key in over else line)
    if over:
        raise SystemExit(f"unknown config keys: {', '.join(over)}")
    return parse_config("\n".join(lines), {"seed": seed})


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--config", help="base config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    ap.add_argument("--out-dir", default="runs/multi_seed")
    args = ap.parse_args()

    base = load_config(args.config) if args.config else PipelineConfig()
    root = Path(args.out_dir)
    rows = []
    t0 = time.perf_counter()
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        cfg = with_overrides(base, args.set, seed)
        res = run_pipeline(cfg, root / f"seed{seed}")
        m = res.metrics
        lat = json.loads((res.out_dir / "latency.json").read_text()) if cfg.timing else {}
        row = {
            "seed": seed,
            "binary_accuracy": m["binary"]["binary_accuracy"],
            "fpr": m["binary"]["fpr"],
            "attack_mean_f1": m["attack_mean_f1"],
            "c_star": m["c_star"],
            "kept": m["n_kept_features"],
            "pair": "/".join(m["dominant_confusion"]["pair"]),
            "median_ms": lat.get("median_ms"),
        }
        rows.append(row)
        print(f"seed {seed:3d}  acc {row['binary_accuracy']:.4f}  fpr {row['fpr']:.4f}  "
              f"F1 {row['attack_mean_f1']:.4f}  c* {row['c_star']:2d}  kept {row['kept']}  {row['pair']}",
              flush=True)
    summary = {
        "seeds": len(rows),
        "elapsed_s": round(time.perf_counter() - t0, 1),
        "mean_binary_accuracy": float(np.mean([r["binary_accuracy"] for r in rows])),
        "mean_fpr": float(np.mean([r["fpr"] for r in rows])),
        "mean_attack_f1": float(np.mean([r["attack_mean_f1"] for r in rows])),
        "dominant_pairs": dict(Counter(r["pair"] for r in rows)),
        "runs": rows,
    }
    root.mkdir(parents=True, exist_ok=True)
    (root / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps({k: v for k, v in summary.items() if k != "runs"}, indent=2))


if __name__ == "__main__":
    main()

"""Accuracy of four feature sets as one mechanism shifts at a time.

``--quick`` runs a reduced sweep for a fast look; the default matches the
acceptance run (20k rows, 20 repetitions).

    python3 demos/synthetic_sweep.py --quick
"""
import argparse

from per_cis.bench import SyntheticConfig, run_synthetic_sweep

parser = argparse.ArgumentParser()
parser.add_argument("--quick", action="store_true")
args = parser.parse_args()

cfg = SyntheticConfig(n_train=4000, n_test=4000, repetitions=4) if args.quick else SyntheticConfig()
rep = run_synthetic_sweep(cfg)
df = rep.curves_frame()
table = df.pivot_table(index=["sigma_mg", "sigma_mb"], columns="method", values="accuracy_mean")
print(table[list(rep.methods)].round(3).to_string())
print(f"\n{cfg.repetitions} repetitions, n_train={cfg.n_train}, n_test={cfg.n_test}, {rep.runtime_s:.1f}s")

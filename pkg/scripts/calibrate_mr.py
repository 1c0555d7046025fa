#!/usr/bin/env python3
"""Calibration run behind the frozen mixing-ratio accuracy threshold.

The acceptance suite requires held-out RMSE(tau_hat, tau) < 0.08. That
threshold was frozen from this script's output:

    train 3000 items / held-out 300 items, duration 0.5 s
    lr 1e-3 -> 1e-5 cosine, warmup 5, weight decay 0.05, batch 64, 100 epochs
    held-out RMSE 0.0734

Smaller training sets plateau well above the threshold (500 items gives
~0.14): with only a few hundred synthetic identities the regressor memorizes
per-identity spectra instead of learning the mixture/enrollment similarity
cue that generalizes.

Usage: python3 scripts/calibrate_mr.py [n_train]
"""

import sys
import time

import numpy as np

from adflow.mrnet import MrRegressor, mr_predict, mr_train
from adflow.signal import DatasetConfig, make_dataset
from adflow.velnet import TrainConfig


def run(n_train: int = 3000, n_eval: int = 300) -> float:
    cfg = DatasetConfig(duration_s=0.5)
    t0 = time.time()
    train = make_dataset(n_train, "uniform", cfg, seed=0)
    held_out = make_dataset(n_eval, "uniform", cfg, seed=1)
    print(f"data: {n_train}+{n_eval} items in {time.time() - t0:.1f}s")

    reg = MrRegressor.create(17)
    t0 = time.time()
    reg, trace = mr_train(reg, train, TrainConfig(
        lr_init=1e-3, lr_min=1e-5, warmup_epochs=5, t_max_epochs=95,
        weight_decay=0.05, epochs=100, batch_size=64, seed=0))
    print(f"train: loss {trace[0]:.4f} -> {trace[-1]:.4f} "
          f"in {time.time() - t0:.1f}s")

    errs = [mr_predict(reg, it.x, it.e) - it.tau for it in held_out]
    rmse = float(np.sqrt(np.mean(np.square(errs))))
    print(f"held-out RMSE: {rmse:.4f}")
    return rmse


if __name__ == "__main__":
    run(int(sys.argv[1]) if len(sys.argv) > 1 else 3000)

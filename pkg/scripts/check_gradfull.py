"""Criterion-5 precheck: grad_check on both full architectures in float64."""
import time

import numpy as np

import neuralofdm.tensorkit as T
from neuralofdm.neural_mod import ModulatorNet
from neuralofdm.neural_rx import ReceiverNet

rng = np.random.default_rng(7)

t0 = time.time()
mod = ModulatorNet(width=48, seed=0, dtype=np.float64)
err_m = T.grad_check(mod, rng.normal(size=(2, 24, 14, 2)), num_params=120, seed=3)
t1 = time.time()
print(f"modulator: max rel err {err_m:.3e}  ({t1 - t0:.1f}s)")

rx = ReceiverNet(m=6, width=128, rx_input="pilots", seed=0, dtype=np.float64)
err_r = T.grad_check(rx, rng.normal(size=(2, 24, 14, 4)), num_params=120, seed=4)
t2 = time.time()
print(f"receiver:  max rel err {err_r:.3e}  ({t2 - t1:.1f}s)")

assert err_m < 1e-4, err_m
assert err_r < 1e-4, err_r
print(f"total {t2 - t0:.1f}s  (< 300s required)")
print("criterion-5 precheck OK")

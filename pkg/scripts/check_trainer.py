"""Trainer validation: losses, schedule, determinism, mode plumbing."""
import time

import numpy as np

import neuralofdm.tensorkit as T
from neuralofdm.errors import ConfigError
from neuralofdm.trainer import (
    Adam, DivergenceError, TrainConfig, papr_schedule, papr_value,
    rate_loss, smoothed, total_loss, train_end_to_end,
)

# --- rate_loss scalar oracles ---
llr = np.zeros((4, 5))
bits = np.random.default_rng(0).integers(0, 2, size=(4, 5))
out = rate_loss(llr, bits)
assert abs(float(out.values)) < 1e-12, float(out.values)  # LLR=0 -> 0

big = (2.0 * bits - 1.0) * 1e4  # saturated correct -> clipped at 30
out = rate_loss(big, bits)
# BCE of clipped 30-LLR: log(1+e^-30)/ln2 - 1
expect = np.log1p(np.exp(-30.0)) / np.log(2.0) - 1.0
assert abs(float(out.values) - expect) < 1e-12, (float(out.values), expect)

rng = np.random.default_rng(1)
L = rng.choice([-4.0, 4.0], size=(3, 7))
b = rng.integers(0, 2, size=(3, 7))
p = 1.0 / (1.0 + np.exp(-L))
bce = -(b * np.log(p) + (1 - b) * np.log(1 - p)).mean()
direct = bce / np.log(2.0) - 1.0
out = rate_loss(L, b)
assert abs(float(out.values) - direct) < 1e-12
assert float(out.values) > -1.0
print("rate_loss oracles ok")

# --- papr schedule endpoints ---
n = 1000
assert papr_schedule(0, n, 0.01) == 0.0
assert papr_schedule(599, n, 0.01) == 0.0          # first 60% exactly zero
assert papr_schedule(600, n, 0.01) > 0.0
assert abs(papr_schedule(n - 1, n, 0.01) - 0.01) < 1e-15
assert papr_schedule(5, 10, 0.0) == 0.0
ramp = [papr_schedule(s, n, 0.01) for s in range(n)]
assert all(b >= a for a, b in zip(ramp, ramp[1:]))  # monotone
print("papr_schedule ok")

# --- total_loss: lambda=0 identity; papr gradient nonzero ---
frame_vals = rng.standard_normal((2, 64, 2))
lr_t = rate_loss(rng.standard_normal((2, 8)), rng.integers(0, 2, (2, 8)))
assert total_loss(lr_t, T.const(frame_vals), 0.0) is lr_t
ft = T.parameter(frame_vals)
lr_t = rate_loss(rng.standard_normal((2, 8)), rng.integers(0, 2, (2, 8)))
tot = total_loss(lr_t, ft, 0.5)
T.backward(tot)
assert np.abs(ft.grad).max() > 0
# finite difference on one entry
i = (0, 3, 1)
eps = 1e-6
vp = frame_vals.copy(); vp[i] += eps
vm = frame_vals.copy(); vm[i] -= eps
num = (papr_value(vp) * 0.5 - papr_value(vm) * 0.5) / (2 * eps)
assert abs(ft.grad[i] - num) < 1e-6, (ft.grad[i], num)
print("total_loss ok")

# --- Adam sanity: quadratic descent ---
w = T.parameter(np.array([5.0, -3.0]))
opt = Adam([("w", w)], lr=0.1)
for _ in range(400):
    lossv = T.sum_all(T.mul(w, w))
    T.backward(lossv)
    opt.step(); opt.zero_grad()
assert np.abs(w.values).max() < 1e-2, w.values
print("adam ok")

# --- smoothed ---
v = np.arange(10.0)
sm = smoothed(v, window=3)
assert sm[0] == 0.0 and abs(sm[2] - 1.0) < 1e-12 and abs(sm[9] - 8.0) < 1e-12

# --- config validation ---
for bad in (dict(batch_size=0), dict(speed_range=(5, 1)), dict(mode="xxx"),
            dict(mode="sip", pilots="2P"), dict(ramp_frac=1.5),
            dict(checkpoint_every=5)):
    try:
        TrainConfig(m=2, **bad)
    except ConfigError:
        pass
    else:
        raise AssertionError(f"accepted {bad}")
rt = TrainConfig.from_dict(TrainConfig(m=2).to_dict())
assert rt == TrainConfig(m=2)
print("config ok")

# --- tiny end-to-end runs per mode, timing ---
base = dict(m=2, n_s=32, n_t=14, batch_size=4, n_steps=3, mod_width=8,
            rx_width=12, seed=11, snr_range_db=(5.0, 15.0))
for mode, pil, rxin in [("qam", "1P", "pilots"), ("gs", "1P", "pilots"),
                        ("deepofdm", "0P", "none"),
                        ("deepofdm-linear", "0P", "none"),
                        ("sip", "0P", "none"),
                        ("qam", "2P", "pilots+csi")]:
    t0 = time.time()
    bundle, hist = train_end_to_end(TrainConfig(
        mode=mode, pilots=pil, rx_input=rxin, **base))
    dt = time.time() - t0
    assert len(hist) == 3 and hist.steps == [0, 1, 2]
    assert all(np.isfinite(hist.rate_loss)) and all(np.isfinite(hist.papr))
    assert all(0 <= u <= 100 for u in hist.speed_mean)
    assert all(5 <= x <= 15 for x in hist.snr_mean_db)
    pts = bundle.constellation
    mean = abs(pts.mean()); pw = abs((np.abs(pts) ** 2).mean() - 1)
    assert mean < 1e-6 and pw < 1e-6, (mode, mean, pw)
    has_mod = any(k.startswith("mod/") for k in bundle.params)
    assert has_mod == mode.startswith("deepofdm")
    print(f"{mode:16s} {pil} rx={rxin:10s} {dt / 3:.2f}s/step "
          f"rate0={hist.rate_loss[0]:+.3f}")

# qam: constellation frozen exactly
from neuralofdm.grid import qam_constellation
bundle, _ = train_end_to_end(TrainConfig(mode="qam", pilots="1P",
                                         rx_input="pilots", **base))
assert np.array_equal(bundle.constellation, qam_constellation(2).points)
print("qam constellation frozen ok")

# determinism: identical histories and bundles
cfg = TrainConfig(mode="deepofdm", pilots="0P", rx_input="none", **base)
b1, h1 = train_end_to_end(cfg)
b2, h2 = train_end_to_end(cfg)
assert h1.to_dict() == h2.to_dict()
assert np.array_equal(b1.constellation, b2.constellation)
assert all(np.array_equal(b1.params[k], b2.params[k]) for k in b1.params)
print("determinism ok")

# gradient reaches the modulator with lambda=0: params move after 1 step
cfg1 = TrainConfig(mode="deepofdm", pilots="0P", rx_input="none",
                   **{**base, "n_steps": 1, "lambda_max": 0.0})
from neuralofdm.neural_mod import ModulatorNet
ref = ModulatorNet(width=8, seed=11, dtype=np.float32).state_dict()
b3, _ = train_end_to_end(cfg1)
moved = sum(not np.array_equal(b3.params[k], ref[k])
            for k in ref if "running" not in k)
assert moved > 0, "modulator never updated"
print(f"modulator params moved: {moved}/{sum('running' not in k for k in ref)}")

# channel pool path: runs and is deterministic
cfgp = TrainConfig(mode="qam", pilots="1P", rx_input="pilots",
                   **{**base, "channel_pool": 16})
bp1, hp1 = train_end_to_end(cfgp)
bp2, hp2 = train_end_to_end(cfgp)
assert hp1.to_dict() == hp2.to_dict()
print("channel pool ok")

print("ALL TRAINER CHECKS PASSED")

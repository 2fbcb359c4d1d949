"""200-step toy convergence oracle and divergence abort."""
import time

import numpy as np

from neuralofdm.trainer import (DivergenceError, TrainConfig, smoothed,
                                train_end_to_end)

t0 = time.time()
cfg = TrainConfig(m=2, mode="qam", pilots="1P", rx_input="pilots",
                  n_s=64, n_t=14, batch_size=8, n_steps=200,
                  rx_width=16, seed=3, snr_range_db=(5.0, 15.0),
                  channel_pool=64)
bundle, hist = train_end_to_end(cfg)
dt = time.time() - t0
sm = smoothed(hist.rate_loss, window=20)
drop = (sm[19] - sm[-1]) / abs(sm[19])
print(f"qam 200 steps: {dt:.1f}s  initial(sm20)={sm[19]:+.4f} "
      f"final={sm[-1]:+.4f}  drop={100 * drop:.1f}%")
assert drop >= 0.30, drop

# deepofdm mode as well (constellation + modulator + receiver all learn)
t0 = time.time()
cfg2 = TrainConfig(m=2, mode="deepofdm", pilots="0P", rx_input="none",
                   n_s=64, n_t=14, batch_size=8, n_steps=200,
                   mod_width=8, rx_width=16, seed=3,
                   snr_range_db=(5.0, 15.0), channel_pool=64)
bundle2, hist2 = train_end_to_end(cfg2)
dt2 = time.time() - t0
sm2 = smoothed(hist2.rate_loss, window=20)
drop2 = (sm2[19] - sm2[-1]) / abs(sm2[19])
print(f"deepofdm 200 steps: {dt2:.1f}s  initial(sm20)={sm2[19]:+.4f} "
      f"final={sm2[-1]:+.4f}  drop={100 * drop2:.1f}%")
assert drop2 >= 0.30, drop2

# divergence abort carries partial history
try:
    train_end_to_end(TrainConfig(m=2, mode="qam", pilots="1P",
                                 rx_input="pilots", n_s=32, n_t=14,
                                 batch_size=4, n_steps=50, rx_width=12,
                                 learning_rate=1e12, seed=0))
except DivergenceError as e:
    print(f"diverged as expected after {len(e.history)} recorded steps: {e}")
    assert len(e.history) >= 1
else:
    raise AssertionError("expected divergence at lr=1e12")
print("CONVERGENCE CHECKS PASSED")

"""Train the desk-scale models committed under artifacts/.

Four transceivers on a 64x14 grid with QPSK-order modulation (m=2),
speeds 0-40 m/s, SNR 2-14 dB, 8000 training steps (the unregularized
PAPR reference uses 4000):

  deepofdm_0p.npz   pilotless conv modulator + neural receiver (annealed PAPR)
  deepofdm_1p.npz   same architecture with one pilot symbol
  qam_nrx_0p.npz    fixed QPSK + neural receiver, pilotless
  deepofdm_0p_nopapr.npz   pilotless, lambda_max = 0 (PAPR unconstrained)

Run:  python3 scripts/train_toy_models.py [outdir]
Takes roughly 1.5 h on one core.
"""

import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from neuralofdm.persist import save_weights
from neuralofdm.trainer import TrainConfig, smoothed, train_end_to_end

COMMON = dict(m=2, n_s=64, n_t=14, batch_size=8, learning_rate=1e-3,
              speed_range=(0.0, 40.0), snr_range_db=(2.0, 14.0),
              mod_width=16, rx_width=32, lambda_max=0.01, n_steps=8000)

MODELS = {
    "deepofdm_0p": dict(COMMON, mode="deepofdm", pilots="0P",
                        rx_input="none", seed=7),
    "deepofdm_1p": dict(COMMON, mode="deepofdm", pilots="1P",
                        rx_input="pilots", seed=8),
    "qam_nrx_0p": dict(COMMON, mode="qam", pilots="0P",
                       rx_input="none", seed=9),
    "deepofdm_0p_nopapr": dict(COMMON, mode="deepofdm", pilots="0P",
                               rx_input="none", seed=7, lambda_max=0.0,
                               n_steps=4000),
}


def main() -> int:
    outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parent.parent / "artifacts"
    outdir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for name, kw in MODELS.items():
        cfg = TrainConfig(**kw)
        t0 = time.time()

        def progress(step, hist, _name=name, _t0=t0, _n=cfg.n_steps):
            if (step + 1) % 500 == 0:
                s = smoothed(hist.rate_loss, 200)[-1]
                print(f"[{_name}] step {step + 1}/{_n} "
                      f"rate_loss {s:+.4f} papr {hist.papr[-1]:.2f} dB "
                      f"({time.time() - _t0:.0f}s)", flush=True)

        bundle, hist = train_end_to_end(cfg, progress=progress)
        path = outdir / f"{name}.npz"
        save_weights(bundle, path)
        final = smoothed(hist.rate_loss, 200)[-1]
        summary[name] = {
            "steps": cfg.n_steps,
            "final_rate_loss": round(float(final), 4),
            "final_papr_db": round(float(hist.papr[-1]), 2),
            "seconds": round(time.time() - t0, 1),
        }
        print(f"[{name}] done: rate_loss {final:+.4f} -> {path}", flush=True)
    (outdir / "training_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())

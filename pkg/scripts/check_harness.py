"""Validation oracles for the experiment harness.

Run:  python3 scripts/check_harness.py
"""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from neuralofdm.channel import generate_tdl
from neuralofdm.errors import ConfigError
from neuralofdm.grid import make_pilot_pattern, qam_constellation
from neuralofdm.harness import (
    CSV_HEADER,
    ExperimentConfig,
    _draw_channels,
    goodput,
    load_config,
    required_snr,
    run_ablation,
    run_sweep,
    symmetry_metric,
    symmetry_noise_floor,
    tx_symbol_cloud,
    write_csv,
)
from neuralofdm.persist import load_weights, save_weights
from neuralofdm.trainer import TrainConfig, train_end_to_end

FAIL = 0


def check(name, ok, detail=""):
    global FAIL
    tag = "PASS" if ok else "FAIL"
    if not ok:
        FAIL += 1
    print(f"[{tag}] {name} {detail}")


# ---------------------------------------------------------------- config
cfg = load_config({"grid": {"n_s": 32, "n_t": 14, "pilots": "1P"},
                   "sweep": {"speeds": [10.0], "snrs_db": [0.0]}})
check("config defaults fill in", cfg.grid["n_cp"] == 6
      and cfg.code["n"] == 648 and cfg.receiver["kind"] == "lmmse")
check("config pattern/profile build", cfg.pattern().n_data == 32 * 13
      and cfg.profile().name == "tdl-a")

for bad in [{"nonsense": {}},
            {"grid": {"bogus_key": 1}},
            {"sweep": {"chunk_frames": 0, "speeds": [1], "snrs_db": [1]}}]:
    try:
        c = load_config(bad)
        if "sweep" in bad:
            run_sweep(c)
        check(f"rejects {list(bad)[0]} abuse", False)
    except ConfigError:
        check(f"rejects {list(bad)[0]} abuse", True)

try:
    load_config("/no/such/file.json")
    check("missing config file is ConfigError", False)
except ConfigError:
    check("missing config file is ConfigError", True)

tc = load_config({"modulation": {"m": 2, "mode": "qam"},
                  "train": {"n_steps": 7, "batch_size": 2}}).train_config()
check("train_config merge", isinstance(tc, TrainConfig) and tc.n_steps == 7
      and tc.m == 2 and tc.pilots == "2P")

# ---------------------------------------------------------------- goodput
check("goodput product", abs(goodput(3.0, 0.9, 0.25) - 3.0 * 0.9 * 0.75) < 1e-15)
try:
    goodput(3.0, 0.5, 1.5)
    check("goodput rejects BLER>1", False)
except ConfigError:
    check("goodput rejects BLER>1", True)

# ------------------------------------------------------------ required SNR
snrs = [0.0, 2.0, 4.0, 6.0]
blers = [1.0, 0.5, 0.05, 0.001]
r10 = required_snr(snrs, blers, 0.10)
check("required_snr brackets", 2.0 < r10 < 4.0, f"(snr={r10:.3f})")
exact = 2.0 + 2.0 * (np.log10(0.5) - np.log10(0.1)) / (np.log10(0.5) - np.log10(0.05))
check("required_snr log-linear", abs(r10 - exact) < 1e-12)
r01 = required_snr(snrs, blers, 0.01)
check("required_snr monotone in target", r01 > r10, f"({r01:.3f} > {r10:.3f})")
check("required_snr unbracketed is nan", np.isnan(required_snr(snrs, blers, 1e-6)))
check("required_snr shuffled input", abs(required_snr(snrs[::-1], blers[::-1], 0.10) - r10) < 1e-12)

# ------------------------------------------------------------- symmetry
qam = qam_constellation(4).points
check("16-QAM quarter-turn symmetric", symmetry_metric(qam) <= 1e-9,
      f"(score={symmetry_metric(qam):.2e})")
tri = np.array([1.0, np.exp(2j * np.pi / 3), 0.5j])
check("asymmetric set scores positive", symmetry_metric(tri) > 1e-3)
check("full turn is identity", symmetry_metric(tri, theta=2 * np.pi) < 1e-9)
rng = np.random.default_rng(5)
cloud = rng.normal(size=400) + 1j * rng.normal(size=400)
floor = symmetry_noise_floor(cloud)
sym_cloud = np.concatenate([cloud[:100] * 1j ** k for k in range(4)])
check("noise floor positive and small", 0 < floor < symmetry_metric(cloud),
      f"(floor={floor:.4f}, score={symmetry_metric(cloud):.4f})")
check("exactly symmetric cloud beats floor",
      symmetry_metric(sym_cloud) < 0.5 * symmetry_noise_floor(sym_cloud),
      f"({symmetry_metric(sym_cloud):.2e} < {symmetry_noise_floor(sym_cloud):.4f})")

# ------------------------------------------------- per-frame channel equal
pat = make_pilot_pattern("1P", 32, 14)
prof = cfg.profile()
ts = 1.0 / (32 * 15e3)
rngs = [np.random.default_rng(np.random.SeedSequence((9, 0, f))) for f in range(3)]
stacked = _draw_channels(prof, 40.0, 2e9, 100, ts, 6, rngs)
single = generate_tdl(prof, 40.0, 2e9, 100, ts,
                      seed=np.random.default_rng(np.random.SeedSequence((9, 0, 1))),
                      n_cp=6)
check("stacked channel matches per-frame draw",
      np.allclose(stacked.taps[1], single.taps, atol=0, rtol=0))

# ------------------------------------------------------------- tiny sweep
t0 = time.time()
toy = load_config({
    "grid": {"n_s": 64, "n_t": 14, "pilots": "1P"},
    "code": {"n": 648, "rate": "1/2"},
    "modulation": {"m": 2, "mode": "qam"},
    "receiver": {"kind": "lmmse"},
    "sweep": {"speeds": [10.0], "snrs_db": [-20.0, 8.0], "max_frames": 40,
              "max_block_errors": 12, "chunk_frames": 7, "master_seed": 3},
})
res = run_sweep(toy)
dt = time.time() - t0
rows = {(r.speed_mps, r.snr_db): r for r in res.rows}
lo, hi = rows[(10.0, -20.0)], rows[(10.0, 8.0)]
check("sweep ran", len(res.rows) == 2, f"({dt:.1f}s)")
check("-20 dB point saturates BLER", lo.bler == 1.0 and lo.goodput == 0.0,
      f"(bler={lo.bler}, frames={lo.frames})")
check("-20 dB stops at error budget", lo.block_errors >= 12 and lo.frames <= 40,
      f"(errs={lo.block_errors} in {lo.frames} frames)")
check("8 dB point mostly clean", hi.bler < 0.5,
      f"(bler={hi.bler:.3f}, errs={hi.block_errors})")
check("rho matches pilot overhead", abs(hi.rho - 13 / 14) < 1e-12)
check("goodput consistent", abs(hi.goodput - 1.0 * hi.rho * (1 - hi.bler)) < 1e-12)
check("ber below bler", hi.ber <= hi.bler + 1e-12)

# chunk-size independence
toy2 = load_config(
    {**{k: dict(getattr(toy, k)) for k in
        ("grid", "channel", "code", "modulation", "receiver", "train")},
     "sweep": {**toy.sweep, "chunk_frames": 13}})
res2 = run_sweep(toy2)
same = all(
    (a.frames, a.block_errors, a.bler, a.ber, a.goodput)
    == (b.frames, b.block_errors, b.bler, b.ber, b.goodput)
    for a, b in zip(res.rows, res2.rows))
check("results independent of chunk size", same)

res3 = run_sweep(toy)
same3 = all((a.frames, a.block_errors, a.bler, a.ber) ==
            (b.frames, b.block_errors, b.bler, b.ber)
            for a, b in zip(res.rows, res3.rows))
check("rerun is deterministic", same3)

# CSV
out = "/tmp/sweep_test.csv"
write_csv(res, out)
text = open(out).read()
lines = text.strip().split("\n")
check("csv header exact", lines[0] == CSV_HEADER)
check("csv row count", len(lines) == 3)
check("csv first field is label", lines[1].split(",")[0] == "lmmse")
write_csv(res3, "/tmp/sweep_test2.csv")
check("csv bytes deterministic", text == open("/tmp/sweep_test2.csv").read())

# ls receiver path + perfect-csi ordering at same point
ls_cfg = toy2.replace(receiver={"kind": "ls"},
                      sweep={"snrs_db": [8.0], "max_frames": 25,
                             "chunk_frames": 25})
pc_cfg = ls_cfg.replace(receiver={"kind": "perfect-csi"})
ls_row = run_sweep(ls_cfg).rows[0]
pc_row = run_sweep(pc_cfg).rows[0]
check("ls runs", 0.0 <= ls_row.bler <= 1.0, f"(bler={ls_row.bler:.3f})")
check("perfect csi no worse than ls", pc_row.bler <= ls_row.bler + 0.1,
      f"(pc={pc_row.bler:.3f} vs ls={ls_row.bler:.3f})")

# iedd path (tiny budget)
ie_cfg = ls_cfg.replace(receiver={"kind": "iedd", "n_outer": 2},
                        sweep={"max_frames": 6, "chunk_frames": 3})
ie_row = run_sweep(ie_cfg).rows[0]
check("iedd runs", ie_row.frames == 6 and 0.0 <= ie_row.bler <= 1.0,
      f"(bler={ie_row.bler:.3f})")

# ------------------------------------------------ neural paths + ablations
t0 = time.time()
tcfg = TrainConfig(m=2, mode="deepofdm", pilots="0P", rx_input="none",
                   n_s=64, n_t=14, batch_size=4, n_steps=8, mod_width=8,
                   rx_width=12, channel_pool=8, seed=1)
bundle, _ = train_end_to_end(tcfg)
ncfg = load_config({
    "grid": {"n_s": 64, "n_t": 14, "pilots": "0P"},
    "modulation": {"m": 2, "mode": "deepofdm"},
    "receiver": {"kind": "neural", "rx_input": "none"},
    "sweep": {"speeds": [40.0], "snrs_db": [30.0], "max_frames": 4,
              "chunk_frames": 2, "master_seed": 11},
})
nres = run_sweep(ncfg, bundle)
check("neural sweep runs", len(nres.rows) == 1
      and nres.rows[0].receiver == "deepofdm", f"({time.time()-t0:.1f}s)")

try:
    run_sweep(ncfg)
    check("neural sweep without weights is ConfigError", False)
except ConfigError:
    check("neural sweep without weights is ConfigError", True)

wpath = "/tmp/toy_weights.npz"
save_weights(bundle, wpath)
nres2 = run_sweep(ncfg.replace(receiver={"weights": wpath}))
check("weights path in config works",
      nres2.rows[0].block_errors == nres.rows[0].block_errors)

cloud = tx_symbol_cloud(bundle, make_pilot_pattern("0P", 64, 14), n_frames=2)
check("tx cloud shape", cloud.shape == (2 * 64 * 14,) and
      np.iscomplexobj(cloud))

aress = {}
for mode in ("single-symbol", "restricted-8", "gs-collapse"):
    aress[mode] = run_ablation(mode, ncfg, bundle)
    check(f"ablation {mode} runs", len(aress[mode].rows) == 1
          and aress[mode].rows[0].receiver == mode)
check("single-symbol breaks decoding",
      aress["single-symbol"].rows[0].bler == 1.0,
      f"(bler={aress['single-symbol'].rows[0].bler})")
check("restricted rate drops", aress["restricted-8"].rate_bits_per_use
      == 0.5 * 1, f"(R={aress['restricted-8'].rate_bits_per_use})")

try:
    run_ablation("linear", ncfg, bundle)
    check("linear ablation rejects nonlinear weights", False)
except ConfigError:
    check("linear ablation rejects nonlinear weights", True)
try:
    run_ablation("csi-oracle", ncfg, bundle)
    check("csi-oracle rejects wrong rx_input", False)
except ConfigError:
    check("csi-oracle rejects wrong rx_input", True)
try:
    run_ablation("bogus", ncfg, bundle)
    check("unknown ablation rejected", False)
except ConfigError:
    check("unknown ablation rejected", True)

# sip end to end
t0 = time.time()
scfg_t = TrainConfig(m=2, mode="sip", pilots="0P", rx_input="none",
                     n_s=64, n_t=14, batch_size=4, n_steps=6, rx_width=12,
                     channel_pool=8, seed=2)
sbundle, _ = train_end_to_end(scfg_t)
scfg = ncfg.replace(modulation={"mode": "sip"})
sres = run_ablation("sip", scfg, sbundle)
check("sip ablation runs", len(sres.rows) == 1, f"({time.time()-t0:.1f}s)")

print()
if FAIL:
    print(f"{FAIL} checks FAILED")
    sys.exit(1)
print("ALL PASSED")

"""Command-line front end.

Subcommands: train, sweep, ablate, symmetry, info.  Results go to CSV (or
stdout); --report renders matplotlib figures next to the delimited output.
Exit codes: 0 success, 2 bad config/usage, 3 framing, 4 numeric failure,
5 malformed weights, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    FramingError,
    NeuralOfdmError,
    NumericError,
    UsageError,
    WeightsFormatError,
)
from .grid import make_pilot_pattern, qam_constellation
from .harness import (
    ABLATION_MODES,
    load_config,
    load_weights,
    required_snr,
    run_ablation,
    run_sweep,
    save_weights,
    symmetry_metric,
    symmetry_noise_floor,
    tx_symbol_cloud,
    write_csv,
)
from .neural_mod import count_complexity
from .persist import nets_from_bundle

_EXIT_CODES = (
    (ConfigError, 2), (UsageError, 2), (FramingError, 3), (NumericError, 4),
    (WeightsFormatError, 5),
)


def _exit_code(exc: NeuralOfdmError) -> int:
    for etype, code in _EXIT_CODES:
        if isinstance(exc, etype):
            return code
    return 1


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _bundle_for(args, cfg):
    path = getattr(args, "weights", None) or cfg.receiver.get("weights")
    return load_weights(path) if path else None


# ---------------------------------------------------------------- reports

def _report_sweep(result, outdir: Path, stem: str) -> list[Path]:
    plt = _pyplot()
    outdir.mkdir(parents=True, exist_ok=True)
    by_curve = {}
    for r in result.rows:
        by_curve.setdefault((r.receiver, r.speed_mps), []).append(r)
    written = []
    for field, ylabel, fname in (("bler", "BLER", f"{stem}_bler.png"),
                                 ("goodput", "goodput (bits/RE)",
                                  f"{stem}_goodput.png")):
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        for (label, speed), rows in sorted(by_curve.items()):
            rows = sorted(rows, key=lambda r: r.snr_db)
            x = [r.snr_db for r in rows]
            y = np.array([getattr(r, field) for r in rows], dtype=float)
            if field == "bler":
                y = np.where(y > 0, y, np.nan)  # log scale drops exact zeros
            ax.plot(x, y, marker="o", label=f"{label} u={speed:g}")
        if field == "bler":
            ax.set_yscale("log")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(ylabel)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / fname
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def _report_train(history, bundle, outdir: Path) -> list[Path]:
    plt = _pyplot()
    outdir.mkdir(parents=True, exist_ok=True)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.0))
    ax1.plot(history.steps, history.rate_loss, lw=0.8, label="rate loss")
    ax1.set_xlabel("step")
    ax1.set_ylabel("BCE/ln2 - 1 (bits)")
    ax1.grid(alpha=0.3)
    ax1.legend(fontsize=8)
    ax2.plot(history.steps, history.papr, lw=0.8, label="smooth-max PAPR")
    ax2.plot(history.steps, history.lambda_papr, lw=0.8, label="lambda")
    ax2.set_xlabel("step")
    ax2.grid(alpha=0.3)
    ax2.legend(fontsize=8)
    fig.tight_layout()
    loss_path = outdir / "train_loss.png"
    fig.savefig(loss_path, dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(4.4, 4.4))
    pts = bundle.constellation
    ax.scatter(pts.real, pts.imag, s=14)
    ax.set_aspect("equal")
    ax.grid(alpha=0.3)
    ax.set_xlabel("I")
    ax.set_ylabel("Q")
    fig.tight_layout()
    const_path = outdir / "constellation.png"
    fig.savefig(const_path, dpi=120)
    plt.close(fig)
    return [loss_path, const_path]


def _report_cloud(cloud, outdir: Path) -> list[Path]:
    plt = _pyplot()
    outdir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(4.6, 4.6))
    sub = cloud if cloud.size <= 4000 else cloud[:4000]
    ax.scatter(sub.real, sub.imag, s=3, alpha=0.35)
    ax.set_aspect("equal")
    ax.grid(alpha=0.3)
    ax.set_xlabel("I")
    ax.set_ylabel("Q")
    fig.tight_layout()
    path = outdir / "tx_cloud.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def _emit_result(result, args) -> None:
    if args.out:
        write_csv(result, args.out)
        print(f"wrote {len(result.rows)} rows to {args.out}")
    else:
        from .harness import CSV_HEADER, _fmt

        print(CSV_HEADER)
        for r in result.rows:
            print(",".join([r.receiver, r.pilot, _fmt(r.speed_mps),
                            _fmt(r.snr_db), str(r.frames),
                            str(r.block_errors), _fmt(r.bler), _fmt(r.ber),
                            _fmt(r.rho), _fmt(r.goodput)]))
    if args.report:
        stem = Path(args.out).stem if args.out else "sweep"
        for p in _report_sweep(result, Path(args.report), stem):
            print(f"rendered {p}")
    if getattr(args, "bler_target", None):
        _print_snr_table(result, args.bler_target)


def _print_snr_table(result, target: float) -> None:
    speeds = sorted({r.speed_mps for r in result.rows})
    labels = sorted({r.receiver for r in result.rows})
    print(f"# required SNR (dB) to reach BLER {target:g} "
          "(log-linear interpolation; desk-scale models, absolute values "
          "depend on training budget)")
    print("receiver," + ",".join(f"u={u:g}" for u in speeds))
    for label in labels:
        cells = [label]
        for u in speeds:
            rows = sorted([r for r in result.rows
                           if r.receiver == label and r.speed_mps == u],
                          key=lambda r: r.snr_db)
            if len(rows) < 2:
                cells.append("nan")
                continue
            snr = required_snr([r.snr_db for r in rows],
                               [r.bler for r in rows], target)
            cells.append(f"{snr:.2f}" if np.isfinite(snr) else "nan")
        print(",".join(cells))


# ------------------------------------------------------------- subcommands

def _cmd_train(args) -> int:
    from .trainer import train_end_to_end

    cfg = load_config(args.config)
    tcfg = cfg.train_config()
    every = max(1, tcfg.n_steps // 20)

    def progress(step, hist):
        if not args.quiet and (step % every == 0 or step == tcfg.n_steps - 1):
            print(f"step {step + 1}/{tcfg.n_steps}  "
                  f"rate_loss {hist.rate_loss[-1]:+.4f}  "
                  f"papr {hist.papr[-1]:.2f} dB  "
                  f"lambda {hist.lambda_papr[-1]:.2e}")

    bundle, history = train_end_to_end(tcfg, progress=progress)
    save_weights(bundle, args.out)
    print(f"trained {tcfg.mode} ({tcfg.pilots}, m={tcfg.m}) for "
          f"{tcfg.n_steps} steps; weights -> {args.out}")
    if args.report:
        for p in _report_train(history, bundle, Path(args.report)):
            print(f"rendered {p}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    bundle = _bundle_for(args, cfg)
    result = run_sweep(cfg, bundle)
    _emit_result(result, args)
    return 0


def _cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    bundle = _bundle_for(args, cfg)
    result = run_ablation(args.mode, cfg, bundle)
    _emit_result(result, args)
    return 0


def _cmd_symmetry(args) -> int:
    bundle = load_weights(args.weights)
    meta = bundle.metadata
    n_s, n_t = meta.get("grid", (128, 14))
    pattern = make_pilot_pattern(meta.get("pilots", "0P"), int(n_s), int(n_t))
    theta = np.deg2rad(args.theta_deg)
    cloud = tx_symbol_cloud(bundle, pattern, n_frames=args.frames)
    score = symmetry_metric(cloud, theta)
    floor = symmetry_noise_floor(cloud, theta)
    ref = symmetry_metric(qam_constellation(bundle.rx_config["m"]).points,
                          theta)
    print(f"rotation: {args.theta_deg:g} deg over {cloud.size} tx symbols")
    print(f"symmetry score: {score:.6e}")
    print(f"noise floor (symmetrized subsample): {floor:.6e}")
    print(f"score/floor ratio: {score / floor if floor > 0 else float('inf'):.2f}")
    print(f"square QAM reference: {ref:.2e}")
    if args.report:
        for p in _report_cloud(cloud, Path(args.report)):
            print(f"rendered {p}")
    return 0


def _cmd_info(args) -> int:
    bundle = load_weights(args.weights)
    constellation, mod_net, rx_net = nets_from_bundle(bundle)
    n_s, n_t = bundle.metadata.get("grid", (128, 14))
    grid = (int(n_s), int(n_t))
    print(f"mode: {bundle.mode}   format version: {bundle.version}")
    print(f"constellation: m={constellation.m} ({constellation.size} points)")
    rows = []
    total_params = total_macs = 0
    if mod_net is not None:
        p, macs = count_complexity(mod_net, grid)
        rows.append(("modulator", mod_net.width, p, macs))
        total_params += p
        total_macs += macs
    p, macs = count_complexity(rx_net, grid)
    rows.append((f"receiver ({rx_net.rx_input})", rx_net.width, p, macs))
    total_params += p
    total_macs += macs
    for name, width, p, macs in rows:
        print(f"{name}: width {width}, {p:,} params, "
              f"{macs:,} MACs per {grid[0]}x{grid[1]} grid")
    if mod_net is not None and total_params:
        share = rows[0][2] / total_params
        print(f"modulator share of parameters: {share:.3f}")
    print(f"total: {total_params:,} params, {total_macs:,} MACs")
    if bundle.metadata:
        keys = ("seed", "steps", "pilots", "speed_range", "snr_range_db",
                "learning_rate", "lambda_max", "sip_alpha")
        parts = [f"{k}={bundle.metadata[k]}" for k in keys
                 if bundle.metadata.get(k) is not None]
        print("training: " + ", ".join(parts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuralofdm",
        description="Link-level OFDM simulator with learned transceivers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a transceiver from a config file")
    p.add_argument("config", help="JSON experiment config")
    p.add_argument("--out", default="weights.npz", help="weights output path")
    p.add_argument("--report", default=None,
                   help="directory for loss/constellation figures")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="run a BLER/BER/goodput sweep")
    p.add_argument("config")
    p.add_argument("--weights", default=None)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.add_argument("--report", default=None,
                   help="directory for BLER/goodput figures")
    p.add_argument("--bler-target", type=float, default=None,
                   help="also print a required-SNR table at this BLER")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("ablate", help="run one pipeline ablation")
    p.add_argument("mode", choices=ABLATION_MODES)
    p.add_argument("config")
    p.add_argument("--weights", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("symmetry",
                       help="rotational-symmetry score of the tx cloud")
    p.add_argument("--weights", required=True)
    p.add_argument("--theta-deg", type=float, default=90.0)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_symmetry)

    p = sub.add_parser("info", help="print architecture and complexity")
    p.add_argument("--weights", required=True)
    p.set_defaults(func=_cmd_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NeuralOfdmError as e:
        print(f"error [{type(e).__name__}]: {e}", file=sys.stderr)
        return _exit_code(e)
    except OSError as e:
        print(f"error [io]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

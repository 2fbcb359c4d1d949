"""Command-line interface tests: subcommands, CSV/report output, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from neuralofdm.cli import build_parser, main
from neuralofdm.harness import CSV_HEADER
from neuralofdm.persist import load_weights, save_weights

SWEEP_CFG = {
    "grid": {"n_s": 32, "n_t": 14, "pilots": "1P"},
    "modulation": {"m": 2, "mode": "qam"},
    "receiver": {"kind": "lmmse"},
    "sweep": {"speeds": [10.0], "snrs_db": [4.0, 10.0], "max_frames": 8,
              "max_block_errors": 8, "chunk_frames": 4, "master_seed": 1},
}

NEURAL_CFG = {
    "grid": {"n_s": 64, "n_t": 14, "pilots": "0P"},
    "modulation": {"m": 2, "mode": "deepofdm"},
    "receiver": {"kind": "neural", "rx_input": "none"},
    "sweep": {"speeds": [40.0], "snrs_db": [30.0], "max_frames": 2,
              "chunk_frames": 1, "master_seed": 11},
}


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "sweep.json"
    path.write_text(json.dumps(SWEEP_CFG))
    return path


@pytest.fixture(scope="module")
def neural_cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "neural.json"
    path.write_text(json.dumps(NEURAL_CFG))
    return path


@pytest.fixture(scope="module")
def weights_file(tmp_path_factory, tiny_deepofdm_bundle):
    bundle, _ = tiny_deepofdm_bundle
    path = tmp_path_factory.mktemp("cli") / "tiny.npz"
    save_weights(bundle, path)
    return path


def test_parser_covers_subcommands():
    parser = build_parser()
    args = parser.parse_args(["sweep", "cfg.json", "--out", "o.csv",
                              "--bler-target", "0.1"])
    assert args.command == "sweep"
    assert args.bler_target == 0.1
    args = parser.parse_args(["symmetry", "--weights", "w.npz"])
    assert args.theta_deg == 90.0 and args.frames == 8


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_train_command_writes_weights_and_report(tmp_path, capsys):
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({
        "grid": {"n_s": 32, "n_t": 14, "pilots": "1P"},
        "modulation": {"m": 2, "mode": "qam"},
        "receiver": {"kind": "neural", "rx_input": "pilots"},
        "train": {"n_steps": 2, "batch_size": 2, "rx_width": 12,
                  "channel_pool": 4, "seed": 5},
    }))
    out = tmp_path / "w.npz"
    rep = tmp_path / "figs"
    assert main(["train", str(cfg), "--out", str(out),
                 "--report", str(rep), "--quiet"]) == 0
    text = capsys.readouterr().out
    assert "trained qam" in text
    bundle = load_weights(out)
    assert bundle.metadata["steps"] == 2
    for name in ("train_loss.png", "constellation.png"):
        assert (rep / name).stat().st_size > 0
        assert f"rendered {rep / name}" in text


def test_sweep_to_stdout(cfg_file, capsys):
    assert main(["sweep", str(cfg_file)]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    assert lines[1].startswith("lmmse,1P,10.0,4.0,")


def test_sweep_to_csv_with_report_and_table(cfg_file, tmp_path, capsys):
    out = tmp_path / "run.csv"
    rep = tmp_path / "figs"
    assert main(["sweep", str(cfg_file), "--out", str(out),
                 "--report", str(rep), "--bler-target", "0.1"]) == 0
    text = capsys.readouterr().out
    assert f"wrote 2 rows to {out}" in text
    lines = out.read_text().strip().split("\n")
    assert lines[0] == CSV_HEADER and len(lines) == 3
    for name in ("run_bler.png", "run_goodput.png"):
        assert (rep / name).stat().st_size > 0
    assert "# required SNR" in text and "desk-scale" in text
    assert "lmmse," in text.split("# required SNR")[1]


def test_sweep_with_weights_flag(neural_cfg_file, weights_file, capsys):
    assert main(["sweep", str(neural_cfg_file),
                 "--weights", str(weights_file)]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[1].startswith("deepofdm,0P,")


def test_ablate_command(neural_cfg_file, weights_file, capsys):
    assert main(["ablate", "gs-collapse", str(neural_cfg_file),
                 "--weights", str(weights_file)]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[1].startswith("gs-collapse,0P,")


def test_ablate_mismatch_exit_code(neural_cfg_file, weights_file, capsys):
    code = main(["ablate", "csi-oracle", str(neural_cfg_file),
                 "--weights", str(weights_file)])
    assert code == 2
    assert "ConfigError" in capsys.readouterr().err


def test_symmetry_command(weights_file, capsys):
    assert main(["symmetry", "--weights", str(weights_file),
                 "--frames", "2"]) == 0
    text = capsys.readouterr().out
    assert "symmetry score:" in text
    assert "noise floor" in text
    assert "score/floor ratio:" in text
    assert "square QAM reference:" in text


def test_symmetry_report_renders_cloud(weights_file, tmp_path, capsys):
    rep = tmp_path / "figs"
    assert main(["symmetry", "--weights", str(weights_file), "--frames", "2",
                 "--report", str(rep)]) == 0
    assert (rep / "tx_cloud.png").stat().st_size > 0


def test_info_command(weights_file, capsys):
    assert main(["info", "--weights", str(weights_file)]) == 0
    text = capsys.readouterr().out
    assert "mode: deepofdm" in text
    assert "constellation: m=2 (4 points)" in text
    assert "modulator: width 8" in text
    assert "receiver (none): width 12" in text
    assert "params" in text and "MACs" in text
    assert "total:" in text
    assert "modulator share of parameters:" in text
    assert "training:" in text


def test_missing_config_exit_code(capsys):
    assert main(["sweep", "/no/such/config.json"]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_invalid_json_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["sweep", str(bad)]) == 2


def test_neural_without_weights_exit_code(neural_cfg_file, capsys):
    assert main(["sweep", str(neural_cfg_file)]) == 2
    assert "weights" in capsys.readouterr().err


def test_malformed_weights_exit_code(tmp_path, capsys):
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"\x00\x01\x02 definitely not a weights archive")
    assert main(["info", "--weights", str(junk)]) == 5
    assert "WeightsFormatError" in capsys.readouterr().err


def test_missing_weights_exit_code(capsys):
    assert main(["info", "--weights", "/no/such/weights.npz"]) == 5


def test_console_script_runs(cfg_file):
    proc = subprocess.run(
        [sys.executable, "-m", "neuralofdm.cli", "sweep", str(cfg_file)],
        capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert proc.stdout.startswith(CSV_HEADER)


def test_console_entry_point_help():
    proc = subprocess.run(["neuralofdm", "--help"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert "train" in proc.stdout and "sweep" in proc.stdout

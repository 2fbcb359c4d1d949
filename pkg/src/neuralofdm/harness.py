"""Experiment driver: coded BLER/BER/goodput sweeps, ablation dispatch,
rotational-symmetry analysis, and CSV emission.

Every sweep is reproducible from (config, master seed): frame f of sweep
point p draws all of its randomness from SeedSequence((master, p, f)), so
results do not depend on how frames are chunked into batches.  Evaluation
always runs with channel coding active; the stop rule per point is
``max_block_errors`` accumulated block errors or ``max_frames`` frames,
whichever comes first, with the frame count truncated at the exact frame
that crosses the error threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import (
    SINUSOIDS_PER_TAP,
    SPEED_OF_LIGHT,
    ChannelRealization,
    TdlProfile,
    channel_ops,
    freq_csi,
    ici_fraction,
)
from .classical_rx import (
    ChannelEstimate,
    iedd_receive,
    lmmse_estimate,
    ls_estimate,
    make_covariance,
    mmse_equalize_demap,
)
from .errors import ConfigError
from .fec import ldpc_decode, ldpc_encode, make_code, segment_payload
from .grid import (
    Constellation,
    PilotPattern,
    make_pilot_pattern,
    map_bits_to_grid,
    qam_constellation,
)
from .neural_mod import (
    ModulatorNet,
    collapse_to_gs,
    neural_modulate,
    sip_modulate,
    sip_pilot_grid,
)
from .neural_rx import ReceiverNet, data_llrs, neural_receive
from .persist import WeightsBundle, load_weights, nets_from_bundle, save_weights
from .waveform import demodulate_ops, modulate_ops

__all__ = [
    "ABLATION_MODES", "CSV_HEADER", "ExperimentConfig", "RECEIVER_KINDS",
    "SweepResult", "SweepRow", "WeightsBundle", "goodput", "load_config",
    "load_weights", "required_snr", "run_ablation", "run_sweep",
    "save_weights", "symmetry_metric", "symmetry_noise_floor",
    "tx_symbol_cloud", "write_csv",
]

RECEIVER_KINDS = ("ls", "lmmse", "iedd", "perfect-csi", "neural")
ABLATION_MODES = ("single-symbol", "restricted-8", "gs-collapse", "linear",
                  "width-split", "sip", "csi-oracle")

CSV_HEADER = "receiver,pilot,speed_mps,snr_db,frames,block_errors,bler,ber,rho,goodput"

_SECTION_DEFAULTS = {
    "grid": {"n_s": 128, "n_t": 14, "n_cp": 6, "delta_f": 15e3,
             "carrier_freq": 2e9, "pilots": "2P"},
    "channel": {"name": "tdl-a", "rms_delay_spread_ns": None,
                "delays_ns": None, "powers_db": None},
    "code": {"n": 648, "rate": "1/2", "max_iters": 20},
    "modulation": {"m": 6, "mode": "qam", "sip_alpha": 0.25},
    "receiver": {"kind": "lmmse", "rx_input": "pilots", "n_outer": 3,
                 "label": None, "weights": None},
    "train": {},
    "sweep": {"speeds": [10.0, 40.0, 100.0],
              "snrs_db": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
              "max_frames": 10000, "max_block_errors": 100,
              "master_seed": 0, "chunk_frames": 50},
}

# TrainConfig fields that may appear in the "train" section; the rest of the
# training setup (grid, modulation, pilots, receiver input) comes from the
# other sections so one file describes the whole experiment.
_TRAIN_KEYS = ("batch_size", "learning_rate", "speed_range", "snr_range_db",
               "n_steps", "lambda_max", "ramp_frac", "papr_tau", "seed",
               "mod_width", "rx_width", "channel_pool", "dtype",
               "checkpoint_every", "checkpoint_dir")


@dataclass
class ExperimentConfig:
    """Parsed config file: one dict per section, defaults filled in."""

    grid: dict = field(default_factory=dict)
    channel: dict = field(default_factory=dict)
    code: dict = field(default_factory=dict)
    modulation: dict = field(default_factory=dict)
    receiver: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, defaults in _SECTION_DEFAULTS.items():
            section = getattr(self, name)
            unknown = set(section) - set(defaults) if defaults else set()
            if name == "train":
                unknown = set(section) - set(_TRAIN_KEYS)
            if unknown:
                raise ConfigError(
                    f"unknown keys {sorted(unknown)} in config section '{name}'")
            merged = {**defaults, **section}
            setattr(self, name, merged)

    def pattern(self) -> PilotPattern:
        g = self.grid
        return make_pilot_pattern(g["pilots"], int(g["n_s"]), int(g["n_t"]))

    def profile(self) -> TdlProfile:
        return TdlProfile.from_config(self.channel_section())

    def channel_section(self) -> dict:
        return {k: v for k, v in self.channel.items() if v is not None}

    def make_code(self):
        return make_code(int(self.code["n"]), self.code["rate"])

    def train_config(self):
        from .trainer import TrainConfig
        g, mod, rx = self.grid, self.modulation, self.receiver
        return TrainConfig(
            m=int(mod["m"]), mode=mod["mode"], pilots=g["pilots"],
            rx_input=rx["rx_input"], n_s=int(g["n_s"]), n_t=int(g["n_t"]),
            n_cp=int(g["n_cp"]), delta_f=float(g["delta_f"]),
            carrier_freq=float(g["carrier_freq"]),
            sip_alpha=float(mod["sip_alpha"]),
            channel_profile=self.channel_section(), **self.train)

    def replace(self, **section_updates) -> "ExperimentConfig":
        base = {name: dict(getattr(self, name)) for name in _SECTION_DEFAULTS}
        for name, upd in section_updates.items():
            base[name].update(upd)
        return ExperimentConfig(**base)


def load_config(source) -> ExperimentConfig:
    """Parse a config from a dict, a JSON string, or a file path."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        doc = source
    else:
        if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
            path = Path(source)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            text = path.read_text()
        else:
            text = str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object of sections")
    unknown = set(doc) - set(_SECTION_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    return ExperimentConfig(**{k: dict(v) for k, v in doc.items()})


# ---------------------------------------------------------------------------
# results

@dataclass
class SweepRow:
    receiver: str
    pilot: str
    speed_mps: float
    snr_db: float
    frames: int
    block_errors: int
    bler: float
    ber: float
    rho: float
    goodput: float


@dataclass
class SweepResult:
    rows: list
    master_seed: int
    rate_bits_per_use: float

    def bler_curve(self, speed: float) -> tuple[np.ndarray, np.ndarray]:
        """(snrs_db, blers) for one speed, sorted by SNR."""
        pts = [(r.snr_db, r.bler) for r in self.rows if r.speed_mps == speed]
        pts.sort()
        if not pts:
            raise ConfigError(f"no sweep rows at speed {speed}")
        return (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(result: SweepResult, path) -> None:
    lines = [CSV_HEADER]
    for r in result.rows:
        lines.append(",".join([
            r.receiver, r.pilot, _fmt(r.speed_mps), _fmt(r.snr_db),
            str(int(r.frames)), str(int(r.block_errors)), _fmt(r.bler),
            _fmt(r.ber), _fmt(r.rho), _fmt(r.goodput)]))
    Path(path).write_text("\n".join(lines) + "\n")


def goodput(rate_bits_per_use: float, rho: float, bler: float) -> float:
    """Throughput of correct blocks in data bits per resource element."""
    if not 0.0 <= bler <= 1.0:
        raise ConfigError(f"BLER {bler} outside [0, 1]")
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"data fraction {rho} outside [0, 1]")
    if rate_bits_per_use < 0:
        raise ConfigError("rate must be non-negative")
    return rate_bits_per_use * rho * (1.0 - bler)


def required_snr(snrs_db, blers, target: float) -> float:
    """SNR reaching a target BLER, log-linear in BLER between samples.

    Returns nan when the target is not bracketed by the curve.
    """
    if not 0.0 < target < 1.0:
        raise ConfigError("target BLER must lie strictly inside (0, 1)")
    s = np.asarray(snrs_db, dtype=np.float64)
    b = np.clip(np.asarray(blers, dtype=np.float64), 1e-12, 1.0)
    order = np.argsort(s)
    s, b = s[order], b[order]
    for i in range(s.size - 1):
        if b[i] >= target >= b[i + 1]:
            if b[i] == b[i + 1]:
                return float(s[i])
            l0, l1, lt = np.log10(b[i]), np.log10(b[i + 1]), np.log10(target)
            return float(s[i] + (s[i + 1] - s[i]) * (l0 - lt) / (l0 - l1))
    return float("nan")


# ---------------------------------------------------------------------------
# rotational symmetry

def _nn_mean(a: np.ndarray, b: np.ndarray, block: int = 512) -> float:
    out = np.empty(a.size)
    for s in range(0, a.size, block):
        d = np.abs(a[s:s + block, None] - b[None, :])
        out[s:s + block] = d.min(axis=1)
    return float(out.mean())


def symmetry_metric(points, theta: float = np.pi / 2) -> float:
    """Symmetric Chamfer distance between a point set and its rotation.

    Zero iff the set is invariant under rotation by theta.
    """
    pts = np.asarray(points, dtype=np.complex128).ravel()
    if pts.size < 2:
        raise ConfigError("symmetry metric needs at least two points")
    rot = pts * np.exp(1j * theta)
    return 0.5 * (_nn_mean(rot, pts) + _nn_mean(pts, rot))


def symmetry_noise_floor(points, theta: float = np.pi / 2, n_rep: int = 8,
                         seed: int = 0xF100) -> float:
    """Finite-sample floor of the metric: score of an exactly symmetric
    distribution subsampled to the same size, averaged over repeats."""
    pts = np.asarray(points, dtype=np.complex128).ravel()
    if pts.size < 2:
        raise ConfigError("symmetry metric needs at least two points")
    order = max(2, int(round(2.0 * np.pi / theta)))
    sym = np.concatenate([pts * np.exp(1j * theta * k) for k in range(order)])
    rng = np.random.default_rng([seed, pts.size])
    vals = [symmetry_metric(rng.choice(sym, size=pts.size, replace=False),
                            theta)
            for _ in range(n_rep)]
    return float(np.mean(vals))


def tx_symbol_cloud(bundle: WeightsBundle, pattern: PilotPattern,
                    n_frames: int = 8, seed: int = 0xC10D) -> np.ndarray:
    """Complex data-RE transmit symbols over random frames (the output cloud)."""
    constellation, mod_net, _ = nets_from_bundle(bundle)
    rng = np.random.default_rng([seed, pattern.n_s, pattern.n_t])
    bits = rng.integers(0, 2, size=(n_frames, pattern.n_data * constellation.m))
    grid = map_bits_to_grid(bits, constellation, pattern)
    if mod_net is not None:
        grid = neural_modulate(grid, mod_net, pattern)
    elif bundle.mode == "sip":
        alpha = bundle.metadata.get("sip_alpha", 0.25)
        grid = sip_modulate(grid, sip_pilot_grid(pattern.n_s, pattern.n_t),
                            alpha)
    return grid.values[..., ~pattern.mask].ravel()


# ---------------------------------------------------------------------------
# channel drawing with per-frame seeds

def _draw_channels(profile: TdlProfile, speed: float, carrier_freq: float,
                   n_samples: int, sample_period: float, n_cp: int,
                   rngs) -> ChannelRealization:
    """Stacked per-frame realizations, each from its own generator.

    Matches generate_tdl draw-for-draw so a frame's channel depends only on
    its own seed, never on batch composition.
    """
    delays, powers = profile.sample_taps(sample_period, n_cp=n_cp)
    n_taps = delays.size
    msin = SINUSOIDS_PER_TAP
    fd = speed * carrier_freq / SPEED_OF_LIGHT
    alpha = np.stack([r.uniform(0.0, 2.0 * np.pi, size=(1, n_taps, msin))[0]
                      for r in rngs])
    phi = np.stack([r.uniform(0.0, 2.0 * np.pi, size=(1, n_taps, msin))[0]
                    for r in rngs])
    omega = 2.0 * np.pi * fd * np.cos(alpha)
    lane = np.exp(1j * phi)
    step = np.exp(1j * omega * sample_period)
    out = np.empty((len(rngs), n_taps, n_samples), dtype=np.complex128)
    for t in range(n_samples):
        out[:, :, t] = lane.sum(axis=-1)
        lane *= step
    out *= np.sqrt(powers / msin)[None, :, None]
    return ChannelRealization(out, delays, float(speed), float(fd),
                              sample_period)


# ---------------------------------------------------------------------------
# sweep internals

def _resolve_bundle(cfg: ExperimentConfig, bundle):
    if bundle is None and cfg.receiver.get("weights"):
        bundle = load_weights(cfg.receiver["weights"])
    kind = cfg.receiver["kind"]
    if kind not in RECEIVER_KINDS:
        raise ConfigError(f"unknown receiver kind '{kind}'")
    mode = bundle.mode if bundle is not None else cfg.modulation["mode"]
    needs = kind == "neural" or mode != "qam"
    if needs and bundle is None:
        raise ConfigError(
            f"receiver '{kind}' with modulation '{mode}' needs trained weights")
    return bundle, mode


class _TxChain:
    """Builds complex transmit grids for one sweep, all modes and variants."""

    def __init__(self, pattern: PilotPattern, constellation: Constellation,
                 mode: str, mod_net: ModulatorNet | None, sip_alpha: float,
                 tx_variant: str | None, layout, code):
        self.pattern = pattern
        self.constellation = constellation
        self.mode = mode
        self.mod_net = mod_net
        self.sip_alpha = sip_alpha
        self.variant = tx_variant
        self.layout = layout
        self.code = code
        self.m = constellation.m
        self.n_free = _restricted_free_bits(self.m) \
            if tx_variant == "restricted-8" else self.m
        if mode == "sip":
            self.sip_grid = sip_pilot_grid(pattern.n_s, pattern.n_t)

    def grid(self, bits_flat: np.ndarray) -> np.ndarray:
        """bits_flat is (B, n_data * m_eff) coded+pad bits."""
        pat, m = self.pattern, self.m
        if self.variant == "single-symbol":
            labels = self._single_symbol_labels(bits_flat)
            grid = self._labels_to_grid(labels)
        elif self.variant == "restricted-8":
            words = bits_flat.reshape(bits_flat.shape[0], pat.n_data,
                                      self.n_free)
            weights = 1 << np.arange(self.n_free - 1, -1, -1)
            labels = (words * weights).sum(axis=-1) << (m - self.n_free)
            grid = self._labels_to_grid(labels)
        else:
            grid = map_bits_to_grid(bits_flat, self.constellation, pat).values
        if self.mode.startswith("deepofdm"):
            return neural_modulate(grid, self.mod_net, pat).values
        if self.mode == "sip":
            return sip_modulate(grid, self.sip_grid, self.sip_alpha).values
        return grid

    def _labels_to_grid(self, labels: np.ndarray) -> np.ndarray:
        pat = self.pattern
        flat = np.zeros((labels.shape[0], pat.n_s * pat.n_t),
                        dtype=np.complex128)
        flat[:, pat.data_indices] = self.constellation.points[labels]
        return flat.reshape(-1, pat.n_s, pat.n_t) + pat.values

    def _single_symbol_labels(self, bits_flat: np.ndarray) -> np.ndarray:
        """One point per code block: its REs all repeat the symbol picked by
        the block's first m coded bits; pad REs keep the label-0 filler."""
        b = bits_flat.shape[0]
        lay, m = self.layout, self.m
        if self.code.n % m:
            raise ConfigError(
                "single-symbol variant needs the bits per RE to divide the "
                f"code length, got n={self.code.n}, m={m}")
        re_per_block = self.code.n // m
        weights = 1 << np.arange(m - 1, -1, -1)
        head = bits_flat[:, :lay.used_bits].reshape(b, lay.n_blocks, self.code.n)
        block_label = (head[:, :, :m] * weights).sum(axis=-1)  # (B, n_blocks)
        labels = np.zeros((b, self.pattern.n_data), dtype=np.int64)
        labels[:, :lay.n_blocks * re_per_block] = np.repeat(
            block_label, re_per_block, axis=-1).reshape(b, -1)
        return labels


def _restricted_free_bits(m: int) -> int:
    if m < 2:
        raise ConfigError("restricted alphabet needs m >= 2")
    return min(3, m - 1)


class _RxChain:
    """Produces data-RE LLR streams for one sweep point."""

    def __init__(self, kind: str, pattern, constellation, code, cfg,
                 rx_net: ReceiverNet | None, n_free: int):
        self.kind = kind
        self.pattern = pattern
        self.constellation = constellation
        self.code = code
        self.cfg = cfg
        self.rx_net = rx_net
        self.n_free = n_free
        self.max_iters = int(cfg.code["max_iters"])
        self.n_outer = int(cfg.receiver["n_outer"])

    def llrs(self, y_grid: np.ndarray, ch: ChannelRealization, n0: float,
             gamma: float, cov) -> np.ndarray:
        pat, m = self.pattern, self.constellation.m
        g = self.cfg.grid
        if self.kind == "neural":
            csi = None
            if self.rx_net.rx_input == "pilots+csi":
                csi = freq_csi(ch, pat.n_s, pat.n_t, int(g["n_cp"])).values
            llr_grid = self._net_batched(y_grid, csi)
            flat = data_llrs(llr_grid, pat)
            if self.n_free != m:
                flat = flat.reshape(*flat.shape[:-1], pat.n_data, m)
                flat = flat[..., :self.n_free].reshape(
                    *flat.shape[:-2], pat.n_data * self.n_free)
            return flat
        if self.kind == "perfect-csi":
            h = freq_csi(ch, pat.n_s, pat.n_t, int(g["n_cp"])).values
            est = ChannelEstimate(h, np.zeros(h.shape))
        elif self.kind == "ls":
            est = ls_estimate(y_grid, pat, n0=n0 + gamma)
        else:  # lmmse (iedd is handled per frame by the caller)
            est = lmmse_estimate(y_grid, pat, cov, n0 + gamma)
        return mmse_equalize_demap(y_grid, est, n0, gamma,
                                   self.constellation, pat)

    def _net_batched(self, y_grid: np.ndarray, csi) -> np.ndarray:
        pat = self.pattern
        per = pat.n_s * pat.n_t * self.rx_net.width
        step = max(1, int(4e6 // per))
        outs = []
        for s in range(0, y_grid.shape[0], step):
            c = None if csi is None else csi[s:s + step]
            outs.append(neural_receive(y_grid[s:s + step], pat, self.rx_net,
                                       csi=c))
        return np.concatenate(outs, axis=0)


def run_sweep(config, bundle: WeightsBundle | None = None,
              tx_variant: str | None = None) -> SweepResult:
    """Monte-Carlo BLER/BER/goodput over the configured (speed, SNR) grid."""
    cfg = load_config(config)
    bundle, mode = _resolve_bundle(cfg, bundle)
    g, sw = cfg.grid, cfg.sweep
    n_s, n_t, n_cp = int(g["n_s"]), int(g["n_t"]), int(g["n_cp"])
    delta_f, carrier = float(g["delta_f"]), float(g["carrier_freq"])
    pattern = cfg.pattern()
    profile = cfg.profile()
    code = cfg.make_code()
    kind = cfg.receiver["kind"]
    m = int(cfg.modulation["m"])

    if tx_variant not in (None, "single-symbol", "restricted-8"):
        raise ConfigError(f"unknown transmit variant '{tx_variant}'")
    if tx_variant == "restricted-8" and kind != "neural":
        raise ConfigError("the restricted-alphabet variant needs the neural receiver")

    mod_net = rx_net = None
    if bundle is not None:
        if int(bundle.rx_config["m"]) != m:
            raise ConfigError(
                f"weights were trained at m={bundle.rx_config['m']}, "
                f"config asks for m={m}")
        constellation, mod_net, rx_net = nets_from_bundle(bundle)
    else:
        constellation = qam_constellation(m)
    if kind == "neural" and rx_net is None:
        raise ConfigError("neural receiver requested but weights have no receiver")
    if mode.startswith("deepofdm") and mod_net is None:
        raise ConfigError(f"modulation '{mode}' needs modulator weights")
    label_mode = mode
    if mode == "deepofdm-gs":
        # geometric-shaping variant: the net exists only to shape the
        # constellation; evaluation uses its collapsed centroids
        constellation = collapse_to_gs(mod_net, constellation, pattern)
        mod_net, mode = None, "gs"

    m_eff = _restricted_free_bits(m) if tx_variant == "restricted-8" else m
    layout = segment_payload(pattern.n_data * m_eff, code, m_eff)
    sip_alpha = float(bundle.metadata["sip_alpha"]) \
        if (mode == "sip" and bundle is not None
            and bundle.metadata.get("sip_alpha") is not None) \
        else float(cfg.modulation["sip_alpha"])
    tx = _TxChain(pattern, constellation, mode, mod_net, sip_alpha,
                  tx_variant, layout, code)
    rx = _RxChain(kind, pattern, constellation, code, cfg, rx_net, m_eff)

    label = cfg.receiver.get("label") or (label_mode if kind == "neural" else kind)
    rate = code.rate * m_eff
    rho = 1.0 - pattern.overhead
    master = int(sw["master_seed"])
    n_frame = n_t * (n_s + n_cp)
    mod_fwd, _ = modulate_ops(n_s, n_t, n_cp)
    dem_fwd, _ = demodulate_ops(n_s, n_t, n_cp)

    speeds = [float(u) for u in sw["speeds"]]
    snrs = [float(x) for x in sw["snrs_db"]]
    max_frames = int(sw["max_frames"])
    max_errs = int(sw["max_block_errors"])
    chunk = int(sw["chunk_frames"])
    if chunk < 1 or max_frames < 1 or max_errs < 1:
        raise ConfigError("sweep budgets must be positive")

    cov_cache = {}
    rows = []
    point = 0
    for speed in speeds:
        gamma = ici_fraction(speed, carrier, delta_f)
        cov = None
        if kind in ("lmmse", "iedd"):
            if speed not in cov_cache:
                cov_cache[speed] = make_covariance(
                    profile, speed, carrier, n_s, n_t, n_cp, delta_f)
            cov = cov_cache[speed]
        for snr in snrs:
            n0 = 10.0 ** (-snr / 10.0)
            frames, blk_err, bit_err = _run_point(
                point, master, tx, rx, layout, code, profile, speed, carrier,
                n_frame, n_s, n_t, n_cp, delta_f, mod_fwd, dem_fwd, n0, gamma,
                cov, max_frames, max_errs, chunk)
            n_blocks = frames * layout.n_blocks
            bler = blk_err / n_blocks if n_blocks else 0.0
            ber = bit_err / (frames * layout.info_bits) if frames else 0.0
            rows.append(SweepRow(
                receiver=label, pilot=pattern.name, speed_mps=speed,
                snr_db=snr, frames=frames, block_errors=blk_err, bler=bler,
                ber=ber, rho=rho, goodput=goodput(rate, rho, bler)))
            point += 1
    return SweepResult(rows=rows, master_seed=master, rate_bits_per_use=rate)


def _run_point(point, master, tx: _TxChain, rx: _RxChain, layout, code,
               profile, speed, carrier, n_frame, n_s, n_t, n_cp, delta_f,
               mod_fwd, dem_fwd, n0, gamma, cov, max_frames, max_errs,
               chunk) -> tuple[int, int, int]:
    sample_period = 1.0 / (n_s * delta_f)
    frames = blk_err = bit_err = 0
    while frames < max_frames and blk_err < max_errs:
        b = min(chunk, max_frames - frames)
        rngs = [np.random.default_rng(np.random.SeedSequence(
            (master, point, f))) for f in range(frames, frames + b)]
        payload = np.stack([
            r.integers(0, 2, size=(layout.n_blocks, code.k)).astype(np.int8)
            for r in rngs])
        coded = ldpc_encode(payload, code)
        bits_flat = np.concatenate(
            [coded.reshape(b, -1),
             np.zeros((b, layout.leftover_bits), dtype=np.int8)], axis=1)

        ch = _draw_channels(profile, speed, carrier, n_frame, sample_period,
                            n_cp, rngs)
        fwd, _ = channel_ops(ch, n_frame)
        sig = fwd(mod_fwd(tx.grid(bits_flat)))
        noise = np.stack([r.standard_normal(n_frame)
                          + 1j * r.standard_normal(n_frame) for r in rngs])
        y_grid = dem_fwd(sig + np.sqrt(n0 / 2.0) * noise)

        if rx.kind == "iedd":
            dec = np.empty_like(payload)
            for i in range(b):
                _, bits_i, _ = iedd_receive(
                    y_grid[i], tx.pattern, cov, n0, code, tx.constellation,
                    n_outer=rx.n_outer, max_iters=rx.max_iters,
                    gamma_ici=gamma)
                dec[i] = bits_i.reshape(layout.n_blocks, code.k)
        else:
            llr = rx.llrs(y_grid, ch, n0, gamma, cov)
            blocks = llr[:, :layout.used_bits].reshape(
                b, layout.n_blocks, code.n)
            dec, _ = ldpc_decode(blocks, code, rx.max_iters)

        errs = dec != payload
        per_frame_blk = errs.any(axis=-1).sum(axis=-1)
        per_frame_bit = errs.sum(axis=(-1, -2))
        cum = blk_err + np.cumsum(per_frame_blk)
        if cum[-1] >= max_errs:
            take = int(np.argmax(cum >= max_errs)) + 1
        else:
            take = b
        blk_err += int(per_frame_blk[:take].sum())
        bit_err += int(per_frame_bit[:take].sum())
        frames += take
        if take < b:
            break
    return frames, blk_err, bit_err


def run_ablation(mode: str, config, bundle: WeightsBundle | None = None
                 ) -> SweepResult:
    """Dispatch one pipeline modification and run the sweep."""
    if mode not in ABLATION_MODES:
        raise ConfigError(f"unknown ablation mode '{mode}' "
                          f"(choose from {', '.join(ABLATION_MODES)})")
    cfg = load_config(config)
    if bundle is None and cfg.receiver.get("weights"):
        bundle = load_weights(cfg.receiver["weights"])
    if bundle is None:
        raise ConfigError(f"ablation '{mode}' needs trained weights")
    if not cfg.receiver.get("label"):
        cfg = cfg.replace(receiver={"label": mode})

    if mode in ("single-symbol", "restricted-8"):
        return run_sweep(cfg, bundle, tx_variant=mode)
    if mode == "gs-collapse":
        constellation, mod_net, _ = nets_from_bundle(bundle)
        if mod_net is None:
            raise ConfigError("gs-collapse needs a trained modulator")
        collapsed = collapse_to_gs(mod_net, constellation, cfg.pattern())
        derived = WeightsBundle(
            mode="gs", constellation=collapsed.points,
            rx_config=bundle.rx_config, mod_config=None,
            params={k: v for k, v in bundle.params.items()
                    if k.startswith("rx/")},
            metadata={**bundle.metadata, "ablation": "gs-collapse"})
        return run_sweep(cfg, derived)
    if mode == "linear":
        if not (bundle.mod_config and bundle.mod_config.get("linear")):
            raise ConfigError("linear ablation needs weights trained without "
                              "activations")
        return run_sweep(cfg, bundle)
    if mode == "sip":
        if bundle.mode != "sip":
            raise ConfigError("sip ablation needs superimposed-pilot weights")
        return run_sweep(cfg, bundle)
    if mode == "csi-oracle":
        if bundle.rx_config.get("rx_input") != "pilots+csi":
            raise ConfigError("csi-oracle needs a receiver trained with a "
                              "channel-grid input")
        return run_sweep(cfg, bundle)
    return run_sweep(cfg, bundle)  # width-split: the weights carry the variant

"""Constellations, pilot patterns, and resource-grid assembly.

Grids are (n_S, n_T) complex arrays, subcarrier-major, with optional leading
batch axes.  Data REs are enumerated frequency-first within each OFDM symbol,
then symbol by symbol; every module that gathers or scatters REs uses the
flat indices provided by PilotPattern so the ordering is fixed in one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateConstellationError, FramingError

_PILOT_SEED = 0x51E9


def _gray_decode_int(w: int) -> int:
    out = w
    while w:
        w >>= 1
        out ^= w
    return out


@dataclass
class Constellation:
    """2^m complex points; the point index is the m-bit label (MSB first)."""

    m: int
    points: np.ndarray
    trainable: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.complex128)
        if self.points.shape != (2 ** self.m,):
            raise ConfigError(
                f"constellation order {self.m} needs {2**self.m} points, "
                f"got {self.points.shape}")

    @property
    def size(self) -> int:
        return self.points.size

    def bit_table(self) -> np.ndarray:
        """(2^m, m) array of the bit labels, MSB first."""
        idx = np.arange(self.size)
        return ((idx[:, None] >> np.arange(self.m - 1, -1, -1)) & 1).astype(np.int8)

    def subsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Boolean masks (m, 2^m): points whose i-th bit is 0, resp. 1."""
        bits = self.bit_table().T.astype(bool)
        return ~bits, bits

    def is_normalized(self, tol: float = 1e-6) -> bool:
        mean = np.abs(self.points.mean())
        energy = np.abs((np.abs(self.points) ** 2).mean() - 1.0)
        return mean < tol and energy < tol


def qam_constellation(m: int) -> Constellation:
    """Gray-labeled constellation: square QAM for even m, BPSK for m=1.

    Labels concatenate the I-axis word (first m/2 bits) and the Q-axis word;
    each axis uses a binary-reflected Gray code with word 0 on the positive
    end, so for m=2 the label 00 maps to (1+j)/sqrt(2).
    """
    if m == 1:
        return Constellation(1, np.array([1.0 + 0j, -1.0 + 0j]))
    if m % 2 != 0:
        raise ConfigError(f"square QAM needs even m, got {m}")
    half = m // 2
    k = 2 ** half
    labels = np.arange(2 ** m)
    wi = labels >> half
    wq = labels & (k - 1)
    gi = np.array([_gray_decode_int(int(w)) for w in wi])
    gq = np.array([_gray_decode_int(int(w)) for w in wq])
    li = (k - 1 - 2 * gi).astype(np.float64)
    lq = (k - 1 - 2 * gq).astype(np.float64)
    norm = np.sqrt(2.0 * (k ** 2 - 1) / 3.0)
    return Constellation(m, (li + 1j * lq) / norm)


def normalize_constellation(points, m: int | None = None,
                            trainable: bool = False) -> Constellation:
    """Center and power-normalize a point set into a valid Constellation."""
    pts = np.asarray(points, dtype=np.complex128).reshape(-1)
    if m is None:
        m = int(np.log2(pts.size))
    if pts.size != 2 ** m:
        raise ConfigError(f"point count {pts.size} is not 2^{m}")
    centered = pts - pts.mean()
    rms = np.sqrt((np.abs(centered) ** 2).mean())
    if rms < 1e-12:
        raise DegenerateConstellationError("all constellation points identical")
    return Constellation(m, centered / rms, trainable=trainable)


@dataclass
class PilotPattern:
    """Pilot mask and values on an (n_S, n_T) grid; zero on data REs."""

    n_s: int
    n_t: int
    mask: np.ndarray
    values: np.ndarray
    name: str = ""
    data_indices: np.ndarray = field(init=False)
    pilot_indices: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.n_s, self.n_t):
            raise ConfigError("pilot mask shape mismatch")
        # frequency-first enumeration: subcarrier runs fastest inside a symbol
        order = np.arange(self.n_s * self.n_t).reshape(self.n_s, self.n_t)
        order = order.T.ravel()  # (t, k) pairs in (t-major, k-fast) order
        flat_mask = self.mask.ravel()
        self.data_indices = order[~flat_mask[order]]
        self.pilot_indices = order[flat_mask[order]]

    @property
    def n_pilots(self) -> int:
        return int(self.mask.sum())

    @property
    def n_data(self) -> int:
        return self.n_s * self.n_t - self.n_pilots

    @property
    def overhead(self) -> float:
        return self.n_pilots / (self.n_s * self.n_t)


def make_pilot_pattern(config: str, n_s: int, n_t: int,
                       symbol_indices: tuple[int, ...] | None = None,
                       seed: int = _PILOT_SEED) -> PilotPattern:
    """Build a 2P/1P/0P pattern: full pilot OFDM symbols at fixed positions.

    Defaults put pilots on the 3rd (and for 2P the 12th) OFDM symbol,
    1-indexed.  Pilot values are unit-magnitude QPSK from a seeded sequence.
    """
    name = config.strip().upper()
    if symbol_indices is None:
        if name == "2P":
            symbol_indices = (2, 11)
        elif name == "1P":
            symbol_indices = (2,)
        elif name == "0P":
            symbol_indices = ()
        else:
            raise ConfigError(f"unknown pilot config '{config}'")
    for t in symbol_indices:
        if not 0 <= t < n_t:
            raise ConfigError(f"pilot symbol index {t} outside 0..{n_t - 1}")
    mask = np.zeros((n_s, n_t), dtype=bool)
    for t in symbol_indices:
        mask[:, t] = True
    rng = np.random.default_rng(seed)
    qpsk = (2 * rng.integers(0, 2, size=(n_s, n_t)) - 1
            + 1j * (2 * rng.integers(0, 2, size=(n_s, n_t)) - 1)) / np.sqrt(2)
    values = np.where(mask, qpsk, 0.0)
    return PilotPattern(n_s, n_t, mask, values, name=name)


@dataclass
class ResourceGrid:
    """(..., n_S, n_T) complex grid with a role tag."""

    values: np.ndarray
    role: str = "tx-data"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim < 2:
            raise ConfigError("resource grid needs at least 2 dimensions")

    @property
    def n_s(self) -> int:
        return self.values.shape[-2]

    @property
    def n_t(self) -> int:
        return self.values.shape[-1]


def map_bits_to_grid(bits, constellation: Constellation,
                     pattern: PilotPattern) -> ResourceGrid:
    """Fill data REs with constellation symbols and stamp pilot values.

    bits has shape (..., m * n_data); the inverse is demap_grid_hard.
    """
    bits = np.asarray(bits)
    m = constellation.m
    n_data = pattern.n_data
    if bits.shape[-1] != m * n_data:
        raise FramingError(
            f"need {m * n_data} bits for {n_data} data REs at {m} bits each, "
            f"got {bits.shape[-1]}")
    lead = bits.shape[:-1]
    words = bits.reshape(*lead, n_data, m)
    weights = 1 << np.arange(m - 1, -1, -1)
    labels = (words * weights).sum(axis=-1)
    symbols = constellation.points[labels]
    flat = np.zeros((*lead, pattern.n_s * pattern.n_t), dtype=np.complex128)
    flat[..., pattern.data_indices] = symbols
    grid = flat.reshape(*lead, pattern.n_s, pattern.n_t) + pattern.values
    return ResourceGrid(grid, role="tx-data")


def labels_to_bits(labels: np.ndarray, m: int) -> np.ndarray:
    return ((labels[..., None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.int8)


def demap_grid_hard(grid, constellation: Constellation,
                    pattern: PilotPattern) -> np.ndarray:
    """Nearest-point hard decision on the data REs, back to a bit stream."""
    vals = grid.values if isinstance(grid, ResourceGrid) else np.asarray(grid)
    lead = vals.shape[:-2]
    flat = vals.reshape(*lead, -1)[..., pattern.data_indices]
    d = np.abs(flat[..., None] - constellation.points) ** 2
    labels = d.argmin(axis=-1)
    bits = labels_to_bits(labels, constellation.m)
    return bits.reshape(*lead, -1)


def rotation_symmetry_error(points: np.ndarray, angle: float = np.pi / 2) -> float:
    """Max nearest-neighbor distance between the set and its rotated copy."""
    pts = np.asarray(points).reshape(-1)
    rot = pts * np.exp(1j * angle)
    d = np.abs(rot[:, None] - pts[None, :])
    return float(d.min(axis=1).max())

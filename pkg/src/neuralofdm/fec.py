"""Quasi-cyclic LDPC codes: construction, systematic encoding, min-sum decoding.

Codes use 24 base columns with lifting sizes Z in {27, 54, 81}, giving
blocklengths {648, 1296, 1944}, and an IRA-style parity structure (one
weight-3 parity column plus a dual diagonal of identities).  The information
part has weight-3 columns with pseudo-random circulant shifts chosen
deterministically per (N, rate) and rejected on 4-cycles.  Encoding runs in
O(N) by the row-sum identity of the dual diagonal; no matrix inversion.

Decoder: normalized min-sum (factor 0.8), vectorized across a batch of
codewords, early exit on parity satisfaction.  LLR convention everywhere:
positive means bit 1 is more likely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FramingError

_BASE_COLS = 24
_SHIFT_SEED = 0xC0DE
_SUPPORTED_N = (648, 1296, 1944)
_SUPPORTED_R = ("1/3", "1/2", "2/3")


def _rate_fraction(rate) -> tuple[int, int]:
    if isinstance(rate, str):
        num, den = rate.split("/")
        return int(num), int(den)
    # accept floats that exactly match a supported rate
    for name in _SUPPORTED_R:
        num, den = (int(v) for v in name.split("/"))
        if abs(rate - num / den) < 1e-9:
            return num, den
    raise ConfigError(f"unsupported code rate {rate}")


def _build_base_matrix(n_rows: int, n_info: int, z: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Base matrix of circulant shifts; -1 marks an all-zero block.

    Information columns have weight 3.  New entries are rejected while they
    would close a length-4 cycle, i.e. while some row pair sees a repeated
    shift difference.
    """
    base = -np.ones((n_rows, _BASE_COLS), dtype=int)
    diffs: dict[tuple[int, int], set[int]] = {}

    def register(rows, shifts) -> bool:
        new: list[tuple[tuple[int, int], int]] = []
        for a in range(len(rows)):
            for b in range(a + 1, len(rows)):
                pair = (int(rows[a]), int(rows[b]))
                d = int((shifts[a] - shifts[b]) % z)
                if d in diffs.get(pair, set()):
                    return False
                new.append((pair, d))
        for pair, d in new:
            diffs.setdefault(pair, set()).add(d)
        return True

    # parity part first: weight-3 column (shift x at top and bottom, 0 in the
    # middle) then the dual diagonal of identity blocks; register its row-pair
    # shift differences so information columns cannot close 4-cycles with it
    x = int(rng.integers(1, z))
    mid = n_rows // 2
    pc = n_info
    base[0, pc] = x
    base[mid, pc] = 0
    base[n_rows - 1, pc] = x
    register(np.array([0, mid, n_rows - 1]), np.array([x, 0, x]))
    for j in range(1, n_rows):
        base[j - 1, pc + j] = 0
        base[j, pc + j] = 0
        register(np.array([j - 1, j]), np.array([0, 0]))

    for col in range(n_info):
        for _ in range(200):
            rows = np.sort(rng.choice(n_rows, size=3, replace=False))
            shifts = rng.integers(0, z, size=3)
            if register(rows, shifts):
                base[rows, col] = shifts
                break
        else:
            raise ConfigError("LDPC construction failed to avoid 4-cycles")
    return base


@dataclass
class LdpcCode:
    """One (N, rate) code instance with cached decoder index maps."""

    n: int
    rate_name: str
    z: int = field(init=False)
    k: int = field(init=False)
    base: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.n not in _SUPPORTED_N:
            raise ConfigError(f"blocklength {self.n} not in {_SUPPORTED_N}")
        num, den = _rate_fraction(self.rate_name)
        self.rate_name = f"{num}/{den}"
        self.z = self.n // _BASE_COLS
        self.k = self.n * num // den
        n_rows = (self.n - self.k) // self.z
        n_info = self.k // self.z
        rng = np.random.default_rng([_SHIFT_SEED, self.n, num, den])
        self.base = _build_base_matrix(n_rows, n_info, self.z, rng)
        self._mid_row = n_rows // 2
        self._x_shift = int(self.base[0, n_info])
        self._build_edges()

    @property
    def rate(self) -> float:
        num, den = _rate_fraction(self.rate_name)
        return num / den

    @property
    def n_checks(self) -> int:
        return self.n - self.k

    def _build_edges(self) -> None:
        z = self.z
        rows, cols = np.nonzero(self.base >= 0)
        shifts = self.base[rows, cols]
        # expand each circulant block into z edges
        e_check, e_var = [], []
        for r, c, s in zip(rows, cols, shifts):
            i = np.arange(z)
            e_check.append(r * z + i)
            e_var.append(c * z + (i + s) % z)
        check_idx = np.concatenate(e_check)
        var_idx = np.concatenate(e_var)
        order = np.argsort(check_idx, kind="stable")
        self.edge_check = check_idx[order]
        self.edge_var = var_idx[order]
        n_edges = self.edge_check.size

        deg_c = np.bincount(self.edge_check, minlength=self.n_checks)
        deg_v = np.bincount(self.edge_var, minlength=self.n)
        self.max_deg_c = int(deg_c.max())
        self.max_deg_v = int(deg_v.max())

        # padded (n_checks, max_deg_c) map into the flat edge arrays
        self.check_slots = np.full((self.n_checks, self.max_deg_c), -1, dtype=np.int64)
        pos = np.zeros(self.n_checks, dtype=np.int64)
        for e in range(n_edges):
            c = self.edge_check[e]
            self.check_slots[c, pos[c]] = e
            pos[c] += 1
        self.var_slots = np.full((self.n, self.max_deg_v), -1, dtype=np.int64)
        pos = np.zeros(self.n, dtype=np.int64)
        for e in range(n_edges):
            v = self.edge_var[e]
            self.var_slots[v, pos[v]] = e
            pos[v] += 1
        self.check_mask = self.check_slots >= 0
        self.var_mask = self.var_slots >= 0
        self.check_slots_safe = np.where(self.check_mask, self.check_slots, 0)
        self.var_slots_safe = np.where(self.var_mask, self.var_slots, 0)
        # flat edge ids in slot-major order, for scattering check outputs back
        self.check_valid_edges = self.check_slots[self.check_mask]

    # ------------------------------------------------------------------
    def parity_check(self, codewords: np.ndarray) -> np.ndarray:
        """Syndrome weight per codeword; zero means valid."""
        cw = np.asarray(codewords, dtype=np.uint8)
        if cw.shape[-1] != self.n:
            raise FramingError(f"need {self.n} bits, got {cw.shape[-1]}")
        lead = cw.shape[:-1]
        flat = cw.reshape(-1, self.n)
        vals = flat[:, self.edge_var].astype(np.int64)
        syn = np.zeros((flat.shape[0], self.n_checks), dtype=np.int64)
        np.add.at(syn, (slice(None), self.edge_check), vals)
        return (syn % 2).sum(axis=-1).reshape(lead)


def make_code(n: int, rate) -> LdpcCode:
    num, den = _rate_fraction(rate)
    return LdpcCode(n, f"{num}/{den}")


def ldpc_encode(bits, code: LdpcCode) -> np.ndarray:
    """Systematic encoding via the dual-diagonal row-sum identity.

    bits: (..., K) -> codeword (..., N) with the message in the first K bits.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != code.k:
        raise FramingError(f"need {code.k} info bits, got {bits.shape[-1]}")
    lead = bits.shape[:-1]
    z = code.z
    n_rows = code.n_checks // z
    n_info = code.k // z
    s_blocks = bits.reshape(*lead, n_info, z)

    # lambda_i = sum_j P^{s_ij} s_j ; (P^s x)[k] = x[(k+s) mod z]
    lam = np.zeros((*lead, n_rows, z), dtype=np.uint8)
    for r in range(n_rows):
        acc = np.zeros((*lead, z), dtype=np.uint8)
        for j in range(n_info):
            s = code.base[r, j]
            if s < 0:
                continue
            acc ^= np.roll(s_blocks[..., j, :], -s, axis=-1)
        lam[..., r, :] = acc

    p = np.zeros((*lead, n_rows, z), dtype=np.uint8)
    p0 = lam[..., 0, :].copy()
    for r in range(1, n_rows):
        p0 ^= lam[..., r, :]
    p[..., 0, :] = p0
    x = code._x_shift
    p[..., 1, :] = lam[..., 0, :] ^ np.roll(p0, -x, axis=-1)
    for r in range(1, n_rows - 1):
        nxt = lam[..., r, :] ^ p[..., r, :]
        if r == code._mid_row:
            nxt = nxt ^ p0
        p[..., r + 1, :] = nxt
    return np.concatenate([bits, p.reshape(*lead, code.n_checks)], axis=-1)


def _check_update(v2c: np.ndarray, code: LdpcCode, alpha: float) -> np.ndarray:
    """Normalized min-sum check-node update on flat edge messages."""
    msgs = v2c[..., code.check_slots_safe]          # (..., n_checks, deg)
    mag = np.abs(msgs)
    mag = np.where(code.check_mask, mag, np.inf)
    sgn = np.where(msgs < 0, -1.0, 1.0)
    sgn = np.where(code.check_mask, sgn, 1.0)

    order = np.argsort(mag, axis=-1)
    min1 = np.take_along_axis(mag, order[..., :1], axis=-1)
    min2 = np.take_along_axis(mag, order[..., 1:2], axis=-1)
    argmin = order[..., :1]
    sign_all = np.prod(sgn, axis=-1, keepdims=True)

    deg_idx = np.arange(code.max_deg_c)
    use_min2 = deg_idx[None, None, :] == argmin
    mag_excl = np.where(use_min2, min2, min1)
    sgn_excl = sign_all * sgn  # divide by own sign == multiply (signs are +-1)
    c2v_slots = alpha * sgn_excl * mag_excl

    c2v = np.zeros_like(v2c)
    c2v[..., code.check_valid_edges] = c2v_slots[..., code.check_mask]
    return c2v


def ldpc_decode_soft(llrs, code: LdpcCode, max_iters: int = 20,
                     alpha: float = 0.8):
    """Min-sum decoding returning hard bits, posterior LLRs, converged flags.

    llrs: (..., N), positive = bit 1.  Internally the classic log(P0/P1)
    convention is used, so inputs and outputs are negated at the boundary.
    """
    l_in = -np.asarray(llrs, dtype=np.float64)
    if l_in.shape[-1] != code.n:
        raise FramingError(f"need {code.n} LLRs, got {l_in.shape[-1]}")
    lead = l_in.shape[:-1]
    l_flat = l_in.reshape(-1, code.n)
    b = l_flat.shape[0]

    v2c = l_flat[:, code.edge_var].copy()
    c2v = np.zeros_like(v2c)
    posterior = l_flat.copy()
    done = np.zeros(b, dtype=bool)

    for _ in range(max_iters):
        act = ~done
        if not act.any():
            break
        c2v[act] = _check_update(v2c[act], code, alpha)
        # variable update: posterior = channel + sum of incoming, per variable
        inc = c2v[act][:, code.var_slots_safe] * code.var_mask
        posterior[act] = l_flat[act] + inc.sum(axis=-1)
        v2c[act] = posterior[act][:, code.edge_var] - c2v[act]
        hard = posterior < 0  # log(P0/P1) < 0 -> bit 1
        # convergence needs parity satisfied by confident decisions; an
        # all-zero input would otherwise "satisfy" parity with no information
        confident = (posterior != 0).all(axis=-1)
        done = done | (_syndrome_ok(hard, code) & confident)

    bits = (posterior < 0).astype(np.int8)
    return (bits.reshape(*lead, code.n),
            (-posterior).reshape(*lead, code.n),
            done.reshape(lead) if lead else bool(done[0]))


def _syndrome_ok(hard_bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    vals = hard_bits[:, code.edge_var].astype(np.int64)
    syn = np.zeros((hard_bits.shape[0], code.n_checks), dtype=np.int64)
    np.add.at(syn, (slice(None), code.edge_check), vals)
    return (syn % 2 == 0).all(axis=-1)


def ldpc_decode(llrs, code: LdpcCode, max_iters: int = 20, alpha: float = 0.8):
    """(systematic bits, converged flag) from channel LLRs (positive = 1)."""
    bits, _, done = ldpc_decode_soft(llrs, code, max_iters, alpha)
    return bits[..., :code.k], done


@dataclass
class SegmentLayout:
    """How codewords tile the data REs of one frame."""

    n_blocks: int
    block_len: int
    info_len: int
    used_bits: int
    leftover_bits: int
    pad_re: int | None = None

    @property
    def info_bits(self) -> int:
        return self.n_blocks * self.info_len


def segment_payload(capacity_bits: int, code: LdpcCode,
                    m: int | None = None) -> SegmentLayout:
    """Pack whole codewords into the grid capacity; leftover REs carry zeros."""
    if capacity_bits < code.n:
        raise ConfigError(
            f"grid capacity {capacity_bits} bits cannot fit one {code.n}-bit codeword")
    n_blocks = capacity_bits // code.n
    used = n_blocks * code.n
    leftover = capacity_bits - used
    pad_re = None
    if m is not None:
        if leftover % m:
            # leftover always divides by m when capacity = m * n_data
            raise ConfigError("leftover bits not a whole number of REs")
        pad_re = leftover // m
    return SegmentLayout(n_blocks, code.n, code.k, used, leftover, pad_re)

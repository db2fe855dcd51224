"""OFDM / AFDM modulation, prefixes, windows, effective channels and multiple access."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelOperator, PrefixSpec
from .transforms import ChirpParams, DFT_PARAMS, TransformPlan, apply_transform, is_integral


class ModemError(ValueError):
    pass


# --------------------------------------------------------------------------
# constellations


def _gray(n: int) -> np.ndarray:
    i = np.arange(n)
    return i ^ (i >> 1)


@dataclass(frozen=True)
class Constellation:
    """Gray-mapped square QAM with unit average energy (order 4 is QPSK).

    Symbol index ``i`` carries the bits of ``i`` written MSB first; the first
    half of the bits selects the in-phase level and the second half the
    quadrature level.
    """

    order: int = 4
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = self.order
        k = int(round(np.log2(m))) if m > 1 else 0
        if m < 4 or 2**k != m or k % 2:
            raise ModemError(f"square QAM order must be 4, 16, 64, ...; got {m}")
        L = int(round(np.sqrt(m)))
        half = k // 2
        # Gray code on each axis: level position of the axis label
        pos = np.empty(L, dtype=int)
        pos[_gray(L)] = np.arange(L)
        idx = np.arange(m)
        i_lab, q_lab = idx >> half, idx & (L - 1)
        lev = 2 * np.arange(L) - (L - 1)
        pts = lev[pos[i_lab]] + 1j * lev[pos[q_lab]]
        pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def bits_per_symbol(self) -> int:
        return int(round(np.log2(self.order)))

    def bits_to_indices(self, bits) -> np.ndarray:
        b = np.asarray(bits, dtype=np.int64).reshape(-1, self.bits_per_symbol)
        w = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return b @ w

    def indices_to_bits(self, idx) -> np.ndarray:
        """Flat MSB-first bit stream for a 1-D array of symbol indices."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1)
        return ((idx[:, None] >> shifts) & 1).reshape(-1)

    def map(self, bits) -> np.ndarray:
        return self.points[self.bits_to_indices(bits)]

    def slice(self, soft) -> np.ndarray:
        """Nearest-point indices; ties go to the lower index."""
        soft = np.asarray(soft)
        d = np.abs(soft[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def random_indices(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.integers(0, self.order, size=size)


QPSK = Constellation(4)


# --------------------------------------------------------------------------
# waveforms and frames


@dataclass(frozen=True)
class Waveform:
    """``kind`` is ``"ofdm"`` or ``"afdm"``; OFDM ignores ``chirp``."""

    kind: str = "afdm"
    chirp: ChirpParams = DFT_PARAMS

    def __post_init__(self):
        if self.kind not in ("ofdm", "afdm"):
            raise ModemError(f"unknown waveform {self.kind!r}")

    @classmethod
    def ofdm(cls):
        return cls("ofdm", DFT_PARAMS)

    @classmethod
    def afdm(cls, chirp: ChirpParams):
        return cls("afdm", chirp)

    def forward_plan(self, n: int) -> TransformPlan:
        return _plan(n, "dft" if self.kind == "ofdm" else "daft", "forward", self.chirp)

    def inverse_plan(self, n: int) -> TransformPlan:
        return _plan(n, "dft" if self.kind == "ofdm" else "daft", "inverse", self.chirp)

    def matrix(self, n: int) -> np.ndarray:
        return self.forward_plan(n).matrix()


@functools.lru_cache(maxsize=64)
def _plan(n, kind, direction, chirp):
    return TransformPlan(n, kind, direction, chirp)


@dataclass
class Frame:
    """One block of N transform-domain symbols."""

    symbols: np.ndarray
    constellation: Constellation = QPSK
    pilot_layout: object = None
    waveform: Waveform = field(default_factory=Waveform.ofdm)
    data_indices: np.ndarray | None = None  # constellation indices at data positions

    @property
    def n(self) -> int:
        return len(self.symbols)


def modulate(frame: Frame) -> np.ndarray:
    """Time-domain block ``T^H x`` (prefix not included)."""
    x = np.asarray(frame.symbols, dtype=complex)
    return apply_transform(frame.waveform.inverse_plan(x.shape[-1]), x)


def demodulate(r: np.ndarray, waveform: Waveform) -> np.ndarray:
    """Transform-domain observation ``T r`` of a prefix-free block."""
    r = np.asarray(r, dtype=complex)
    return apply_transform(waveform.forward_plan(r.shape[-1]), r)


def add_prefix(s: np.ndarray, prefix: PrefixSpec) -> np.ndarray:
    """Prepend ``prefix.length`` tail samples, CPP-rotated when requested."""
    s = np.asarray(s, dtype=complex)
    n = s.shape[-1]
    ncp = prefix.length or 0
    if ncp >= n:
        raise ModemError(f"prefix length {ncp} must be below block length {n}")
    if ncp == 0:
        return s.copy()
    tail = s[..., n - ncp:]
    if not prefix.is_trivial(n):
        tail = tail * prefix.rotation(n, np.arange(-ncp, 0))
    return np.concatenate([tail, s], axis=-1)


def remove_prefix(r: np.ndarray, ncp: int, n: int) -> np.ndarray:
    r = np.asarray(r)
    if r.shape[-1] < ncp + n:
        raise ModemError("received block shorter than prefix + block length")
    return r[..., ncp:ncp + n]


@dataclass(frozen=True)
class Window:
    taps: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=float)
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ModemError("window taps must be finite and nonnegative")
        object.__setattr__(self, "taps", t)


def raised_cosine_window(n_total: int, ramp: int) -> Window:
    """Unit window with raised-cosine ramps of ``ramp`` samples at both edges."""
    w = np.ones(n_total)
    if ramp > 0:
        if 2 * ramp > n_total:
            raise ModemError("ramps longer than the window")
        r = 0.5 * (1 - np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp))
        w[:ramp] = r
        w[n_total - ramp:] = r[::-1]
    return Window(w)


def apply_window(s_cp: np.ndarray, w: Window) -> np.ndarray:
    s_cp = np.asarray(s_cp)
    if s_cp.shape[-1] != w.taps.size:
        raise ModemError("window length does not match the block")
    return s_cp * w.taps


def effective_channel(waveform: Waveform, H) -> np.ndarray:
    """Xi = T H T^H for the waveform's forward transform T."""
    H = H.matrix if isinstance(H, ChannelOperator) else np.asarray(H, dtype=complex)
    n = H.shape[0]
    if H.shape != (n, n):
        raise ModemError("channel matrix must be square")
    fwd = waveform.forward_plan(n)
    TH = apply_transform(fwd, H.T).T
    return apply_transform(fwd, TH.conj()).conj()


def comb_support(n: int, cp: ChirpParams, m: int, odd_branch: bool | None = None) -> np.ndarray:
    """Frequency bins reached by affine index ``m`` in the special case.

    Returns a boolean mask over the ``n`` DFT bins.  The branch follows the
    parity of 1/(2 lambda1) unless ``odd_branch`` forces one.
    """
    if not cp.is_special_case(n):
        raise ModemError("comb structure needs 2N*lambda1 and 1/(2*lambda1) integral")
    q = int(round(cp.comb_spacing(n)))
    inv = int(round(1 / (2 * cp.lambda1)))
    odd = (inv % 2 == 1) if odd_branch is None else odd_branch
    k = np.arange(n)
    if not odd:
        return (m - k) % q == 0
    half = q / 2  # N * lambda1
    ratio = (m - k) / half
    return (np.abs(ratio - np.rint(ratio)) < 1e-9) & (np.rint(ratio) % 2 != 0)


# --------------------------------------------------------------------------
# multiple access


@dataclass(frozen=True)
class AccessMap:
    """User-to-resource assignment.

    ``per_block``: contiguous frequency blocks of sizes ``user_sizes``, each
    user with its own ``ChirpParams`` (``user_chirps``) or OFDM.
    ``per_subcarrier``: user ``k`` owns affine indices ``k + n q`` with
    ``q = 2 N lambda1``; OFDM users use the same index class in frequency.
    """

    mode: str
    n: int
    waveforms: Sequence[str]
    user_sizes: Sequence[int] = ()
    user_chirps: Sequence[ChirpParams] = ()
    chirp: ChirpParams = DFT_PARAMS
    allow_odd: bool = False

    def __post_init__(self):
        if self.mode not in ("per_block", "per_subcarrier"):
            raise ModemError(f"unknown access mode {self.mode!r}")
        if any(w not in ("afdm", "ofdm") for w in self.waveforms):
            raise ModemError("user waveforms must be 'afdm' or 'ofdm'")
        if self.mode == "per_block":
            if sum(self.user_sizes) != self.n or any(s < 1 for s in self.user_sizes):
                raise ModemError("per-block user sizes must be positive and sum to N")
            if len(self.user_sizes) != len(self.waveforms):
                raise ModemError("one waveform tag per user")
            if self.user_chirps and len(self.user_chirps) != len(self.user_sizes):
                raise ModemError("one ChirpParams per user")
        else:
            if not self.chirp.is_special_case(self.n):
                raise ModemError("per-subcarrier access needs 2N*lambda1 and 1/(2*lambda1) integral")
            inv = int(round(1 / (2 * self.chirp.lambda1)))
            if inv % 2 and not self.allow_odd:
                raise ModemError("odd 1/(2*lambda1) branch disabled (set allow_odd)")
            if len(self.waveforms) > self.q:
                raise ModemError(f"at most q = {self.q} users")

    @property
    def q(self) -> int:
        return int(round(self.chirp.comb_spacing(self.n)))

    @property
    def n_users(self) -> int:
        return len(self.waveforms)

    def _freq_shift(self) -> int:
        # affine class r lands on frequency class r (+ q/2 in the odd branch)
        inv = int(round(1 / (2 * self.chirp.lambda1)))
        return self.q // 2 if inv % 2 else 0

    def assignments(self) -> list[np.ndarray]:
        if self.mode == "per_block":
            edges = np.concatenate([[0], np.cumsum(self.user_sizes)])
            return [np.arange(edges[i], edges[i + 1]) for i in range(self.n_users)]
        out = []
        for k, w in enumerate(self.waveforms):
            cls_ = k if w == "afdm" else (k + self._freq_shift()) % self.q
            out.append(np.arange(cls_, self.n, self.q))
        return out

    def _user_chirp(self, k: int) -> ChirpParams:
        return self.user_chirps[k] if self.user_chirps else DFT_PARAMS


def map_access(users: Sequence[np.ndarray], amap: AccessMap) -> np.ndarray:
    """Composite time block for per-user symbol vectors.

    ``users[k]`` has length ``N_k`` (per-block) or ``len(assignments()[k])``
    (per-subcarrier).
    """
    if len(users) != amap.n_users:
        raise ModemError("one payload per user")
    idx = amap.assignments()
    n = amap.n
    if amap.mode == "per_block":
        freq = np.zeros(n, dtype=complex)
        for k, (x, ix) in enumerate(zip(users, idx)):
            x = np.asarray(x, dtype=complex)
            if x.size != ix.size:
                raise ModemError(f"user {k} payload size {x.size} != {ix.size}")
            if amap.waveforms[k] == "ofdm":
                freq[ix] = x
            else:
                s_k = apply_transform(TransformPlan(ix.size, "daft", "inverse", amap._user_chirp(k)), x)
                freq[ix] = np.fft.fft(s_k, norm="ortho")
        return np.fft.ifft(freq, norm="ortho")
    taken = np.concatenate(idx)
    if np.unique(taken).size != taken.size:
        raise ModemError("overlapping user assignments")
    xa = np.zeros(n, dtype=complex)
    xf = np.zeros(n, dtype=complex)
    for k, (x, ix) in enumerate(zip(users, idx)):
        x = np.asarray(x, dtype=complex)
        if x.size != ix.size:
            raise ModemError(f"user {k} payload size {x.size} != {ix.size}")
        (xf if amap.waveforms[k] == "ofdm" else xa)[ix] = x
    s = apply_transform(TransformPlan(n, "daft", "inverse", amap.chirp), xa)
    if np.any(xf != 0):
        s = s + np.fft.ifft(xf, norm="ortho")
    return s


def demap_access(r: np.ndarray, amap: AccessMap) -> list[np.ndarray]:
    """Per-user symbol estimates from a composite block over an ideal channel."""
    r = np.asarray(r, dtype=complex)
    idx = amap.assignments()
    out = []
    if amap.mode == "per_block":
        freq = np.fft.fft(r, norm="ortho")
        for k, ix in enumerate(idx):
            if amap.waveforms[k] == "ofdm":
                out.append(freq[ix])
            else:
                s_k = np.fft.ifft(freq[ix], norm="ortho")
                out.append(apply_transform(TransformPlan(ix.size, "daft", "forward", amap._user_chirp(k)), s_k))
        return out
    ofdm = [k for k, w in enumerate(amap.waveforms) if w == "ofdm"]
    freq = np.fft.fft(r, norm="ortho")
    # strip OFDM users in frequency before the affine demodulation
    resid = freq.copy()
    for k in ofdm:
        resid[idx[k]] = 0.0
    y = apply_transform(TransformPlan(amap.n, "daft", "forward", amap.chirp), np.fft.ifft(resid, norm="ortho"))
    for k, ix in enumerate(idx):
        out.append(freq[ix] if k in ofdm else y[ix])
    return out


# --------------------------------------------------------------------------
# MIMO precoding, PAPR, I/Q export

DEFAULT_COND_CAP = 1e8


def zf_precode(Xi_k: np.ndarray, cond_cap: float = DEFAULT_COND_CAP) -> np.ndarray:
    """Right pseudo-inverse ``Xi^H (Xi Xi^H)^{-1}`` of an N_r x N_t channel."""
    Xi_k = np.atleast_2d(np.asarray(Xi_k, dtype=complex))
    nr, nt = Xi_k.shape
    if nt < nr:
        raise ModemError("ZF precoding needs N_t >= N_r")
    G = Xi_k @ Xi_k.conj().T
    c = np.linalg.cond(G)
    if not np.isfinite(c) or c > cond_cap:
        raise np.linalg.LinAlgError(f"channel Gram matrix ill-conditioned (cond={c:.3g})")
    return Xi_k.conj().T @ np.linalg.inv(G)


def papr(s: np.ndarray) -> float:
    """Peak-to-average power ratio in dB."""
    p = np.abs(np.asarray(s)) ** 2
    if p.size == 0:
        raise ModemError("empty block")
    return float(10 * np.log10(p.max() / p.mean()))


def write_iq(path, s: np.ndarray) -> None:
    """Interleaved float32 I/Q samples (little endian)."""
    s = np.asarray(s, dtype=complex).ravel()
    iq = np.empty(2 * s.size, dtype="<f4")
    iq[0::2] = s.real
    iq[1::2] = s.imag
    iq.tofile(path)


def read_iq(path) -> np.ndarray:
    iq = np.fromfile(path, dtype="<f4")
    return iq[0::2].astype(float) + 1j * iq[1::2].astype(float)

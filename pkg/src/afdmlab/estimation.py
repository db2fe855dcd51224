"""Embedded-pilot layouts and DAFT-domain channel estimation.

A unit path with integer delay ``ell`` and Doppler ``f`` maps affine index
``m`` to ``k`` with coefficient

    exp(j 2 pi (lambda1 ell^2 - ell m / N + lambda2 (m^2 - k^2))) * D(m - k - f - 2 N lambda1 ell)

where ``D(x) = (1/N) sum_n exp(j 2 pi n x / N)``.  For integer ``f`` and
``2 N lambda1`` the kernel is a Kronecker delta, so the pilot at ``m`` shows
up at ``k = (m - loc) mod N`` with ``loc = f + 2 N lambda1 ell``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import PulseKernel, pulse_kernel_eval
from .modem import Constellation, Frame, QPSK, Waveform, comb_support
from .transforms import ChirpParams, is_integral, idaft


class EstimationError(ValueError):
    pass


class LayoutError(EstimationError):
    pass


class AmbiguityError(EstimationError):
    pass


DEFAULT_ZETA_FACTOR = 6.0
DEFAULT_GRID_STEP = 0.01
NUMERIC_FLOOR = 1e-18


# --------------------------------------------------------------------------
# closed-form DAFT-domain taps


def dirichlet(x, n: int) -> np.ndarray:
    """(1/n) sum_{t<n} exp(j 2 pi t x / n), exact at integer ``x``."""
    x = np.asarray(x, dtype=float)
    ix = np.rint(x)
    on_int = np.abs(x - ix) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.exp(1j * np.pi * x * (n - 1) / n) * np.sin(np.pi * x) / (n * np.sin(np.pi * x / n))
    return np.where(on_int, (np.mod(ix, n) == 0).astype(complex), val)


def tap_coefficient(n: int, cp: ChirpParams, ell: int, f: float, k, m) -> np.ndarray:
    """Effective-channel entry Xi_p[k, m] of a unit path (integer delay, ideal CPP)."""
    k = np.asarray(k, dtype=float)
    m = np.asarray(m, dtype=float)
    l1, l2 = cp.lambda1, cp.lambda2
    # reduce the quadratic phases modulo 1 to keep precision for large indices
    ph = np.mod(l1 * ell * ell - ell * m / n + l2 * (m * m - k * k), 1.0)
    return np.exp(2j * np.pi * ph) * dirichlet(m - k - f - 2 * n * l1 * ell, n)


def unit_path_matrix(n: int, cp: ChirpParams, ell: int, f: float) -> np.ndarray:
    """All of Xi_p; the Dirichlet factor depends only on (m - k) mod n."""
    k = np.arange(n)
    l1, l2 = cp.lambda1, cp.lambda2
    d = dirichlet(k - f - 2 * n * l1 * ell, n)
    col = np.exp(2j * np.pi * np.mod(l1 * ell * ell - ell * k / n + l2 * k * k, 1.0))
    row = np.exp(-2j * np.pi * np.mod(l2 * k * k, 1.0))
    return row[:, None] * col[None, :] * d[(k[None, :] - k[:, None]) % n]


def loc_index(ell, f, stride) -> np.ndarray:
    """DAFT-domain offset f + stride * ell (not reduced modulo N)."""
    return np.asarray(f) + stride * np.asarray(ell)


def loc_stride(n: int, cp: ChirpParams) -> int:
    s = cp.comb_spacing(n)
    if not is_integral(s):
        raise AmbiguityError(f"2*N*lambda1 = {s:.6g} is not an integer; pilot responses are not on-grid")
    return int(round(s))


def check_loc_injective(n: int, stride: int, ell_range: Sequence[int], f_max: float) -> None:
    fm = round(f_max)
    if stride < 2 * fm + 1:
        raise AmbiguityError(f"Doppler windows overlap: 2N*lambda1 = {stride} < 2*f_max + 1 = {2 * fm + 1}")
    span = (max(ell_range) - min(ell_range)) * stride + 2 * fm + 1
    if span > n:
        raise AmbiguityError(f"(delay, Doppler) box needs {span} bins but N = {n}")


# --------------------------------------------------------------------------
# layouts


def min_guard(ell_max: float, f_max: float, stride: int | None = None) -> int:
    """Smallest guard Q isolating one pilot, (ell_max+1)(2 f_max+1) - 1 at minimal stride."""
    L, F = math.ceil(ell_max - 1e-9), round(f_max)
    s = 2 * F + 1 if stride is None else stride
    return L * s + 2 * F


@dataclass(frozen=True)
class PilotLayout:
    """Embedded pilots with ``guard_q`` nulls on each side.

    ``pilot_positions`` holds one index per transmit antenna; antenna ``t``
    sends only pilot ``t`` and leaves the other pilot slots empty.
    """

    n: int
    pilot_positions: tuple
    pilot_value: complex = 1.0
    guard_q: int = 0

    def __post_init__(self):
        pos = tuple(int(p) for p in np.atleast_1d(self.pilot_positions))
        if not pos:
            raise LayoutError("at least one pilot")
        if any(not 0 <= p < self.n for p in pos) or len(set(pos)) != len(pos):
            raise LayoutError("pilot positions must be distinct and inside the block")
        if self.guard_q < 0 or 2 * self.guard_q + 1 > self.n:
            raise LayoutError("guard does not fit in the block")
        object.__setattr__(self, "pilot_positions", pos)

    @classmethod
    def single(cls, n: int, m: int, guard_q: int, pilot_value: complex = 1.0):
        return cls(n, (m,), pilot_value, guard_q)

    @classmethod
    def mimo(cls, n: int, n_tx: int, guard_q: int, pilot_value: complex = 1.0):
        """Pilots at m_t = (Q+1) t - 1, t = 1..n_tx."""
        pos = tuple((guard_q + 1) * t - 1 for t in range(1, n_tx + 1))
        return cls(n, pos, pilot_value, guard_q)

    @property
    def n_pilots(self) -> int:
        return len(self.pilot_positions)

    def reserved(self) -> np.ndarray:
        """Pilot and guard indices (union over all pilots)."""
        q = self.guard_q
        idx = [np.arange(m - q, m + q + 1) % self.n for m in self.pilot_positions]
        return np.unique(np.concatenate(idx))

    @property
    def data_positions(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.reserved()] = False
        return np.flatnonzero(mask)

    @property
    def overhead(self) -> float:
        return self.reserved().size / self.n

    def observation_window(self, pilot: int, stride: int, ell_min: int, ell_max: int, f_max: float) -> np.ndarray:
        m = self.pilot_positions[pilot]
        fm = round(f_max)
        lo = m - ell_max * stride - fm
        hi = m - ell_min * stride + fm
        return np.arange(lo, hi + 1) % self.n


def build_pilot_frame(
    layout: PilotLayout,
    data: np.ndarray | None = None,
    constellation: Constellation = QPSK,
    waveform: Waveform | None = None,
    tx: int = 0,
    data_indices: np.ndarray | None = None,
) -> Frame:
    """Frame with antenna ``tx``'s pilot, empty guards and data elsewhere."""
    x = np.zeros(layout.n, dtype=complex)
    x[layout.pilot_positions[tx]] = layout.pilot_value
    dp = layout.data_positions
    if data is not None:
        data = np.asarray(data, dtype=complex)
        if data.size != dp.size:
            raise LayoutError(f"{dp.size} data positions but {data.size} symbols")
        x[dp] = data
    return Frame(x, constellation, layout, waveform or Waveform.ofdm(), data_indices)


# --------------------------------------------------------------------------
# estimates


@dataclass
class EstimatedChannel:
    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    threshold: float = 0.0
    doppler_grid_step: float = 0.0
    warnings: list = field(default_factory=list)
    virtual: "EstimatedChannel | None" = None

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=complex).ravel()
        order = np.argsort(-np.abs(g), kind="stable")
        self.gains = g[order]
        self.delays = np.asarray(self.delays, dtype=float).ravel()[order]
        self.dopplers = np.asarray(self.dopplers, dtype=float).ravel()[order]

    def __len__(self):
        return self.gains.size

    def __iter__(self):
        return iter(zip(self.gains, self.delays, self.dopplers))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h_re", "h_im", "ell", "f"])
            for h, l, f in self:
                w.writerow([repr(float(h.real)), repr(float(h.imag)), repr(float(l)), repr(float(f))])

    def effective_matrix(self, n: int, cp: ChirpParams, kernel: PulseKernel | None = None) -> np.ndarray:
        """Reconstructed DAFT-domain channel (circulant for fractional delays)."""
        Xi = np.zeros((n, n), dtype=complex)
        for h, ell, f in self:
            if is_integral(ell):
                Xi += h * unit_path_matrix(n, cp, int(round(ell)), f)
                continue
            kernel = kernel or PulseKernel()
            base = math.floor(ell)
            for q in range(-kernel.B, kernel.B + 1):
                g = pulse_kernel_eval(kernel, q - (ell - base))
                if g != 0:
                    Xi += h * g * unit_path_matrix(n, cp, base + q, f)
        return Xi


def _noise_threshold(noise_var, zeta, pilot_value):
    if zeta is not None:
        return float(zeta)
    nv = 0.0 if noise_var is None else float(noise_var)
    # floor keeps round-off residue out of noiseless estimates
    return max(DEFAULT_ZETA_FACTOR * nv, NUMERIC_FLOOR * abs(pilot_value) ** 2)


def _doppler_order(fm: int) -> np.ndarray:
    # 0, -1, 1, -2, 2, ... so argmax ties go to the smaller |f|
    out = [0]
    for a in range(1, fm + 1):
        out += [-a, a]
    return np.array(out)


def _integer_search(y, layout, pilot, stride, ell_list, fm):
    n = layout.n
    m = layout.pilot_positions[pilot]
    fcand = _doppler_order(fm)
    ells, fs, pw = [], [], []
    for ell in ell_list:
        k = (m - fcand - ell * stride) % n
        p = np.abs(y[k]) ** 2
        j = int(np.argmax(p))
        ells.append(ell)
        fs.append(int(fcand[j]))
        pw.append(float(p[j]))
    return np.array(ells), np.array(fs), np.array(pw)


def _select(power, known_p, zeta):
    order = np.argsort(-power, kind="stable")
    if known_p is not None:
        return order[:known_p]
    return order[power[order] > zeta]


def estimate_idid(
    y: np.ndarray,
    layout: PilotLayout,
    ell_max: int,
    f_max: float,
    cp: ChirpParams,
    known_p: int | None = None,
    zeta: float | None = None,
    noise_var: float | None = None,
    pilot: int = 0,
    ell_min: int = 0,
) -> EstimatedChannel:
    """Integer delay/Doppler estimation from one embedded pilot.

    For each delay the Doppler is the peak of ``|y_k|^2`` over its window;
    the strongest ``known_p`` peaks are kept, or all peaks above ``zeta``
    (default 6 times ``noise_var``) when ``known_p`` is None.
    """
    y = np.asarray(y, dtype=complex)
    n = layout.n
    stride = loc_stride(n, cp)
    ell_list = list(range(ell_min, int(math.ceil(ell_max - 1e-9)) + 1))
    check_loc_injective(n, stride, ell_list, f_max)
    fm = round(f_max)
    ells, fs, pw = _integer_search(y, layout, pilot, stride, ell_list, fm)
    thr = _noise_threshold(noise_var, zeta, layout.pilot_value)
    keep = _select(pw, known_p, thr)
    m = layout.pilot_positions[pilot]
    gains = []
    for i in keep:
        k = (m - fs[i] - ells[i] * stride) % n
        c = tap_coefficient(n, cp, int(ells[i]), fs[i], k, m)
        gains.append(y[k] / (layout.pilot_value * c))
    return EstimatedChannel(np.array(gains, dtype=complex), ells[keep], fs[keep], thr, 0.0)


def _path_columns(n, cp, m, ells, fgrid, rows):
    """Unit responses of pilot ``m`` at rows ``rows`` for each (ell, f)."""
    return np.stack([tap_coefficient(n, cp, int(l), f, rows, m) for l, f in zip(ells, fgrid)])


def _refine_fractional(y, layout, pilot, cp, ells, fints, f_max, grid_step, n_refine, rows):
    n = layout.n
    m = layout.pilot_positions[pilot]
    x = layout.pilot_value
    P = len(ells)
    stride = loc_stride(n, cp)
    fm = round(f_max)
    eps = np.arange(-0.5, 0.5 + grid_step / 2, grid_step)
    eps = np.round(eps / grid_step) * grid_step
    f_hat = np.asarray(fints, dtype=float).copy()
    gains = np.zeros(P, dtype=complex)
    cols = np.zeros((P, rows.size), dtype=complex)
    for p in range(P):
        cols[p] = x * tap_coefficient(n, cp, int(ells[p]), f_hat[p], rows, m)
        gains[p] = np.vdot(cols[p], y[rows]) / np.vdot(cols[p], cols[p])
    yr = y[rows]
    for _ in range(max(1, n_refine)):
        for p in range(P):
            resid = yr - (gains @ cols - gains[p] * cols[p])
            cand = fints[p] + eps
            cand = cand[np.abs(cand) <= f_max + 1e-12]
            # Doppler window of this path: the 2 fm + 1 bins around its peak
            kw = (m - np.arange(-fm, fm + 1) - ells[p] * stride) % n
            sel = np.isin(rows, kw)
            C = x * tap_coefficient(n, cp, int(ells[p]), cand[:, None], rows[sel][None, :], m)
            num = np.abs(C.conj() @ resid[sel]) ** 2
            den = np.sum(np.abs(C) ** 2, axis=1)
            j = int(np.argmax(num / den))
            f_hat[p] = cand[j]
            cols[p] = x * tap_coefficient(n, cp, int(ells[p]), f_hat[p], rows, m)
            c_w = cols[p][sel]
            gains[p] = np.vdot(c_w, resid[sel]) / np.vdot(c_w, c_w)
    return gains, f_hat


def estimate_frac_doppler(
    y: np.ndarray,
    layout: PilotLayout,
    ell_max: int,
    f_max: float,
    cp: ChirpParams,
    grid_step: float = DEFAULT_GRID_STEP,
    known_p: int | None = None,
    zeta: float | None = None,
    noise_var: float | None = None,
    pilot: int = 0,
    n_refine: int = 4,
    ell_min: int = 0,
) -> EstimatedChannel:
    """Integer delays, fractional Dopplers.

    The integer stage is :func:`estimate_idid`.  Each path's Doppler fraction
    then maximizes the normalized matched energy ``|c^H y|^2 / |c|^2`` over
    its Doppler window on a ``grid_step`` grid, with the other paths'
    contributions cancelled; this is repeated ``n_refine`` times.
    """
    if grid_step <= 0:
        raise EstimationError("grid_step must be positive")
    y = np.asarray(y, dtype=complex)
    coarse = estimate_idid(y, layout, ell_max, f_max, cp, known_p, zeta, noise_var, pilot, ell_min)
    if len(coarse) == 0:
        coarse.doppler_grid_step = grid_step
        return coarse
    stride = loc_stride(layout.n, cp)
    rows = layout.observation_window(pilot, stride, ell_min, int(math.ceil(ell_max - 1e-9)), f_max)
    ells = coarse.delays.astype(int)
    gains, f_hat = _refine_fractional(
        y, layout, pilot, cp, ells, coarse.dopplers.astype(int), f_max, grid_step, n_refine, rows
    )
    return EstimatedChannel(gains, ells, f_hat, coarse.threshold, grid_step)


def _profile_fit(taps_d, taps_h, kernel: PulseKernel, centre: float, lo: float, hi: float, grid_step: float):
    # least squares of h * g(d - ell) against the virtual tap gains over an ell grid
    grid = np.arange(max(lo, centre - 1.0), min(hi, centre + 1.0) + grid_step / 2, grid_step)
    if grid.size == 0:
        grid = np.array([min(max(centre, lo), hi)])
    G = pulse_kernel_eval(kernel, taps_d[None, :] - grid[:, None])
    num = G @ taps_h
    den = np.sum(G * G, axis=1)
    score = np.zeros(grid.size)
    ok = den > 0
    score[ok] = np.abs(num[ok]) ** 2 / den[ok]
    j = int(np.argmax(score))
    h = complex(num[j] / den[j]) if den[j] > 0 else 0j
    return float(grid[j]), h


def fdfd_response(n: int, cp: ChirpParams, kernel: PulseKernel, m: int, rows, ell: float, f: float) -> np.ndarray:
    """Pilot response of a unit fractional-delay path under the virtual (circulant) model."""
    base = math.floor(ell + 1e-9)
    eps = ell - base
    if abs(eps) < 1e-9:
        eps = 0.0
    q = np.arange(-kernel.B, kernel.B + 1)
    g = pulse_kernel_eval(kernel, q - eps)
    out = np.zeros(np.size(rows), dtype=complex)
    for qi, gi in zip(q, g):
        if gi != 0:
            out += gi * tap_coefficient(n, cp, base + int(qi), f, rows, m)
    return out


def _fdfd_refine(yr, rows, layout, pilot, cp, kernel, ells, fs, ell_max, f_max, grid_step, n_iter):
    n = layout.n
    m = layout.pilot_positions[pilot]
    x = layout.pilot_value
    P = len(ells)
    ells = np.array(ells, dtype=float)
    fs = np.array(fs, dtype=float)
    cols = np.array([x * fdfd_response(n, cp, kernel, m, rows, l, f) for l, f in zip(ells, fs)])
    gains = np.linalg.lstsq(cols.T, yr, rcond=None)[0]
    off = np.arange(-0.5, 0.5 + grid_step / 2, grid_step)

    def best(resid, cands):
        C = np.array(cands)
        num = np.abs(C.conj() @ resid) ** 2
        den = np.sum(np.abs(C) ** 2, axis=1)
        return int(np.argmax(np.where(den > 0, num / np.maximum(den, 1e-300), 0.0)))

    for _ in range(n_iter):
        for p in range(P):
            resid = yr - (gains @ cols - gains[p] * cols[p])
            fc = fs[p] + off
            fc = fc[np.abs(fc) <= f_max + 1e-12]
            j = best(resid, [x * fdfd_response(n, cp, kernel, m, rows, ells[p], f) for f in fc])
            fs[p] = fc[j]
            lc = ells[p] + off
            lc = lc[(lc >= -1e-12) & (lc <= ell_max + 1e-12)]
            j = best(resid, [x * fdfd_response(n, cp, kernel, m, rows, l, fs[p]) for l in lc])
            ells[p] = lc[j]
            cols[p] = x * fdfd_response(n, cp, kernel, m, rows, ells[p], fs[p])
            gains[p] = np.vdot(cols[p], resid) / np.vdot(cols[p], cols[p])
    gains = np.linalg.lstsq(cols.T, yr, rcond=None)[0]
    return gains, np.round(ells / grid_step) * grid_step, np.round(fs / grid_step) * grid_step


def estimate_fdfd(
    y: np.ndarray,
    layout: PilotLayout,
    ell_max: float,
    f_max: float,
    cp: ChirpParams,
    kernel: PulseKernel,
    grid_step: float = DEFAULT_GRID_STEP,
    known_p: int | None = None,
    zeta: float | None = None,
    noise_var: float | None = None,
    pilot: int = 0,
    rel_seed: float = 0.05,
    doppler_tol: float = 0.5,
    n_iter: int = 3,
) -> EstimatedChannel:
    """Fractional delay and Doppler via the virtual integer-delay expansion.

    Stage one estimates virtual taps at every integer delay in
    ``[-B, ell_max + B]``.  Stage two seeds physical paths from the
    strongest remaining tap, fits the kernel profile ``h g(d - ell)`` across
    the neighbouring taps by least squares to read out the fractional delay,
    and removes that profile from the tap list.  Seeds weaker than ``zeta``
    or than ``rel_seed`` times the strongest tap end the search (unless
    ``known_p`` fixes the count).  A short coordinate search on the full
    kernel-weighted path response then polishes (ell, f, h) jointly.
    The virtual estimate is attached as ``.virtual``.
    """
    B = kernel.B
    L = int(math.ceil(ell_max - 1e-9))
    virt = estimate_frac_doppler(y, layout, L + B, f_max, cp, grid_step, None, zeta, noise_var, pilot, ell_min=-B)
    thr = virt.threshold
    if len(virt) == 0:
        return EstimatedChannel([], [], [], thr, grid_step, virtual=virt)
    # dense tap list over all virtual delays; absent taps are informative zeros
    d = np.arange(-B, L + B + 1, dtype=float)
    h = np.zeros(d.size, dtype=complex)
    f = np.full(d.size, np.nan)
    pos = (virt.delays + B).astype(int)
    h[pos] = virt.gains
    f[pos] = virt.dopplers
    h_top = np.abs(h).max()
    init_l, init_f = [], []
    while known_p is None or len(init_l) < known_p:
        seed = int(np.argmax(np.abs(h)))
        amp = np.abs(h[seed])
        if known_p is None and (amp**2 * abs(layout.pilot_value) ** 2 <= thr or amp < rel_seed * h_top):
            break
        if amp == 0:
            break
        near = np.abs(d - d[seed]) <= B + 1
        grp = near & ((np.abs(f - f[seed]) <= doppler_tol) | np.isnan(f))
        ell_hat, h_hat = _profile_fit(d[grp], h[grp], kernel, d[seed], 0.0, float(ell_max), grid_step)
        init_l.append(ell_hat)
        init_f.append(float(f[seed]))
        h = h - grp * h_hat * pulse_kernel_eval(kernel, d - ell_hat)
        h[seed] = 0.0 if abs(h[seed]) >= amp else h[seed]
    if not init_l:
        return EstimatedChannel([], [], [], thr, grid_step, virtual=virt)
    stride = loc_stride(layout.n, cp)
    rows = layout.observation_window(pilot, stride, -B, L + B, f_max)
    yr = np.asarray(y, dtype=complex)[rows]
    gains, ells, fs = _fdfd_refine(yr, rows, layout, pilot, cp, kernel, init_l, init_f, ell_max, f_max, grid_step, n_iter)
    est = EstimatedChannel(gains, ells, fs, thr, grid_step, virtual=virt)
    dl = np.sort(est.delays)
    if np.any(np.diff(dl) < 2 * B + 1):
        est.warnings.append("unresolved: physical paths closer than 2B+1 virtual taps")
        warnings.warn("FDFD estimate: overlapping virtual-tap bands", RuntimeWarning, stacklevel=2)
    return est


# --------------------------------------------------------------------------
# frequency-domain special case and MIMO


def comb_pilot_response(n: int, cp: ChirpParams, m: int, pilot_value: complex = 1.0) -> np.ndarray:
    """z = F A^H (x_pil e_m)."""
    e = np.zeros(n, dtype=complex)
    e[m] = pilot_value
    return np.fft.fft(idaft(e, cp), norm="ortho")


def comb_ls_interpolate(y_f: np.ndarray, z: np.ndarray, comb: np.ndarray) -> np.ndarray:
    """LS gains y_f/z on the comb, circular linear interpolation elsewhere."""
    n = y_f.size
    kc = np.flatnonzero(comb)
    if kc.size == 0:
        raise EstimationError("empty pilot comb")
    Hc = y_f[kc] / z[kc]
    k = np.arange(n)
    if kc.size == 1:
        return np.full(n, Hc[0])
    re = np.interp(k, kc, Hc.real, period=n)
    im = np.interp(k, kc, Hc.imag, period=n)
    out = re + 1j * im
    out[kc] = Hc
    return out


def comb_ls_dft_interpolate(y_f: np.ndarray, z: np.ndarray, comb: np.ndarray, n_taps: int) -> np.ndarray:
    """Least-squares fit of ``n_taps`` delay taps to the comb gains y_f/z.

    The fitted taps are transformed back to every subcarrier, which removes
    the interpolation floor of :func:`comb_ls_interpolate` when the delay
    spread is known.
    """
    n = y_f.size
    kc = np.flatnonzero(comb)
    if kc.size < n_taps:
        raise EstimationError(f"{kc.size} comb pilots cannot resolve {n_taps} taps")
    Hc = y_f[kc] / z[kc]
    taps = np.arange(n_taps)
    Fc = np.exp(-2j * np.pi * np.outer(kc, taps) / n)
    h, *_ = np.linalg.lstsq(Fc, Hc, rcond=None)
    return np.exp(-2j * np.pi * np.outer(np.arange(n), taps) / n) @ h


def estimate_freq_domain(y_f: np.ndarray, cp: ChirpParams, layout: PilotLayout, pilot: int = 0) -> np.ndarray:
    """Per-subcarrier gains from a single DAFT-domain pilot observed after a DFT."""
    n = layout.n
    if not cp.is_special_case(n):
        raise EstimationError("frequency-domain estimation needs 2N*lambda1 and 1/(2*lambda1) integral")
    m = layout.pilot_positions[pilot]
    z = comb_pilot_response(n, cp, m, layout.pilot_value)
    comb = comb_support(n, cp, m)
    return comb_ls_interpolate(np.asarray(y_f, dtype=complex), z, comb)


def estimate_mimo(
    y_per_rx: Sequence[np.ndarray],
    layout: PilotLayout,
    ell_max: int,
    f_max: float,
    cp: ChirpParams,
    method: str = "idid",
    **kw,
) -> list[list[EstimatedChannel]]:
    """SISO estimation on each (rx, tx) link using tx's pilot window."""
    n = layout.n
    stride = loc_stride(n, cp)
    wins = [set(layout.observation_window(t, stride, 0, int(math.ceil(ell_max)), f_max)) for t in range(layout.n_pilots)]
    for a in range(len(wins)):
        for b in range(a + 1, len(wins)):
            if wins[a] & wins[b]:
                raise LayoutError(f"pilot windows {a} and {b} overlap; increase the guard")
    fn = {"idid": estimate_idid, "frac": estimate_frac_doppler}[method]
    return [[fn(y, layout, ell_max, f_max, cp, pilot=t, **kw) for t in range(layout.n_pilots)] for y in y_per_rx]

"""Cost models, index-modulation rate, error accumulators and PAPR statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc


class ConfigError(ValueError):
    pass


WAVEFORMS = ("ofdm", "afdm", "otfs", "zak_otfs")


@dataclass(frozen=True)
class CostModel:
    """Per-block modulator plus demodulator cost of one waveform.

    OTFS variants need ``k * l == n``.  Logs are base 2 and real valued, so a
    non power-of-two ``n`` gives a fractional count that :func:`flops` rounds.
    """

    waveform: str
    n: int
    k: int | None = None
    l: int | None = None

    def __post_init__(self):
        if self.waveform not in WAVEFORMS:
            raise ConfigError(f"unknown waveform {self.waveform!r}")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.waveform in ("otfs", "zak_otfs"):
            if self.k is None or self.l is None or self.k < 2 or self.l < 2 or self.k * self.l != self.n:
                raise ConfigError("OTFS cost needs integers K, L >= 2 with K * L = N")


def flops_exact(model: CostModel) -> float:
    n = model.n
    lg = math.log2(n)
    if model.waveform == "ofdm":
        return 5 * n * lg + 2 * n
    if model.waveform == "afdm":
        return 5 * n * lg + 12 * n
    lgl = math.log2(model.l)
    if model.waveform == "otfs":
        return 5 * n * lg + 5 * n * lgl + 2 * n
    return 10 * n * lg + 5 * n * lgl + 6 * n


def flops(model: CostModel) -> int:
    return int(round(flops_exact(model)))


def relative_overhead_approx(n: int) -> float:
    """AFDM chirp cost over the FFT-only OFDM cost, 12 / (5 log2 N)."""
    return 12.0 / (5.0 * math.log2(n))


def relative_overhead_exact(n: int) -> float:
    """(C_AFDM - C_OFDM) / C_OFDM including the 2N term."""
    c0 = flops_exact(CostModel("ofdm", n))
    return (flops_exact(CostModel("afdm", n)) - c0) / c0


def _split(n: int) -> tuple[int, int]:
    # most square K * L factorization, K >= L
    l = int(math.isqrt(n))
    while l > 1 and n % l:
        l -= 1
    return n // l, l


def cost_rows(ns, k: int | None = None, l: int | None = None) -> list[dict]:
    """Rows (waveform, N, K, L, flops, overhead_vs_ofdm) for every N.

    OTFS rows use the given (K, L) when it factors N, else the most square
    split.  ``overhead_vs_ofdm`` for AFDM is the 12/(5 log2 N) approximation;
    the other waveforms use the exact ratio to C_OFDM.
    """
    rows = []
    for n in ns:
        n = int(n)
        c0 = flops_exact(CostModel("ofdm", n))
        kk, ll = (k, l) if k and l and k * l == n else _split(n)
        for wf in WAVEFORMS:
            otfs = wf in ("otfs", "zak_otfs")
            if otfs and ll < 2:
                continue
            m = CostModel(wf, n, kk if otfs else None, ll if otfs else None)
            c = flops_exact(m)
            if wf == "afdm":
                ov = relative_overhead_approx(n)
            else:
                ov = (c - c0) / c0
            rows.append(
                {"waveform": wf, "N": n, "K": m.k or "", "L": m.l or "", "flops": flops(m), "overhead_vs_ofdm": ov}
            )
    return rows


COST_COLUMNS = ("waveform", "N", "K", "L", "flops", "overhead_vs_ofdm")


def write_cost_table(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COST_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "overhead_vs_ofdm": f"{r['overhead_vs_ofdm']:.6f}"})


def im_rate(k_im: int, n_im: int, m_im: int, order: int) -> int:
    """Bits per block of subcarrier-index modulation.

    Index bits per group are floor(log2 C(n_im, m_im)); symbol bits are
    m_im * log2(order) per group.
    """
    if not (0 < m_im < n_im) or k_im < 1:
        raise ConfigError("need k_im >= 1 and 0 < m_im < n_im")
    bps = math.log2(order)
    if order < 2 or not bps.is_integer():
        raise ConfigError("constellation order must be a power of two")
    index_bits = math.comb(n_im, m_im).bit_length() - 1
    return k_im * index_bits + k_im * m_im * int(bps)


@dataclass
class BerAccumulator:
    bit_errors: int = 0
    bits_total: int = 0
    frame_errors: int = 0
    frames_total: int = 0
    sq_err: float = 0.0
    sq_ref: float = 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_total if self.bits_total else float("nan")

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames_total if self.frames_total else float("nan")

    @property
    def nmse(self) -> float:
        return self.sq_err / self.sq_ref if self.sq_ref > 0 else float("nan")

    def merge(self, other: "BerAccumulator") -> "BerAccumulator":
        return BerAccumulator(
            self.bit_errors + other.bit_errors,
            self.bits_total + other.bits_total,
            self.frame_errors + other.frame_errors,
            self.frames_total + other.frames_total,
            self.sq_err + other.sq_err,
            self.sq_ref + other.sq_ref,
        )

    def ci_halfwidth(self, z: float = 1.96) -> float:
        if not self.bits_total:
            return float("inf")
        p = self.ber
        return z * math.sqrt(max(p * (1 - p), 0.0) / self.bits_total)


def ber_update(acc: BerAccumulator, tx_bits, rx_bits) -> BerAccumulator:
    """Count one frame of bits into ``acc`` (in place) and return it."""
    tx = np.asarray(tx_bits).astype(bool).ravel()
    rx = np.asarray(rx_bits).astype(bool).ravel()
    if tx.shape != rx.shape:
        raise ValueError(f"bit streams differ in length: {tx.size} vs {rx.size}")
    e = int(np.count_nonzero(tx != rx))
    acc.bit_errors += e
    acc.bits_total += tx.size
    acc.frame_errors += int(e > 0)
    acc.frames_total += 1
    return acc


def nmse(h_est, h_true) -> float:
    h_true = np.asarray(h_true)
    den = np.vdot(h_true, h_true).real
    return float(np.vdot(h_est - h_true, h_est - h_true).real / den) if den > 0 else float("nan")


def ccdf(samples, level) -> np.ndarray | float:
    """Fraction of samples strictly above ``level`` (scalar or array of levels)."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise ValueError("ccdf of an empty sample")
    lv = np.asarray(level, dtype=float)
    out = 1.0 - np.searchsorted(s, lv, side="right") / s.size
    return float(out) if out.ndim == 0 else out


def ccdf_quantile(samples, prob: float) -> float:
    """Smallest level whose CCDF is at most ``prob``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    idx = int(math.ceil((1.0 - prob) * s.size)) - 1
    return float(s[min(max(idx, 0), s.size - 1)])


def qfunc(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def snr_at_ber(snr_db, ber, target: float) -> float:
    """Linear interpolation of log10 BER vs SNR; nan when the target is not bracketed."""
    snr_db = np.asarray(snr_db, dtype=float)
    lb = np.log10(np.maximum(np.asarray(ber, dtype=float), 1e-300))
    t = math.log10(target)
    for i in range(len(lb) - 1):
        a, b = lb[i], lb[i + 1]
        if (a - t) * (b - t) <= 0 and a != b:
            return float(snr_db[i] + (t - a) * (snr_db[i + 1] - snr_db[i]) / (b - a))
    return float("nan")

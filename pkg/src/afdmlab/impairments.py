"""Oscillator impairments: Wiener phase noise and carrier frequency offset.

Both act at the receiver as left-multiplying diagonals, ``H -> Theta P H``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import DOPPLER_SIGN, ChannelOperator


class ImpairmentError(ValueError):
    pass


@dataclass(frozen=True)
class ImpairmentConfig:
    """Phase noise and CFO settings.

    ``phn_var`` is the Wiener increment variance in rad^2; alternatively
    ``oscillator = (f_c, xi_osc, T_s)`` gives ``4 pi^2 f_c^2 xi_osc T_s``.
    ``cfo`` is normalized to the subcarrier spacing (cycles per block).
    ``lo_mode`` is ``"clo"`` (one oscillator for all receive chains) or
    ``"slo"`` (independent per chain).
    """

    phn_var: float | None = None
    oscillator: tuple | None = None
    cfo: float | None = None
    lo_mode: str = "clo"
    seed: int | None = None

    def __post_init__(self):
        if self.phn_var is not None and self.oscillator is not None:
            raise ImpairmentError("give phn_var or oscillator, not both")
        if self.increment_var < 0:
            raise ImpairmentError("phase-noise variance must be nonnegative")
        if self.lo_mode not in ("clo", "slo"):
            raise ImpairmentError("lo_mode must be 'clo' or 'slo'")

    @property
    def increment_var(self) -> float:
        if self.oscillator is not None:
            fc, xi, ts = self.oscillator
            return 4 * np.pi**2 * fc**2 * xi * ts
        return 0.0 if self.phn_var is None else float(self.phn_var)

    @property
    def active(self) -> bool:
        return self.increment_var > 0 or bool(self.cfo)


NO_IMPAIRMENTS = ImpairmentConfig()


def phn_phases(n: int, var: float, rng: np.random.Generator) -> np.ndarray:
    """Wiener phase trajectory with phi[0] = 0."""
    if var < 0:
        raise ImpairmentError("phase-noise variance must be nonnegative")
    phi = np.zeros(n)
    if var > 0:
        phi[1:] = np.cumsum(rng.normal(0.0, np.sqrt(var), n - 1))
    return phi


def phn_matrix(n: int, cfg: ImpairmentConfig | float, rng: np.random.Generator) -> np.ndarray:
    """diag(exp(j phi)) for one oscillator."""
    var = cfg.increment_var if isinstance(cfg, ImpairmentConfig) else float(cfg)
    return np.diag(np.exp(1j * phn_phases(n, var, rng)))


def cfo_diag(n: int, theta: float) -> np.ndarray:
    return np.exp(2j * np.pi * theta * np.arange(n) / n)


def cfo_matrix(n: int, theta: float) -> np.ndarray:
    """diag(exp(j 2 pi theta k / n)).

    Under the shared Doppler sign this is the Doppler matrix of ``f = -theta``.
    """
    return np.diag(cfo_diag(n, theta))


def cfo_as_doppler(theta: float) -> float:
    """The Doppler value f with V^f equal to cfo_matrix(theta)."""
    return theta * DOPPLER_SIGN


def impairment_diagonals(n: int, cfg: ImpairmentConfig, rng: np.random.Generator, n_rx: int = 1) -> np.ndarray:
    """Per receive chain diagonal of Theta P, shape (n_rx, n)."""
    if cfg.cfo and abs(cfg.cfo) >= n / 2:
        raise ImpairmentError(f"|cfo| = {abs(cfg.cfo)} aliases at block length {n}")
    ramp = cfo_diag(n, cfg.cfo) if cfg.cfo else np.ones(n, dtype=complex)
    var = cfg.increment_var
    if var > 0:
        if cfg.lo_mode == "clo":
            ph = phn_phases(n, var, rng)
            th = np.tile(np.exp(1j * ph), (n_rx, 1))
        else:
            th = np.exp(1j * np.stack([phn_phases(n, var, rng) for _ in range(n_rx)]))
    else:
        th = np.ones((n_rx, n), dtype=complex)
    return th * ramp


def impaired_channel(H, cfg: ImpairmentConfig, rng: np.random.Generator, n_rx: int = 1):
    """Theta P H.  For MIMO (n_rx > 1) ``H`` is the (n_rx N) x (n_tx N) block matrix."""
    is_op = isinstance(H, ChannelOperator)
    M = H.matrix if is_op else np.asarray(H, dtype=complex)
    if not cfg.active:
        return H
    n = M.shape[0] // n_rx
    if n * n_rx != M.shape[0]:
        raise ImpairmentError("row count is not a multiple of n_rx")
    diag = impairment_diagonals(n, cfg, rng, n_rx).reshape(-1)
    out = diag[:, None] * M
    if is_op:
        return ChannelOperator(out, H.structure_tag, H.source)
    return out

"""Doubly dispersive channel operators.

All operators act on one block of ``n`` samples after prefix removal, i.e.
``r = H @ s`` where ``s`` is the prefix-free transmit block.  The prefix enters
only through the wrap-around terms (``Phi_p`` for integer delays, the
``frac_prefix_matrix`` for fractional ones).

Conventions
-----------
Doppler: ``V = diag(exp(DOPPLER_SIGN * j 2 pi k / n))`` so a path with Doppler
``f`` multiplies sample ``k`` by ``exp(DOPPLER_SIGN * j 2 pi f k / n)``.

Prefix: a chirp-periodic prefix sample is ``s[n'] = s[n + n'] * exp(-j 2 pi
phi_cp(n'))`` for ``n' < 0`` with ``phi_cp(n') = lambda1 (N^2 + 2 N n')``.  This is
the unique extension that keeps ``s[t] = exp(j 2 pi lambda1 t^2) p[t]`` with
``p`` periodic, which is what makes the DAFT-domain channel circular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .transforms import INTEGRALITY_TOL, is_integral

DOPPLER_SIGN = -1.0
PREFIX_SIGN = -1.0

STRUCTURE_TAGS = ("idid_sparse", "fdfd_banded", "dense")


class ChannelError(ValueError):
    pass


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class PathSet:
    """Propagation paths ``(gain, delay, doppler)`` plus spread bounds.

    Delays are in samples, Dopplers in cycles per block.  ``ell_max`` and
    ``f_max`` default to the largest |delay| and |Doppler| present.
    """

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    ell_max: float = None
    f_max: float = None

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        d = np.atleast_1d(np.asarray(self.delays, dtype=float))
        f = np.atleast_1d(np.asarray(self.dopplers, dtype=float))
        if not (g.shape == d.shape == f.shape) or g.ndim != 1:
            raise ChannelError("gains, delays and dopplers must be 1-D of equal length")
        if g.size < 1:
            raise ChannelError("a PathSet needs at least one path")
        if np.any(d < 0):
            raise ChannelError("delays must be nonnegative")
        ell_max = float(d.max()) if self.ell_max is None else float(self.ell_max)
        f_max = float(np.abs(f).max()) if self.f_max is None else float(self.f_max)
        tol = 1e-12
        if np.any(d > ell_max + tol) or np.any(np.abs(f) > f_max + tol):
            raise ChannelError("path outside declared (ell_max, f_max) bounds")
        for name, v in (("gains", g), ("delays", d), ("dopplers", f)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "ell_max", ell_max)
        object.__setattr__(self, "f_max", f_max)

    @classmethod
    def from_paths(cls, paths: Iterable[Sequence], ell_max=None, f_max=None):
        paths = list(paths)
        g, d, f = zip(*paths)
        return cls(np.array(g), np.array(d), np.array(f), ell_max, f_max)

    def __len__(self):
        return self.gains.size

    def __iter__(self):
        return iter(zip(self.gains, self.delays, self.dopplers))

    @property
    def integer_delays(self) -> bool:
        return all(is_integral(l) for l in self.delays)

    @property
    def integer_dopplers(self) -> bool:
        return all(is_integral(v) for v in self.dopplers)


@dataclass(frozen=True)
class PulseKernel:
    """Effective sampled pulse ``g(t)``, truncated to ``|t| <= half_width``.

    ``kind`` is ``"sinc"``, ``"raised_cosine"`` or ``"rectangular"``.  When
    ``half_width`` is omitted it defaults to 8 for sinc, ``ceil((1+rolloff)*4)``
    for raised cosine and 1 for rectangular.
    """

    kind: str = "sinc"
    rolloff: float = 0.0
    half_width: int | None = None

    def __post_init__(self):
        if self.kind not in ("sinc", "raised_cosine", "rectangular"):
            raise ChannelError(f"unknown kernel kind {self.kind!r}")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ChannelError("rolloff must lie in [0, 1]")
        B = self.half_width
        if B is None:
            B = {"sinc": 8, "raised_cosine": math.ceil((1 + self.rolloff) * 4), "rectangular": 1}[self.kind]
        if int(B) != B or B < 1:
            raise ChannelError("half_width must be a positive integer")
        object.__setattr__(self, "half_width", int(B))

    @property
    def B(self) -> int:
        return self.half_width

    def __call__(self, t):
        return pulse_kernel_eval(self, t)


def _exact_sinc(t: np.ndarray) -> np.ndarray:
    # exact zeros at nonzero integers so that integer delays give a clean delta
    out = np.sinc(t)
    ti = np.rint(t)
    on_int = t == ti
    out[on_int] = (ti[on_int] == 0).astype(float)
    return out


def pulse_kernel_eval(k: PulseKernel, t) -> np.ndarray | float:
    """Evaluate the truncated pulse kernel at (real) sample offsets ``t``."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if k.kind == "sinc":
        g = _exact_sinc(t)
    elif k.kind == "raised_cosine":
        a = k.rolloff
        g = _exact_sinc(t)
        if a > 0:
            den = 1.0 - (2.0 * a * t) ** 2
            sing = np.abs(den) < 1e-12
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.where(sing, (np.pi / 4) * _exact_sinc(np.full_like(t, 1.0 / (2 * a))), g * np.cos(np.pi * a * t) / den)
    else:
        g = ((t >= -0.5) & (t < 0.5)).astype(float)
    g[np.abs(t) > k.B] = 0.0
    return float(g[0]) if scalar else g


@dataclass(frozen=True)
class PrefixSpec:
    """Cyclic prefix descriptor.

    ``kind="cp"`` is the plain cyclic prefix, ``kind="cpp"`` the chirp-periodic
    prefix for chirp rate ``lambda1``.  ``length=None`` models a prefix long
    enough for every path (ideal wrap-around).
    """

    length: int | None = None
    kind: str = "cp"
    lambda1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("cp", "cpp"):
            raise ChannelError(f"unknown prefix kind {self.kind!r}")
        if self.length is not None and (int(self.length) != self.length or self.length < 0):
            raise ChannelError("prefix length must be a nonnegative integer")

    def phi(self, n: int, idx) -> np.ndarray:
        """Raw phase function phi_cp at (possibly fractional) indices ``idx``."""
        idx = np.asarray(idx, dtype=float)
        if self.kind == "cp":
            return np.zeros_like(idx)
        return self.lambda1 * (n * n + 2.0 * n * idx)

    def rotation(self, n: int, idx) -> np.ndarray:
        """``exp(PREFIX_SIGN * j 2 pi phi_cp(idx))``, with integral phases snapped to 1."""
        ph = self.phi(n, idx)
        frac = ph - np.rint(ph)
        frac = np.where(np.abs(frac) <= INTEGRALITY_TOL, 0.0, frac)
        out = np.exp(PREFIX_SIGN * 2j * np.pi * frac)
        out[frac == 0.0] = 1.0
        return out

    def is_trivial(self, n: int) -> bool:
        """True when phi_cp is integral everywhere (CPP reduces to a plain CP)."""
        if self.kind == "cp":
            return True
        return is_integral(self.lambda1 * n * n) and is_integral(2 * n * self.lambda1)


CP = PrefixSpec()


@dataclass(frozen=True)
class ChannelOperator:
    matrix: np.ndarray
    structure_tag: str = "dense"
    source: PathSet | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.structure_tag not in STRUCTURE_TAGS:
            raise ChannelError(f"unknown structure tag {self.structure_tag!r}")
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ChannelError("channel matrix must be square")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other):
        return self.matrix @ other


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear arrays at both ends with per-path departure/arrival angles."""

    n_tx: int
    n_rx: int
    d_tx: float
    d_rx: float
    lambda_c: float
    aod: Sequence[float]
    aoa: Sequence[float]

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ChannelError("array sizes must be positive")
        if min(self.d_tx, self.d_rx, self.lambda_c) <= 0:
            raise ChannelError("spacings and wavelength must be positive")
        if len(self.aod) != len(self.aoa):
            raise ChannelError("aod / aoa lists must have equal length")

    def tx_response(self, p: int) -> np.ndarray:
        return steering_vector(self.n_tx, self.d_tx, self.lambda_c, self.aod[p])

    def rx_response(self, p: int) -> np.ndarray:
        return steering_vector(self.n_rx, self.d_rx, self.lambda_c, self.aoa[p])


def steering_vector(n_el: int, d: float, lambda_c: float, theta: float) -> np.ndarray:
    psi = d * np.arange(n_el) / lambda_c * np.sin(theta)
    return np.exp(2j * np.pi * psi)


# --------------------------------------------------------------------------
# building blocks


def doppler_diag(n: int, f: float) -> np.ndarray:
    """Diagonal of V^f."""
    return np.exp(DOPPLER_SIGN * 2j * np.pi * f * np.arange(n) / n)


def shift_matrix(n: int, ell: int) -> np.ndarray:
    """Pi^ell, the forward cyclic shift: (Pi^ell s)[k] = s[(k - ell) mod n]."""
    return np.roll(np.eye(n), ell, axis=0)


def shift_phases(n: int, d: int, prefix: PrefixSpec) -> np.ndarray:
    """Row phases of Phi for an integer (possibly negative) cyclic delay ``d``.

    Rows reading a prefix sample (k - d < 0) pick up the CPP rotation of that
    sample; rows reading past the block end (negative ``d``) pick up the
    inverse rotation of the chirp-periodic continuation.
    """
    k = np.arange(n)
    src = k - d
    ph = np.ones(n, dtype=complex)
    pre = src < 0
    if np.any(pre):
        ph[pre] = prefix.rotation(n, src[pre])
    post = src >= n
    if np.any(post):
        ph[post] = np.conj(prefix.rotation(n, src[post] - n))
    return ph


def _prefix_limit_mask(n: int, d: int, prefix: PrefixSpec) -> np.ndarray:
    # rows whose source sample lies before a finite prefix receive nothing
    if prefix.length is None or d <= 0:
        return np.ones(n, dtype=bool)
    return np.arange(n) - d >= -prefix.length


def per_path_idid(n: int, ell_p, f_p: float, prefix: PrefixSpec = CP) -> ChannelOperator:
    """Phi_p V^f Pi^ell for an integer delay ``ell_p``."""
    if not is_integral(ell_p):
        raise ChannelError("per_path_idid needs an integer delay; use per_path_fdfd for fractional delays")
    ell = int(round(ell_p))
    if not 0 <= ell < n:
        raise ChannelError(f"delay {ell} outside [0, {n})")
    M = _idid_matrix(n, ell, f_p, prefix)
    return ChannelOperator(M, "idid_sparse", PathSet([1.0], [ell], [f_p]))


def _idid_matrix(n: int, d: int, f: float, prefix: PrefixSpec) -> np.ndarray:
    rows = np.arange(n)
    vals = shift_phases(n, d, prefix) * doppler_diag(n, f)
    vals = vals * _prefix_limit_mask(n, d, prefix)
    M = np.zeros((n, n), dtype=complex)
    M[rows, (rows - d) % n] = vals
    return M


def frac_delay_matrix(n: int, ell_p: float, kernel: PulseKernel) -> np.ndarray:
    """Toeplitz G(ell) with [G]_{n,m} = g(n - m - ell)."""
    if ell_p < 0:
        raise ChannelError("delay must be nonnegative")
    k = np.arange(n)
    T = (k[:, None] - k[None, :]).astype(float) - ell_p
    return pulse_kernel_eval(kernel, T).astype(complex)


PHASE_ARGS = ("sample", "real", "integer")


def frac_prefix_matrix(
    n: int, ell_p: float, kernel: PulseKernel, prefix: PrefixSpec = CP, phase_arg: str = "sample"
) -> np.ndarray:
    """Wrap-around part of Psi(ell): taps that read prefix samples.

    Entry ``[k, m]`` couples output ``k`` to prefix sample ``m - n`` with
    weight ``g(k - m - ell + n)`` times the prefix rotation.  ``phase_arg``
    picks the argument of phi_cp: ``"sample"`` uses the prefix sample index
    ``m - n`` (exact), ``"real"`` uses ``k - ell`` and ``"integer"`` uses
    ``k - round(ell)``.  The three coincide for integer delays.
    """
    if phase_arg not in PHASE_ARGS:
        raise ChannelError(f"phase_arg must be one of {PHASE_ARGS}")
    k = np.arange(n)
    src = k[None, :] - n  # prefix sample index read through column m
    T = k[:, None] - src - ell_p
    W = pulse_kernel_eval(kernel, T.astype(float)).astype(complex)
    if prefix.length is not None:
        W[:, src[0] < -prefix.length] = 0.0
    if not prefix.is_trivial(n):
        if phase_arg == "sample":
            rot = np.broadcast_to(prefix.rotation(n, src[0])[None, :], (n, n))
        elif phase_arg == "real":
            rot = np.broadcast_to(prefix.rotation(n, k - ell_p)[:, None], (n, n))
        else:
            rot = np.broadcast_to(prefix.rotation(n, k - np.rint(ell_p))[:, None], (n, n))
        W = W * rot
    return W


def psi_matrix(n: int, ell_p: float, kernel: PulseKernel, prefix: PrefixSpec = CP, phase_arg="sample"):
    """Psi(ell) = G(ell) + wrap term."""
    return frac_delay_matrix(n, ell_p, kernel) + frac_prefix_matrix(n, ell_p, kernel, prefix, phase_arg)


def per_path_fdfd(n: int, ell_p: float, f_p: float, kernel: PulseKernel, prefix: PrefixSpec = CP, phase_arg="sample"):
    """V^f Psi(ell) for one unit-gain path."""
    M = doppler_diag(n, f_p)[:, None] * psi_matrix(n, ell_p, kernel, prefix, phase_arg)
    return ChannelOperator(M, "fdfd_banded", PathSet([1.0], [ell_p], [f_p]))


def composite_channel(
    n: int,
    ps: PathSet,
    kernel: PulseKernel | None = None,
    prefix: PrefixSpec = CP,
    phase_arg: str = "sample",
    circulant: bool = False,
) -> ChannelOperator:
    """H = sum_p h_p V^{f_p} Psi(ell_p).

    Integer-delay path sets go through the sparse Phi V Pi construction.
    ``circulant=True`` replaces the Toeplitz-plus-wrap operator by the
    virtual integer-delay expansion (every tap wraps cyclically).
    """
    kernel = kernel or PulseKernel()
    if circulant and not ps.integer_delays:
        vps = virtual_idid_expansion(ps, kernel)
        H = _sum_idid(n, vps, prefix)
        return ChannelOperator(H, "fdfd_banded", ps)
    if ps.integer_delays:
        return ChannelOperator(_sum_idid(n, ps, prefix), "idid_sparse", ps)
    H = np.zeros((n, n), dtype=complex)
    for h, ell, f in ps:
        H += h * doppler_diag(n, f)[:, None] * psi_matrix(n, ell, kernel, prefix, phase_arg)
    return ChannelOperator(H, "fdfd_banded", ps)


def _sum_idid(n: int, ps: PathSet, prefix: PrefixSpec) -> np.ndarray:
    H = np.zeros((n, n), dtype=complex)
    for h, ell, f in ps:
        H += h * _idid_matrix(n, int(round(ell)), f, prefix)
    return H


def virtual_idid_expansion(ps: PathSet, kernel: PulseKernel, drop_zero: bool = True) -> PathSet:
    """Rewrite each path as 2B+1 integer-delay taps weighted by g(q - frac).

    Virtual delays ``floor(ell) + q`` may be negative (pre-cursor taps of a
    two-sided kernel); they are stored as-is in a PathSet-like record whose
    delays are allowed below zero, so this returns a :class:`VirtualPaths`.
    """
    B = kernel.B
    q = np.arange(-B, B + 1)
    gains, delays, dops = [], [], []
    for h, ell, f in ps:
        base = math.floor(ell + INTEGRALITY_TOL)
        eps = ell - base
        if abs(eps) <= INTEGRALITY_TOL:
            eps = 0.0
        g = pulse_kernel_eval(kernel, q - eps)
        gains.append(h * g)
        delays.append(base + q)
        dops.append(np.full(q.size, f))
    g = np.concatenate(gains)
    d = np.concatenate(delays)
    f = np.concatenate(dops)
    if drop_zero:
        keep = g != 0
        g, d, f = g[keep], d[keep], f[keep]
    return VirtualPaths(g, d.astype(float), f, ps.ell_max, ps.f_max)


@dataclass(frozen=True)
class VirtualPaths:
    """Integer-delay tap list from a virtual expansion; delays may be negative."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    ell_max: float = 0.0
    f_max: float = 0.0

    def __len__(self):
        return self.gains.size

    def __iter__(self):
        return iter(zip(self.gains, self.delays, self.dopplers))

    integer_delays = True


def mimo_channel(
    geom: ArrayGeometry,
    n: int,
    ps: PathSet,
    kernel: PulseKernel | None = None,
    prefix: PrefixSpec = CP,
    phase_arg: str = "sample",
) -> np.ndarray:
    """(n_rx n) x (n_tx n) block matrix sum_p h_p Theta_p kron (V^f Psi)."""
    if len(geom.aod) != len(ps):
        raise ChannelError("angle lists must match the number of paths")
    kernel = kernel or PulseKernel()
    H = np.zeros((geom.n_rx * n, geom.n_tx * n), dtype=complex)
    for p, (h, ell, f) in enumerate(ps):
        theta = np.outer(geom.rx_response(p), geom.tx_response(p).conj())
        if is_integral(ell):
            Hp = _idid_matrix(n, int(round(ell)), f, prefix)
        else:
            Hp = doppler_diag(n, f)[:, None] * psi_matrix(n, ell, kernel, prefix, phase_arg)
        H += h * np.kron(theta, Hp)
    return H

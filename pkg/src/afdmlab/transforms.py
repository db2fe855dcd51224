"""Unitary DFT / DAFT transforms.

The forward DAFT is ``A = Lambda(lambda2) @ F @ Lambda(lambda1)`` with ``F`` the
unitary DFT and ``Lambda(lam) = diag(exp(-j 2 pi lam k^2))``.  The fast path is
chirp multiply -> FFT -> chirp multiply, so OFDM is the ``lambda1 = lambda2 = 0``
special case of the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Sign of the chirp exponent, Lambda[k, k] = exp(CHIRP_SIGN * j 2 pi lam k^2).
CHIRP_SIGN = -1.0

# Tolerance used by the integrality predicates on 2 N lambda1 and 1 / (2 lambda1).
INTEGRALITY_TOL = 1e-9


class TransformError(ValueError):
    """Invalid transform size or input shape."""


def is_integral(value: float, tol: float = INTEGRALITY_TOL) -> bool:
    return abs(value - round(value)) <= tol


@dataclass(frozen=True)
class ChirpParams:
    """Chirp rates of the DAFT basis and the Doppler guard margin.

    ``lambda1`` controls the affine-domain spreading of delayed paths,
    ``lambda2`` is a free degree of freedom (PAPR, ambiguity shaping).
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    guard_xi: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.lambda1) and math.isfinite(self.lambda2)):
            raise ValueError("chirp rates must be finite")
        if self.guard_xi < 0 or int(self.guard_xi) != self.guard_xi:
            raise ValueError("guard_xi must be a nonnegative integer")

    @staticmethod
    def min_lambda1(f_max: float, n: int, guard_xi: int = 0) -> float:
        """Smallest lambda1 giving non-overlapping delay/Doppler responses."""
        # rounded jointly so the pilot window check sees the same integer span
        return (2 * round(f_max + guard_xi) + 1) / (2 * n)

    @classmethod
    def for_channel(cls, n: int, f_max: float, guard_xi: int = 0, lambda2: float | None = None):
        """Minimal orthogonal lambda1 for ``f_max``; lambda2 defaults to 1/(2n)."""
        lam2 = 1.0 / (2 * n) if lambda2 is None else lambda2
        return cls(cls.min_lambda1(f_max, n, guard_xi), lam2, guard_xi)

    @classmethod
    def ocdm(cls, n: int):
        """Discrete Fresnel (OCDM) basis, lambda1 = lambda2 = 1/(2n)."""
        return cls(1.0 / (2 * n), 1.0 / (2 * n))

    def satisfies_orthogonality(self, f_max: float, n: int) -> bool:
        return self.lambda1 >= self.min_lambda1(f_max, n, self.guard_xi) - INTEGRALITY_TOL / n

    def comb_spacing(self, n: int) -> float:
        """q = 2 N lambda1, the frequency-domain comb spacing of a single chirp."""
        return 2 * n * self.lambda1

    def is_special_case(self, n: int) -> bool:
        """True when both 2 N lambda1 and 1/(2 lambda1) are integers."""
        if self.lambda1 == 0:
            return False
        return is_integral(self.comb_spacing(n)) and is_integral(1.0 / (2 * self.lambda1))

    @property
    def is_dft(self) -> bool:
        return self.lambda1 == 0 and self.lambda2 == 0


DFT_PARAMS = ChirpParams()


def chirp_vector(n: int, lam: float) -> np.ndarray:
    """Diagonal of Lambda(lam)."""
    k = np.arange(n, dtype=float)
    return np.exp(CHIRP_SIGN * 2j * np.pi * lam * k * k)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary n-point DFT matrix, [F]_{m,k} = exp(-j 2 pi m k / n) / sqrt(n)."""
    if n < 2:
        raise TransformError(f"block length must be >= 2, got {n}")
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def daft_matrix(n: int, cp: ChirpParams) -> np.ndarray:
    """Dense forward DAFT matrix ``Lambda2 @ F @ Lambda1`` (unitary)."""
    F = dft_matrix(n)
    return chirp_vector(n, cp.lambda2)[:, None] * F * chirp_vector(n, cp.lambda1)[None, :]


@dataclass(frozen=True)
class TransformPlan:
    """Precomputed chirps for a fixed block length and basis.

    ``kind`` is ``"dft"`` or ``"daft"``; ``direction`` is ``"forward"`` or
    ``"inverse"``.  Works on the last axis of its input, so a stack of blocks
    can be transformed in one call.
    """

    n: int
    kind: str = "daft"
    direction: str = "forward"
    chirp: ChirpParams = DFT_PARAMS
    _c1: np.ndarray | None = field(init=False, repr=False, compare=False, default=None)
    _c2: np.ndarray | None = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.n < 2:
            raise TransformError(f"block length must be >= 2, got {self.n}")
        if self.kind not in ("dft", "daft"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.direction not in ("forward", "inverse"):
            raise ValueError(f"unknown direction {self.direction!r}")
        cp = self.chirp if self.kind == "daft" else DFT_PARAMS
        # zero chirp rates are skipped entirely so DAFT(0, 0) is bit-identical to DFT
        c1 = None if cp.lambda1 == 0 else chirp_vector(self.n, cp.lambda1)
        c2 = None if cp.lambda2 == 0 else chirp_vector(self.n, cp.lambda2)
        if c1 is not None:
            c1.setflags(write=False)
        if c2 is not None:
            c2.setflags(write=False)
        object.__setattr__(self, "_c1", c1)
        object.__setattr__(self, "_c2", c2)

    def inverse(self) -> "TransformPlan":
        other = "inverse" if self.direction == "forward" else "forward"
        return TransformPlan(self.n, self.kind, other, self.chirp)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return apply_transform(self, x)

    def matrix(self) -> np.ndarray:
        A = daft_matrix(self.n, self.chirp if self.kind == "daft" else DFT_PARAMS)
        return A if self.direction == "forward" else A.conj().T


def apply_transform(plan: TransformPlan, x: np.ndarray) -> np.ndarray:
    """Apply ``plan`` along the last axis of ``x`` using the FFT path."""
    x = np.asarray(x)
    if x.shape[-1] != plan.n:
        raise TransformError(f"expected last axis of length {plan.n}, got {x.shape[-1]}")
    c1, c2 = plan._c1, plan._c2
    if plan.direction == "forward":
        v = x * c1 if c1 is not None else x
        v = np.fft.fft(v, axis=-1, norm="ortho")
        return v * c2 if c2 is not None else v
    v = x * c2.conj() if c2 is not None else x
    v = np.fft.ifft(v, axis=-1, norm="ortho")
    return v * c1.conj() if c1 is not None else v


def daft(x: np.ndarray, cp: ChirpParams) -> np.ndarray:
    return apply_transform(TransformPlan(np.shape(x)[-1], "daft", "forward", cp), x)


def idaft(x: np.ndarray, cp: ChirpParams) -> np.ndarray:
    return apply_transform(TransformPlan(np.shape(x)[-1], "daft", "inverse", cp), x)

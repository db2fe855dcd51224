"""Block detectors for ``y = Xi x + w``.

All detectors take the effective channel ``Xi`` (N x N), the observation
``y`` and, where needed, the noise variance per entry of ``w``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .modem import Constellation, QPSK


class DetectorError(ValueError):
    pass


class SingularChannelError(np.linalg.LinAlgError):
    pass


DEFAULT_COND_CAP = 1e12
MAP_MAX_HYPOTHESES = 10**7


@dataclass
class DetectionResult:
    soft_symbols: np.ndarray
    hard_symbols: np.ndarray
    iterations_used: int = 1
    converged: bool = True
    residual_norm: float = 0.0
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DetectorConfig:
    """Detector choice and hyperparameters.

    ``kind`` is one of ``zf``, ``mmse``, ``ldl_mmse``, ``mrc``, ``mp``,
    ``map``.  ``band`` is an optional (lo, hi) cyclic diagonal window for the
    LDL detector; ``None`` derives it from the channel.
    """

    kind: str = "mmse"
    band: tuple | None = None
    max_iter: int = 50
    tol: float = 1e-6
    damping: float = 0.6
    gamma: float = 1e-3
    patience: float = 0.2

    def __post_init__(self):
        if self.kind not in ("zf", "mmse", "ldl_mmse", "mrc", "mp", "map"):
            raise DetectorError(f"unknown detector {self.kind!r}")
        if not 0 < self.damping <= 1:
            raise DetectorError("damping must lie in (0, 1]")
        if self.gamma <= 0:
            raise DetectorError("gamma must be positive")
        if self.max_iter < 1:
            raise DetectorError("max_iter must be >= 1")


def _result(soft, const, **kw):
    return DetectionResult(soft, const.slice(soft), **kw)


def _residual(Xi, y, x):
    return float(np.linalg.norm(y - Xi @ x))


# --------------------------------------------------------------------------
# linear detectors


def detect_zf(Xi, y, constellation: Constellation = QPSK, cond_cap: float = DEFAULT_COND_CAP) -> DetectionResult:
    """(Xi^H Xi)^{-1} Xi^H y."""
    Xi = np.asarray(Xi, dtype=complex)
    s = np.linalg.svd(Xi, compute_uv=False)
    if s[-1] <= s[0] / cond_cap:
        raise SingularChannelError(f"channel rank deficient (cond={s[0] / max(s[-1], 1e-300):.3g})")
    x = np.linalg.solve(Xi.conj().T @ Xi, Xi.conj().T @ y)
    return _result(x, constellation, residual_norm=_residual(Xi, y, x))


def detect_mmse(Xi, y, noise_var: float, constellation: Constellation = QPSK) -> DetectionResult:
    """(Xi^H Xi + sigma^2 I)^{-1} Xi^H y."""
    Xi = np.asarray(Xi, dtype=complex)
    if noise_var < 0:
        raise DetectorError("noise variance must be nonnegative")
    G = Xi.conj().T @ Xi
    G[np.diag_indices_from(G)] += noise_var
    b = Xi.conj().T @ y
    try:
        x = sla.solve(G, b, assume_a="pos")
    except (np.linalg.LinAlgError, ValueError):
        x = np.linalg.solve(G, b)
    return _result(x, constellation, residual_norm=_residual(Xi, y, x))


# --------------------------------------------------------------------------
# banded LDL^H MMSE


def cyclic_offsets(Xi: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Cyclic diagonal offsets (c - r) mod N whose peak magnitude exceeds tol * max|Xi|."""
    n = Xi.shape[0]
    r = np.arange(n)
    mags = np.array([np.abs(Xi[r, (r + o) % n]).max() for o in range(n)])
    return np.flatnonzero(mags > tol * mags.max()) if mags.max() > 0 else np.array([0])


def band_window(offsets: np.ndarray, n: int) -> tuple[int, int]:
    """Shortest cyclic interval [lo, hi] (lo <= hi, signed) covering ``offsets``."""
    o = np.sort(np.asarray(offsets) % n)
    if o.size == 1:
        return int(o[0]), int(o[0])
    gaps = np.diff(np.concatenate([o, [o[0] + n]]))
    g = int(np.argmax(gaps))
    lo = o[(g + 1) % o.size]
    hi = o[g]
    if hi < lo:
        hi += n
    if lo > n // 2:
        lo -= n
        hi -= n
    return int(lo), int(hi)


def band_truncate(Xi: np.ndarray, band: tuple[int, int]) -> np.ndarray:
    """Keep cyclic diagonals with offset (c - r) in [lo, hi]; zero the rest."""
    n = Xi.shape[0]
    lo, hi = band
    if hi - lo + 1 >= n:
        return Xi.copy()
    r = np.arange(n)
    off = (r[None, :] - r[:, None] - lo) % n
    return np.where(off <= hi - lo, Xi, 0)


def zigzag_permutation(n: int) -> np.ndarray:
    """0, n-1, 1, n-2, ...: turns a cyclic band of half-width w into a band of width <= 2w."""
    p = np.empty(n, dtype=int)
    p[0::2] = np.arange((n + 1) // 2)
    p[1::2] = n - 1 - np.arange(n // 2)
    return p


def bandwidth(M: np.ndarray, tol: float = 0.0) -> int:
    i, j = np.nonzero(np.abs(M) > tol)
    return int(np.max(np.abs(i - j))) if i.size else 0


def ldl_banded(G: np.ndarray, J: int):
    """LDL^H of a Hermitian matrix with lower bandwidth J.

    Returns (L, d, flops, ok).  ``ok`` is False on a non-positive pivot.
    Flops count complex multiply-adds.
    """
    n = G.shape[0]
    L = np.eye(n, dtype=complex)
    d = np.zeros(n)
    flops = 0
    scale = max(np.abs(np.diag(G)).max(), 1e-300)
    for j in range(n):
        k0 = max(0, j - J)
        lj = L[j, k0:j]
        dk = d[k0:j]
        w = lj.conj() * dk
        dj = G[j, j].real - np.real(np.dot(lj, w))
        flops += 2 * (j - k0)
        if not dj > 1e-14 * scale:
            return L, d, flops, False
        d[j] = dj
        i1 = min(n, j + J + 1)
        if i1 > j + 1:
            L[j + 1:i1, j] = (G[j + 1:i1, j] - L[j + 1:i1, k0:j] @ w) / dj
            flops += (i1 - j - 1) * (j - k0 + 1)
    return L, d, flops, True


def _solve_ldl(L, d, b, J):
    n = b.size
    f = np.array(b, dtype=complex)
    flops = 0
    for i in range(1, n):
        k0 = max(0, i - J)
        f[i] -= np.dot(L[i, k0:i], f[k0:i])
        flops += i - k0
    g = f / d
    flops += n
    z = g.copy()
    for i in range(n - 2, -1, -1):
        k1 = min(n, i + J + 1)
        z[i] -= np.dot(L[i + 1:k1, i].conj(), z[i + 1:k1])
        flops += k1 - i - 1
    return z, flops


def detect_ldl_mmse(
    Xi, y, noise_var: float, band: tuple | None = None, constellation: Constellation = QPSK, tol: float = 1e-12
) -> DetectionResult:
    """MMSE through a banded LDL^H solve.

    ``Xi`` is first truncated to the cyclic diagonal window ``band`` (default:
    the shortest window holding every diagonal above ``tol``).  With the
    truncated channel ``Xi_b``, ``Gamma = Xi_b Xi_b^H + sigma^2 I`` is solved
    for ``d`` after a zig-zag permutation makes it an ordinary band, and the
    estimate is ``Xi_b^H d``.  ``info`` holds the flop count, bandwidth and a
    ``fallback`` flag set when a pivot breaks down and a dense solve is used.
    """
    Xi = np.asarray(Xi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = Xi.shape[0]
    if band is None:
        band = band_window(cyclic_offsets(Xi, tol), n)
    Xb = band_truncate(Xi, band)
    G = Xb @ Xb.conj().T
    G[np.diag_indices(n)] += noise_var
    perm = zigzag_permutation(n)
    Gp = G[np.ix_(perm, perm)]
    struct = band_truncate(np.ones((n, n)), band)
    J = bandwidth((struct @ struct.T)[np.ix_(perm, perm)])
    L, d, flops, ok = ldl_banded(Gp, J)
    info = {"band": band, "J": J, "fallback": not ok}
    if ok:
        zp, f2 = _solve_ldl(L, d, y[perm], J)
        dvec = np.empty(n, dtype=complex)
        dvec[perm] = zp
        flops += f2
    else:
        # least squares also covers an exactly singular Gamma
        dvec = np.linalg.lstsq(G, y, rcond=None)[0]
        flops += n**3
    x = Xb.conj().T @ dvec
    flops += int(np.count_nonzero(Xb))
    info["flops"] = int(flops)
    return _result(x, constellation, residual_norm=_residual(Xi, y, x), info=info)


# --------------------------------------------------------------------------
# iterative detectors


def _column_supports(Xi, tol):
    thr = tol * np.abs(Xi).max() if Xi.size else 0.0
    return [np.flatnonzero(np.abs(Xi[:, j]) > thr) for j in range(Xi.shape[1])]


def detect_mrc(
    Xi, y, noise_var: float, max_iter: int = 50, tol: float = 1e-6, constellation: Constellation = QPSK, support_tol=1e-12
) -> DetectionResult:
    """Sequential MRC / residual-cancellation sweeps.

    Starts from x = 0, residual = y; each sweep updates every symbol in turn
    and refreshes the residual on that symbol's column support.  Stops when a
    sweep moves x by less than ``tol`` or the MMSE normal equations
    ``Xi^H (y - Xi x) = sigma^2 x`` already hold.
    """
    Xi = np.asarray(Xi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = Xi.shape[1]
    sup = _column_supports(Xi, support_tol)
    cols = [Xi[s, j] for j, s in enumerate(sup)]
    dn = np.array([np.vdot(c, c).real for c in cols])
    x = np.zeros(n, dtype=complex)
    delta = y.copy()
    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        x_prev = x.copy()
        for j in range(n):
            s, c = sup[j], cols[j]
            g = np.vdot(c, delta[s]) + dn[j] * x[j]
            xn = g / (dn[j] + noise_var) if dn[j] + noise_var > 0 else 0.0
            delta[s] -= c * (xn - x[j])
            x[j] = xn
        # stop on a negligible update or once the normal equations hold
        fixed = np.array([np.vdot(c, delta[s_]) for c, s_ in zip(cols, sup)]) - noise_var * x
        if np.linalg.norm(x - x_prev) < tol or np.linalg.norm(fixed) < 1e-9 * max(1.0, np.linalg.norm(y)):
            converged = True
            break
    return _result(x, constellation, iterations_used=t, converged=converged, residual_norm=float(np.linalg.norm(delta)))


def _normalize_log(logp, axis=-1):
    m = logp.max(axis=axis, keepdims=True)
    p = np.exp(logp - m)
    return p / p.sum(axis=axis, keepdims=True)


def detect_mp(
    Xi,
    y,
    noise_var: float,
    constellation: Constellation = QPSK,
    max_iter: int = 30,
    damping: float = 0.6,
    gamma: float = 1e-3,
    patience: float = 0.2,
    support_tol: float = 1e-12,
    var_floor_rel: float = 1e-12,
) -> DetectionResult:
    """Gaussian-approximation message passing on the sparse factor graph of Xi.

    Flooding schedule.  Observation ``a`` sends each connected symbol ``b``
    the mean and variance of its interference-plus-noise; symbol ``b`` sends
    back the damped product of the other observations' normalized
    likelihoods.  Stops when every belief is above ``1 - gamma`` (eta = 1),
    when eta falls more than ``patience`` below its best value, or after
    ``max_iter`` sweeps.  Decisions come from the iteration with the best eta.
    ``info`` holds the eta trace and the final beliefs.
    """
    if not 0 < damping <= 1:
        raise DetectorError("damping must lie in (0, 1]")
    Xi = np.asarray(Xi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n_obs, n = Xi.shape
    pts = constellation.points
    M = pts.size
    thr = support_tol * np.abs(Xi).max()
    ea, eb = np.nonzero(np.abs(Xi) > thr)  # edge (a, b)
    H = Xi[ea, eb]
    E = ea.size
    floor = max(var_floor_rel * noise_var, var_floor_rel)
    P = np.full((E, M), 1.0 / M)  # p_{b->a}
    eta_best, eta_trace = -1.0, []
    best_hard = np.zeros(n, dtype=int)
    beliefs = np.full((n, M), 1.0 / M)
    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        mean_e = P @ pts  # E[x_b] per edge
        var_e = P @ (np.abs(pts) ** 2) - np.abs(mean_e) ** 2
        m_term = mean_e * H
        v_term = var_e * np.abs(H) ** 2
        mu_a = np.bincount(ea, m_term.real, n_obs) + 1j * np.bincount(ea, m_term.imag, n_obs)
        var_a = np.bincount(ea, v_term, n_obs)
        mu = mu_a[ea] - m_term
        sig2 = np.maximum(var_a[ea] - v_term + noise_var, floor)
        # normalized log-likelihood of each symbol hypothesis on each edge
        dist = np.abs((y[ea] - mu)[:, None] - pts[None, :] * H[:, None]) ** 2
        ll = -dist / sig2[:, None]
        ll = np.log(_normalize_log(ll) + 1e-300)
        tot = np.zeros((n, M))
        np.add.at(tot, eb, ll)
        beliefs = _normalize_log(tot)
        P_new = _normalize_log(tot[eb] - ll)
        P = damping * P_new + (1 - damping) * P
        eta = float(np.mean(beliefs.max(axis=1) >= 1 - gamma))
        eta_trace.append(eta)
        if eta >= eta_best:
            eta_best = eta
            best_hard = beliefs.argmax(axis=1)
        if eta == 1.0:
            converged = True
            break
        if eta < eta_best - patience:
            break
    soft = beliefs @ pts
    return DetectionResult(
        soft,
        best_hard,
        iterations_used=t,
        converged=converged,
        residual_norm=_residual(Xi, y, pts[best_hard]),
        info={"eta": eta_trace, "beliefs": beliefs},
    )


# --------------------------------------------------------------------------
# exhaustive references


def _hypotheses(n, M, chunk):
    total = M**n
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = np.empty((idx.size, n), dtype=np.int64)
        rem = idx.copy()
        for i in range(n - 1, -1, -1):
            digits[:, i] = rem % M
            rem //= M
        yield digits


def _check_size(n, M):
    if M**n > MAP_MAX_HYPOTHESES:
        raise DetectorError(f"{M}^{n} hypotheses exceed the exhaustive-search limit {MAP_MAX_HYPOTHESES}")


def detect_map_oracle(Xi, y, noise_var: float, constellation: Constellation = QPSK, chunk: int = 1 << 15) -> DetectionResult:
    """Joint ML/MAP (equiprobable symbols) by exhaustive enumeration."""
    Xi = np.asarray(Xi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = Xi.shape[1]
    pts = constellation.points
    _check_size(n, pts.size)
    best, best_d = None, np.inf
    for D in _hypotheses(n, pts.size, chunk):
        r = y[None, :] - pts[D] @ Xi.T
        dist = np.sum(np.abs(r) ** 2, axis=1)
        j = int(np.argmin(dist))
        if dist[j] < best_d:
            best_d, best = dist[j], D[j]
    x = pts[best]
    return DetectionResult(x, best.copy(), 1, True, float(np.sqrt(best_d)))


def map_posterior_marginals(Xi, y, noise_var: float, constellation: Constellation = QPSK, chunk: int = 1 << 15) -> np.ndarray:
    """Exact per-symbol posteriors (N x M) under CN(0, noise_var) noise."""
    Xi = np.asarray(Xi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = Xi.shape[1]
    pts = constellation.points
    M = pts.size
    _check_size(n, M)
    chunks = []
    for D in _hypotheses(n, M, chunk):
        r = y[None, :] - pts[D] @ Xi.T
        chunks.append((D, -np.sum(np.abs(r) ** 2, axis=1) / noise_var))
    top = max(c[1].max() for c in chunks)
    marg = np.zeros((n, M))
    for D, ll in chunks:
        w = np.exp(ll - top)
        for i in range(n):
            marg[i] += np.bincount(D[:, i], w, M)
    return marg / marg.sum(axis=1, keepdims=True)


def detect(cfg: DetectorConfig, Xi, y, noise_var: float, constellation: Constellation = QPSK) -> DetectionResult:
    """Dispatch on ``cfg.kind``."""
    k = cfg.kind
    if k == "zf":
        return detect_zf(Xi, y, constellation)
    if k == "mmse":
        return detect_mmse(Xi, y, noise_var, constellation)
    if k == "ldl_mmse":
        return detect_ldl_mmse(Xi, y, noise_var, cfg.band, constellation)
    if k == "mrc":
        return detect_mrc(Xi, y, noise_var, cfg.max_iter, cfg.tol, constellation)
    if k == "mp":
        return detect_mp(Xi, y, noise_var, constellation, cfg.max_iter, cfg.damping, cfg.gamma, cfg.patience)
    return detect_map_oracle(Xi, y, noise_var, constellation)

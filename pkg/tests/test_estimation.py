import itertools

import numpy as np
import pytest

from afdmlab.channel import ArrayGeometry, PathSet, PrefixSpec, PulseKernel, composite_channel, mimo_channel
from afdmlab.estimation import (
    AmbiguityError,
    EstimatedChannel,
    EstimationError,
    LayoutError,
    PilotLayout,
    build_pilot_frame,
    check_loc_injective,
    comb_support,
    estimate_fdfd,
    estimate_frac_doppler,
    estimate_freq_domain,
    estimate_idid,
    estimate_mimo,
    loc_index,
    loc_stride,
    min_guard,
    tap_coefficient,
    unit_path_matrix,
)
from afdmlab.modem import QPSK, Waveform, effective_channel, modulate
from afdmlab.transforms import ChirpParams
from conftest import crandn


def afdm_setup(n, f_max, guard_xi=0):
    cp = ChirpParams.for_channel(n, f_max, guard_xi)
    return cp, Waveform.afdm(cp), PrefixSpec(None, "cpp", cp.lambda1)


def receive(n, cp, ps, x, circulant=False, kernel=None):
    H = composite_channel(n, ps, kernel, PrefixSpec(None, "cpp", cp.lambda1), circulant=circulant)
    return effective_channel(Waveform.afdm(cp), H) @ x


def pilot_only(layout):
    return build_pilot_frame(layout).symbols


# ---------------------------------------------------------------- layouts


def test_impulse_frame():
    x = pilot_only(PilotLayout.single(32, 0, 0))
    assert np.array_equal(x, np.eye(32)[0])


def test_min_guard_formula():
    assert min_guard(2, 1) == 8
    for L, F in itertools.product(range(5), range(4)):
        assert min_guard(L, F) == (L + 1) * (2 * F + 1) - 1


def test_mimo_layout_positions():
    lay = PilotLayout.mimo(128, 2, 8)
    assert lay.pilot_positions == (8, 17)


def test_layout_partition_and_overhead(rng):
    lay = PilotLayout.single(64, 32, 8)
    res, dp = lay.reserved(), lay.data_positions
    assert np.intersect1d(res, dp).size == 0 and res.size + dp.size == 64
    assert lay.overhead == pytest.approx(17 / 64)
    fr = build_pilot_frame(lay, QPSK.points[QPSK.random_indices(rng, dp.size)])
    assert np.all(fr.symbols[res[res != 32]] == 0) and fr.symbols[32] == 1
    with pytest.raises(LayoutError):
        build_pilot_frame(lay, np.ones(3))
    with pytest.raises(LayoutError):
        PilotLayout(16, (3, 3))
    with pytest.raises(LayoutError):
        PilotLayout.single(16, 0, 8)


@pytest.mark.parametrize("n,L,F,xi", [(64, 2, 1, 0), (128, 3, 2, 1), (256, 6, 3, 0), (64, 0, 4, 2)])
def test_loc_injective_enumeration(n, L, F, xi):
    cp = ChirpParams.for_channel(n, F, xi)
    assert cp.satisfies_orthogonality(F, n)
    stride = loc_stride(n, cp)
    check_loc_injective(n, stride, range(L + 1), F)
    locs = [loc_index(l, f, stride) % n for l in range(L + 1) for f in range(-F, F + 1)]
    assert len(set(locs)) == len(locs)


def test_ambiguity_when_lambda_too_small():
    n = 64
    cp = ChirpParams(2 / 128)  # stride 2 < 2 f_max + 1 = 3
    lay = PilotLayout.single(n, 32, 8)
    with pytest.raises(AmbiguityError):
        estimate_idid(np.zeros(n), lay, 2, 1, cp)
    with pytest.raises(AmbiguityError):
        loc_stride(n, ChirpParams(0.0123))


# ---------------------------------------------------------------- closed form taps


def test_unit_path_matrix_matches_dense():
    n = 32
    cp = ChirpParams(5 / 64, 0.013)
    for ell, f in [(0, 0), (3, 1), (2, -1.37), (5, 0.25)]:
        H = composite_channel(n, PathSet([1], [ell], [f]), prefix=PrefixSpec(None, "cpp", cp.lambda1))
        Xi = effective_channel(Waveform.afdm(cp), H)
        assert np.abs(unit_path_matrix(n, cp, ell, f) - Xi).max() < 1e-12
        k, m = 7, 19
        assert abs(tap_coefficient(n, cp, ell, f, k, m) - Xi[k, m]) < 1e-12


# ---------------------------------------------------------------- IDID


def test_idid_single_path():
    n = 64
    cp, wf, _ = afdm_setup(n, 1)
    lay = PilotLayout.single(n, 32, min_guard(2, 1))
    y = receive(n, cp, PathSet([0.7 + 0.2j], [2], [1]), pilot_only(lay))
    est = estimate_idid(y, lay, 2, 1, cp, known_p=1)
    assert est.delays[0] == 2 and est.dopplers[0] == 1
    assert abs(est.gains[0] - (0.7 + 0.2j)) < 1e-9


def test_idid_three_paths_with_data(rng):
    n = 128
    L, F = 3, 2
    cp, wf, _ = afdm_setup(n, F)
    lay = PilotLayout.single(n, 64, min_guard(L, F))
    ps = PathSet([1.0, 0.6j, -0.4 + 0.3j], [0, 1, 3], [2, -1, 0])
    x = build_pilot_frame(lay, QPSK.points[QPSK.random_indices(rng, lay.data_positions.size)]).symbols
    est = estimate_idid(receive(n, cp, ps, x), lay, L, F, cp)
    assert len(est) == 3
    got = sorted(zip(est.delays, est.dopplers, est.gains), key=lambda t: t[0])
    for (l, f, h), (h0, l0, f0) in zip(got, zip(*[ps.gains, ps.delays, ps.dopplers])):
        assert (l, f) == (l0, f0) and abs(h - h0) < 1e-6
    # sorted by magnitude
    assert np.all(np.diff(np.abs(est.gains)) <= 0)


def test_idid_zero_channel():
    n = 64
    cp, _, _ = afdm_setup(n, 1)
    lay = PilotLayout.single(n, 32, 8)
    est = estimate_idid(np.zeros(n, complex), lay, 2, 1, cp, zeta=1e-3)
    assert len(est) == 0


def test_guard_sufficiency(rng):
    n, L, F = 128, 3, 2
    cp, _, _ = afdm_setup(n, F)
    lay = PilotLayout.single(n, 64, min_guard(L, F))
    stride = loc_stride(n, cp)
    win = lay.observation_window(0, stride, 0, L, F)
    ps = PathSet(crandn(rng, 4), [0, 1, 2, 3], rng.integers(-F, F + 1, 4).astype(float))
    ys = []
    for _ in range(3):
        x = build_pilot_frame(lay, crandn(rng, lay.data_positions.size)).symbols
        ys.append(receive(n, cp, ps, x)[win])
    assert np.abs(ys[0] - ys[1]).max() < 1e-10 and np.abs(ys[0] - ys[2]).max() < 1e-10


# ---------------------------------------------------------------- fractional Doppler


def test_frac_doppler_single():
    n = 64
    cp, _, _ = afdm_setup(n, 2)
    lay = PilotLayout.single(n, 32, min_guard(2, 2))
    y = receive(n, cp, PathSet([0.8], [1], [1.30], f_max=2), pilot_only(lay))
    est = estimate_frac_doppler(y, lay, 2, 2, cp, grid_step=0.01, known_p=1)
    assert abs(est.dopplers[0] - 1.30) <= 0.005 + 1e-12
    assert est.delays[0] == 1 and abs(est.gains[0] - 0.8) < 1e-6


def test_frac_doppler_integer_truth():
    n = 64
    cp, _, _ = afdm_setup(n, 2)
    lay = PilotLayout.single(n, 32, min_guard(2, 2))
    y = receive(n, cp, PathSet([1.0], [2], [-1.0], f_max=2), pilot_only(lay))
    est = estimate_frac_doppler(y, lay, 2, 2, cp, grid_step=0.02, known_p=1)
    assert abs(est.dopplers[0] + 1.0) <= 0.02


def test_frac_doppler_two_paths():
    n = 128
    cp, _, _ = afdm_setup(n, 3, guard_xi=1)
    lay = PilotLayout.single(n, 64, 40)
    ps = PathSet([1.0, 0.7j], [0, 2], [-1.62, 0.41], f_max=3)
    y = receive(n, cp, ps, pilot_only(lay))
    est = estimate_frac_doppler(y, lay, 2, 4, cp, grid_step=0.01, known_p=2)
    d = dict(zip(est.delays.astype(int), est.dopplers))
    assert abs(d[0] + 1.62) <= 0.005 + 1e-12 and abs(d[2] - 0.41) <= 0.005 + 1e-12


def test_frac_doppler_grid_step_validated():
    n = 64
    cp, _, _ = afdm_setup(n, 1)
    with pytest.raises(EstimationError):
        estimate_frac_doppler(np.zeros(n), PilotLayout.single(n, 32, 8), 2, 1, cp, grid_step=0)


# ---------------------------------------------------------------- FDFD


def _fdfd_case(ell, f, B=4, n=128):
    k = PulseKernel("sinc", half_width=B)
    cp, _, _ = afdm_setup(n, 1)
    lay = PilotLayout.single(n, 64, 60)
    y = receive(n, cp, PathSet([0.9], [ell], [f], ell_max=6, f_max=1), pilot_only(lay), circulant=True, kernel=k)
    return estimate_fdfd(y, lay, 6, 1, cp, k, grid_step=0.01, known_p=1), k


def test_fdfd_half_sample():
    est, k = _fdfd_case(4.5, 0.0)
    v = est.virtual
    assert sorted(v.delays[np.abs(v.gains) > 1e-6].astype(int)) == list(range(1, 9))
    g = dict(zip(v.delays.astype(int), v.gains))
    for d in range(1, 9):
        assert abs(g[d] - 0.9 * np.sinc(d - 4.5)) < 1e-6
    assert abs(est.delays[0] - 4.5) < 0.05


def test_fdfd_integer_delay():
    est, _ = _fdfd_case(3.0, 0.0)
    v = est.virtual
    strong = np.abs(v.gains) > 1e-6
    assert np.sum(strong) == 1 and v.delays[strong][0] == 3
    assert abs(est.delays[0] - 3.0) < 0.01


@pytest.mark.parametrize("ell,f", [(2.3, 0.4), (3.71, -0.35), (1.15, 0.0)])
def test_fdfd_subsample_resolution(ell, f):
    est, _ = _fdfd_case(ell, f, B=8, n=256)
    assert abs(est.delays[0] - ell) < 0.05
    assert abs(est.dopplers[0] - f) <= 0.05
    assert abs(est.gains[0] - 0.9) < 0.05


# ---------------------------------------------------------------- consistency


def test_nmse_slope(rng):
    n, L, F = 64, 2, 1
    cp, wf, _ = afdm_setup(n, F)
    lay = PilotLayout.single(n, 32, min_guard(L, F), np.sqrt(17))
    ps = PathSet([1.0, 0.5 - 0.5j], [0, 2], [1, -1])
    Xi = receive(n, cp, ps, np.eye(n))
    x = pilot_only(lay)
    out = []
    for snr in (10, 20, 30, 40):
        nv = 10 ** (-snr / 10)
        errs = []
        for _ in range(40):
            y = Xi @ x + np.sqrt(nv) * crandn(rng, n)
            est = estimate_idid(y, lay, L, F, cp, known_p=2)
            errs.append(np.linalg.norm(est.effective_matrix(n, cp) - Xi) ** 2 / np.linalg.norm(Xi) ** 2)
        out.append(np.log10(np.mean(errs)))
    slopes = np.diff(out)
    assert np.all((slopes < -0.7) & (slopes > -1.3))


# ---------------------------------------------------------------- frequency domain


def test_freq_domain_identity():
    n = 32
    cp = ChirpParams(1 / 16, 0.0)
    lay = PilotLayout.single(n, 5, 0)
    x = pilot_only(lay)
    y_f = np.fft.fft(modulate_afdm(x, cp), norm="ortho")
    H = estimate_freq_domain(y_f, cp, lay)
    assert np.allclose(H, 1.0)


def modulate_afdm(x, cp):
    from afdmlab.modem import Frame

    return modulate(Frame(x, waveform=Waveform.afdm(cp)))


def test_freq_domain_two_tap():
    n = 32
    cp = ChirpParams(1 / 16, 0.0)  # q = 4
    lay = PilotLayout.single(n, 2, 0)
    ps = PathSet([1.0, 0.5j], [0, 3], [0, 0])
    s = composite_channel(n, ps) @ modulate_afdm(pilot_only(lay), cp)
    H = estimate_freq_domain(np.fft.fft(s, norm="ortho"), cp, lay)
    comb = comb_support(n, cp, 2)
    k = np.flatnonzero(comb)
    truth = 1.0 + 0.5j * np.exp(-2j * np.pi * 3 * k / n)
    assert np.abs(H[k] - truth).max() < 1e-12


@pytest.mark.parametrize("q", [2, 4])
def test_comb_spacing(q):
    n = 64
    cp = ChirpParams(q / (2 * n))
    k = np.flatnonzero(comb_support(n, cp, 0))
    assert np.all(np.diff(k) == q)


def test_freq_domain_unsupported():
    with pytest.raises(EstimationError):
        estimate_freq_domain(np.zeros(32), ChirpParams(3 / 64), PilotLayout.single(32, 0, 0))


# ---------------------------------------------------------------- MIMO


def _mimo_rx(n, cp, geom, ps, lay):
    H = mimo_channel(geom, n, ps, prefix=PrefixSpec(None, "cpp", cp.lambda1))
    A = Waveform.afdm(cp).matrix(n)
    ys = []
    for r in range(geom.n_rx):
        y = np.zeros(n, complex)
        for t in range(geom.n_tx):
            blk = H[r * n : (r + 1) * n, t * n : (t + 1) * n]
            y += A @ blk @ A.conj().T @ build_pilot_frame(lay, tx=t).symbols
        ys.append(y)
    return ys


def test_mimo_2x2():
    n, L, F = 64, 2, 1
    cp, _, _ = afdm_setup(n, F)
    lay = PilotLayout.mimo(n, 2, min_guard(L, F))
    geom = ArrayGeometry(2, 2, 0.5, 0.5, 1.0, [np.radians(20)], [np.radians(-35)])
    ps = PathSet([0.8 - 0.1j], [2], [1])
    grid = estimate_mimo(_mimo_rx(n, cp, geom, ps, lay), lay, L, F, cp, known_p=1)
    for r in range(2):
        for t in range(2):
            e = grid[r][t]
            theta = geom.rx_response(0)[r] * np.conj(geom.tx_response(0)[t])
            assert e.delays[0] == 2 and e.dopplers[0] == 1
            assert abs(e.gains[0] - 0.8 * theta + 0.1j * theta) < 1e-9


def test_mimo_broadside_and_single_tx():
    n, L, F = 64, 2, 1
    cp, _, _ = afdm_setup(n, F)
    lay = PilotLayout.mimo(n, 2, min_guard(L, F))
    geom = ArrayGeometry(2, 2, 0.5, 0.5, 1.0, [0.0], [0.0])
    ps = PathSet([0.3 + 0.4j], [1], [-1])
    grid = estimate_mimo(_mimo_rx(n, cp, geom, ps, lay), lay, L, F, cp, known_p=1)
    assert all(abs(grid[r][t].gains[0] - (0.3 + 0.4j)) < 1e-9 for r in range(2) for t in range(2))
    lay1 = PilotLayout.mimo(n, 1, min_guard(L, F))
    y = receive(n, cp, ps, pilot_only(lay1))
    a = estimate_mimo([y], lay1, L, F, cp, known_p=1)[0][0]
    b = estimate_idid(y, lay1, L, F, cp, known_p=1)
    assert np.array_equal(a.gains, b.gains) and np.array_equal(a.delays, b.delays)


def test_mimo_window_overlap():
    n = 64
    cp, _, _ = afdm_setup(n, 1)
    with pytest.raises(LayoutError):
        estimate_mimo([np.zeros(n)], PilotLayout.mimo(n, 2, 4), 2, 1, cp)


def test_estimate_csv(tmp_path):
    est = EstimatedChannel([0.1, 1 + 1j], [3, 0], [0.5, -1])
    assert est.delays[0] == 0
    p = tmp_path / "est.csv"
    est.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "h_re,h_im,ell,f" and len(lines) == 3
    assert lines[1].split(",")[2] == "0.0"

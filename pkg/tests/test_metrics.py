import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from afdmlab.metrics import (
    COST_COLUMNS,
    BerAccumulator,
    ConfigError,
    CostModel,
    ber_update,
    ccdf,
    ccdf_quantile,
    cost_rows,
    flops,
    im_rate,
    nmse,
    qfunc,
    relative_overhead_approx,
    relative_overhead_exact,
    snr_at_ber,
    write_cost_table,
)
from afdmlab.modem import QPSK
from oracles import index_bits_by_enumeration


def test_table_formulas():
    assert flops(CostModel("ofdm", 8)) == 136
    assert flops(CostModel("afdm", 8)) == 5 * 8 * 3 + 96
    assert flops(CostModel("otfs", 16, 4, 4)) == 5 * 16 * 4 + 5 * 16 * 2 + 32
    assert flops(CostModel("zak_otfs", 16, 4, 4)) == 10 * 16 * 4 + 5 * 16 * 2 + 96


@pytest.mark.parametrize("n,pct", [(256, 30), (1024, 24), (4096, 20)])
def test_quoted_overheads(n, pct):
    assert round(100 * relative_overhead_approx(n), 10) == pct
    # the exact ratio includes the 2N term of the OFDM cost and is smaller
    assert relative_overhead_exact(n) < relative_overhead_approx(n)
    assert relative_overhead_exact(n) == pytest.approx(10 / (5 * math.log2(n) + 2))


def test_cost_validation():
    with pytest.raises(ConfigError):
        CostModel("otfs", 16, 3, 5)
    with pytest.raises(ConfigError):
        CostModel("otfs", 16)
    with pytest.raises(ConfigError):
        CostModel("fbmc", 16)


def test_cost_monotone():
    ns = [2**k for k in range(2, 14)]
    for wf in ("ofdm", "afdm"):
        c = [flops(CostModel(wf, n)) for n in ns]
        assert all(b > a for a, b in zip(c, c[1:]))
    for wf in ("otfs", "zak_otfs"):
        c = [flops(CostModel(wf, n, n // 4, 4)) for n in ns[1:]]
        assert all(b > a for a, b in zip(c, c[1:]))


def test_cost_table_csv(tmp_path):
    rows = cost_rows([256, 1024, 4096])
    assert {r["waveform"] for r in rows} == {"ofdm", "afdm", "otfs", "zak_otfs"}
    p = tmp_path / "cost.csv"
    write_cost_table(rows, p)
    with open(p) as fh:
        got = list(csv.DictReader(fh))
    assert tuple(got[0].keys()) == COST_COLUMNS
    afdm = [r for r in got if r["waveform"] == "afdm"]
    assert [r["overhead_vs_ofdm"] for r in afdm] == ["0.300000", "0.240000", "0.200000"]
    otfs = [r for r in got if r["waveform"] == "otfs"]
    assert all(int(r["K"]) * int(r["L"]) == int(r["N"]) for r in otfs)


def test_im_rate():
    assert im_rate(1, 2, 1, 4) == 3
    assert im_rate(4, 4, 2, 4) == 24
    assert index_bits_by_enumeration(4, 2) == 2
    for n_im in range(2, 9):
        for m in range(1, n_im):
            assert im_rate(1, n_im, m, 2) == index_bits_by_enumeration(n_im, m) + m
    with pytest.raises(ConfigError):
        im_rate(1, 2, 2, 4)
    with pytest.raises(ConfigError):
        im_rate(1, 4, 0, 4)


def test_ber_update_cases():
    acc = BerAccumulator()
    b = np.random.default_rng(0).integers(0, 2, 100)
    ber_update(acc, b, b)
    assert acc.bit_errors == 0 and acc.frame_errors == 0 and acc.frames_total == 1
    ber_update(acc, b, 1 - b)
    assert acc.bit_errors == 100 and acc.frame_errors == 1 and acc.ber == 0.5
    with pytest.raises(ValueError):
        ber_update(acc, b, b[:-1])


def test_gray_adjacent_symbol_one_bit():
    pts = QPSK.points
    for i in range(4):
        d = np.abs(pts - pts[i])
        for j in np.flatnonzero(np.isclose(d, d[d > 0].min())):
            acc = ber_update(BerAccumulator(), QPSK.indices_to_bits([i]), QPSK.indices_to_bits([j]))
            assert acc.bit_errors == 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=2, max_size=8), st.integers(0, 2**31))
def test_accumulator_associative(lengths, seed):
    rng = np.random.default_rng(seed)
    frames = [(rng.integers(0, 2, L), rng.integers(0, 2, L)) for L in lengths]
    cut = len(frames) // 2
    a, b, whole = BerAccumulator(), BerAccumulator(), BerAccumulator()
    for tx, rx in frames[:cut]:
        ber_update(a, tx, rx)
    for tx, rx in frames[cut:]:
        ber_update(b, tx, rx)
    for tx, rx in frames:
        ber_update(whole, tx, rx)
    assert a.merge(b) == whole
    assert b.merge(a) == whole


def test_ci_halfwidth_shrinks():
    acc = BerAccumulator(bit_errors=100, bits_total=10_000)
    assert acc.ci_halfwidth() == pytest.approx(1.96 * math.sqrt(0.01 * 0.99 / 1e4))
    assert acc.ci_halfwidth() < acc.ber


def test_ccdf():
    s = np.arange(10.0)
    assert ccdf(s, 100) == 0.0
    assert ccdf(s, 4.5) == 0.5
    lv = np.linspace(-1, 11, 50)
    assert np.all(np.diff(ccdf(s, lv)) <= 0)
    assert ccdf_quantile(np.arange(1000.0), 0.01) == 989.0
    assert ccdf(np.arange(1000.0), ccdf_quantile(np.arange(1000.0), 0.01)) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        ccdf([], 0)


def test_nmse_and_q():
    assert nmse(np.array([1.1, 0]), np.array([1.0, 0])) == pytest.approx(0.01)
    assert qfunc(0.0) == 0.5
    assert qfunc(3.0) == pytest.approx(0.0013498980316301)


def test_snr_at_ber():
    snr = [0, 10, 20]
    ber = [1e-1, 1e-3, 1e-5]
    assert snr_at_ber(snr, ber, 1e-2) == pytest.approx(5.0)
    assert snr_at_ber(snr, ber, 1e-4) == pytest.approx(15.0)
    assert math.isnan(snr_at_ber(snr, ber, 1e-7))

"""Monte-Carlo link simulation.

Every frame draws its channel, impairments, data and noise from its own
generator seeded by ``(master_seed, snr_index, frame_index)``, so counters do
not depend on how frames are spread over workers.  Frames run in batches and
the stopping rule is checked only between batches.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from .. import __version__
from ..channel import PathSet, composite_channel
from ..detectors import detect
from ..estimation import PilotLayout, estimate_fdfd, estimate_frac_doppler, min_guard, comb_ls_interpolate, comb_ls_dft_interpolate
from ..impairments import impairment_diagonals
from ..metrics import BerAccumulator, ConfigError
from ..modem import Constellation, Waveform, effective_channel
from .scenario import SimScenario

RESULT_COLUMNS = ("scenario_id", "snr_db", "ber", "fer", "nmse", "frames", "bit_errors", "seed", "version")


class StageError(RuntimeError):
    """A module raised inside the frame pipeline; the message names the stage."""


@dataclass
class ResultRow:
    scenario_id: str
    snr_db: float
    ber: float
    fer: float
    nmse: float
    frames: int
    bit_errors: int
    seed: int
    version: str = __version__

    def as_csv(self) -> list[str]:
        def g(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6e}"

        return [
            self.scenario_id,
            f"{self.snr_db:g}",
            g(self.ber),
            g(self.fer),
            g(self.nmse),
            str(self.frames),
            str(self.bit_errors),
            str(self.seed),
            self.version,
        ]


def labels(sc: SimScenario) -> list[tuple[str, str, bool]]:
    """(label, waveform, impaired) for every simulated curve, in row order."""
    out = []
    for wf in sc.waveforms:
        out.append((f"{sc.scenario_id}:{wf}", wf, True))
        if sc.include_ideal and sc.impairments.active:
            out.append((f"{sc.scenario_id}:{wf}:ideal", wf, False))
    return out


def frame_rng(master_seed: int, snr_idx: int, frame_idx: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(snr_idx), int(frame_idx)]))


STREAMS = ("channel", "impairments", "data", "noise")


def frame_streams(master_seed: int, snr_idx: int, frame_idx: int) -> dict[str, np.random.Generator]:
    """Independent generators per stage, so switching one stage off leaves the others' draws intact."""
    ss = np.random.SeedSequence([int(master_seed), int(snr_idx), int(frame_idx)])
    return dict(zip(STREAMS, (np.random.default_rng(c) for c in ss.spawn(len(STREAMS)))))


def draw_paths(sc: SimScenario, rng: np.random.Generator) -> PathSet:
    ch = sc.channel
    ps = ch.fixed_paths()
    if ps is not None:
        return ps
    p = len(ch.delays)
    pw = np.asarray(ch.power if ch.power else np.ones(p), dtype=float)
    pw = pw / pw.sum()
    h = np.sqrt(pw / 2) * (rng.standard_normal(p) + 1j * rng.standard_normal(p))
    lm, fm = ch.spread
    f = fm * np.cos(rng.uniform(0, 2 * np.pi, p))
    return PathSet(h, np.asarray(ch.delays, dtype=float), f, lm, fm)


def _pilot_layout(sc: SimScenario, wf: str):
    """AFDM: (layout, None); OFDM: (None, comb indices)."""
    n = sc.n
    if wf == "ofdm":
        return None, np.arange(0, n, sc.csi.comb_spacing)
    cp = sc.chirp_params()
    lm, _ = sc.channel.spread
    stride = int(round(cp.comb_spacing(n)))
    q = sc.csi.guard_q
    if q is None:
        q = min_guard(lm, round(sc.f_design) + sc.guard_xi, stride)
    power = sc.csi.pilot_power if sc.csi.pilot_power is not None else 2 * q + 1
    return PilotLayout.single(n, n // 2, q, np.sqrt(power)), None


def _ofdm_pilots(comb: np.ndarray) -> np.ndarray:
    # deterministic unit-modulus comb sequence
    return np.exp(1j * np.pi / 4) * np.ones(comb.size)


def _run_waveform(sc, wf, H, diag, bits_pool, noise, sigma2, const, impaired, acc):
    n = sc.n
    cp = sc.chirp_params() if wf == "afdm" else None
    waveform = Waveform.afdm(cp) if wf == "afdm" else Waveform.ofdm()
    H_rx = diag[:, None] * H if impaired else H
    bps = const.bits_per_symbol
    mode = sc.csi.mode

    stage = "modulate"
    try:
        x = np.zeros(n, dtype=complex)
        if mode == "pilot":
            layout, comb = _pilot_layout(sc, wf)
            if layout is not None:
                dp = layout.data_positions
                pil = np.array(layout.pilot_positions)
                x[pil] = layout.pilot_value
            else:
                dp = np.setdiff1d(np.arange(n), comb)
                pil = comb
                x[pil] = _ofdm_pilots(comb)
        else:
            dp = np.arange(n)
            pil = np.array([], dtype=int)
        bits = bits_pool[: dp.size * bps]
        idx = const.bits_to_indices(bits)
        x[dp] = const.points[idx]
        s = waveform.inverse_plan(n)(x)
        stage = "channel"
        # H is the prefix-inclusive block operator, so the prefix round trip is folded in
        r = H_rx @ s + np.sqrt(sigma2) * noise
        stage = "demodulate"
        y = waveform.forward_plan(n)(r)
        stage = "estimate"
        Xi_true = effective_channel(waveform, H_rx)
        if mode == "perfect":
            Xi = effective_channel(waveform, H)
        elif mode == "perfect_full":
            Xi = Xi_true
        elif wf == "afdm":
            Xi = _estimate_afdm(sc, y, layout, cp, sigma2)
        else:
            z = _scatter(n, comb, _ofdm_pilots(comb))
            if sc.csi.interpolation == "dft":
                h = comb_ls_dft_interpolate(y, z, _mask(n, comb), sc.prefix_length + 1)
            else:
                h = comb_ls_interpolate(y, z, _mask(n, comb))
            Xi = np.diag(h)
        stage = "detect"
        yd = y - Xi[:, pil] @ x[pil] if pil.size else y
        res = detect(sc.detector, Xi[:, dp], yd, sigma2, const)
        rx_bits = const.indices_to_bits(res.hard_symbols)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(f"{wf} frame failed in stage '{stage}': {exc}") from exc
    e = int(np.count_nonzero(rx_bits != bits))
    acc.bit_errors += e
    acc.bits_total += bits.size
    acc.frame_errors += int(e > 0)
    acc.frames_total += 1
    acc.sq_err += float(np.sum(np.abs(Xi - Xi_true) ** 2))
    acc.sq_ref += float(np.sum(np.abs(Xi_true) ** 2))


def _scatter(n, idx, vals):
    v = np.zeros(n, dtype=complex)
    v[idx] = vals
    return v


def _mask(n, idx):
    m = np.zeros(n, dtype=bool)
    m[idx] = True
    return m


def _estimate_afdm(sc, y, layout, cp, sigma2):
    ch = sc.channel
    lm, _ = ch.spread
    fd = sc.f_design + sc.guard_xi
    integral = all(float(d).is_integer() for d in ch.delays) if ch.model != "identity" else True
    kw = dict(known_p=sc.csi.known_p, noise_var=sigma2)
    if integral:
        est = estimate_frac_doppler(y, layout, int(math.ceil(lm)), fd, cp, sc.csi.grid_step, **kw)
    else:
        est = estimate_fdfd(y, layout, lm, fd, cp, ch.pulse, sc.csi.grid_step, **kw)
    return est.effective_matrix(sc.n, cp, ch.pulse)


def simulate_frame(sc: SimScenario, snr_idx: int, active: tuple, frame_idx: int) -> dict:
    """One frame for every active curve; returns {label: BerAccumulator}."""
    rng = frame_streams(sc.master_seed, snr_idx, frame_idx)
    n = sc.n
    const = Constellation(sc.order)
    sigma2 = 10.0 ** (-sc.sweep.snr_db[snr_idx] / 10.0)
    ps = draw_paths(sc, rng["channel"])
    imp = sc.impairments
    diag = impairment_diagonals(n, imp, rng["impairments"])[0] if imp.active else np.ones(n)
    bits_pool = rng["data"].integers(0, 2, n * const.bits_per_symbol)
    nz = rng["noise"]
    noise = (nz.standard_normal(n) + 1j * nz.standard_normal(n)) / np.sqrt(2)
    ch = sc.channel
    out = {}
    Hs = {}
    for label, wf, impaired in labels(sc):
        if label not in active:
            continue
        if wf not in Hs:
            Hs[wf] = composite_channel(n, ps, ch.pulse, sc.prefix(wf), ch.phase_arg).matrix
        acc = BerAccumulator()
        _run_waveform(sc, wf, Hs[wf], diag, bits_pool, noise, sigma2, const, impaired, acc)
        out[label] = acc
    return out


def _done(acc: BerAccumulator, sw) -> bool:
    if acc.frames_total >= sw.max_frames:
        return True
    return acc.frames_total >= sw.min_frames and acc.bit_errors >= sw.target_bit_errors


def run_scenario(sc: SimScenario, workers: int = 1, progress=None) -> list[ResultRow]:
    """Seeded SNR sweep; rows ordered by curve then SNR."""
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    sw = sc.sweep
    curves = labels(sc)
    rows: dict[str, list[ResultRow]] = {c[0]: [] for c in curves}
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for si, snr in enumerate(sw.snr_db):
            accs = {c[0]: BerAccumulator() for c in curves}
            frame = 0
            while True:
                active = tuple(k for k, a in accs.items() if not _done(a, sw))
                if not active:
                    break
                stop = min(frame + sw.batch, sw.max_frames)
                job = partial(simulate_frame, sc, si, active)
                if pool is None:
                    results = map(job, range(frame, stop))
                else:
                    results = pool.map(job, range(frame, stop), chunksize=max(1, (stop - frame) // (4 * workers)))
                for res in results:
                    for k, a in res.items():
                        accs[k] = accs[k].merge(a)
                frame = stop
            for k, a in accs.items():
                rows[k].append(ResultRow(k, float(snr), a.ber, a.fer, a.nmse, a.frames_total, a.bit_errors, sc.master_seed))
            if progress is not None:
                progress(si, snr, accs)
    finally:
        if pool is not None:
            pool.shutdown()
    return [r for c in curves for r in rows[c[0]]]


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow(r.as_csv())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


PLOT_TEMPLATE = '''"""Plot log BER against SNR from {csv_name} (needs matplotlib)."""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
curves = defaultdict(list)
with open(here / "{csv_name}", newline="") as fh:
    for row in csv.DictReader(fh):
        if row["ber"] and float(row["ber"]) > 0:
            curves[row["scenario_id"]].append((float(row["snr_db"]), float(row["ber"])))
fig, ax = plt.subplots()
for name, pts in curves.items():
    pts.sort()
    ax.semilogy([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
ax.set_xlabel("SNR [dB]")
ax.set_ylabel("BER")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.savefig(here / "{png_name}", dpi=150)
'''


def emit_results(rows, out_dir, stem: str = "results") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and a matching ``plot_<stem>.py``; returns both paths."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    write_csv(rows, csv_path)
    plot_path = out / f"plot_{stem}.py"
    plot_path.write_text(PLOT_TEMPLATE.format(csv_name=csv_path.name, png_name=f"{stem}.png"))
    return csv_path, plot_path

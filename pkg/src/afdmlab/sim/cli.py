"""Command line entry point: ``afdmlab simulate|preset|dump-channel|cost-table``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from ..channel import composite_channel
from ..metrics import ConfigError, cost_rows, write_cost_table
from ..modem import Waveform, effective_channel
from .engine import StageError, draw_paths, emit_results, frame_streams, run_scenario
from .scenario import PRESETS, SimScenario, load_scenario, preset

log = logging.getLogger("afdmlab")


def write_matrix_csv(M: np.ndarray, path) -> None:
    """Long-format heat map: one (row, col, abs) line per entry."""
    A = np.abs(M)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "abs"])
        for i in range(A.shape[0]):
            for j in range(A.shape[1]):
                w.writerow([i, j, f"{A[i, j]:.9e}"])


def channel_matrices(sc: SimScenario, domain: str, waveform: str | None = None) -> dict[str, np.ndarray]:
    """|H| (time) or |Xi| (effective) of the scenario's first channel draw per waveform."""
    out = {}
    ps = draw_paths(sc, frame_streams(sc.master_seed, 0, 0)["channel"])
    for wf in sc.waveforms if waveform is None else (waveform,):
        H = composite_channel(sc.n, ps, sc.channel.pulse, sc.prefix(wf), sc.channel.phase_arg).matrix
        if domain == "effective":
            w = Waveform.afdm(sc.chirp_params()) if wf == "afdm" else Waveform.ofdm()
            H = effective_channel(w, H)
        out[wf] = H
    return out


def _dump_job(job: dict, out: Path) -> list[Path]:
    paths = []
    for i, ch in enumerate(job["paths"]):
        sc = SimScenario(f"dump{i}", n=job["n"], chirp=job["chirp"], channel=ch, ncp=16)
        for domain in ("time", "effective"):
            H = channel_matrices(sc, domain, "afdm")["afdm"]
            p = out / f"channel_{i}_{domain}.csv"
            write_matrix_csv(H, p)
            paths.append(p)
    return paths


def _resolve(spec: str):
    if spec in PRESETS:
        return preset(spec)
    return load_scenario(spec)


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = sc.replace(master_seed=args.seed)
    return _simulate(sc, Path(args.out), args.workers)


def _simulate(sc: SimScenario, out: Path, workers: int) -> int:
    def progress(i, snr, accs):
        for k, a in accs.items():
            log.info("%s snr=%g ber=%.3e frames=%d", k, snr, a.ber, a.frames_total)

    rows = run_scenario(sc, workers=workers, progress=progress)
    csv_path, plot_path = emit_results(rows, out, sc.scenario_id)
    print(csv_path)
    print(plot_path)
    return 0


def cmd_preset(args) -> int:
    job = preset(args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(job, SimScenario):
        return _simulate(job, out, args.workers)
    if job["kind"] == "cost":
        p = out / "cost_table.csv"
        write_cost_table(cost_rows(job["n"]), p)
        print(p)
        return 0
    for p in _dump_job(job, out):
        print(p)
    return 0


def cmd_dump_channel(args) -> int:
    job = _resolve(args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not isinstance(job, SimScenario):
        if job["kind"] != "dump":
            raise ConfigError(f"{args.scenario} has no channel to dump")
        for p in _dump_job(job, out):
            print(p)
        return 0
    for wf, H in channel_matrices(job, args.domain).items():
        p = out / f"{job.scenario_id}_{wf}_{args.domain}.csv"
        write_matrix_csv(H, p)
        print(p)
    return 0


def cmd_cost_table(args) -> int:
    ns = [int(x) for x in args.n.split(",") if x]
    rows = cost_rows(ns)
    if args.out:
        write_cost_table(rows, args.out)
        print(args.out)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["waveform", "N", "K", "L", "flops", "overhead_vs_ofdm"])
        for r in rows:
            w.writerow([r["waveform"], r["N"], r["K"], r["L"], r["flops"], f"{r['overhead_vs_ofdm']:.6f}"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="afdmlab", description="AFDM/OFDM link-level simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("simulate", help="run a scenario file (.toml or .json)")
    s.add_argument("scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("preset", help="run or dump a named preset")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_preset)

    d = sub.add_parser("dump-channel", help="write |H| or |Xi| as CSV heat-map data")
    d.add_argument("scenario", help="scenario file or preset name")
    d.add_argument("--domain", choices=("time", "effective"), default="effective")
    d.add_argument("--out", default=".")
    d.set_defaults(fn=cmd_dump_channel)

    c = sub.add_parser("cost-table", help="per-block FLOP counts")
    c.add_argument("--n", default="256,1024,4096")
    c.add_argument("--out")
    c.set_defaults(fn=cmd_cost_table)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ConfigError, StageError, OSError) as exc:
        print(f"afdmlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

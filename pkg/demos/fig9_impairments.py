"""BER of AFDM and OFDM under CFO or Wiener phase noise, pilot CSI, MMSE.

    python3 demos/fig9_impairments.py {cfo,phn} [OUT_DIR] [--quick]

Writes ``fig9_<kind>.csv`` plus a matplotlib script next to it, and prints the
SNR needed for BER 1e-3 on every curve.  ``--quick`` trims the sweep to a
couple of minutes.
"""

import sys

from afdmlab.metrics import snr_at_ber
from afdmlab.sim.engine import emit_results, run_scenario
from afdmlab.sim.scenario import SweepSpec, preset


def main(kind="cfo", out="demo_out", *flags):
    sc = preset(f"fig9_{kind}")
    if "--quick" in flags:
        sc = sc.replace(sweep=SweepSpec(tuple(float(s) for s in range(8, 37, 4)), 200, 800, 200, 50))
    rows = run_scenario(sc, progress=lambda i, snr, _: print(f"{snr:g} dB done", file=sys.stderr))
    csv_path, plot = emit_results(rows, out, f"fig9_{kind}")
    curves = {}
    for r in rows:
        curves.setdefault(r.scenario_id, []).append((r.snr_db, r.ber))
    for cid, pts in curves.items():
        s, b = zip(*pts)
        print(f"{cid:22s} SNR@1e-3 = {snr_at_ber(s, b, 1e-3):6.2f} dB")
    print(f"wrote {csv_path} and {plot}")


if __name__ == "__main__":
    main(*sys.argv[1:])

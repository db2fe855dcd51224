"""Print the per-block transform cost of each waveform."""

from afdmlab.metrics import COST_COLUMNS, cost_rows, relative_overhead_exact

if __name__ == "__main__":
    print(",".join(COST_COLUMNS))
    for r in cost_rows([64, 256, 1024, 4096]):
        print(",".join(str(r[c]) if c != "overhead_vs_ofdm" else f"{r[c]:.3f}" for c in COST_COLUMNS))
    for n in (256, 1024, 4096):
        print(f"N={n}: exact AFDM overhead {100 * relative_overhead_exact(n):.1f} %")

#!/usr/bin/env python3
"""Regenerate every result table as CSV under an output directory.

    python scripts/reproduce_figures.py --trials 10000 --out results/

Tables:
  analytic_nway.csv      closed-form PA/NA/DA over p in [0, 1], n in [2, 8]
  packet_success.csv     calibration bounds and single-packet odds per preset
  nway_sweep.csv         simulated n-way handshakes, CCA on and off
  ack_train_jam2.csv     Ack-2 with T = 1..8 and Jam-2 at t_jam = 2000 per preset
  frontier_<src>.csv     disagreement vs time and tx energy, Jam-2 grid vs ACK trains
  delta_r_sweep.csv      Jam-3 disagreement vs delta_r under Bluetooth
  broadcast.csv          Jam-B vs Ack-B with six receivers per preset
"""

import argparse
import time
from pathlib import Path

from agreesim.cli import analytic_grid, packet_success_table
from agreesim.harness import (
    CSV_COLUMNS,
    Scenario,
    energy_time_frontier,
    format_csv,
    frontier_csv,
    jamb_compare,
    result_rows,
    run_scenario,
    sweep_nway,
)
from agreesim.interference import PRESET_NAMES, preset_source
from agreesim.protocols import AckTrain, HandshakeConfig, Jam2, Jam3

INTERFERED = ("bluetooth", "oven", "wifi-heavy", "wifi-light")


def write(out: Path, name: str, text: str):
    path = out / name
    path.write_text(text)
    print(f"wrote {path} ({len(text.splitlines()) - 1} rows)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    common = {"trials": args.trials, "seed": args.seed, "jobs": args.jobs}
    t0 = time.perf_counter()

    write(out, "analytic_nway.csv", analytic_grid(0.05))
    write(out, "packet_success.csv", packet_success_table())
    write(out, "nway_sweep.csv", format_csv(CSV_COLUMNS, result_rows(
        sweep_nway(range(2, 9), INTERFERED, **common))))

    configs = tuple(HandshakeConfig(AckTrain(t)) for t in range(1, 9)) + (HandshakeConfig(Jam2(2000)),)
    rows = []
    for src in INTERFERED:
        sc = Scenario(configs, preset_source(src), trials=args.trials, seed=args.seed)
        rows += result_rows(run_scenario(sc, args.jobs))
    write(out, "ack_train_jam2.csv", format_csv(CSV_COLUMNS, rows))

    for src in ("oven", "wifi-heavy"):
        write(out, f"frontier_{src}.csv", frontier_csv(energy_time_frontier(src, **common)))

    deltas = (0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 15, 20)
    configs = tuple(HandshakeConfig(Jam3(t, float(d))) for t in (500, 2500) for d in deltas)
    sc = Scenario(configs, preset_source("bluetooth"), trials=args.trials, seed=args.seed)
    write(out, "delta_r_sweep.csv", format_csv(CSV_COLUMNS, result_rows(run_scenario(sc, args.jobs))))

    write(out, "broadcast.csv", format_csv(CSV_COLUMNS, result_rows(jamb_compare(PRESET_NAMES, 6, **common))))
    print(f"done in {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()

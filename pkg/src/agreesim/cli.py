"""Command-line entry point: ``agreesim <subcommand> ...``.

Every subcommand writes CSV to ``--out`` (or stdout). Configuration and I/O
problems exit with status 2 and a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import sys

from agreesim.analytics import (
    calibration_bounds,
    handshake_outcome_probs,
    packet_success_exponential,
    packet_success_periodic,
)
from agreesim.core import TimingModel
from agreesim.harness import (
    CSV_COLUMNS,
    energy_time_frontier,
    format_csv,
    frontier_csv,
    jamb_compare,
    result_rows,
    run_scenario,
    sweep_nway,
)
from agreesim.interference import PRESET_NAMES, max_busy, max_idle, preset_source
from agreesim.scenario import ScenarioError, build_scenario, load_scenario, parse_override, with_cli_settings

ANALYTIC_COLUMNS = ("n", "p", "pa", "na", "da")
PACKET_COLUMNS = ("source", "max_busy_us", "max_idle_us", "min_t_jam_us", "max_t_msg_us",
                  "t_pkt_us", "p_success")


def analytic_grid(p_step: float = 0.05, n_values=range(2, 9)) -> str:
    steps = round(1 / p_step)
    rows = []
    for n in n_values:
        for i in range(steps + 1):
            p = i / steps
            probs = handshake_outcome_probs(p, n)
            rows.append([str(n), repr(p), repr(probs.pa), repr(probs.na), repr(probs.da)])
    return format_csv(ANALYTIC_COLUMNS, rows)


def packet_success_table(payload_bytes: int = 5, timing: TimingModel | None = None) -> str:
    """Calibration bounds and single-packet success odds for each preset."""
    timing = timing or TimingModel()
    t_pkt = timing.data_packet_airtime(payload_bytes)
    rows = []
    for name in PRESET_NAMES:
        src = preset_source(name)
        bounds = calibration_bounds(src, timing.rssi_sample_period)
        idle = src.idle_dist
        if name == "silent":
            p_ok = 1.0
        elif name == "oven":
            p_ok = packet_success_periodic(idle.upper(), t_pkt)
        else:
            p_ok = packet_success_exponential(idle.mean(), t_pkt)
        rows.append([name, str(max_busy(src)), str(max_idle(src) if max_idle(src) is not None else ""),
                     str(bounds.min_t_jam), "" if bounds.max_t_msg is None else str(bounds.max_t_msg),
                     str(t_pkt), repr(p_ok)])
    return format_csv(PACKET_COLUMNS, rows)


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _overrides(args) -> dict:
    """Scenario-level ``--override`` keys that apply to the built-in sweeps."""
    scenario = build_scenario([parse_override(o) for o in args.override])
    return {"timing": scenario.timing, "link_model": scenario.link_model,
            "start_jitter": scenario.start_jitter, "horizon": scenario.horizon}


def cmd_analytic(args) -> str:
    if args.table == "packet":
        return packet_success_table()
    return analytic_grid(args.p_step)


def cmd_run(args) -> str:
    overrides = list(args.override)
    if args.source:
        overrides.append(f"source={args.source}")
    scenario = load_scenario(args.scenario, overrides)
    scenario = with_cli_settings(scenario, args.seed, args.trials, args.out)
    text = format_csv(CSV_COLUMNS, result_rows(run_scenario(scenario, args.jobs)))
    if args.out is None and scenario.output:
        args.out = scenario.output
    return text


def _seed(args) -> int:
    return 1 if args.seed is None else args.seed


def _sources(args, default):
    return [s.strip() for s in args.source.split(",")] if args.source else list(default)


def cmd_sweep_nway(args) -> str:
    kwargs = _overrides(args)
    lo, hi = (int(x) for x in args.n.split("-"))
    results = sweep_nway(range(lo, hi + 1), _sources(args, ("bluetooth", "oven", "wifi-heavy")),
                         args.trials or 10_000, _seed(args), jobs=args.jobs, **kwargs)
    return format_csv(CSV_COLUMNS, result_rows(results))


def cmd_frontier(args) -> str:
    kwargs = _overrides(args)
    sources = _sources(args, ("oven",))
    rows = []
    for src in sources:
        rows += energy_time_frontier(src, trials=args.trials or 10_000, seed=_seed(args),
                                     jobs=args.jobs, **kwargs)
    return frontier_csv(rows)


def cmd_jamb_compare(args) -> str:
    kwargs = _overrides(args)
    results = jamb_compare(_sources(args, PRESET_NAMES), args.receivers, args.trials or 10_000,
                           _seed(args), jobs=args.jobs, **kwargs)
    return format_csv(CSV_COLUMNS, result_rows(results))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agreesim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=True):
        p.add_argument("--out", help="output CSV path (default: stdout)")
        if trials:
            p.add_argument("--seed", type=int, help="random seed (default: the scenario's, else 1)")
            p.add_argument("--trials", type=int)
            p.add_argument("--source", help="interference preset(s), comma separated")
            p.add_argument("--override", action="append", default=[], metavar="K=V",
                           help="scenario key, e.g. timing.rx_processing=0 or link.loss=none")
            p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("analytic", help="closed-form outcome grids")
    common(p, trials=False)
    p.add_argument("--table", choices=("nway", "packet"), default="nway")
    p.add_argument("--p-step", type=float, default=0.05)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-nway", help="n-way handshakes per source, CCA on and off")
    common(p)
    p.add_argument("--n", default="2-8", help="inclusive range, e.g. 2-8")
    p.set_defaults(func=cmd_sweep_nway)

    p = sub.add_parser("frontier", help="Jam-2 t_jam grid against ACK trains")
    common(p)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("jamb-compare", help="Jam-B against Ack-B per source")
    common(p)
    p.add_argument("--receivers", type=int, default=6)
    p.set_defaults(func=cmd_jamb_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise ScenarioError("--trials must be >= 1")
        text = args.func(args)
        _write(text, args.out)
    except (ScenarioError, ValueError, KeyError, OSError) as exc:
        print(f"agreesim: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

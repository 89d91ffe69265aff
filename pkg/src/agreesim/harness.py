"""Monte Carlo experiment driver.

Each trial gets its own interference trace and its own channel randomness,
both keyed by ``(seed, source, trial index)``. Configurations in the same
scenario therefore see the same interference, start offset and tx power in
trial ``i``, which makes protocol comparisons paired rather than merely
statistically equivalent.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from agreesim.channel import (
    DEFAULT_CAPTURE_MARGIN_DB,
    DEFAULT_JITTER_DB,
    NOISE_FLOOR,
    HorizonExhausted,
    Link,
    SignalTimeline,
)
from agreesim.core import Micros, RngStream, TimingModel
from agreesim.interference import InterferenceSource, generate_trace, max_busy, preset_source
from agreesim.protocols import (
    AckB,
    AckTrain,
    FixedPower,
    HandshakeConfig,
    Jam2,
    JamB,
    NWay,
    Outcome,
    OutcomeRecord,
    nominal_span,
    run_handshake,
)

CSV_COLUMNS = (
    "protocol", "params", "source", "trials", "pa", "na", "da", "false_pos",
    "mean_duration_us", "tx_us", "rx_us",
)
FRONTIER_COLUMNS = ("protocol", "params", "source", "trials", "time_us", "tx_energy_us", "da", "pa")

# ambient loss by transmit power (dBm -> probability), linear in between
DEFAULT_LOSS_TABLE = ((-25.0, 0.20), (-20.0, 0.08), (-15.0, 0.03), (-10.0, 0.01), (-5.0, 0.0), (0.0, 0.0))
MAX_HORIZON_US = 10_000_000


@dataclass(frozen=True)
class LinkModel:
    """Maps a transmit power to a ``Link`` and carries RSSI settings."""

    path_loss_db: float = 65.0
    loss_table: tuple[tuple[float, float], ...] = DEFAULT_LOSS_TABLE
    capture_margin: float = DEFAULT_CAPTURE_MARGIN_DB
    jitter_db: float = DEFAULT_JITTER_DB
    noise_floor: tuple[float, float] = NOISE_FLOOR

    def base_loss(self, tx_power: float) -> float:
        table = self.loss_table
        if not table:
            return 0.0
        if tx_power <= table[0][0]:
            return table[0][1]
        for (x0, y0), (x1, y1) in zip(table, table[1:]):
            if tx_power <= x1:
                return y0 + (y1 - y0) * (tx_power - x0) / (x1 - x0)
        return table[-1][1]

    def link(self, tx_power: float) -> Link:
        return Link(tx_power - self.path_loss_db, self.base_loss(tx_power), self.capture_margin)


LOSSLESS = LinkModel(loss_table=())


@dataclass(frozen=True)
class Scenario:
    configs: tuple[HandshakeConfig, ...]
    source: InterferenceSource
    trials: int = 1000
    seed: int = 1
    horizon: Micros | None = None
    start_jitter: Micros = 10_000
    timing: TimingModel = field(default_factory=TimingModel)
    link_model: LinkModel = field(default_factory=LinkModel)
    output: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.start_jitter < 0:
            raise ValueError("start_jitter must be >= 0")
        if self.horizon is not None and self.horizon <= 0:
            raise ValueError("horizon must be > 0")


@dataclass
class AggregateResult:
    """Outcome counts and resource totals for one configuration."""

    config: HandshakeConfig
    source: str
    trials: int = 0
    pa: int = 0
    na: int = 0
    da: int = 0
    false_positives: int = 0
    durations: list[int] = field(default_factory=list)
    tx_total: dict[str, int] = field(default_factory=dict)
    rx_total: dict[str, int] = field(default_factory=dict)

    def add(self, rec: OutcomeRecord):
        self.trials += 1
        if rec.outcome is Outcome.POSITIVE:
            self.pa += 1
        elif rec.outcome is Outcome.NEGATIVE:
            self.na += 1
        else:
            self.da += 1
        self.false_positives += rec.false_positive
        self.durations.append(rec.duration)
        for node, us in rec.tx.items():
            self.tx_total[node] = self.tx_total.get(node, 0) + us
        for node, us in rec.rx.items():
            self.rx_total[node] = self.rx_total.get(node, 0) + us

    def merge(self, other: "AggregateResult"):
        self.trials += other.trials
        self.pa += other.pa
        self.na += other.na
        self.da += other.da
        self.false_positives += other.false_positives
        self.durations.extend(other.durations)
        for node, us in other.tx_total.items():
            self.tx_total[node] = self.tx_total.get(node, 0) + us
        for node, us in other.rx_total.items():
            self.rx_total[node] = self.rx_total.get(node, 0) + us

    @property
    def pa_frac(self) -> float:
        return self.pa / self.trials

    @property
    def na_frac(self) -> float:
        return self.na / self.trials

    @property
    def da_frac(self) -> float:
        return self.da / self.trials

    @property
    def false_positive_frac(self) -> float:
        return self.false_positives / self.trials

    @property
    def mean_duration(self) -> float:
        return sum(self.durations) / self.trials

    def duration_percentile(self, q: float) -> int:
        ordered = sorted(self.durations)
        idx = min(len(ordered) - 1, max(0, math.ceil(q / 100 * len(ordered)) - 1))
        return ordered[idx]

    def mean_tx(self, node: str | None = None) -> float:
        total = self.tx_total.get(node, 0) if node else sum(self.tx_total.values())
        return total / self.trials

    def mean_rx(self, node: str | None = None) -> float:
        total = self.rx_total.get(node, 0) if node else sum(self.rx_total.values())
        return total / self.trials


def default_horizon(scenario: Scenario, cfg: HandshakeConfig) -> Micros:
    slack = 2 * max_busy(scenario.source) + 20_000
    return scenario.start_jitter + slack + nominal_span(cfg, scenario.timing)


def run_trial(scenario: Scenario, cfg: HandshakeConfig, index: int) -> OutcomeRecord:
    """One handshake with freshly generated interference.

    When the trace turns out too short (the initiator waited long for a
    clear channel) the trial is replayed from the same streams on a trace
    twice as long, which extends the original realization.
    """
    source = scenario.source
    base = RngStream(scenario.seed, f"{source.label}/{index}")
    horizon = scenario.horizon or default_horizon(scenario, cfg)
    lm = scenario.link_model
    while True:
        trace = generate_trace(source, horizon, base.child("interference"))
        timeline = SignalTimeline.from_trace(
            trace, source.label, noise_floor_range=lm.noise_floor, jitter_db=lm.jitter_db
        )
        crng = base.child("channel")
        start = crng.randint(0, scenario.start_jitter)
        link = lm.link(cfg.tx_power.draw(crng))
        try:
            return run_handshake(cfg, link, timeline, scenario.timing, crng, start)
        except HorizonExhausted:
            if horizon >= MAX_HORIZON_US:
                raise
            horizon = min(2 * horizon, MAX_HORIZON_US)


def _run_chunk(args) -> AggregateResult:
    scenario, cfg, begin, end = args
    agg = AggregateResult(cfg, scenario.source.label)
    for i in range(begin, end):
        agg.add(run_trial(scenario, cfg, i))
    return agg


def run_config(scenario: Scenario, cfg: HandshakeConfig, jobs: int = 1) -> AggregateResult:
    if jobs <= 1:
        return _run_chunk((scenario, cfg, 0, scenario.trials))
    step = -(-scenario.trials // (jobs * 4))
    chunks = [(scenario, cfg, b, min(b + step, scenario.trials)) for b in range(0, scenario.trials, step)]
    agg = AggregateResult(cfg, scenario.source.label)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for part in pool.map(_run_chunk, chunks):
            agg.merge(part)
    return agg


def run_scenario(scenario: Scenario, jobs: int = 1) -> list[AggregateResult]:
    return [run_config(scenario, cfg, jobs) for cfg in scenario.configs]


# -- sweeps ------------------------------------------------------------------


def _scenario_for(source, configs, trials, seed, **kwargs) -> Scenario:
    if isinstance(source, str):
        source = preset_source(source)
    return Scenario(tuple(configs), source, trials=trials, seed=seed, **kwargs)


def sweep_nway(
    n_range: Iterable[int] = range(2, 9),
    presets: Sequence[str] = ("bluetooth", "oven", "wifi-heavy"),
    trials: int = 10_000,
    seed: int = 1,
    cca_variants: Sequence[bool] = (True, False),
    jobs: int = 1,
    **kwargs,
) -> list[AggregateResult]:
    """Outcome fractions of n-way handshakes per (n, source, CCA on/off)."""
    n_values = list(n_range)
    if any(not 2 <= n <= 8 for n in n_values):
        raise ValueError("n must lie in [2, 8]")
    results = []
    for preset in presets:
        configs = [
            HandshakeConfig(NWay(n), cca_before_first=cca) for cca in cca_variants for n in n_values
        ]
        results.extend(run_scenario(_scenario_for(preset, configs, trials, seed, **kwargs), jobs))
    return results


def tjam_grid(low: Micros = 500, high: Micros = 5000, step: Micros = 100) -> list[Micros]:
    return list(range(low, high + 1, step))


@dataclass(frozen=True)
class FrontierRow:
    protocol: str
    params: str
    source: str
    trials: int
    time_us: float
    tx_energy_us: float
    da: float
    pa: float


def energy_time_frontier(
    source: str = "oven",
    t_jams: Sequence[Micros] | None = None,
    trains: Sequence[int] = range(1, 9),
    trials: int = 10_000,
    seed: int = 1,
    jobs: int = 1,
    **kwargs,
) -> list[FrontierRow]:
    """Disagreement against completion time and transmit-on time.

    ``time_us`` is the mean completion time, ``tx_energy_us`` the mean total
    transmitter-on time across both nodes.
    """
    t_jams = tjam_grid() if t_jams is None else list(t_jams)
    configs = [HandshakeConfig(Jam2(t)) for t in t_jams]
    configs += [HandshakeConfig(AckTrain(T)) for T in trains]
    results = run_scenario(_scenario_for(source, configs, trials, seed, **kwargs), jobs)
    return [
        FrontierRow(r.config.label, r.config.protocol.params, r.source, r.trials,
                    r.mean_duration, r.mean_tx(), r.da_frac, r.pa_frac)
        for r in results
    ]


def matched_jam_for_train(trains: int, timing: TimingModel, payload_bytes: int = 5,
                          step: Micros = 100) -> Micros:
    """Jam-2 window on the ``step`` grid whose complete run lasts as long as the train."""
    train = nominal_span(HandshakeConfig(AckTrain(trains), payload_bytes=payload_bytes), timing)
    fixed = nominal_span(HandshakeConfig(Jam2(step), payload_bytes=payload_bytes), timing) - step
    return max(step, round((train - fixed) / step) * step)


def jamb_compare(
    presets: Sequence[str] = ("bluetooth", "oven", "wifi-heavy", "wifi-light", "silent"),
    receivers: int = 6,
    trials: int = 10_000,
    seed: int = 1,
    jobs: int = 1,
    **kwargs,
) -> list[AggregateResult]:
    results = []
    for preset in presets:
        configs = [HandshakeConfig(JamB(receivers)), HandshakeConfig(AckB(receivers))]
        results.extend(run_scenario(_scenario_for(preset, configs, trials, seed, **kwargs), jobs))
    return results


# -- output ------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def result_rows(results: Iterable[AggregateResult]) -> list[list[str]]:
    rows = []
    for r in results:
        rows.append([
            r.config.label, r.config.protocol.params, r.source, str(r.trials),
            _fmt(r.pa_frac), _fmt(r.na_frac), _fmt(r.da_frac), _fmt(r.false_positive_frac),
            _fmt(r.mean_duration), _fmt(r.mean_tx()), _fmt(r.mean_rx()),
        ])
    return rows


def format_csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def emit_csv(results: Iterable[AggregateResult], path: str | os.PathLike) -> str:
    text = format_csv(CSV_COLUMNS, result_rows(results))
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def frontier_csv(rows: Iterable[FrontierRow]) -> str:
    return format_csv(FRONTIER_COLUMNS, [
        [r.protocol, r.params, r.source, str(r.trials), _fmt(r.time_us), _fmt(r.tx_energy_us),
         _fmt(r.da), _fmt(r.pa)]
        for r in rows
    ])


def lossless(scenario: Scenario) -> Scenario:
    """Same scenario on perfect links at fixed 0 dBm."""
    configs = tuple(replace(c, tx_power=FixedPower(0.0)) for c in scenario.configs)
    return replace(scenario, configs=configs, link_model=LOSSLESS)

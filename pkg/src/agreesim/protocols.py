"""Handshake state machines and outcome classification.

Every runner executes one handshake attempt on a ``SignalTimeline`` that
already holds the trial's interference, appends the protocol's own packets
and jamming to it, and returns an ``OutcomeRecord``. There are no
retransmissions: a lost message ends the exchange and each node decides
from what it has seen by its last scheduled event.

Time origin of ``OutcomeRecord.duration`` is the start of the clear-channel
check that let the first packet go (or the first packet itself when the
initiator skips CCA), so complete runs have a fixed, config-determined
duration regardless of how long the initiator waited for a clear channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from agreesim.channel import (
    HorizonExhausted,
    Link,
    SignalTimeline,
    cca_busy,
    detect_jam_floor,
    detect_jam_ref,
    first_cca_idle,
    packet_received,
    rssi_at,
    sample_window,
)
from agreesim.core import Dbm, Micros, RngStream, TimingModel

DEFAULT_PAYLOAD_BYTES = 5  # 4-byte sequence number + 1-byte tx power
DEFAULT_R_NOISE = -94.0
DEFAULT_CCA_THRESHOLD = -77.0
# a jam window shorter than one RSSI sample period cannot be detected
MIN_T_JAM = TimingModel().rssi_sample_period


class Outcome(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    DISAGREEMENT = "disagreement"


# -- protocol selectors ------------------------------------------------------


@dataclass(frozen=True)
class NWay:
    n: int
    name = "nway"

    def validate(self):
        if self.n < 2:
            raise ValueError(f"nway needs n >= 2, got {self.n}")

    @property
    def params(self) -> str:
        return f"n={self.n}"


@dataclass(frozen=True)
class AckTrain:
    trains: int = 1
    name = "ack-train"

    def validate(self):
        if self.trains < 1:
            raise ValueError(f"ack-train needs T >= 1, got {self.trains}")

    @property
    def params(self) -> str:
        return f"T={self.trains}"


@dataclass(frozen=True)
class Jam2:
    t_jam: Micros = 2000
    name = "jam2"

    def validate(self):
        if self.t_jam < MIN_T_JAM:
            raise ValueError(f"t_jam must cover at least one {MIN_T_JAM} us RSSI sample, got {self.t_jam}")

    @property
    def params(self) -> str:
        return f"t_jam={self.t_jam}"


@dataclass(frozen=True)
class Ack3:
    """Packet-only three-way handshake, an alias of ``NWay(3)``."""

    name = "ack3"
    n = 3

    def validate(self):
        pass

    @property
    def params(self) -> str:
        return "n=3"


@dataclass(frozen=True)
class Jam3:
    t_jam: Micros = 2000
    delta_r: float = 7.0
    name = "jam3"

    def validate(self):
        if self.t_jam < MIN_T_JAM:
            raise ValueError(f"t_jam must cover at least one {MIN_T_JAM} us RSSI sample, got {self.t_jam}")
        if self.delta_r < 0:
            raise ValueError("delta_r must be >= 0 dB")

    @property
    def params(self) -> str:
        return f"t_jam={self.t_jam};delta_r={self.delta_r:g}"


@dataclass(frozen=True)
class JamB:
    receivers: int = 6
    k: int = 16
    t_slot: Micros = 1000
    t_settle: Micros = 169
    t_jam: Micros = 2000
    name = "jamb"

    def validate(self):
        if not 1 <= self.receivers <= self.k:
            raise ValueError(f"jamb needs 1 <= r <= k, got r={self.receivers}, k={self.k}")
        if self.t_slot <= self.t_settle:
            raise ValueError("slot must be longer than its guard time")
        if self.t_jam < MIN_T_JAM:
            raise ValueError(f"t_jam must cover at least one {MIN_T_JAM} us RSSI sample, got {self.t_jam}")

    @property
    def params(self) -> str:
        return f"r={self.receivers};k={self.k};t_slot={self.t_slot};t_jam={self.t_jam}"


@dataclass(frozen=True)
class AckB:
    receivers: int = 6
    name = "ackb"

    def validate(self):
        if self.receivers < 1:
            raise ValueError("ackb needs r >= 1")

    @property
    def params(self) -> str:
        return f"r={self.receivers}"


Protocol = Union[NWay, AckTrain, Jam2, Ack3, Jam3, JamB, AckB]


@dataclass(frozen=True)
class FixedPower:
    dbm: Dbm = 0.0

    def draw(self, rng: RngStream) -> Dbm:
        return self.dbm


@dataclass(frozen=True)
class PowerSweep:
    """Uniform over the integer dBm settings ``low..high``."""

    low: int = -25
    high: int = 0

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError("sweep needs low <= high")

    def draw(self, rng: RngStream) -> Dbm:
        return float(rng.randint(self.low, self.high))


TxPowerPolicy = Union[FixedPower, PowerSweep]


@dataclass(frozen=True)
class HandshakeConfig:
    protocol: Protocol
    payload_bytes: int = DEFAULT_PAYLOAD_BYTES
    r_noise: Dbm = DEFAULT_R_NOISE
    tx_power: TxPowerPolicy = field(default_factory=PowerSweep)
    cca_before_first: bool = True
    cca_threshold: Dbm = DEFAULT_CCA_THRESHOLD

    def __post_init__(self):
        self.protocol.validate()
        if self.payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")

    @property
    def label(self) -> str:
        if isinstance(self.protocol, AckTrain) and self.protocol.trains == 1:
            return "ack2"
        return self.protocol.name


@dataclass
class OutcomeRecord:
    outcome: Outcome
    false_positive: bool
    verdicts: dict[str, bool]
    duration: Micros
    tx: dict[str, Micros]
    rx: dict[str, Micros]

    def __post_init__(self):
        if self.false_positive and self.outcome is Outcome.NEGATIVE:
            raise AssertionError("a false positive cannot end in negative agreement")


def classify(verdicts) -> Outcome:
    """All success: positive; all failure: negative; anything else: disagreement."""
    verdicts = list(verdicts.values()) if isinstance(verdicts, dict) else list(verdicts)
    if len(verdicts) < 2:
        raise ValueError("agreement needs at least two participants")
    if all(verdicts):
        return Outcome.POSITIVE
    if not any(verdicts):
        return Outcome.NEGATIVE
    return Outcome.DISAGREEMENT


# -- bit-vector schedule for Jam-B ------------------------------------------


@dataclass(frozen=True)
class BitVectorSchedule:
    k: int
    assignments: dict[int, tuple[int, ...]]
    exclusive: dict[int, frozenset[int]]

    def owners(self, slot: int) -> list[int]:
        return [node for node, bits in self.assignments.items() if bits[slot]]

    def slots_of(self, node: int) -> list[int]:
        return [j for j, bit in enumerate(self.assignments[node]) if bit]


def build_bitvector_schedule(r: int, k: int = 16) -> BitVectorSchedule:
    """Jamming slots for ``r`` receivers over ``k`` slots.

    Node ``i`` owns ``k // r`` exclusive slots ``i, i + r, i + 2r, ...``,
    spread at the largest stride that keeps them disjoint. Each of the
    ``k - r * (k // r)`` leftover slots goes to a round-robin group of
    ``ceil(r / leftover)`` nodes.
    """
    if not 1 <= r <= k:
        raise ValueError(f"need 1 <= r <= k, got r={r}, k={k}")
    per_node = k // r
    bits = {i: [0] * k for i in range(r)}
    exclusive = {}
    for i in range(r):
        own = [i + m * r for m in range(per_node)]
        for j in own:
            bits[i][j] = 1
        exclusive[i] = frozenset(own)
    leftover = k - r * per_node
    if leftover:
        group = -(-r // leftover)
        for slot_index in range(leftover):
            slot = r * per_node + slot_index
            for x in range(group):
                bits[(slot_index * group + x) % r][slot] = 1
    return BitVectorSchedule(k, {i: tuple(b) for i, b in bits.items()}, exclusive)


# -- runners -----------------------------------------------------------------


class _Run:
    """Bookkeeping shared by all runners for one trial."""

    def __init__(self, cfg, link, timeline, timing, rng, nodes):
        self.cfg = cfg
        self.link = link
        self.timeline = timeline
        self.timing = timing
        self.rng = rng
        self.tx = {n: 0 for n in nodes}
        self.rx = {n: 0 for n in nodes}
        self.origin = 0
        self.t_v = timing.data_packet_airtime(cfg.payload_bytes)

    def begin(self, start: Micros) -> Micros:
        """On-air start of the first packet, after the initiator's CCA."""
        if self.cfg.cca_before_first:
            t0 = first_cca_idle(self.timeline, start, self.cfg.cca_threshold, self.timing)
            self.origin = t0 - self.timing.cca_check_duration
            self.rx["S"] += self.timing.cca_check_duration
        else:
            t0 = self.origin = start
        return t0

    def send(self, sender: str, receivers, start: Micros, airtime: Micros, packet_id, cca=False):
        """Put a packet on the air; returns per-receiver reception, or None if CCA blocked it."""
        if cca:
            self.rx[sender] += self.timing.cca_check_duration
            if cca_busy(self.timeline, start, self.cfg.cca_threshold, self.timing):
                for r in receivers:
                    self.rx[r] += airtime
                return None
        link = self.link
        self.timeline.add_packet(start, airtime, link.rx_power, packet_id)
        self.tx[sender] += airtime
        got = {}
        for r in receivers:
            self.rx[r] += airtime
            got[r] = packet_received(
                self.timeline, start, airtime, link.rx_power, link.capture_margin, link.base_loss, self.rng
            )
        return got

    def sample(self, node: str, start: Micros, length: Micros):
        self.rx[node] += length
        return sample_window(self.timeline, start, length, self.timing, self.rng)

    def finish(self, verdicts, false_positive: bool, end: Micros) -> OutcomeRecord:
        if end > self.timeline.horizon:
            raise HorizonExhausted(f"handshake ends at {end} us, past the {self.timeline.horizon} us trace")
        return OutcomeRecord(
            classify(verdicts), false_positive, verdicts, end - self.origin, self.tx, self.rx
        )


def run_nway(cfg, link, timeline, timing, rng, start: Micros = 0) -> OutcomeRecord:
    n = cfg.protocol.n
    run = _Run(cfg, link, timeline, timing, rng, ("S", "R"))
    t = run.begin(start)
    t_ack = timing.ack_airtime
    lost_at = None
    end = t
    for i in range(1, n + 1):
        sender, receiver = ("S", "R") if i % 2 else ("R", "S")
        airtime = run.t_v if i == 1 else t_ack
        got = run.send(sender, (receiver,), t, airtime, i, cca=i > 1)
        end = t + airtime
        if not (got and got[receiver]):
            lost_at = i
            break
        t = end + timing.message_gap
    if lost_at is None:
        verdicts = {"S": True, "R": True}
    else:
        # a node succeeds iff none of its expected messages is at or after the loss
        last_for = {"S": n if n % 2 == 0 else n - 1, "R": n if n % 2 else n - 1}
        verdicts = {node: last_for[node] < lost_at for node in ("S", "R")}
    return run.finish(verdicts, False, end)


def run_ack3(cfg, link, timeline, timing, rng, start: Micros = 0) -> OutcomeRecord:
    return run_nway(cfg, link, timeline, timing, rng, start)


def run_ack_train(cfg, link, timeline, timing, rng, start: Micros = 0) -> OutcomeRecord:
    trains = cfg.protocol.trains
    run = _Run(cfg, link, timeline, timing, rng, ("S", "R"))
    t0 = run.begin(start)
    got_v = run.send("S", ("R",), t0, run.t_v, "V")["R"]
    t_ack = timing.ack_airtime
    train_start = t0 + run.t_v + timing.message_gap
    train_end = train_start + trains * t_ack
    acked = False
    if got_v:
        # one CCA for the whole preloaded train
        run.rx["R"] += timing.cca_check_duration
        if not cca_busy(timeline, train_start, cfg.cca_threshold, timing):
            for j in range(trains):
                got = run.send("R", ("S",), train_start + j * t_ack, t_ack, ("ack", j))
                acked = acked or got["S"]
            return run.finish({"S": acked, "R": True}, False, train_end)
        run.rx["S"] += trains * t_ack
        return run.finish({"S": False, "R": True}, False, train_end)
    run.rx["S"] += trains * t_ack
    return run.finish({"S": False, "R": False}, False, train_end)


def run_jam2(cfg, link, timeline, timing, rng, start: Micros = 0) -> OutcomeRecord:
    t_jam = cfg.protocol.t_jam
    run = _Run(cfg, link, timeline, timing, rng, ("S", "R"))
    t0 = run.begin(start)
    got_v = run.send("S", ("R",), t0, run.t_v, "V")["R"]
    jam_start = t0 + run.t_v + timing.turnaround
    if got_v:
        timeline.add_jam(jam_start, t_jam, link.rx_power, "R")
        run.tx["R"] += t_jam
    detected = detect_jam_floor(run.sample("S", jam_start, t_jam), cfg.r_noise)
    verdicts = {"S": detected, "R": got_v}
    return run.finish(verdicts, detected and not got_v, jam_start + t_jam)


def run_jam3(cfg, link, timeline, timing, rng, start: Micros = 0) -> OutcomeRecord:
    proto = cfg.protocol
    run = _Run(cfg, link, timeline, timing, rng, ("S", "R"))
    t0 = run.begin(start)
    got_v = run.send("S", ("R",), t0, run.t_v, "V")["R"]
    t_ack = timing.ack_airtime
    ack_start = t0 + run.t_v + timing.message_gap
    ack_end = ack_start + t_ack
    jam_start = ack_end + timing.turnaround
    jam_end = jam_start + proto.t_jam
    if not got_v:
        run.rx["S"] += t_ack
        return run.finish({"S": False, "R": False}, False, ack_end)
    r_s = rssi_at(timeline, t0 + run.t_v // 2, rng)
    got = run.send("R", ("S",), ack_start, t_ack, "ack", cca=True)
    if got is None:
        # R never acknowledged, so it knows S cannot confirm
        return run.finish({"S": False, "R": False}, False, ack_end)
    acked = got["S"]
    if acked:
        timeline.add_jam(jam_start, proto.t_jam, link.rx_power, "S")
        run.tx["S"] += proto.t_jam
    detected = detect_jam_ref(run.sample("R", jam_start, proto.t_jam), r_s, proto.delta_r, cfg.r_noise)
    verdicts = {"S": acked, "R": detected}
    return run.finish(verdicts, detected and not acked, jam_end)


def _receivers(r: int) -> list[str]:
    return [f"R{i + 1}" for i in range(r)]


def run_jamb(cfg, link, timeline, timing, rng, start: Micros = 0) -> OutcomeRecord:
    proto = cfg.protocol
    names = _receivers(proto.receivers)
    run = _Run(cfg, link, timeline, timing, rng, ["S", *names])
    t0 = run.begin(start)
    got_v = run.send("S", names, t0, run.t_v, "V")
    schedule = build_bitvector_schedule(proto.receivers, proto.k)
    slots_start = t0 + run.t_v + timing.turnaround

    jammed = [False] * proto.k
    for i, name in enumerate(names):
        if not got_v[name]:
            continue
        for j in schedule.slots_of(i):
            jammed[j] = True
            # merge consecutive owned slots into one emission
            if j > 0 and schedule.assignments[i][j - 1]:
                continue
            length = 1
            while j + length < proto.k and schedule.assignments[i][j + length]:
                length += 1
            timeline.add_jam(slots_start + j * proto.t_slot, length * proto.t_slot, link.rx_power, name)
            run.tx[name] += length * proto.t_slot

    guard = proto.t_settle // timing.rssi_readout_latency
    s_ok = True
    s_end = slots_start
    for j in range(proto.k):
        slot_at = slots_start + j * proto.t_slot
        run_j = run.sample("S", slot_at, proto.t_slot).drop_first(guard)
        s_end = slot_at + proto.t_slot
        if not detect_jam_floor(run_j, cfg.r_noise):
            s_ok = False
            break
    false_positive = s_ok and not all(jammed)

    final_start = slots_start + proto.k * proto.t_slot + timing.turnaround
    final_end = final_start + proto.t_jam
    if s_ok:
        timeline.add_jam(final_start, proto.t_jam, link.rx_power, "S")
        run.tx["S"] += proto.t_jam
    verdicts = {"S": s_ok}
    end = final_end if s_ok else s_end
    for name in names:
        if not got_v[name]:
            verdicts[name] = False
            continue
        detected = detect_jam_floor(run.sample(name, final_start, proto.t_jam), cfg.r_noise)
        verdicts[name] = detected
        false_positive = false_positive or (detected and not s_ok)
        end = final_end
    return run.finish(verdicts, false_positive, end)


def run_ackb(cfg, link, timeline, timing, rng, start: Micros = 0) -> OutcomeRecord:
    proto = cfg.protocol
    names = _receivers(proto.receivers)
    run = _Run(cfg, link, timeline, timing, rng, ["S", *names])
    t0 = run.begin(start)
    got_v = run.send("S", names, t0, run.t_v, "V")
    t_ack = timing.ack_airtime
    slot = t_ack + timing.turnaround
    slots_start = t0 + run.t_v + timing.message_gap
    acks = 0
    for i, name in enumerate(names):
        at = slots_start + i * slot
        if not got_v[name]:
            run.rx["S"] += t_ack
            continue
        got = run.send(name, ("S",), at, t_ack, ("ack", name), cca=True)
        acks += bool(got and got["S"])
    confirm_start = slots_start + proto.receivers * slot + timing.message_gap
    confirm_end = confirm_start + t_ack
    listeners = [name for name in names if got_v[name]]
    confirmed = None
    if acks == proto.receivers:
        confirmed = run.send("S", listeners, confirm_start, t_ack, "confirm", cca=True)
    else:
        for name in listeners:
            run.rx[name] += t_ack
    verdicts = {"S": confirmed is not None}
    for name in names:
        verdicts[name] = bool(confirmed and confirmed.get(name))
    end = confirm_end if (listeners or confirmed is not None) else slots_start + proto.receivers * slot
    return run.finish(verdicts, False, end)


_RUNNERS = {
    NWay: run_nway,
    Ack3: run_ack3,
    AckTrain: run_ack_train,
    Jam2: run_jam2,
    Jam3: run_jam3,
    JamB: run_jamb,
    AckB: run_ackb,
}


def run_handshake(cfg: HandshakeConfig, link: Link, timeline: SignalTimeline, timing: TimingModel,
                  rng: RngStream, start: Micros = 0) -> OutcomeRecord:
    return _RUNNERS[type(cfg.protocol)](cfg, link, timeline, timing, rng, start)


def nominal_span(cfg: HandshakeConfig, timing: TimingModel) -> Micros:
    """Duration of a run in which every step succeeds."""
    p = cfg.protocol
    t_v = timing.data_packet_airtime(cfg.payload_bytes)
    t_ack = timing.ack_airtime
    gap = timing.message_gap
    head = (timing.cca_check_duration if cfg.cca_before_first else 0) + t_v
    if isinstance(p, (NWay, Ack3)):
        return head + (p.n - 1) * (gap + t_ack)
    if isinstance(p, AckTrain):
        return head + gap + p.trains * t_ack
    if isinstance(p, Jam2):
        return head + timing.turnaround + p.t_jam
    if isinstance(p, Jam3):
        return head + gap + t_ack + timing.turnaround + p.t_jam
    if isinstance(p, JamB):
        return head + timing.turnaround + p.k * p.t_slot + timing.turnaround + p.t_jam
    if isinstance(p, AckB):
        return head + gap + p.receivers * (t_ack + timing.turnaround) + gap + t_ack
    raise TypeError(f"unknown protocol {p!r}")

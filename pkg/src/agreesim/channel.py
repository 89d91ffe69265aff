"""Received-signal model for one 802.15.4 channel.

A ``SignalTimeline`` collects everything on the air during one handshake:
interference bursts plus the packets and jamming sequences of the protocol
itself. All links in a trial share one received power, so a single
timeline describes what every node hears.

The RSSI register reports the strongest co-channel signal, so the composed
reading at an instant is the maximum of a noise-floor draw and every
(jittered) emission covering that instant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from agreesim.core import Dbm, Micros, RngStream, TimingModel
from agreesim.interference import ActivityTrace

NOISE_FLOOR = (-100.0, -94.0)
SENSITIVITY_DBM = -94.0
DEFAULT_JITTER_DB = 2.0
DEFAULT_CAPTURE_MARGIN_DB = 3.0

INTERFERENCE = "interference"
PACKET = "packet"
JAM = "jam"


class HorizonExhausted(RuntimeError):
    """No idle channel (or not enough simulated trace) before the horizon."""


class Emission(NamedTuple):
    start: Micros
    end: Micros
    power: Dbm
    kind: str
    ref: object = None


@dataclass
class SignalTimeline:
    """Append-only record of emissions on the channel.

    ``interference`` stays sorted by start time; ``transmissions`` holds the
    protocol's own packets and jamming in the order they were scheduled.
    """

    horizon: Micros
    interference: list[Emission] = field(default_factory=list)
    transmissions: list[Emission] = field(default_factory=list)
    noise_floor_range: tuple[Dbm, Dbm] = NOISE_FLOOR
    jitter_db: float = DEFAULT_JITTER_DB

    def __post_init__(self):
        lo, hi = self.noise_floor_range
        if lo > hi:
            raise ValueError("noise floor range must satisfy low <= high")
        if self.jitter_db < 0:
            raise ValueError("jitter must be >= 0 dB")

    @classmethod
    def from_trace(cls, trace: ActivityTrace, source_label: str = "", **kwargs) -> "SignalTimeline":
        emissions = [Emission(s, e, p, INTERFERENCE, source_label) for s, e, p in trace.intervals]
        return cls(trace.horizon, emissions, **kwargs)

    @property
    def emissions(self) -> list[Emission]:
        return self.interference + self.transmissions

    def add_packet(self, start: Micros, airtime: Micros, power: Dbm, packet_id=None) -> Emission:
        em = Emission(start, start + airtime, power, PACKET, packet_id)
        self.transmissions.append(em)
        return em

    def add_jam(self, start: Micros, duration: Micros, power: Dbm, node=None) -> Emission:
        em = Emission(start, start + duration, power, JAM, node)
        self.transmissions.append(em)
        return em


@dataclass(frozen=True)
class Link:
    """A sensor link: received power plus its ambient (non-interference) loss."""

    rx_power: Dbm
    base_loss: float = 0.0
    capture_margin: float = DEFAULT_CAPTURE_MARGIN_DB

    def __post_init__(self):
        if not 0.0 <= self.base_loss <= 1.0:
            raise ValueError("base_loss must be a probability")
        if self.rx_power < SENSITIVITY_DBM:
            raise ValueError(
                f"rx power {self.rx_power} dBm is below the {SENSITIVITY_DBM} dBm sensitivity"
            )


@dataclass(frozen=True)
class RssiSampleRun:
    """Equally spaced RSSI readings taken from ``start`` every ``period`` us."""

    start: Micros
    period: Micros
    values: tuple[Dbm, ...]
    window: tuple[Micros, Micros]

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> list[Micros]:
        return [self.start + i * self.period for i in range(len(self.values))]

    @property
    def samples(self) -> list[tuple[Micros, Dbm]]:
        return list(zip(self.times, self.values))

    def drop_first(self, count: int) -> "RssiSampleRun":
        """The same run without its first ``count`` samples (guard time)."""
        return RssiSampleRun(
            self.start + count * self.period, self.period, self.values[count:], self.window
        )


def rssi_at(timeline: SignalTimeline, t: Micros, rng: RngStream) -> Dbm:
    rnd = rng.random_source.random
    lo, hi = timeline.noise_floor_range
    value = lo + (hi - lo) * rnd()
    jitter = timeline.jitter_db
    for em in timeline.interference:
        if em.start > t:
            break
        if t < em.end:
            v = em.power + jitter * (2.0 * rnd() - 1.0) if jitter else em.power
            if v > value:
                value = v
    for em in timeline.transmissions:
        if em.start <= t < em.end:
            v = em.power + jitter * (2.0 * rnd() - 1.0) if jitter else em.power
            if v > value:
                value = v
    return value


def sample_window(
    timeline: SignalTimeline, start: Micros, t_samp: Micros, timing: TimingModel, rng: RngStream
) -> RssiSampleRun:
    """Fast RSSI sampling: ``t_samp // period`` readings starting at ``start``."""
    period = timing.rssi_sample_period
    if t_samp < period:
        raise ValueError(f"sampling window {t_samp} us is shorter than one sample period")
    count = t_samp // period
    last = start + (count - 1) * period
    rnd = rng.random_source.random
    lo, hi = timeline.noise_floor_range
    span = hi - lo
    values = [lo + span * rnd() for _ in range(count)]
    jitter = timeline.jitter_db
    for emissions, sorted_by_start in ((timeline.interference, True), (timeline.transmissions, False)):
        for em in emissions:
            if em.start > last:
                if sorted_by_start:
                    break
                continue
            if em.end <= start:
                continue
            # sample indices whose time lies in [em.start, em.end)
            j0 = max(0, -((start - em.start) // period))
            j1 = min(count, -((start - em.end) // period))
            power = em.power
            if jitter:
                for j in range(j0, j1):
                    v = power + jitter * (2.0 * rnd() - 1.0)
                    if v > values[j]:
                        values[j] = v
            else:
                for j in range(j0, j1):
                    if power > values[j]:
                        values[j] = power
    return RssiSampleRun(start, period, tuple(values), (start, start + t_samp))


def packet_received(
    timeline: SignalTimeline,
    start: Micros,
    airtime: Micros,
    rx_power: Dbm,
    capture_margin: float,
    base_loss: float,
    rng: RngStream,
) -> bool:
    """All-or-nothing reception of one packet.

    The ambient-loss draw happens first and unconditionally, so the number of
    random draws never depends on the interference pattern.
    """
    if rx_power < SENSITIVITY_DBM:
        raise ValueError(f"rx power {rx_power} dBm is below receiver sensitivity")
    ambient_loss = base_loss > 0.0 and rng.random_source.random() < base_loss
    end = start + airtime
    limit = rx_power - capture_margin
    for em in timeline.interference:
        if em.start >= end:
            break
        if em.end > start and em.power > limit:
            return False
    return not ambient_loss


def detect_jam_floor(run: RssiSampleRun, r_noise: Dbm) -> bool:
    """A jam is present iff no sample sits at or below the noise floor."""
    if not run.values:
        raise ValueError("cannot detect a jam in an empty sample run")
    return min(run.values) > r_noise


def detect_jam_ref(run: RssiSampleRun, r_s: Dbm, delta_r: float, r_noise: Dbm) -> bool:
    """Detection against the reference strength of an earlier packet.

    Samples below ``r_s - delta_r`` count as "no jam". When that threshold
    does not clear the noise floor the rule degenerates to the floor
    detector, including its ``<=`` comparison.
    """
    if not run.values:
        raise ValueError("cannot detect a jam in an empty sample run")
    threshold = r_s - delta_r
    if threshold <= r_noise:
        return detect_jam_floor(run, r_noise)
    return min(run.values) >= threshold


def cca_busy(timeline: SignalTimeline, t: Micros, threshold: Dbm, timing: TimingModel) -> bool:
    """Single clear-channel check over the window ending at ``t``."""
    begin = t - timing.cca_check_duration
    for em in timeline.interference:
        if em.start >= t:
            break
        if em.end > begin and em.power > threshold:
            return True
    return False


def first_cca_idle(
    timeline: SignalTimeline, start: Micros, threshold: Dbm, timing: TimingModel
) -> Micros:
    """Earliest ``t >= start + cca`` whose CCA window ``[t - cca, t)`` is idle."""
    cca = timing.cca_check_duration
    t = start + cca
    for em in timeline.interference:
        if em.power <= threshold or em.end <= t - cca:
            continue
        if em.start >= t:
            break
        t = em.end + cca
    if t > timeline.horizon:
        raise HorizonExhausted(f"no idle CCA window between {start} us and the {timeline.horizon} us horizon")
    return t

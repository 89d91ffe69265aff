"""Idle/busy activity models for 2.4 GHz interferers.

Every source alternates between idle and busy periods drawn from its own
pair of distributions. The presets reconstruct the three interferer
families seen on a single 802.15.4 channel:

* ``oven``: microwave oven, a strict 10 ms on / 10 ms off cycle.
* ``bluetooth``: 625 us hop dwell; only a few of the 79 hop channels
  overlap the monitored 2 MHz channel, so most dwells are invisible.
* ``wifi-heavy`` / ``wifi-light``: 802.11 frames of 200-1500 us separated
  by exponentially distributed gaps (file transfer vs light traffic).
* ``silent``: no interference at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Union

from agreesim.core import Dbm, Micros, RngStream, draw_exponential

# quantile used as the "maximum" of an unbounded distribution
EFFECTIVE_MAX_QUANTILE = 0.999
BLUETOOTH_HIT_PROBABILITY = 4 / 79
DEFAULT_INTERFERENCE_DBM = -55.0
# shortest idle gap of the random sources (802.11b DIFS); longer than one
# RSSI sample period, so every gap is visible to the fast sampler
MIN_IDLE_US = 50


@dataclass(frozen=True)
class PointMass:
    value: Micros

    def __post_init__(self):
        if self.value < 1:
            raise ValueError("point mass duration must be >= 1 us")

    def sample(self, rng: RngStream) -> Micros:
        return self.value

    def mean(self) -> float:
        return float(self.value)

    def upper(self) -> Micros:
        return self.value


@dataclass(frozen=True)
class UniformDuration:
    low: Micros
    high: Micros

    def __post_init__(self):
        if not 1 <= self.low <= self.high:
            raise ValueError(f"need 1 <= low <= high, got [{self.low}, {self.high}]")

    def sample(self, rng: RngStream) -> Micros:
        return rng.randint(self.low, self.high)

    def mean(self) -> float:
        return (self.low + self.high) / 2

    def upper(self) -> Micros:
        return self.high


@dataclass(frozen=True)
class ExponentialDuration:
    """Exponential duration with an optional hard minimum.

    With ``floor_us > 0`` the draw is ``floor_us + Exp(mean_us - floor_us)``,
    so ``mean_us`` stays the overall mean.
    """

    mean_us: float
    floor_us: int = 0

    def __post_init__(self):
        if not self.mean_us > 0:
            raise ValueError("exponential mean must be > 0")
        if not 0 <= self.floor_us < self.mean_us:
            raise ValueError("floor must lie in [0, mean)")

    def sample(self, rng: RngStream) -> Micros:
        if self.floor_us:
            return self.floor_us + draw_exponential(rng, self.mean_us - self.floor_us)
        return draw_exponential(rng, self.mean_us)

    def mean(self) -> float:
        return float(self.mean_us)

    def upper(self) -> Micros:
        # effective maximum, the 99.9th percentile
        tail = self.mean_us - self.floor_us
        return self.floor_us + math.ceil(-tail * math.log(1 - EFFECTIVE_MAX_QUANTILE))


Distribution = Union[PointMass, UniformDuration, ExponentialDuration]


class SourceKind(str, Enum):
    PERIODIC = "periodic"
    BLUETOOTH = "bluetooth"
    WIFI_BURSTY = "wifi"
    SILENT = "silent"


@dataclass(frozen=True)
class InterferenceSource:
    kind: SourceKind
    busy_dist: Distribution | None
    idle_dist: Distribution | None
    rx_power: Dbm = DEFAULT_INTERFERENCE_DBM
    hit_probability: float = 1.0
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.hit_probability <= 1.0:
            raise ValueError("hit_probability must lie in [0, 1]")
        if self.kind is SourceKind.SILENT:
            return
        if self.busy_dist is None or self.idle_dist is None:
            raise ValueError(f"{self.kind.value} source needs busy and idle distributions")
        if self.kind is SourceKind.PERIODIC and not (
            isinstance(self.busy_dist, PointMass) and isinstance(self.idle_dist, PointMass)
        ):
            raise ValueError("periodic sources need point-mass busy and idle periods")

    @property
    def label(self) -> str:
        return self.name or self.kind.value


@dataclass(frozen=True)
class ActivityTrace:
    """Busy intervals ``(start, end, power)`` inside ``[0, horizon)``."""

    intervals: tuple[tuple[Micros, Micros, Dbm], ...]
    horizon: Micros

    def busy_at(self, t: Micros) -> bool:
        return any(s <= t < e for s, e, _ in self.intervals)

    def idle_gaps(self) -> list[Micros]:
        """Lengths of idle periods strictly between two busy intervals."""
        return [b[0] - a[1] for a, b in zip(self.intervals, self.intervals[1:])]


PRESET_NAMES = ("oven", "bluetooth", "wifi-heavy", "wifi-light", "silent")


def preset_source(kind: str | SourceKind, rx_power: Dbm = DEFAULT_INTERFERENCE_DBM) -> InterferenceSource:
    """Build a named interferer preset.

    ``kind`` accepts the preset names in ``PRESET_NAMES`` or a ``SourceKind``
    (``WIFI_BURSTY`` maps to the heavy preset).
    """
    if isinstance(kind, SourceKind):
        kind = {
            SourceKind.PERIODIC: "oven",
            SourceKind.BLUETOOTH: "bluetooth",
            SourceKind.WIFI_BURSTY: "wifi-heavy",
            SourceKind.SILENT: "silent",
        }[kind]
    if kind == "oven":
        return InterferenceSource(
            SourceKind.PERIODIC, PointMass(10_000), PointMass(10_000), rx_power, 1.0, "oven"
        )
    if kind == "bluetooth":
        return InterferenceSource(
            SourceKind.BLUETOOTH,
            PointMass(625),
            ExponentialDuration(1875, MIN_IDLE_US),
            rx_power,
            BLUETOOTH_HIT_PROBABILITY,
            "bluetooth",
        )
    if kind == "wifi-heavy":
        return InterferenceSource(
            SourceKind.WIFI_BURSTY,
            UniformDuration(200, 1500),
            ExponentialDuration(500, MIN_IDLE_US),
            rx_power,
            1.0,
            "wifi-heavy",
        )
    if kind == "wifi-light":
        return InterferenceSource(
            SourceKind.WIFI_BURSTY,
            UniformDuration(200, 1500),
            ExponentialDuration(5000, MIN_IDLE_US),
            rx_power,
            1.0,
            "wifi-light",
        )
    if kind == "silent":
        return InterferenceSource(SourceKind.SILENT, None, None, rx_power, 1.0, "silent")
    raise ValueError(f"unknown interference preset {kind!r}; choose from {', '.join(PRESET_NAMES)}")


def with_overrides(source: InterferenceSource, **params) -> InterferenceSource:
    """Copy of ``source`` with distribution parameters replaced.

    Accepted keys: ``rx_power``, ``hit_probability``, ``busy`` and ``idle``
    (point-mass value), ``busy_low``/``busy_high``, ``idle_mean``,
    ``idle_floor``, ``busy_mean``.
    """
    busy, idle = source.busy_dist, source.idle_dist
    changes = {}
    for key, value in params.items():
        if key == "rx_power":
            changes["rx_power"] = float(value)
        elif key == "hit_probability":
            changes["hit_probability"] = float(value)
        elif key == "busy":
            busy = PointMass(int(value))
        elif key == "idle":
            idle = PointMass(int(value))
        elif key == "busy_low" and isinstance(busy, UniformDuration):
            busy = UniformDuration(int(value), busy.high)
        elif key == "busy_high" and isinstance(busy, UniformDuration):
            busy = UniformDuration(busy.low, int(value))
        elif key == "busy_mean":
            busy = ExponentialDuration(float(value))
        elif key == "idle_mean":
            floor = idle.floor_us if isinstance(idle, ExponentialDuration) else 0
            idle = ExponentialDuration(float(value), floor)
        elif key == "idle_floor" and isinstance(idle, ExponentialDuration):
            idle = ExponentialDuration(idle.mean_us, int(value))
        else:
            raise KeyError(f"source {source.label!r} has no parameter {key!r}")
    return replace(source, busy_dist=busy, idle_dist=idle, **changes)


def generate_trace(source: InterferenceSource, horizon: Micros, rng: RngStream) -> ActivityTrace:
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    if source.kind is SourceKind.SILENT:
        return ActivityTrace((), horizon)

    busy_dist, idle_dist = source.busy_dist, source.idle_dist
    power = source.rx_power
    intervals = []
    if source.kind is SourceKind.PERIODIC:
        # random phase over one full cycle; the cycle starts with its idle part
        busy, idle = busy_dist.value, idle_dist.value
        period = busy + idle
        t = -rng.randint(0, period - 1)
        while t < horizon:
            start = t + idle
            end = start + busy
            if end > 0 and start < horizon:
                intervals.append((max(start, 0), min(end, horizon), power))
            t = end
        return ActivityTrace(tuple(intervals), horizon)

    hit = source.hit_probability
    t = idle_dist.sample(rng)
    while t < horizon:
        busy = busy_dist.sample(rng)
        end = t + busy
        if hit >= 1.0 or rng.random() < hit:
            intervals.append((t, min(end, horizon), power))
        t = end + idle_dist.sample(rng)
    return ActivityTrace(tuple(intervals), horizon)


def max_busy(source: InterferenceSource) -> Micros:
    """Longest busy period; 99.9th percentile for unbounded distributions."""
    if source.kind is SourceKind.SILENT:
        return 0
    return source.busy_dist.upper()


def max_idle(source: InterferenceSource) -> Micros | None:
    """Longest idle period; 99.9th percentile for unbounded distributions.

    ``None`` for a silent source, which is idle forever.
    """
    if source.kind is SourceKind.SILENT:
        return None
    return source.idle_dist.upper()

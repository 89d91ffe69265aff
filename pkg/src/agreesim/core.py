"""Time, power, randomness and timing constants shared by every module.

Times are plain ``int`` microseconds and powers are ``float`` dBm. Keeping
them as builtin numbers keeps the per-trial hot loops cheap; the aliases
below exist for readability of signatures.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

import numpy as np

Micros = int
Dbm = float

# 802.15.4 O-QPSK at 250 kbit/s
US_PER_BYTE = 32
MAX_FRAME_BYTES = 127


@dataclass(frozen=True)
class TimingModel:
    """Radio and stack timing, all in microseconds."""

    rssi_sample_period: Micros = 20
    rssi_readout_latency: Micros = 21
    rssi_settle_time: Micros = 128
    ack_airtime: Micros = 782
    ack_processing_plus_send: Micros = 2083
    # receive, decode and hand a frame to the application before a reply can
    # be prepared; not measured on hardware, see README "Timing model"
    rx_processing: Micros = 2083
    cca_check_duration: Micros = 128
    turnaround: Micros = 192
    phy_overhead_bytes: int = 6
    mac_overhead_bytes: int = 11

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"{f.name} must be an integer, got {value!r}")
            if f.name.endswith("_bytes"):
                if value < 0:
                    raise ValueError(f"{f.name} must be >= 0, got {value}")
            elif f.name == "rx_processing":
                if value < 0:
                    raise ValueError(f"rx_processing must be >= 0, got {value}")
            elif value <= 0:
                raise ValueError(f"{f.name} must be > 0 us, got {value}")

    def data_packet_airtime(self, payload_bytes: int) -> Micros:
        if payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")
        total = payload_bytes + self.phy_overhead_bytes + self.mac_overhead_bytes
        return total * US_PER_BYTE

    @property
    def message_gap(self) -> Micros:
        """End of a received packet to on-air start of the reply packet."""
        return self.rx_processing + self.ack_processing_plus_send

    @property
    def max_payload_bytes(self) -> int:
        return MAX_FRAME_BYTES - self.mac_overhead_bytes


def make_timing_model(overrides: Mapping[str, Any] | None = None) -> TimingModel:
    overrides = dict(overrides or {})
    known = {f.name for f in fields(TimingModel)}
    unknown = set(overrides) - known
    if unknown:
        raise KeyError(f"unknown timing field(s): {', '.join(sorted(unknown))}")
    return replace(TimingModel(), **overrides)


class _SeededRandom(random.Random):
    """``random.Random(seed)`` without the second seeding pass.

    ``Random.__new__`` already seeds from its argument and ``__init__`` then
    seeds again; skipping the repeat halves the construction cost and yields
    exactly the same stream.
    """

    def __init__(self, seed):
        self.gauss_next = None


def _derive_seed(seed: int, stream_id: str) -> int:
    digest = hashlib.blake2b(
        f"{seed & 0xFFFFFFFFFFFFFFFF}\x00{stream_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A named, reproducible random stream.

    The generator state is keyed by ``(seed, stream_id)`` through a hash, so
    a stream never depends on how many draws any other stream made. Child
    streams extend the id path: ``RngStream(1, "a").child("b")`` is the same
    stream as ``RngStream(1, "a/b")``.

    The underlying generator is created lazily because seeding costs a few
    microseconds per stream and silent sources never draw.
    """

    __slots__ = ("seed", "stream_id", "_rand")

    def __init__(self, seed: int, stream_id: str = "root"):
        self.seed = int(seed)
        self.stream_id = stream_id
        self._rand: random.Random | None = None

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"

    @property
    def derived_seed(self) -> int:
        return _derive_seed(self.seed, self.stream_id)

    @property
    def random_source(self) -> random.Random:
        if self._rand is None:
            self._rand = _SeededRandom(self.derived_seed)
        return self._rand

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.stream_id}/{label}")

    def random(self) -> float:
        return self.random_source.random()

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random_source.random()

    def randint(self, low: int, high: int) -> int:
        """Integer uniform on the closed range ``[low, high]``."""
        return low + int(self.random_source.random() * (high - low + 1))

    def bernoulli(self, p: float) -> bool:
        return self.random_source.random() < p

    def numpy(self) -> np.random.Generator:
        """A numpy generator keyed by the same (seed, stream_id)."""
        return np.random.Generator(np.random.PCG64(self.derived_seed))


def draw_exponential(rng: RngStream, mean: Micros) -> Micros:
    """Exponential duration with the given mean, rounded to whole us (>= 1)."""
    if not mean > 0:
        raise ValueError(f"exponential mean must be > 0, got {mean}")
    u = rng.random_source.random()
    return max(1, round(-mean * math.log(1.0 - u)))

"""Closed-form agreement probabilities and packet-success formulas.

These serve as oracles for the simulator: on a channel that loses every
message independently with probability ``1 - p`` an n-way handshake ends in

* positive agreement with probability ``p**n``,
* negative agreement with probability ``1 - p**(n-1)``,
* disagreement with probability ``p**(n-1) * (1 - p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from agreesim.core import Micros, RngStream
from agreesim.interference import InterferenceSource, max_busy, max_idle

PA, NA, DA = "positive", "negative", "disagreement"


@dataclass(frozen=True)
class OutcomeProbs:
    pa: float
    na: float
    da: float

    def __post_init__(self):
        for name in ("pa", "na", "da"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValueError(f"{name}={v} is not a probability")
        if abs(self.pa + self.na + self.da - 1.0) > 1e-12:
            raise ValueError("outcome probabilities must sum to 1")

    def as_tuple(self) -> tuple[float, float, float]:
        return self.pa, self.na, self.da


def _check_p(p: float):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")


def handshake_outcome_probs(p: float, n: int) -> OutcomeProbs:
    _check_p(p)
    if n < 2:
        raise ValueError(f"an n-way handshake needs n >= 2, got {n}")
    head = p ** (n - 1)
    return OutcomeProbs(head * p, 1.0 - head, head * (1.0 - p))


def ack_train_outcome_probs(p: float, trains: int) -> OutcomeProbs:
    """Ack-2 with a train of ``trains`` ACKs, each lost independently."""
    _check_p(p)
    if trains < 1:
        raise ValueError("train length must be >= 1")
    all_lost = (1.0 - p) ** trains
    return OutcomeProbs(p * (1.0 - all_lost), 1.0 - p, p * all_lost)


def packet_success_periodic(t_off: Micros, t_pkt: Micros) -> float:
    """Chance a packet sent at a uniform instant of a fixed idle period fits."""
    if t_off <= 0:
        raise ValueError("idle period must be > 0")
    return max(t_off - t_pkt, 0) / t_off


def packet_success_exponential(mean_idle: float, t_pkt: float) -> float:
    """Chance a packet fits into the residual of an exponential idle period."""
    if not mean_idle > 0:
        raise ValueError("mean idle time must be > 0")
    if t_pkt == math.inf:
        return 0.0
    return math.exp(-t_pkt / mean_idle)


def abstract_channel_trial(p: float, n: int, rng: RngStream) -> str:
    """One n-way handshake over an i.i.d. Bernoulli(p) message channel."""
    _check_p(p)
    if n < 2:
        raise ValueError(f"an n-way handshake needs n >= 2, got {n}")
    rnd = rng.random_source.random
    for i in range(1, n + 1):
        if not rnd() < p:
            return DA if i == n else NA
    return PA


def abstract_channel_batch(p: float, n: int, trials: int, rng: RngStream) -> tuple[int, int, int]:
    """Counts ``(pa, na, da)`` of ``trials`` independent abstract handshakes.

    Draws the full ``trials x n`` matrix of message fates and locates the
    first lost message per row, the same process as ``abstract_channel_trial``.
    """
    _check_p(p)
    if n < 2:
        raise ValueError(f"an n-way handshake needs n >= 2, got {n}")
    gen = rng.numpy()
    pa = na = da = 0
    chunk = 250_000
    for begin in range(0, trials, chunk):
        rows = min(chunk, trials - begin)
        ok = gen.random((rows, n)) < p
        all_ok = ok.all(axis=1)
        first_loss = np.argmin(ok, axis=1)
        pa += int(all_ok.sum())
        da += int((~all_ok & (first_loss == n - 1)).sum())
        na += int((~all_ok & (first_loss < n - 1)).sum())
    return pa, na, da


@dataclass(frozen=True)
class CalibrationBounds:
    min_t_jam: Micros
    max_t_msg: Micros | None


def calibration_bounds(source: InterferenceSource, sample_period: Micros = 20) -> CalibrationBounds:
    """Shortest jam that cannot be mimicked by one busy period, longest safe message.

    The jam window must put its first and last RSSI samples more than one
    busy period apart, which takes ``ceil(busy / period) + 1`` samples. For a
    busy period that is a multiple of the sample period this equals
    ``max_busy + period``. ``max_t_msg`` is ``None`` when the source is never
    busy.
    """
    busy = max_busy(source)
    samples = -(-busy // sample_period) + 1
    idle = max_idle(source)
    return CalibrationBounds(samples * sample_period, None if idle is None else idle - 1)

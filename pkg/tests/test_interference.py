import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from agreesim.core import RngStream
from agreesim.interference import (
    BLUETOOTH_HIT_PROBABILITY,
    PRESET_NAMES,
    ExponentialDuration,
    InterferenceSource,
    PointMass,
    SourceKind,
    UniformDuration,
    generate_trace,
    max_busy,
    max_idle,
    preset_source,
    with_overrides,
)


def _busy_lengths(trace):
    return [e - s for s, e, _ in trace.intervals]


def test_oven_busy_always_10ms():
    src = preset_source("oven")
    for seed in range(50):
        trace = generate_trace(src, 200_000, RngStream(seed, "oven"))
        inner = trace.intervals[1:-1]
        assert inner and all(e - s == 10_000 for s, e, _ in inner)


def test_bluetooth_busy_at_most_625():
    src = preset_source("bluetooth")
    trace = generate_trace(src, 5_000_000, RngStream(1, "bt"))
    assert trace.intervals
    assert max(_busy_lengths(trace)) <= 625


def test_silent_yields_no_intervals():
    src = preset_source("silent")
    for horizon in (1, 1000, 10**7):
        assert generate_trace(src, horizon, RngStream(0)).intervals == ()


def test_unknown_preset_rejected():
    with pytest.raises(ValueError):
        preset_source("toaster")


def test_periodic_needs_point_masses():
    with pytest.raises(ValueError):
        InterferenceSource(SourceKind.PERIODIC, UniformDuration(1, 5), PointMass(3))


def _oracle_periodic_count(phase, horizon, busy=10_000, idle=10_000):
    """Busy intervals touching [0, horizon) when the first cycle starts at -phase."""
    count = 0
    for c in range(-2, horizon // (busy + idle) + 3):
        start = -phase + c * (busy + idle) + idle
        if start + busy > 0 and start < horizon and c >= 0:
            count += 1
    return count


def test_periodic_count_over_100ms():
    src = preset_source("oven")
    for seed in range(200):
        rng = RngStream(seed, "count")
        phase = RngStream(seed, "count").randint(0, 19_999)
        trace = generate_trace(src, 100_000, rng)
        assert len(trace.intervals) == _oracle_periodic_count(phase, 100_000)
        assert 4 <= len(trace.intervals) <= 6


def test_periodic_starts_20ms_apart():
    trace = generate_trace(preset_source("oven"), 500_000, RngStream(9, "p"))
    starts = [s for s, _, _ in trace.intervals]
    # the first start may be clipped at time 0
    assert all(b - a == 20_000 for a, b in zip(starts[1:], starts[2:]))


def test_horizon_one_has_at_most_one_interval():
    for name in PRESET_NAMES:
        for seed in range(20):
            assert len(generate_trace(preset_source(name), 1, RngStream(seed)).intervals) <= 1


def test_horizon_zero_rejected():
    with pytest.raises(ValueError):
        generate_trace(preset_source("oven"), 0, RngStream(1))


def test_wifi_mean_idle_gap():
    trace = generate_trace(preset_source("wifi-heavy"), 10**7, RngStream(4, "wifi"))
    gaps = trace.idle_gaps()
    assert abs(np.mean(gaps) - 500) < 0.05 * 500


def test_wifi_busy_uniform_range():
    trace = generate_trace(preset_source("wifi-light"), 10**7, RngStream(4, "wifi"))
    lengths = _busy_lengths(trace)[:-1]
    assert min(lengths) >= 200 and max(lengths) <= 1500
    assert abs(np.mean(lengths) - 850) < 30


def test_bluetooth_hit_fraction():
    src = with_overrides(preset_source("bluetooth"), idle_floor=0)
    horizon = 2 * 10**7
    trace = generate_trace(src, horizon, RngStream(8, "bt"))
    # expected number of hops is horizon / (busy + idle)
    hops = horizon / (625 + 1875)
    assert abs(len(trace.intervals) / hops - BLUETOOTH_HIT_PROBABILITY) < 0.005


def test_max_busy_values():
    assert max_busy(preset_source("oven")) == 10_000
    assert max_busy(preset_source("bluetooth")) == 625
    assert max_busy(preset_source("silent")) == 0
    assert max_busy(preset_source("wifi-heavy")) == 1500


def test_max_idle_is_999th_percentile():
    src = preset_source("wifi-heavy")
    # shifted exponential: floor + tail * -ln(0.001)
    expected = 50 + math.ceil(-450 * math.log(0.001))
    assert max_idle(src) == expected
    assert max_idle(preset_source("oven")) == 10_000
    assert max_idle(preset_source("silent")) is None


def test_exponential_floor_keeps_mean():
    dist = ExponentialDuration(500, 50)
    rng = RngStream(2, "floor")
    draws = [dist.sample(rng) for _ in range(200_000)]
    assert min(draws) >= 50
    assert abs(np.mean(draws) - 500) < 5


def test_overrides():
    src = with_overrides(preset_source("wifi-heavy"), idle_mean=800, busy_high=900, rx_power=-70)
    assert src.idle_dist.mean() == 800
    assert src.busy_dist.high == 900
    assert src.rx_power == -70
    with pytest.raises(KeyError):
        with_overrides(src, nonsense=1)


def test_rx_power_propagates():
    trace = generate_trace(preset_source("oven", -62.0), 50_000, RngStream(1))
    assert {p for _, _, p in trace.intervals} == {-62.0}


sources = st.sampled_from(PRESET_NAMES).flatmap(
    lambda name: st.builds(
        lambda mean, lo, width, hit: preset_source(name) if name in ("oven", "silent") else
        InterferenceSource(
            SourceKind.WIFI_BURSTY if name.startswith("wifi") else SourceKind.BLUETOOTH,
            UniformDuration(lo, lo + width),
            ExponentialDuration(mean),
            -55.0,
            hit,
            name,
        ),
        st.integers(1, 5000),
        st.integers(1, 3000),
        st.integers(0, 3000),
        st.floats(0.0, 1.0),
    )
)


@given(sources, st.integers(1, 200_000), st.integers(0, 2**32))
def test_trace_invariants(src, horizon, seed):
    trace = generate_trace(src, horizon, RngStream(seed, "fuzz"))
    prev_end = 0
    for s, e, _ in trace.intervals:
        assert 0 <= s < e <= horizon
        assert s >= prev_end
        prev_end = e
    again = generate_trace(src, horizon, RngStream(seed, "fuzz"))
    assert again == trace


def test_trace_invariants_ten_thousand_configs():
    cfg_rng = RngStream(2024, "configs")
    for i in range(10_000):
        kind = cfg_rng.randint(0, 2)
        if kind == 0:
            src = InterferenceSource(SourceKind.PERIODIC, PointMass(cfg_rng.randint(1, 5000)),
                                     PointMass(cfg_rng.randint(1, 5000)))
        else:
            lo = cfg_rng.randint(1, 2000)
            src = InterferenceSource(
                SourceKind.BLUETOOTH if kind == 1 else SourceKind.WIFI_BURSTY,
                UniformDuration(lo, lo + cfg_rng.randint(0, 2000)),
                ExponentialDuration(cfg_rng.randint(1, 5000), cfg_rng.randint(0, 1)),
                -55.0,
                cfg_rng.random(),
            )
        horizon = cfg_rng.randint(1, 30_000)
        trace = generate_trace(src, horizon, RngStream(i, "fuzz"))
        prev_end = 0
        for s, e, _ in trace.intervals:
            assert prev_end <= s < e <= horizon
            prev_end = e

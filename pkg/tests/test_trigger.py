import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from platoon_safety.dynamics import GainSet
from platoon_safety.trigger import DangerLog, TriggerState, effective_gains, evaluate_trigger, poisson_dangers


def replay(log, deliveries, speeds, threshold=0.05):
    """Latch series for a whole trace; ``deliveries[k]`` lists recipients at step k."""
    state = TriggerState.idle(speeds.shape[1])
    out = []
    for k in range(speeds.shape[0]):
        state = evaluate_trigger(log, k, deliveries.get(k, []), state, speeds[k], threshold)
        out.append(state.theta)
    return np.array(out)


def test_no_dangers_never_latches():
    speeds = np.full((50, 3), 20.0)
    assert not replay(DangerLog(), {}, speeds).any()


def test_detecting_vehicle_latches_at_detection():
    log = DangerLog()
    log.record(100, 0)
    theta = replay(log, {}, np.full((120, 2), 20.0))
    assert theta[99, 0] == 0 and theta[100, 0] == 1 and theta[100, 1] == 0


def test_warning_latch_holds_until_standstill():
    log = DangerLog()
    log.record(10, 0)
    speeds = np.full((60, 2), 20.0)
    speeds[40:, 1] = 0.01
    theta = replay(log, {17: [1]}, speeds)
    assert theta[16, 1] == 0
    assert theta[17:40, 1].all()
    assert not theta[40:, 1].any()


def test_unknown_recipient_rejected():
    with pytest.raises(ValueError):
        evaluate_trigger(DangerLog(), 0, [5], TriggerState.idle(2), [1.0, 1.0])


def test_vehicle_already_at_rest_is_not_latched():
    state = evaluate_trigger(DangerLog(), 0, [1], TriggerState.idle(2), [10.0, 0.0])
    assert state.theta == (0, 0)


def test_danger_log_order():
    log = DangerLog()
    log.record(3, 0)
    with pytest.raises(ValueError):
        log.record(3, 1)
    assert log.up_to(2).steps == []


def test_effective_gains():
    g = GainSet()
    assert effective_gains(g, 0) == (0.1, 0.23)
    assert effective_gains(g, 1) == pytest.approx((0.14, 0.34))
    zero = g.without_addon()
    assert effective_gains(zero, 1) == effective_gains(zero, 0)
    with pytest.raises(ValueError):
        effective_gains(g, 2)


@st.composite
def braking_traces(draw):
    n = draw(st.integers(1, 4))
    steps = draw(st.integers(5, 80))
    k0 = draw(st.integers(0, steps - 1))
    detector = draw(st.integers(0, n - 1))
    delays = [draw(st.integers(0, 20)) for _ in range(n)]
    speeds = np.zeros((steps, n))
    stops = []
    for i in range(n):
        v0 = draw(st.floats(1.0, 40.0))
        stop = draw(st.integers(0, steps + 10))
        ramp = np.linspace(v0, 0.0, max(stop, 1) + 1)
        col = np.concatenate([ramp, np.zeros(steps)])[:steps]
        speeds[:, i] = col
        stops.append(stop)
    return n, steps, k0, detector, delays, speeds


@settings(max_examples=300, deadline=None)
@given(braking_traces())
def test_latch_is_one_block_ending_at_standstill(case):
    n, steps, k0, detector, delays, speeds = case
    log = DangerLog()
    log.record(k0, detector)
    deliveries = {}
    for i in range(n):
        if i != detector:
            deliveries.setdefault(k0 + delays[i], []).append(i)
    theta = replay(log, deliveries, speeds)
    for i in range(n):
        start = k0 if i == detector else k0 + delays[i]
        col = theta[:, i]
        ones = np.flatnonzero(col)
        moving = start < steps and speeds[start, i] > 0.05
        if not moving:
            assert not ones.size
            continue
        rest = np.flatnonzero(speeds[start:, i] <= 0.05)
        end = start + rest[0] if rest.size else steps
        assert list(ones) == list(range(start, end))


def test_poisson_dangers_have_uncorrelated_gaps():
    rng = np.random.default_rng(3)
    log = poisson_dangers(2.0, 2_000_000, 0.01, 3, rng)
    gaps = np.diff(log.steps).astype(float)
    assert len(gaps) > 10_000
    g = gaps - gaps.mean()
    lag1 = np.dot(g[:-1], g[1:]) / np.dot(g, g)
    assert abs(lag1) < 4 / np.sqrt(len(g))
    assert np.mean(gaps) * 0.01 == pytest.approx(0.5, rel=0.05)
    assert set(log.vehicles) == {0, 1, 2}

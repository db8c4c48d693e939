import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import queue_recursion
from platoon_safety.channels import (
    ChannelKind, LatencyParams, Packet, QueueState, WarningChannel, advance_queue_slot, delay_to_steps,
    delivery_delay_5g, delivery_delay_lte, delivery_delay_nc, fifo_schedule, mm1_waiting_time,
    rate_stability_check,
)


@pytest.mark.parametrize("rt", [0.7, 1.5, 0.0])
def test_reaction_delay(rt):
    assert delivery_delay_nc(LatencyParams(reaction_time=rt)) == rt


def test_lte_delay_examples():
    p = LatencyParams()
    assert delivery_delay_lte(p, 0.0) == pytest.approx(0.015)
    assert delivery_delay_lte(p, 0.05) == pytest.approx(0.065)
    with pytest.raises(ValueError):
        delivery_delay_lte(p, -0.01)


def test_5g_delay_range():
    rng = np.random.default_rng(0)
    d = [delivery_delay_5g(LatencyParams(), rng) for _ in range(2000)]
    assert 0.020 <= min(d) and max(d) <= 0.030


def test_5g_degenerate_cases():
    rng = np.random.default_rng(0)
    assert delivery_delay_5g(LatencyParams(fast_min=0.001, fast_max=0.001), rng) == pytest.approx(0.016)
    bare = LatencyParams(uplink=0.0, downlink=0.0)
    assert 0.005 <= delivery_delay_5g(bare, rng) <= 0.015


@pytest.mark.parametrize("delay, steps", [(0.065, 7), (0.7, 70), (0.0, 0), (0.02, 2), (0.021, 3)])
def test_delay_to_steps(delay, steps):
    assert delay_to_steps(delay, 0.01) == steps


def test_delay_to_steps_floor_and_errors():
    assert delay_to_steps(0.021, 0.01, "floor") == 2
    with pytest.raises(ValueError):
        delay_to_steps(-1.0, 0.01)
    with pytest.raises(ValueError):
        delay_to_steps(0.1, 0.01, "nearest")


def test_stability_constant_traces():
    rep = rate_stability_check(np.full(50, 2), np.full(50, 3))
    assert rep.stable and rep.average == -1
    rep = rate_stability_check(np.full(50, 3), np.full(50, 2))
    assert not rep.stable and rep.average == 1
    with pytest.raises(ValueError):
        rate_stability_check([1, 2], [1])


def test_queue_recursion_oracle_examples():
    # second slot starts with 2 queued, 3 arrive, 4 could leave
    assert queue_recursion([2, 3], [0, 4]) == [0, 2, 3]
    assert queue_recursion([0], [5]) == [0, 0]


def run_queue(slots, rate=10.0, service=20.0, slot=0.01, seed=0):
    q = QueueState(slot, rate, service)
    rng = np.random.default_rng(seed)
    departed = []
    for _ in range(slots):
        _, out = advance_queue_slot(q, rng)
        departed.extend(out)
    return q, departed


def test_stepper_follows_slot_recursion():
    q, _ = run_queue(20_000, rate=18.0, service=20.0)
    expected = queue_recursion(q.arrivals, q.capacity)
    assert q.lengths == expected[:-1]
    assert q.length == expected[-1]


def test_long_run_rate_balance():
    q, _ = run_queue(100_000)
    rep = rate_stability_check(q.arrivals, q.capacity)
    assert rep.stable
    # per slot: lambda*slot - mu*slot
    assert rep.average == pytest.approx((10.0 - 20.0) * 0.01, abs=0.01)


def test_stepper_is_fifo():
    _, departed = run_queue(20_000)
    arr = [pk.arrival for pk in departed]
    dep = [pk.departure for pk in departed]
    assert arr == sorted(arr)
    assert np.all(np.diff(dep) > 0)
    assert all(pk.start >= pk.arrival for pk in departed)


def test_vectorized_schedule_matches_stepper():
    _, departed = run_queue(20_000, rate=15.0)
    start, dep = fifo_schedule([p.arrival for p in departed], [p.service for p in departed], 0.01)
    np.testing.assert_allclose(dep, [p.departure for p in departed], atol=1e-9, rtol=0)
    np.testing.assert_allclose(start, [p.start for p in departed], atol=1e-9, rtol=0)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0.001, 1)), min_size=1, max_size=40))
def test_schedule_recurrence(jobs):
    jobs.sort()
    arrivals = [a for a, _ in jobs]
    services = [s for _, s in jobs]
    slot = 0.1
    start, dep = fifo_schedule(arrivals, services, slot)
    prev = 0.0
    for a, s, st_, d in zip(arrivals, services, start, dep):
        eligible = (np.floor(a / slot) + 1) * slot
        assert st_ == pytest.approx(max(eligible, prev), abs=1e-9)
        assert d == pytest.approx(st_ + s, abs=1e-9)
        prev = d


def test_preloaded_queue_discharge():
    ts = 0.01
    q = QueueState(ts, 0.0, 1.0 / ts, service_time=ts)
    q.preload(Packet(0.0, ts) for _ in range(3))
    warning = Packet(0.0, ts, warning=True)
    q.offer(warning)
    rng = np.random.default_rng(0)
    for _ in range(6):
        advance_queue_slot(q, rng)
    assert q.capacity[:4] == [1, 1, 1, 1]
    assert warning.sojourn == pytest.approx(3 * ts + ts)


def test_offer_in_the_past_rejected():
    q = QueueState(0.01, 0.0, 10.0, k=5)
    with pytest.raises(ValueError):
        q.offer(Packet(0.0, 0.01))


def test_mm1_formula():
    assert mm1_waiting_time(10, 20) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        mm1_waiting_time(20, 20)


def test_channel_kind_parse():
    assert ChannelKind.parse("SV2I") is ChannelKind.SV2I
    with pytest.raises(ValueError):
        ChannelKind.parse("wifi")


def test_sampled_channels():
    rng = np.random.default_rng(1)
    sv = WarningChannel("sv2i", LatencyParams(), 0.01, rng)
    out = sv.broadcast(0, [1, 2, 3])
    assert set(out) == {1, 2, 3}
    assert all(0.02 <= d <= 0.03 for d in out.values())
    lte = WarningChannel("v2i", LatencyParams(), 0.01, rng)
    assert all(d >= 0.015 for d in lte.broadcast(0, [1, 2]).values())
    nc = WarningChannel("nc", LatencyParams(), 0.01, rng)
    assert nc.hop_delay() == 0.7 and nc.steps(nc.hop_delay()) == 70
    with pytest.raises(ValueError):
        nc.broadcast(0, [1])


def test_mechanistic_channel_shares_one_packet():
    rng = np.random.default_rng(4)
    chan = WarningChannel("v2i", LatencyParams(), 0.01, rng, queue_mode="mechanistic", warmup=2.0)
    assert chan.queue is not None and not chan.unstable
    assert chan.broadcast(0, [1, 2]) == {}
    got = []
    for _ in range(1000):
        got.extend(chan.advance())
        if got:
            break
    assert {i for _, i, _ in got} == {1, 2}
    delays = {d for _, _, d in got}
    assert len(delays) == 1 and delays.pop() >= 0.015


def test_mechanistic_channel_flags_saturation():
    chan = WarningChannel("v2i", LatencyParams(arrival_rate=25.0), 0.01, np.random.default_rng(0),
                          queue_mode="mechanistic", warmup=0.1)
    assert chan.unstable


def test_bad_queue_mode():
    with pytest.raises(ValueError):
        WarningChannel("v2i", LatencyParams(), 0.01, np.random.default_rng(0), queue_mode="live")

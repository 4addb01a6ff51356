import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctdsim.mobility import generate_random_waypoint, static_trace
from ctdsim.model import Hello
from ctdsim.radio import RadioConfig, neighbors_of, schedule_broadcast, schedule_unicast

CFG = RadioConfig()


def test_defaults():
    assert CFG.range_m == 100
    assert CFG.hop_latency_ms == 2
    with pytest.raises(ValueError):
        RadioConfig(range_m=0)


@pytest.mark.parametrize("gap,expected", [(99, {1}), (100, {1}), (101, set())])
def test_disk_boundary(gap, expected):
    tr = static_trace([(0, 0), (gap, 0)], 500, 500)
    assert neighbors_of(0, 0, tr, CFG) == expected
    assert neighbors_of(1, 0, tr, CFG) == ({0} if expected else set())


def test_collinear_three():
    tr = static_trace([(0, 0), (90, 0), (180, 0)], 500, 500)
    assert neighbors_of(1, 0, tr, CFG) == {0, 2}
    assert neighbors_of(0, 0, tr, CFG) == {1}
    assert neighbors_of(2, 0, tr, CFG) == {1}


def test_broadcast_fan_out():
    tr = static_trace([(250, 250), (260, 250), (240, 250), (250, 260), (250, 240), (450, 450)],
                      500, 500)
    ds = schedule_broadcast(0, Hello(0), 1000, tr, CFG)
    assert sorted(d.receiver for d in ds) == [1, 2, 3, 4]
    assert {d.deliver_at for d in ds} == {1002}
    assert schedule_broadcast(5, Hello(5), 1000, tr, CFG) == []


def test_unicast():
    tr = static_trace([(0, 0), (50, 0), (150, 0)], 500, 500)
    msg = Hello(0)
    d = schedule_unicast(0, 1, msg, 10, tr, CFG)
    assert (d.receiver, d.deliver_at) == (1, 12)
    assert schedule_unicast(0, 2, msg, 10, tr, CFG) is None
    assert schedule_unicast(0, 0, msg, 10, tr, CFG) is None


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t_ms=st.integers(0, 600_000))
def test_connectivity_symmetric_and_fan_out_exact(seed, t_ms):
    tr = generate_random_waypoint((300, 300), 30, 600, rng=np.random.default_rng(seed))
    nbrs = [neighbors_of(i, t_ms, tr, CFG) for i in range(30)]
    for a in range(30):
        assert a not in nbrs[a]
        for b in nbrs[a]:
            assert a in nbrs[b]
        assert len(schedule_broadcast(a, Hello(a), t_ms, tr, CFG)) == len(nbrs[a])

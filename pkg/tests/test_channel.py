import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdlnn.channel import (C_LIGHT, PerturbationEvent, Reflector, Scene, Tap, TapSet, Trajectory,
                           Transmitter, apply_channel, apply_events, evolve_channel, merge_taps,
                           trace_paths, trace_scene)
from tdlnn.errors import EmptyChannelError, InvalidArgumentError
from tdlnn.signal import ComplexSignal, generate_bits, oversample, qpsk_modulate

F_C = 900e6
LAM = C_LIGHT / F_C


def _path_gain(d, coeff=1.0):
    # independent restatement of the free-space ray model
    return LAM / (4 * math.pi * d) * coeff * cmath.exp(-2j * math.pi * d / LAM)


def _wall(y, x0=-200.0, x1=300.0, coefficient=-0.7):
    return Reflector((x0, y), (x1, y), coefficient)


# --- tracing -------------------------------------------------------------------

def test_free_space_delay():
    d = 299.792458
    ts = trace_paths(Scene((Transmitter((0.0, 0.0)),), (d, 0.0)))
    assert ts.delays.tolist() == [50]
    assert abs(ts.gains[0]) == pytest.approx(1.0)


def test_single_reflector_geometry():
    ts = trace_paths(Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (_wall(50.0),)))
    assert ts.delays.tolist() == [17, 24]
    d_b = math.hypot(100, 100)
    expected = _path_gain(d_b, -0.7) / _path_gain(100.0)
    assert ts.gains[1] / ts.gains[0] == pytest.approx(expected, rel=1e-9)
    assert max(abs(ts.gains)) == pytest.approx(1.0)


def test_normalization_recorded():
    scene = Scene((Transmitter((0.0, 0.0), power_dbm=30.0),), (100.0, 0.0), (_wall(50.0),))
    ts = trace_paths(scene)
    raw_los = math.sqrt(1e3) * abs(_path_gain(100.0))
    assert ts.normalization == pytest.approx(1 / raw_los, rel=1e-9)


def test_co_delayed_rays_summed():
    # symmetric walls give two equal-length bounces in the same bin
    one = trace_paths(Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (_wall(50.0),)))
    two = trace_paths(Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (_wall(50.0), _wall(-50.0))))
    assert two.delays.tolist() == [17, 24]
    assert two.gains[1] == pytest.approx(2 * one.gains[1], rel=1e-9)


def test_los_blocked_by_segment():
    blocker = Reflector((50.0, -5.0), (50.0, 5.0))
    ts = trace_paths(Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (blocker, _wall(50.0))))
    assert 17 not in ts.delays.tolist()
    assert ts.delays.tolist() == [24]


def test_fully_blocked_raises():
    blocker = Reflector((50.0, -5.0), (50.0, 5.0))
    # the blocker cannot reflect toward the receiver (tx and rx on opposite sides)
    with pytest.raises(EmptyChannelError):
        trace_paths(Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (blocker,)))


def test_reflection_point_outside_segment_is_ignored():
    short = Reflector((200.0, 50.0), (260.0, 50.0))
    ts = trace_paths(Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (short,)))
    assert ts.delays.tolist() == [17]


def test_max_bounces_zero_is_los_only():
    ts = trace_paths(Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (_wall(50.0),), max_bounces=0))
    assert ts.delays.tolist() == [17]


def test_double_bounce_between_parallel_walls():
    scene = Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (_wall(20.0), _wall(-20.0)), max_bounces=2)
    ts = trace_paths(scene)
    # two-bounce image sits at y = +-80: length sqrt(100^2 + 80^2)
    d2 = math.hypot(100, 80)
    assert round(d2 / C_LIGHT / 20e-9) in ts.delays.tolist()
    k = ts.delays.tolist().index(round(d2 / C_LIGHT / 20e-9))
    expected = 2 * _path_gain(d2, 0.49) / _path_gain(100.0)
    assert ts.gains[k] / ts.gains[0] == pytest.approx(expected, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(20, 300), st.floats(-40, 40), st.floats(5, 80), st.floats(-80, -5))
def test_los_delay_not_after_bounces(rx_x, rx_y, y_top, y_bottom):
    if not y_bottom < rx_y < y_top:
        return
    scene = Scene((Transmitter((0.0, 0.0)),), (rx_x, rx_y), (_wall(y_top), _wall(y_bottom)), max_bounces=2)
    ts = trace_paths(scene)
    los = round(math.hypot(rx_x, rx_y) / C_LIGHT / 20e-9)
    assert ts.delays[0] == los
    assert np.all(np.diff(ts.delays) > 0)
    assert max(abs(ts.gains)) == pytest.approx(1.0)


def test_trace_scene_shares_normalization():
    scene = Scene((Transmitter((0.0, 0.0)), Transmitter((30.0, 10.0), 40.0)), (100.0, 0.0))
    primary, second = trace_scene(scene)
    assert second.normalization == primary.normalization
    raw = math.sqrt(1e4) * abs(_path_gain(math.hypot(70, 10)))
    assert abs(second.gains[0]) == pytest.approx(raw * primary.normalization, rel=1e-9)


def test_scene_validation():
    with pytest.raises(InvalidArgumentError):
        Scene((), (1.0, 0.0))
    with pytest.raises(InvalidArgumentError):
        Scene((Transmitter((1.0, 1.0)),), (1.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        Scene((Transmitter((0.0, 0.0)),), (1.0, 0.0), max_bounces=3)
    with pytest.raises(InvalidArgumentError):
        Reflector((0, 0), (1, 0), 1.5)
    with pytest.raises(InvalidArgumentError):
        Reflector((0, 0), (0, 0))
    with pytest.raises(InvalidArgumentError):
        trace_paths(Scene((Transmitter((0.0, 0.0)),), (1.0, 0.0)), transmitter_id=1)


# --- taps ------------------------------------------------------------------------

def test_tapset_validation():
    with pytest.raises(InvalidArgumentError):
        TapSet((Tap(3, 1), Tap(3, 1)))
    with pytest.raises(InvalidArgumentError):
        TapSet((Tap(4, 1), Tap(2, 1)))
    with pytest.raises(InvalidArgumentError):
        Tap(-1, 1)
    with pytest.raises(InvalidArgumentError):
        Tap(1.5, 1)
    with pytest.raises(InvalidArgumentError):
        Tap(1, complex("nan"))


def test_merge_and_grid():
    ts = TapSet.from_pairs([(4, 1), (0, 0.5), (4, 1j)])
    assert ts.delays.tolist() == [0, 4]
    assert ts.gain_at(4) == 1 + 1j
    assert ts.gain_at(2) is None
    assert np.array_equal(ts.on_grid(3, 2), [0.5, 0, 1 + 1j, 0])
    with pytest.raises(InvalidArgumentError):
        ts.on_grid(3, 3)
    with pytest.raises(InvalidArgumentError):
        ts.on_grid(1, 2)
    assert merge_taps([Tap(1, 1), Tap(1, -1)]) == ()


def test_impulse_response():
    ts = TapSet.from_pairs([(0, 1), (2, 0.5)])
    assert np.array_equal(ts.impulse_response(), [1, 0, 0.5])
    assert np.array_equal(ts.impulse_response(5), [1, 0, 0.5, 0, 0])


# --- apply_channel ---------------------------------------------------------------

def test_identity_channel():
    x = oversample(qpsk_modulate(generate_bits(40, 1)), 3)
    y = apply_channel([x], [TapSet.from_pairs([(0, 1)])])
    assert np.array_equal(y.samples, x.samples)


def test_hand_convolution():
    y = apply_channel([ComplexSignal([1, 0, 0, 0])], [TapSet.from_pairs([(0, 1), (2, 0.5)])])
    assert np.array_equal(y.samples, [1, 0, 0.5, 0])


def _brute_conv(x, taps, n):
    y = np.zeros(n, dtype=complex)
    for k in range(n):
        for d, g in taps:
            if 0 <= k - d < len(x):
                y[k] += g * x[k - d]
    return y


complex_st = st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(complex_st, min_size=1, max_size=64),
       st.dictionaries(st.integers(0, 20), complex_st.filter(lambda g: g != 0), min_size=1, max_size=3))
def test_matches_brute_force_convolution(x, taps):
    ts = TapSet.from_pairs(taps.items())
    y = apply_channel([ComplexSignal(x)], [ts])
    assert np.allclose(y.samples, _brute_conv(x, taps.items(), len(x)), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(complex_st, min_size=8, max_size=8), st.lists(complex_st, min_size=8, max_size=8),
       complex_st, complex_st)
def test_linearity(x1, x2, a, b):
    ts = [TapSet.from_pairs([(0, 0.3), (1, 1j), (5, -0.2 + 0.1j)])]
    lhs = apply_channel([ComplexSignal(a * np.array(x1) + b * np.array(x2))], ts).samples
    rhs = a * apply_channel([ComplexSignal(x1)], ts).samples + b * apply_channel([ComplexSignal(x2)], ts).samples
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_superposition_and_padding():
    x1 = ComplexSignal([1, 2, 3, 4])
    x2 = ComplexSignal([1j, 1j])
    t1 = TapSet.from_pairs([(1, 1)])
    t2 = TapSet.from_pairs([(0, 2)], transmitter_id=1)
    y = apply_channel([x1, x2], [t1, t2])
    assert np.array_equal(y.samples, [2j, 1 + 2j, 2, 3])


def test_apply_channel_errors():
    x = ComplexSignal([1, 2])
    with pytest.raises(InvalidArgumentError):
        apply_channel([x], [])
    with pytest.raises(InvalidArgumentError):
        apply_channel([x, ComplexSignal([1, 2], 2.0)], [TapSet.from_pairs([(0, 1)])] * 2)


def test_noise_referenced_to_noiseless_superposition():
    x = oversample(qpsk_modulate(generate_bits(20_000, 3)), 10)
    ts = [TapSet.from_pairs([(0, 0.5), (3, 0.2j)])]
    clean = apply_channel([x], ts)
    noisy = apply_channel([x], ts, 20.0, seed=4)
    ratio = clean.power / np.mean(np.abs(noisy.samples - clean.samples) ** 2)
    assert 10 * math.log10(ratio) == pytest.approx(20.0, abs=0.5)


# --- evolution and events -------------------------------------------------------

def test_static_trajectory_constant():
    scene = Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (_wall(40.0),))
    frames = evolve_channel(scene, Trajectory.static((100.0, 0.0), 5))
    assert all(f.taps == frames[0].taps for f in frames)


def test_walk_behind_blocker_loses_los():
    scene = Scene((Transmitter((0.0, 0.0)),), (50.0, -20.0),
                  (_wall(40.0), Reflector((80.0, -5.0), (80.0, -40.0))))
    traj = Trajectory.along_path([(50.0, -20.0), (120.0, -20.0)], 8)
    frames = evolve_channel(scene, traj)
    los = [round(math.hypot(*p) / C_LIGHT / 20e-9) for p in traj.positions]
    has_los = [f.gain_at(d) is not None for f, d in zip(frames, los)]
    assert has_los[0] and not has_los[-1]
    # normalization is frozen at frame 0, so later gains need not peak at 1
    assert all(f.normalization == frames[0].normalization for f in frames)


def test_moving_reflector_shift():
    scene = Scene((Transmitter((0.0, 0.0)),), (100.0, 0.0), (Reflector((40.0, 30.0), (60.0, 30.0)),))
    shifts = {0: [[0.0, 0.0], [0.0, 20.0]]}
    frames = evolve_channel(scene, Trajectory.static((100.0, 0.0), 2, reflector_shifts=shifts))
    d0 = round(2 * math.hypot(50, 30) / C_LIGHT / 20e-9)
    d1 = round(2 * math.hypot(50, 50) / C_LIGHT / 20e-9)
    assert frames[0].delays.tolist() == [17, d0]
    assert frames[1].delays.tolist() == [17, d1]


def test_trajectory_validation():
    with pytest.raises(InvalidArgumentError):
        Trajectory([0.0, 0.0], [[0, 0], [1, 1]])
    with pytest.raises(InvalidArgumentError):
        Trajectory([0.0, 1.0], [[0, 0]])
    with pytest.raises(InvalidArgumentError):
        Trajectory.static((0, 0), 3, reflector_shifts={0: [[0, 0]]})


def test_events():
    frames = [TapSet.from_pairs([(0, 1.0), (4, 0.5)])] * 20
    same, mask = apply_events(frames, [])
    assert same == frames and not mask.any()
    out, mask = apply_events(frames, [PerturbationEvent("add_path", 10, 14, tap=Tap(7, 0.3j))])
    assert mask.sum() == 5 and mask[10:15].all()
    assert out[12].gain_at(7) == 0.3j and out[9].gain_at(7) is None
    out, _ = apply_events(frames, [PerturbationEvent("scale_gain", 0, 0, delay=0, factor=0.5)])
    assert out[0].gain_at(0) == 0.5 and out[1].gain_at(0) == 1.0
    out, _ = apply_events(frames, [PerturbationEvent("remove_path", 3, 3, delay=4)])
    assert out[3].delays.tolist() == [0]


def test_event_errors():
    frames = [TapSet.from_pairs([(0, 1.0)])] * 4
    with pytest.raises(InvalidArgumentError):
        apply_events(frames, [PerturbationEvent("remove_path", 0, 1, delay=9)])
    with pytest.raises(InvalidArgumentError):
        apply_events(frames, [PerturbationEvent("scale_gain", 2, 4, delay=0, factor=2)])
    with pytest.raises(InvalidArgumentError):
        PerturbationEvent("teleport", 0, 1, delay=0)
    with pytest.raises(InvalidArgumentError):
        PerturbationEvent("scale_gain", 3, 1, delay=0)
    with pytest.raises(InvalidArgumentError):
        PerturbationEvent("add_path", 0, 1)

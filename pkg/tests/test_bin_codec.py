import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import scan_bin, scan_edges
from slk.bin_codec import (
    BinKind,
    BinSchedule,
    DofSchedules,
    bin_index,
    decode,
    decode_angle_circular,
    encode,
    encode_one_hot,
    normalize,
    quantization_error_bound,
)

S = DofSchedules()


def test_default_registry():
    assert S.height == BinSchedule(BinKind.UNIFORM, 1.2, 8, 0.1)
    assert S.width == BinSchedule(BinKind.UNIFORM, 1.2, 8, 0.1)
    assert S.length == BinSchedule(BinKind.UNIFORM, 3.0, 10, 0.2)
    assert S.depth == BinSchedule(BinKind.LINEAR_GROWTH, 0.0, 100, 0.02)
    assert S.dx == BinSchedule(BinKind.UNIFORM, -1.0, 40, 0.05)
    assert S.dy == BinSchedule(BinKind.UNIFORM, -0.5, 20, 0.05)
    assert S.angle == BinSchedule(BinKind.UNIFORM, -math.pi, 36, math.pi / 18)


def test_ranges_match_stated_bounds():
    assert S.height.upper == pytest.approx(2.0, abs=1e-12)
    assert S.length.upper == pytest.approx(5.0, abs=1e-12)
    assert S.dx.upper == pytest.approx(1.0, abs=1e-12)
    assert S.dy.upper == pytest.approx(0.5, abs=1e-12)
    assert S.angle.upper == pytest.approx(math.pi, abs=1e-12)
    assert np.allclose(S.angle.widths, math.radians(10))
    # 100 linearly growing bins cover 101 m, not 99 m
    assert S.depth.upper == pytest.approx(101.0, abs=1e-9)


def test_first_depth_bins_exact():
    e = S.depth.edges
    assert (e[0], e[1], e[2], e[3]) == (0.0, 0.02, 0.06, 0.12)


def test_linear_growth_edge_formula():
    k = np.arange(101)
    assert np.allclose(S.depth.edges, 0.02 * k * (k + 1) / 2, atol=1e-12, rtol=0)


@pytest.mark.parametrize("sched,value,idx", [
    ("height", 1.24, 0),
    ("depth", 0.07, 2),
    ("length", 9.9, 9),
    ("length", 2.0, 0),
    ("angle", -math.pi, 0),
    ("depth", 1e6, 99),
])
def test_bin_index_examples(sched, value, idx):
    assert bin_index(getattr(S, sched), value) == idx


def test_one_hot_examples():
    assert np.array_equal(encode_one_hot(S.height, 1.25), np.eye(8)[0])
    assert np.array_equal(encode_one_hot(S.angle, -math.pi), np.eye(36)[0])
    # brute-force scan over edges 0.01 * i * (i + 1)
    i = next(i for i in range(100) if 0.01 * i * (i + 1) <= 50.0 < 0.01 * (i + 1) * (i + 2))
    assert np.argmax(encode_one_hot(S.depth, 50.0)) == i == 70


def test_decode_examples():
    assert decode(S.height, np.eye(8)[0]) == 1.25
    assert decode(S.length, np.full(10, 0.1)) == pytest.approx(4.0, abs=1e-12)
    assert decode(S.depth, np.eye(100)[2]) == pytest.approx(0.09, abs=1e-15)


def test_decode_normalizes_and_checks_length():
    assert decode(S.height, 3 * np.eye(8)[1]) == pytest.approx(1.35)
    with pytest.raises(ValueError):
        decode(S.height, np.ones(7))
    with pytest.raises(ValueError):
        normalize(np.zeros(4))


def test_decode_lower_edge_variant():
    assert decode(S.height, np.eye(8)[0], bin_value="lower") == 1.2


def test_circular_decode():
    c = S.angle.centers
    for i in (0, 5, 35):
        assert decode_angle_circular(S.angle, np.eye(36)[i]) == pytest.approx(c[i], abs=1e-12)
    # bins centred at -175 and +175 degrees
    s = np.zeros(36)
    s[0] = s[35] = 0.5
    assert math.degrees(c[0]) == pytest.approx(-175)
    assert abs(decode_angle_circular(S.angle, s)) == pytest.approx(math.pi, abs=1e-12)
    assert decode(S.angle, s) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(2, 33), st.floats(0.0, 0.3))
def test_circular_matches_plain_for_unimodal(peak, soft):
    s = soft ** np.abs(np.arange(36) - peak)
    s /= s.sum()
    assert abs(decode_angle_circular(S.angle, s) - decode(S.angle, s)) <= math.pi / 36


def test_quantization_bounds():
    assert quantization_error_bound(S.height) == pytest.approx(0.05)
    assert quantization_error_bound(S.depth) == pytest.approx(1.0)
    assert quantization_error_bound(S.length) == pytest.approx(0.1)


@pytest.mark.parametrize("name", [n for n, _ in DofSchedules().items()])
def test_bin_index_agrees_with_linear_scan(name):
    sched = getattr(S, name)
    edges = scan_edges(sched.kind.value, sched.lower, sched.count, sched.step)
    rng = np.random.default_rng(len(name))
    span = edges[-1] - edges[0]
    values = rng.uniform(edges[0] - 0.05 * span, edges[-1] + 0.05 * span, 20_000)
    values = np.concatenate([values, edges])
    got = bin_index(sched, values)
    want = np.array([scan_bin(edges, v) for v in values])
    assert np.array_equal(got, want)


@given(st.floats(0.0, 100.9))
def test_round_trip_within_half_width(v):
    i = bin_index(S.depth, v)
    assert abs(decode(S.depth, encode_one_hot(S.depth, v)) - v) <= S.depth.widths[i] / 2 + 1e-12


@given(st.lists(st.floats(0, 1), min_size=8, max_size=8), st.lists(st.floats(0, 1), min_size=8, max_size=8),
       st.floats(0, 1))
def test_decode_linear(a, b, lam):
    a, b = np.array(a) + 1e-3, np.array(b) + 1e-3
    a, b = a / a.sum(), b / b.sum()
    mix = lam * a + (1 - lam) * b
    assert decode(S.height, mix) == pytest.approx(lam * decode(S.height, a) + (1 - lam) * decode(S.height, b), abs=1e-12)


def test_smoothed_targets_off_by_default():
    assert np.array_equal(encode(S.height, 1.45), encode_one_hot(S.height, 1.45))
    t = encode(S.height, 1.45, smoothing=0.2)
    assert t.sum() == pytest.approx(1.0)
    assert t[2] == pytest.approx(0.8) and t[1] == pytest.approx(0.1) and t[3] == pytest.approx(0.1)


def test_invalid_schedules():
    with pytest.raises(ValueError):
        BinSchedule.uniform(0.0, 0, 1.0)
    with pytest.raises(ValueError):
        BinSchedule.uniform(0.0, 10, -1.0)
    with pytest.raises(ValueError):
        BinSchedule("Quadratic", 0.0, 10, 1.0)


def test_config_round_trip_and_overrides():
    assert DofSchedules.from_config(S.to_config()) == S
    custom = DofSchedules.from_config("[depth]\nkind = Uniform\nlower = 0\ncount = 100\nstep = 1.0\n")
    assert custom.depth == BinSchedule.uniform(0.0, 100, 1.0)
    assert custom.height == S.height
    angle = DofSchedules.from_config("[angle]\nkind = Uniform\nlower = -pi\ncount = 36\nstep = pi/18\n")
    assert angle.angle == S.angle
    with pytest.raises(ValueError, match="unknown degree"):
        DofSchedules.from_config("[mass]\nlower = 0\ncount = 1\nstep = 1\n")
    with pytest.raises(ValueError, match="missing field"):
        DofSchedules.from_config("[depth]\nlower = 0\ncount = 1\n")


def test_batched_matches_scalar():
    s = DofSchedules().depth
    values = np.random.default_rng(4).uniform(-1, 105, 200)
    batch = encode(s, values)
    assert batch.shape == (200, s.count)
    assert np.array_equal(batch, np.stack([encode(s, v) for v in values]))
    decoded = decode(s, batch)
    assert np.array_equal(decoded, [decode(s, row) for row in batch])
    smooth = encode(s, values[:5], smoothing=0.2)
    assert np.allclose(smooth.sum(axis=1), 1.0)

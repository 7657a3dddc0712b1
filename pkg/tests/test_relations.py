import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cornergraph.graphs import AgentState, RelationCategory
from cornergraph.relations import (
    DegenerateGeometry,
    STOPPING_TABLE,
    discretize_distance,
    discretize_relative_position,
    relative_angle,
    stopping_distance,
    wrap_angle,
)


def oracle_bearing(tail_xy, tail_heading, head_xy):
    """Project the offset onto the tail's forward/right axes.

    Independent formulation: decompose in the tail frame instead of
    subtracting angles.  Heading 0 points +y, positive bearings to the right.
    """
    dx = head_xy[0] - tail_xy[0]
    dy = head_xy[1] - tail_xy[1]
    fwd = (math.sin(tail_heading), math.cos(tail_heading))
    right = (math.cos(tail_heading), -math.sin(tail_heading))
    along = dx * fwd[0] + dy * fwd[1]
    across = dx * right[0] + dy * right[1]
    return math.atan2(across, along)


def oracle_bin(angle):
    # explicit half-open interval checks, lower bound exclusive
    if -math.pi / 4 < angle <= math.pi / 4:
        return RelationCategory.IN_FRONT_OF
    if math.pi / 4 < angle <= 3 * math.pi / 4:
        return RelationCategory.TO_RIGHT_OF
    if -3 * math.pi / 4 < angle <= -math.pi / 4:
        return RelationCategory.TO_LEFT_OF
    return RelationCategory.AT_REAR_OF


def state(x, y, heading=0.0):
    return AgentState(location=(x, y), heading=heading)


def test_directly_ahead_is_zero():
    assert relative_angle(state(0.0, 1.0), state(0.0, 0.0)) == pytest.approx(0.0)


def test_to_the_right_is_positive_quarter_turn():
    assert relative_angle(state(1.0, 0.0), state(0.0, 0.0)) == pytest.approx(
        math.pi / 2
    )


def test_behind_is_half_turn():
    assert abs(relative_angle(state(0.0, -1.0), state(0.0, 0.0))) == pytest.approx(
        math.pi
    )


def test_heading_rotates_the_frame():
    # tail faces +x; a point on +y is now on its left
    angle = relative_angle(state(0.0, 1.0), state(0.0, 0.0, heading=math.pi / 2))
    assert angle == pytest.approx(-math.pi / 2)


def test_degenerate_separation_raises():
    with pytest.raises(DegenerateGeometry):
        relative_angle(state(0.0, 0.0), state(0.0, 0.0))
    with pytest.raises(DegenerateGeometry):
        relative_angle(state(1e-10, 0.0), state(0.0, 0.0))


@given(
    st.floats(-40, 40),
    st.floats(-40, 40),
    st.floats(-40, 40),
    st.floats(-40, 40),
    st.floats(-10, 10),
)
def test_relative_angle_matches_projection_oracle(x1, y1, x2, y2, heading):
    if math.hypot(x2 - x1, y2 - y1) < 1e-6:
        return
    got = relative_angle(state(x2, y2), state(x1, y1, heading=heading))
    want = oracle_bearing((x1, y1), heading, (x2, y2))
    # both live in (-pi, pi]; compare on the circle
    assert abs(wrap_angle(got - want)) < 1e-9


@given(st.floats(-50, 50))
def test_wrap_angle_range_and_periodicity(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert abs(wrap_angle(a + 2 * math.pi) - w) < 1e-9


@given(st.floats(-math.pi, math.pi), st.integers(-3, 3))
def test_wrap_angle_fixed_point(a, k):
    if -math.pi < a <= math.pi:
        assert wrap_angle(a) == pytest.approx(a, abs=1e-12)
    assert abs(wrap_angle(a + 2 * math.pi * k) - wrap_angle(a)) < 1e-9


def test_quadrant_boundaries_follow_half_open_bins():
    eps = 1e-9
    q = math.pi / 4
    assert discretize_relative_position(q) is RelationCategory.IN_FRONT_OF
    assert discretize_relative_position(q + eps) is RelationCategory.TO_RIGHT_OF
    assert discretize_relative_position(-q) is RelationCategory.TO_LEFT_OF
    assert discretize_relative_position(-q + eps) is RelationCategory.IN_FRONT_OF
    assert discretize_relative_position(3 * q) is RelationCategory.TO_RIGHT_OF
    assert discretize_relative_position(3 * q + eps) is RelationCategory.AT_REAR_OF
    assert discretize_relative_position(-3 * q) is RelationCategory.AT_REAR_OF
    assert discretize_relative_position(-3 * q + eps) is RelationCategory.TO_LEFT_OF
    assert discretize_relative_position(math.pi) is RelationCategory.AT_REAR_OF


@given(st.floats(-math.pi, math.pi))
def test_binning_matches_interval_oracle(angle):
    assert discretize_relative_position(angle) is oracle_bin(wrap_angle(angle))


def test_stopping_table_knots():
    table = dict(STOPPING_TABLE)
    assert table == {
        8.9: 12.0,
        13.4: 23.0,
        17.9: 36.0,
        22.4: 53.0,
        26.8: 73.0,
        31.3: 96.0,
    }
    for speed, dist in STOPPING_TABLE:
        assert stopping_distance(speed) == pytest.approx(dist)


def test_stopping_clamps_below_first_knot():
    assert stopping_distance(0.0) == pytest.approx(12.0)
    assert stopping_distance(8.9) == pytest.approx(12.0)
    assert stopping_distance(5.0) == pytest.approx(12.0)


def test_stopping_interpolates_between_knots():
    speeds = [s for s, _ in STOPPING_TABLE]
    dists = [d for _, d in STOPPING_TABLE]
    for v in np.linspace(8.9, 31.3, 211):
        want = float(np.interp(v, speeds, dists))
        assert stopping_distance(float(v)) == pytest.approx(want, abs=1e-9)


def test_stopping_extrapolates_with_last_slope():
    slope = (96.0 - 73.0) / (31.3 - 26.8)
    assert stopping_distance(40.0) == pytest.approx(96.0 + slope * (40.0 - 31.3))
    assert stopping_distance(31.3 + 1e-6) == pytest.approx(96.0 + slope * 1e-6)


def test_stopping_rejects_negative_speed():
    with pytest.raises(ValueError):
        stopping_distance(-0.1)


@given(st.floats(0, 60), st.floats(0, 60))
def test_stopping_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert stopping_distance(lo) <= stopping_distance(hi) + 1e-12


def test_distance_discretization_threshold_is_strict():
    # separation must exceed the stopping distance to count as safe
    margin = stopping_distance(10.0)
    assert (
        discretize_distance(margin, 10.0) is RelationCategory.UNSAFE_DISTANCE
    )
    assert (
        discretize_distance(margin + 1e-9, 10.0) is RelationCategory.SAFE_DISTANCE
    )


@given(st.floats(0, 120), st.floats(0, 40))
def test_distance_discretization_matches_rule(sep, speed):
    want = (
        RelationCategory.SAFE_DISTANCE
        if sep > stopping_distance(speed)
        else RelationCategory.UNSAFE_DISTANCE
    )
    assert discretize_distance(sep, speed) is want

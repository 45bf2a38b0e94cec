"""Course geometry, localization, kinematics and episode lifecycle tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanesnn.errors import ConfigurationError, LocalizationError
from lanesnn.track import (
    ArcSegment,
    EpisodeState,
    RobotState,
    StraightSegment,
    build_scenario,
    check_termination,
    localize,
    reset_episode,
    step_kinematics,
    wrap_angle,
)


@pytest.fixture(scope="module")
def s1():
    return build_scenario(1)


# ---------------------------------------------------------------------------
# Scenario construction
# ---------------------------------------------------------------------------

def test_scenario1_closes_with_5m_straight(s1):
    gap, hgap = s1.middle.closure_residual()
    assert gap < 1e-6 and hgap < 1e-6
    first = s1.middle.segments[0]
    assert isinstance(first, StraightSegment)
    assert first.length == 5.0


@pytest.mark.parametrize("sid", [1, 2, 3])
def test_all_scenarios_close(sid):
    t = build_scenario(sid)
    for path in (t.middle, t.lanes["outer"], t.lanes["inner"]):
        gap, hgap = path.closure_residual()
        assert gap < 1e-6 and hgap < 1e-6


def test_scenario2_same_geometry_center_dash_only(s1):
    t2 = build_scenario(2)
    assert t2.middle.length == pytest.approx(s1.middle.length, abs=1e-12)
    for pat in t2.patterns.values():
        assert pat.center_dashed
        assert not pat.left_solid and not pat.right_solid


def test_scenario3_splits_patterns():
    t3 = build_scenario(3)
    full = {l for l, p in t3.section_pattern.items()
            if t3.patterns[p].left_solid}
    bare = {l for l, p in t3.section_pattern.items()
            if not t3.patterns[p].left_solid}
    assert full == {"A", "B", "C"}
    assert bare == {"D", "E", "F"}


def test_lane_radii_offset_by_half_separation(s1):
    by_label = {}
    for seg in s1.lanes["outer"].segments:
        if isinstance(seg, ArcSegment):
            by_label[seg.label] = seg.radius
    inner_radii = set()
    for seg in s1.lanes["inner"].segments:
        if isinstance(seg, ArcSegment):
            assert abs(by_label[seg.label] - seg.radius) == pytest.approx(0.5)
            inner_radii.add(round(seg.radius, 6))
    assert inner_radii == {1.75, 3.25}
    assert {round(r, 6) for r in by_label.values()} == {2.25, 2.75}


def test_unknown_scenario_rejected():
    with pytest.raises(ConfigurationError):
        build_scenario(7)


def test_outer_lap_longer_than_inner(s1):
    assert s1.lanes["outer"].length > s1.lanes["inner"].length


def test_marking_offsets_relative_to_lane_centers(s1):
    # dashed separator sits marking_offset from each lane center; solids too
    assert s1.half_sep == pytest.approx(s1.marking_offset)


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------

def test_localize_on_centerline_is_zero(s1):
    x, y, _ = s1.lanes["outer"].point_at(2.5)
    pose = localize(s1, "outer", (x, y))
    assert pose.d == pytest.approx(0.0, abs=1e-12)
    assert pose.section == "A"


def test_localize_left_of_travel_is_negative(s1):
    # outer lane on straight A runs east at y = -0.25; left of travel is +y
    pose = localize(s1, "outer", (2.5, -0.25 + 0.1))
    assert pose.d == pytest.approx(-0.1)
    pose = localize(s1, "outer", (2.5, -0.25 - 0.1))
    assert pose.d == pytest.approx(+0.1)


def test_localize_on_left_arc_radial_offset(s1):
    arc = next(seg for seg in s1.lanes["outer"].segments
               if isinstance(seg, ArcSegment) and seg.label == "B")
    psi = arc.psi0 + arc.turn * (arc.sweep / 2.0)
    x = arc.cx + (arc.radius + 0.15) * math.cos(psi)
    y = arc.cy + (arc.radius + 0.15) * math.sin(psi)
    pose = localize(s1, "outer", (x, y))
    assert abs(pose.d) == pytest.approx(0.15)
    assert pose.section == "B"


def test_localize_far_away_raises(s1):
    with pytest.raises(LocalizationError):
        localize(s1, "outer", (50.0, 50.0))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
       st.sampled_from(["outer", "inner"]))
def test_localize_point_roundtrip(frac, lane):
    t = build_scenario(1)
    path = t.lanes[lane]
    s = frac * path.length
    x, y, _ = path.point_at(s)
    s2, d, dist, _ = path.project(x, y)
    assert abs(d) < 1e-9
    ds = abs(s2 - s) % path.length
    assert min(ds, path.length - ds) < 1e-9


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------

def test_equal_wheels_drive_straight():
    st0 = RobotState(0.0, 0.0, 0.0)
    st1 = step_kinematics(st0, 1.0, 1.0, 0.5)
    assert st1.x == pytest.approx(0.5, abs=0.0)
    assert st1.y == 0.0
    assert st1.heading == 0.0


def test_opposite_wheels_spin_in_place():
    st0 = RobotState(1.0, 2.0, 0.3)
    st1 = step_kinematics(st0, -0.5, 0.5, 0.4, axle_width=0.33)
    assert st1.x == pytest.approx(1.0, abs=1e-12)
    assert st1.y == pytest.approx(2.0, abs=1e-12)
    assert st1.heading == pytest.approx(wrap_angle(0.3 + 1.0 / 0.33 * 0.4))


def test_arc_step_matches_fine_stepping_oracle():
    # independent oracle: midpoint-heading unicycle stepping at 1e-5 s substeps
    # (plain Euler at that resolution carries ~4e-6 m bias, above the target)
    v_l, v_r, L, dt = 0.75, 1.25, 0.33, 0.5
    v, omega = (v_l + v_r) / 2.0, (v_r - v_l) / L
    n = 50000
    h = 0.0
    x = y = 0.0
    sub = dt / n
    for _ in range(n):
        hm = h + omega * sub / 2.0
        x += v * sub * math.cos(hm)
        y += v * sub * math.sin(hm)
        h += omega * sub
    st1 = step_kinematics(RobotState(0.0, 0.0, 0.0), v_l, v_r, dt, axle_width=L)
    assert math.hypot(st1.x - x, st1.y - y) < 1e-6
    assert st1.heading == pytest.approx(h, abs=1e-9)
    # closed-form self-check: chord of the exact arc with radius v/omega
    r = v / omega
    assert r == pytest.approx(0.66)
    chord = 2.0 * r * math.sin(omega * dt / 2.0)
    assert math.hypot(st1.x, st1.y) == pytest.approx(chord, abs=1e-12)


def test_heading_constant_over_many_straight_steps():
    st0 = RobotState(0.0, 0.0, 0.7)
    for _ in range(10**6):
        st0 = step_kinematics(st0, 1.0, 1.0, 0.05)
    assert st0.heading == 0.7


def test_kinematics_rejects_bad_inputs():
    with pytest.raises(ConfigurationError):
        step_kinematics(RobotState(0, 0, 0), 1.0, 1.0, 0.0)
    with pytest.raises(ConfigurationError):
        step_kinematics(RobotState(0, 0, 0), math.inf, 1.0, 0.1)


# ---------------------------------------------------------------------------
# Termination and resets
# ---------------------------------------------------------------------------

def test_termination_off_center():
    pose = type("P", (), {"d": 0.51})()
    terminal, reason = check_termination(pose, EpisodeState(), 0.5, 1000)
    assert terminal and reason == "off_center"


def test_termination_inside_threshold():
    pose = type("P", (), {"d": 0.19})()
    terminal, reason = check_termination(pose, EpisodeState(step_count=10), 0.2, 1000)
    assert not terminal and reason == "none"


def test_termination_step_limit():
    pose = type("P", (), {"d": 0.0})()
    ep = EpisodeState(step_count=1000)
    terminal, reason = check_termination(pose, ep, 0.5, 1000)
    assert terminal and reason == "step_limit"


def test_reset_alternates_lanes(s1):
    ep = EpisodeState(active_lane="outer", step_count=55)
    reset_episode(s1, ep)
    assert ep.active_lane == "inner"
    assert ep.step_count == 0
    reset_episode(s1, ep)
    assert ep.active_lane == "outer"


def test_reset_pose_is_centered(s1):
    ep = EpisodeState(active_lane="outer")
    state = reset_episode(s1, ep)
    pose = localize(s1, ep.active_lane, (state.x, state.y))
    assert pose.d == pytest.approx(0.0, abs=1e-12)
    assert pose.s == pytest.approx(0.0, abs=1e-9)


def test_wrap_angle_range():
    for a in np.linspace(-20, 20, 401):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.cos(w) == pytest.approx(math.cos(a), abs=1e-12)
        assert math.sin(w) == pytest.approx(math.sin(a), abs=1e-12)

"""Deterministic 2D course geometry, drive kinematics and episode lifecycle.

A course is described by a closed sequence of straight and arc sections for
the road middle.  The two lane centerlines are parallel offsets of that
middle at +-lane_separation/2; the outer lane is driven counter-clockwise,
the inner lane clockwise (right-hand traffic both ways), so the robot meets
every turn in both directions across alternating episodes.

Conventions used throughout the package:
  * heading is in radians, normalized to (-pi, pi], counter-clockwise positive;
  * lateral offset d is signed positive to the RIGHT of the travel direction;
  * arc-length s runs along each path in its own travel direction.
"""

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, LocalizationError

TWO_PI = 2.0 * math.pi

SECTION_LABELS = ("A", "B", "C", "D", "E", "F")


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


# ---------------------------------------------------------------------------
# Path segments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StraightSegment:
    x0: float
    y0: float
    heading: float
    length: float
    label: str

    def end_pose(self) -> Tuple[float, float, float]:
        return (self.x0 + self.length * math.cos(self.heading),
                self.y0 + self.length * math.sin(self.heading),
                self.heading)

    def point_at(self, s: float) -> Tuple[float, float, float]:
        return (self.x0 + s * math.cos(self.heading),
                self.y0 + s * math.sin(self.heading),
                self.heading)

    def reversed(self) -> "StraightSegment":
        ex, ey, _ = self.end_pose()
        return StraightSegment(ex, ey, wrap_angle(self.heading + math.pi),
                               self.length, self.label)

    def project(self, px: np.ndarray, py: np.ndarray):
        ux, uy = math.cos(self.heading), math.sin(self.heading)
        relx, rely = px - self.x0, py - self.y0
        t = np.clip(relx * ux + rely * uy, 0.0, self.length)
        dx = relx - t * ux
        dy = rely - t * uy
        dist2 = dx * dx + dy * dy
        # right of travel = (uy, -ux)
        d = dx * uy - dy * ux
        return dist2, t, d


@dataclass(frozen=True)
class ArcSegment:
    cx: float
    cy: float
    radius: float
    psi0: float      # angle center->start point
    sweep: float     # angular extent, > 0
    turn: int        # +1 left (CCW around center), -1 right
    label: str

    @property
    def length(self) -> float:
        return self.radius * self.sweep

    def _psi(self, s: float) -> float:
        return self.psi0 + self.turn * (s / self.radius)

    def point_at(self, s: float) -> Tuple[float, float, float]:
        psi = self._psi(s)
        x = self.cx + self.radius * math.cos(psi)
        y = self.cy + self.radius * math.sin(psi)
        heading = wrap_angle(psi + self.turn * math.pi / 2.0)
        return x, y, heading

    def end_pose(self) -> Tuple[float, float, float]:
        return self.point_at(self.length)

    def reversed(self) -> "ArcSegment":
        return ArcSegment(self.cx, self.cy, self.radius,
                          self.psi0 + self.turn * self.sweep,
                          self.sweep, -self.turn, self.label)

    def offset(self, q: float) -> "ArcSegment":
        """Parallel offset q to the right of travel (radius grows on left arcs)."""
        return replace(self, radius=self.radius + q * self.turn)

    def project(self, px: np.ndarray, py: np.ndarray):
        relx, rely = px - self.cx, py - self.cy
        rho = np.hypot(relx, rely)
        psi = np.arctan2(rely, relx)
        theta = np.mod(self.turn * (psi - self.psi0), TWO_PI)
        inside = theta <= self.sweep
        radial = rho - self.radius
        dist2 = np.where(inside, radial * radial, np.inf)
        # out-of-range points clamp to the nearer endpoint
        over = theta - self.sweep
        to_start = TWO_PI - theta
        use_start = ~inside & (to_start < over)
        use_end = ~inside & ~use_start
        for mask, s_end in ((use_start, 0.0), (use_end, self.length)):
            if mask.any():
                ex, ey, _ = self.point_at(s_end)
                dist2 = np.where(mask, (px - ex) ** 2 + (py - ey) ** 2, dist2)
        s = np.clip(theta, 0.0, self.sweep) * self.radius
        d = self.turn * radial
        return dist2, s, d


Segment = object  # StraightSegment | ArcSegment


def _offset_segment(seg, q: float):
    if isinstance(seg, ArcSegment):
        return seg.offset(q)
    ux, uy = math.cos(seg.heading), math.sin(seg.heading)
    return replace(seg, x0=seg.x0 + q * uy, y0=seg.y0 - q * ux)


class Path:
    """A directed, piecewise straight/arc curve with arc-length parametrization."""

    def __init__(self, segments: List[Segment]):
        self.segments = list(segments)
        lengths = [s.length for s in self.segments]
        self.cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self.cum[-1])
        self.labels = [s.label for s in self.segments]

    def closure_residual(self) -> Tuple[float, float]:
        ex, ey, eh = self.segments[-1].end_pose()
        sx, sy, sh = self.segments[0].point_at(0.0)
        return math.hypot(ex - sx, ey - sy), abs(wrap_angle(eh - sh))

    def point_at(self, s: float) -> Tuple[float, float, float]:
        s = float(np.mod(s, self.length))
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return self.segments[i].point_at(s - self.cum[i])

    def section_at(self, s: float) -> str:
        s = float(np.mod(s, self.length))
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return self.labels[i]

    def project_many(self, px: np.ndarray, py: np.ndarray):
        """Vectorized nearest-point projection.

        Returns (s, d, dist, seg_idx) arrays: global arc length of the nearest
        point, signed lateral offset (positive right of travel), Euclidean
        distance, and index of the winning segment.
        """
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        n = len(self.segments)
        dist2 = np.empty((n,) + px.shape)
        s_loc = np.empty_like(dist2)
        d_loc = np.empty_like(dist2)
        for i, seg in enumerate(self.segments):
            dist2[i], s_loc[i], d_loc[i] = seg.project(px, py)
        idx = np.argmin(dist2, axis=0)
        take = (idx,) + tuple(np.indices(px.shape))
        s = self.cum[idx] + s_loc[take]
        d = d_loc[take]
        dist = np.sqrt(dist2[take])
        return s, d, dist, idx

    def project(self, x: float, y: float):
        s, d, dist, idx = self.project_many(np.array([x]), np.array([y]))
        return float(s[0]), float(d[0]), float(dist[0]), int(idx[0])


def _build_segments(sections: List[dict], x0: float, y0: float, h0: float
                    ) -> List[Segment]:
    segs: List[Segment] = []
    x, y, h = x0, y0, h0
    for sec in sections:
        if sec["kind"] == "straight":
            seg = StraightSegment(x, y, h, float(sec["length"]), sec["label"])
        elif sec["kind"] == "arc":
            turn = +1 if sec["direction"] == "left" else -1
            r = float(sec["radius"])
            sweep = math.radians(float(sec["sweep_deg"]))
            cx = x + r * math.cos(h + turn * math.pi / 2.0)
            cy = y + r * math.sin(h + turn * math.pi / 2.0)
            psi0 = math.atan2(y - cy, x - cx)
            seg = ArcSegment(cx, cy, r, psi0, sweep, turn, sec["label"])
        else:
            raise ConfigurationError(f"unknown section kind {sec['kind']!r}")
        segs.append(seg)
        x, y, h = seg.end_pose()
    return segs


# ---------------------------------------------------------------------------
# Track specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarkingPattern:
    left_solid: bool
    center_dashed: bool
    right_solid: bool


@dataclass
class TrackSpec:
    scenario_id: int
    lane_separation: float
    marking_offset: float
    dash_len: float
    gap_len: float
    middle: Path
    lanes: Dict[str, Path]
    patterns: Dict[str, MarkingPattern]
    section_pattern: Dict[str, str]

    @property
    def half_sep(self) -> float:
        return self.lane_separation / 2.0

    def lane(self, name: str) -> Path:
        return self.lanes[name]

    def marking_mask(self, s_mid: np.ndarray, d_mid: np.ndarray,
                     seg_idx: np.ndarray, line_width: float) -> np.ndarray:
        """Which ground points lie on a painted marking stroke.

        Solid boundaries sit at +-(half_sep + marking_offset) from the road
        middle; the dashed separator runs along the middle itself.
        """
        half_w = line_width / 2.0
        labels = self.middle.labels
        left_on = np.array([self.patterns[self.section_pattern[l]].left_solid
                            for l in labels])
        right_on = np.array([self.patterns[self.section_pattern[l]].right_solid
                             for l in labels])
        center_on = np.array([self.patterns[self.section_pattern[l]].center_dashed
                              for l in labels])
        edge = self.half_sep + self.marking_offset
        lit = right_on[seg_idx] & (np.abs(d_mid - edge) <= half_w)
        lit |= left_on[seg_idx] & (np.abs(d_mid + edge) <= half_w)
        period = self.dash_len + self.gap_len
        dash = (np.abs(d_mid) <= half_w) & (np.mod(s_mid, period) < self.dash_len)
        lit |= center_on[seg_idx] & dash
        return lit


def build_track(doc: dict) -> TrackSpec:
    """Build a TrackSpec from a scenario document (see `scenarios/*.json`)."""
    sections = doc["sections"]
    q = float(doc["lane_separation"]) / 2.0
    middle = Path(_build_segments(sections, 0.0, 0.0, 0.0))
    gap, heading_gap = middle.closure_residual()
    if gap > 1e-6 or heading_gap > 1e-6:
        raise ConfigurationError(
            f"course does not close: gap {gap:.2e} m, heading {heading_gap:.2e} rad")

    outer = Path([_offset_segment(s, +q) for s in middle.segments])
    # inner lane: offset toward the course interior, then traverse clockwise,
    # starting with the straight section A so both start markers sit on A
    inner_fwd = [_offset_segment(s, -q) for s in middle.segments]
    rev = [s.reversed() for s in inner_fwd[::-1]]
    rev = rev[-1:] + rev[:-1]
    inner = Path(rev)

    patterns = {name: MarkingPattern(**flags)
                for name, flags in doc["patterns"].items()}
    return TrackSpec(
        scenario_id=int(doc["scenario_id"]),
        lane_separation=float(doc["lane_separation"]),
        marking_offset=float(doc["marking_offset"]),
        dash_len=float(doc["dash"]["dash_len"]),
        gap_len=float(doc["dash"]["gap_len"]),
        middle=middle,
        lanes={"outer": outer, "inner": inner},
        patterns=patterns,
        section_pattern=dict(doc["section_patterns"]),
    )


def load_scenario_doc(scenario_id: int) -> dict:
    if scenario_id not in (1, 2, 3):
        raise ConfigurationError(f"unknown scenario id {scenario_id!r}")
    path = resources.files("lanesnn").joinpath(f"scenarios/s{scenario_id}.json")
    return json.loads(path.read_text())


def build_scenario(scenario_id: int) -> TrackSpec:
    return build_track(load_scenario_doc(scenario_id))


# ---------------------------------------------------------------------------
# Robot state and kinematics
# ---------------------------------------------------------------------------

@dataclass
class RobotState:
    x: float
    y: float
    heading: float
    v_left: float = 0.0
    v_right: float = 0.0


@dataclass
class LanePose:
    s: float
    d: float
    section: str


@dataclass
class EpisodeState:
    active_lane: str = "outer"
    step_count: int = 0
    terminal_reason: str = "none"


def step_kinematics(state: RobotState, v_left: float, v_right: float,
                    dt: float, axle_width: float = 0.33) -> RobotState:
    """Advance a differential-drive unicycle by dt using the exact arc.

    Equal wheel speeds take the exact straight-line branch, so pure forward
    motion is heading-drift-free over arbitrarily many steps.
    """
    if dt <= 0.0:
        raise ConfigurationError("dt must be positive")
    if not (math.isfinite(v_left) and math.isfinite(v_right)):
        raise ConfigurationError("wheel speeds must be finite")
    v = 0.5 * (v_left + v_right)
    omega = (v_right - v_left) / axle_width
    h = state.heading
    turn = omega * dt
    if abs(turn) < 1e-9:
        # exact-arc chord cancels catastrophically here; the midpoint chord is
        # accurate to O(turn^2) and reduces to the exact straight at turn = 0
        hm = h + turn / 2.0
        x = state.x + v * dt * math.cos(hm)
        y = state.y + v * dt * math.sin(hm)
        nh = h + turn
    else:
        r = v / omega
        nh = h + turn
        x = state.x + r * (math.sin(nh) - math.sin(h))
        y = state.y - r * (math.cos(nh) - math.cos(h))
    return RobotState(x, y, wrap_angle(nh), v_left, v_right)


def localize(track: TrackSpec, lane: str, position: Tuple[float, float],
             bound: float = 2.0) -> LanePose:
    """Project a position onto the active lane centerline.

    d is the signed perpendicular distance (positive right of travel), s the
    arc length of the nearest centerline point.  A distance beyond `bound`
    means the simulation escaped the course and the run must abort.
    """
    path = track.lane(lane)
    s, d, dist, idx = path.project(position[0], position[1])
    if dist > bound:
        raise LocalizationError(
            f"position {position} is {dist:.2f} m from lane '{lane}'")
    return LanePose(s=s, d=d, section=path.labels[idx])


def check_termination(pose: LanePose, episode: EpisodeState,
                      reset_distance: float, max_steps: int
                      ) -> Tuple[bool, str]:
    if reset_distance <= 0:
        raise ConfigurationError("reset_distance must be positive")
    if abs(pose.d) > reset_distance:
        return True, "off_center"
    if episode.step_count >= max_steps:
        return True, "step_limit"
    return False, "none"


def reset_episode(track: TrackSpec, episode: EpisodeState) -> RobotState:
    """Place the robot at the start marker of the other lane, zero the counter."""
    lane = "inner" if episode.active_lane == "outer" else "outer"
    episode.active_lane = lane
    episode.step_count = 0
    episode.terminal_reason = "none"
    x, y, heading = track.lane(lane).point_at(0.0)
    return RobotState(x=x, y=y, heading=heading)

"""Closed-loop world stepping shared by every controller.

One instance owns the robot pose, the active lane, and the previous render
so frame differencing stays consistent across steps; controllers decide
termination and call `switch_lane_reset` themselves.  Lane starts re-render
the view at the spawn pose, so a reset never emits a spurious event burst.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .camera import CameraModel, EventFrame, diff_events, render_view
from .config import RunConfig
from .track import (
    EpisodeState,
    LanePose,
    RobotState,
    TrackSpec,
    localize,
    step_kinematics,
)


class LaneSimulation:
    def __init__(self, track: TrackSpec, cfg: RunConfig,
                 start_lane: str = "outer"):
        self.track = track
        self.cfg = cfg
        self.cam = CameraModel.from_config(cfg.camera)
        self.dt = cfg.world.dt
        self.axle = cfg.world.axle_width
        self.episode = EpisodeState(active_lane=start_lane)
        self.world_step = 0
        self.reset_to_lane(start_lane)

    @property
    def lane(self) -> str:
        return self.episode.active_lane

    def reset_to_lane(self, lane: str) -> None:
        self.episode.active_lane = lane
        self.episode.step_count = 0
        self.episode.terminal_reason = "none"
        x, y, heading = self.track.lane(lane).point_at(0.0)
        self.state = RobotState(x=x, y=y, heading=heading)
        self.prev_render = render_view(self.track, self.state, self.cam)

    def switch_lane_reset(self) -> None:
        self.reset_to_lane("inner" if self.lane == "outer" else "outer")

    def step(self, v_left: float, v_right: float) -> Tuple[EventFrame, LanePose]:
        """Advance 50 ms; returns the event frame and the new lane pose."""
        self.state = step_kinematics(self.state, v_left, v_right,
                                     self.dt, self.axle)
        img = render_view(self.track, self.state, self.cam)
        events = diff_events(self.prev_render, img, t=self.world_step)
        self.prev_render = img
        self.world_step += 1
        pose = localize(self.track, self.lane, (self.state.x, self.state.y),
                        bound=self.cfg.world.localize_bound)
        return events, pose


class LapTracker:
    """Accumulates signed forward progress along a lane, robust to s wrap."""

    def __init__(self, lap_length: float):
        self.lap_length = lap_length
        self.last_s: Optional[float] = None
        self.progress = 0.0

    def reset(self) -> None:
        self.last_s = None
        self.progress = 0.0

    def update(self, s: float) -> float:
        if self.last_s is not None:
            delta = (s - self.last_s + self.lap_length / 2.0) % self.lap_length \
                - self.lap_length / 2.0
            self.progress += delta
        self.last_s = s
        return self.progress

    @property
    def lap_complete(self) -> bool:
        return self.progress >= self.lap_length

"""Event-camera emulation over the rendered lane markings.

The sensor is modeled as a downward-pitched pinhole camera whose pixels see
either marking paint (1) or road (0); per 50 ms step the renderer produces a
binary 128x128 frame and polarity events are the frame difference (0->1 ON,
1->0 OFF).  Two condensations feed the controllers:

  * a 32x16 count/binary grid over the last ten frames (4x4 pixel blocks of
    the 32x32 binned image, rows cropped to the central band);
  * an 8x4 saturating rate grid over a single frame.

All functions are pure and deterministic for a given pose.
"""

import math
from dataclasses import dataclass, field
from typing import Deque, Iterable, List, Optional, Tuple
from collections import deque

import numpy as np

from ._geomkernel import MarkingRenderer
from .config import CameraConfig
from .errors import ConfigurationError
from .track import RobotState, TrackSpec


@dataclass
class CameraModel:
    mount_height: float = 0.3
    forward_offset: float = 0.15
    depression: float = math.pi / 6.0
    horizontal_fov: float = math.radians(70.0)
    resolution: int = 128
    line_width: float = 0.1
    max_view_distance: float = 50.0
    _cache: Optional[tuple] = field(default=None, repr=False, compare=False)

    @classmethod
    def from_config(cls, cfg: CameraConfig) -> "CameraModel":
        return cls(mount_height=cfg.mount_height,
                   forward_offset=cfg.forward_offset,
                   depression=math.radians(cfg.depression_deg),
                   horizontal_fov=math.radians(cfg.horizontal_fov_deg),
                   resolution=cfg.resolution,
                   line_width=cfg.line_width,
                   max_view_distance=cfg.max_view_distance)

    def ground_grid(self):
        """Robot-frame ground intersections of all pixel rays (cached).

        Returns (gx, gy, valid): forward/left coordinates relative to the robot
        center for every pixel, and a mask of rays that hit the ground within
        the view-distance cap.  Rays at or above the horizon are invalid.
        """
        if self._cache is not None:
            return self._cache
        n = self.resolution
        f = (n / 2.0) / math.tan(self.horizontal_fov / 2.0)
        cols = (np.arange(n) + 0.5) - n / 2.0
        rows = (np.arange(n) + 0.5) - n / 2.0
        u = cols[None, :] / f          # image right
        v = rows[:, None] / f          # image down
        sd, cd = math.sin(self.depression), math.cos(self.depression)
        # camera axes in the robot frame (x forward, y left, z up):
        #   right   = (0, -1, 0)
        #   down    = (-sd, 0, -cd)
        #   forward = (cd, 0, -sd)
        dx = np.broadcast_to(-v * sd + cd, (n, n))
        dy = np.broadcast_to(-u, (n, n))
        dz = np.broadcast_to(-v * cd - sd, (n, n))
        below = dz < -1e-9
        t = np.where(below, -self.mount_height / np.where(below, dz, -1.0), 0.0)
        gx = self.forward_offset + t * dx
        gy = t * dy
        valid = below & (np.hypot(gx, gy) <= self.max_view_distance)
        self._cache = (gx, gy, valid)
        return self._cache


def _renderer_for(track: TrackSpec, cam: CameraModel) -> MarkingRenderer:
    r = getattr(track, "_renderer", None)
    if r is None or r.line_width != cam.line_width:
        r = MarkingRenderer(track, cam.line_width)
        track._renderer = r
    return r


def render_view(track: TrackSpec, state: RobotState, cam: CameraModel) -> np.ndarray:
    """Binary 128x128 view: 1 where the pixel's ground ray hits marking paint."""
    gx, gy, valid = cam.ground_grid()
    ch, sh = math.cos(state.heading), math.sin(state.heading)
    gxv = gx[valid]
    gyv = gy[valid]
    pts_x = state.x + gxv * ch - gyv * sh
    pts_y = state.y + gxv * sh + gyv * ch
    lit = _renderer_for(track, cam).lit(pts_x, pts_y)
    img = np.zeros((cam.resolution, cam.resolution), dtype=np.uint8)
    img[valid] = lit
    return img


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

POLARITY_ON = 1
POLARITY_OFF = -1


@dataclass
class EventFrame:
    """Polarity events of one 50 ms interval; at most one event per pixel."""

    px: np.ndarray        # column indices
    py: np.ndarray        # row indices
    polarity: np.ndarray  # +1 ON, -1 OFF
    t: int = 0

    def __len__(self) -> int:
        return len(self.px)

    @property
    def on_count(self) -> int:
        return int(np.sum(self.polarity == POLARITY_ON))

    @property
    def off_count(self) -> int:
        return int(np.sum(self.polarity == POLARITY_OFF))

    @classmethod
    def empty(cls, t: int = 0) -> "EventFrame":
        z = np.zeros(0, dtype=np.int64)
        return cls(px=z, py=z.copy(), polarity=z.copy(), t=t)


def diff_events(prev: np.ndarray, curr: np.ndarray, t: int = 0) -> EventFrame:
    """ON events where a pixel turned 0->1, OFF where 1->0."""
    if prev.shape != curr.shape:
        raise ConfigurationError("frame shapes differ")
    changed = prev != curr
    rows, cols = np.nonzero(changed)
    pol = np.where(curr[rows, cols] > 0, POLARITY_ON, POLARITY_OFF).astype(np.int64)
    return EventFrame(px=cols.astype(np.int64), py=rows.astype(np.int64),
                      polarity=pol, t=t)


class FrameQueue:
    """FIFO of the last ten event frames feeding the condensed state."""

    def __init__(self, maxlen: int = 10):
        self.frames: Deque[EventFrame] = deque(maxlen=maxlen)

    def push(self, frame: EventFrame) -> None:
        self.frames.append(frame)

    def clear(self) -> None:
        self.frames.clear()

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)


# ---------------------------------------------------------------------------
# Condensation
# ---------------------------------------------------------------------------

@dataclass
class BinnedState:
    """Cropped 32x16 condensation: event counts and their binarization."""

    counts: np.ndarray   # (16, 32) int
    binary: np.ndarray   # (16, 32) uint8, 1 where counts > 0

    def as_vector(self) -> np.ndarray:
        return self.binary.reshape(-1).astype(np.float64)


def accumulate_counts(frames: Iterable[EventFrame], resolution: int = 128,
                      block: int = 4) -> np.ndarray:
    """Full 32x32 per-block event counts over a batch of frames (no crop)."""
    n = resolution // block
    counts = np.zeros((n, n), dtype=np.int64)
    for fr in frames:
        if len(fr) == 0:
            continue
        np.add.at(counts, (fr.py // block, fr.px // block), 1)
    return counts


def binarize(counts: np.ndarray) -> np.ndarray:
    return (counts > 0).astype(np.uint8)


def condense_dqn_state(queue: Iterable[EventFrame],
                       crop: Tuple[int, int] = (8, 24)) -> BinnedState:
    """Ten-frame condensation into the cropped 32-wide, 16-tall state grid."""
    full = accumulate_counts(queue)
    counts = full[crop[0]:crop[1], :]
    return BinnedState(counts=counts, binary=binarize(counts))


def condense_rstdp_input(frame: EventFrame, events_for_max: int = 15,
                         max_rate: float = 300.0,
                         crop: Tuple[int, int] = (8, 24),
                         rows: int = 4, cols: int = 8) -> np.ndarray:
    """Single-frame 8x4 rate grid: rate = min(count, n)/n * max_rate (Hz).

    Events land in `rows x cols` cells tiling the same cropped pixel band the
    condensed state uses.
    """
    row_px0, row_px1 = crop[0] * 4, crop[1] * 4
    band = row_px1 - row_px0
    cell_h = band // rows
    cell_w = 128 // cols
    counts = np.zeros((rows, cols), dtype=np.int64)
    if len(frame):
        keep = (frame.py >= row_px0) & (frame.py < row_px1)
        r = (frame.py[keep] - row_px0) // cell_h
        c = frame.px[keep] // cell_w
        np.add.at(counts, (r, c), 1)
    return np.minimum(counts, events_for_max) / events_for_max * max_rate


def dataset_scale(counts: np.ndarray, i_max: int) -> np.ndarray:
    """Scale raw counts into [0, 1] by the dataset-wide maximum cell value."""
    if i_max < 1:
        raise ConfigurationError("dataset maximum must be >= 1 (empty dataset?)")
    return np.clip(counts.astype(np.float64) / float(i_max), 0.0, 1.0)

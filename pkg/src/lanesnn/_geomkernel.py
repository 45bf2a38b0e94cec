"""Compiled hot path for ground-point -> marking rendering.

The per-frame renderer projects ~14k ground points onto the course middle
and tests marking membership; doing that through the generic numpy path
costs ~10 ms per frame, which dominates every training run.  This module
packs the segment list into flat arrays and evaluates the same math in a
numba kernel (~10x faster).  The numpy implementation in `track.Path`
remains the reference; both paths are asserted equivalent in the tests.
"""

import math

import numpy as np

try:
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(f):
            return f
        return deco

    prange = range

TWO_PI = 2.0 * math.pi


def pack_path(path):
    """Flatten a Path into (segtype, params, cums) arrays for the kernel.

    params rows: straight -> (x0, y0, ux, uy, length, 0, 0, 0)
                 arc      -> (cx, cy, radius, psi0, sweep, turn, ex0,ey0...)
    Arc endpoint coordinates are precomputed for the clamped branch.
    """
    from .track import ArcSegment, StraightSegment

    n = len(path.segments)
    segtype = np.zeros(n, dtype=np.int64)
    params = np.zeros((n, 10), dtype=np.float64)
    for i, seg in enumerate(path.segments):
        if isinstance(seg, StraightSegment):
            segtype[i] = 0
            params[i, :5] = (seg.x0, seg.y0, math.cos(seg.heading),
                             math.sin(seg.heading), seg.length)
        elif isinstance(seg, ArcSegment):
            segtype[i] = 1
            sx, sy, _ = seg.point_at(0.0)
            ex, ey, _ = seg.point_at(seg.length)
            params[i] = (seg.cx, seg.cy, seg.radius, seg.psi0, seg.sweep,
                         float(seg.turn), sx, sy, ex, ey)
        else:
            raise TypeError(type(seg))
    cums = np.asarray(path.cum[:-1], dtype=np.float64)
    return segtype, params, cums


@njit(cache=True, parallel=True)
def _lit_kernel(px, py, segtype, params, cums,
                left_on, right_on, center_on,
                edge, half_w, dash_len, period):  # pragma: no cover - compiled
    npts = px.size
    nseg = segtype.size
    out = np.zeros(npts, dtype=np.uint8)
    for k in prange(npts):
        x = px[k]
        y = py[k]
        best = 1e300
        bs = 0.0
        bd = 0.0
        bi = 0
        for i in range(nseg):
            if segtype[i] == 0:
                x0 = params[i, 0]
                y0 = params[i, 1]
                ux = params[i, 2]
                uy = params[i, 3]
                length = params[i, 4]
                t = (x - x0) * ux + (y - y0) * uy
                if t < 0.0:
                    t = 0.0
                elif t > length:
                    t = length
                dxp = (x - x0) - t * ux
                dyp = (y - y0) - t * uy
                dist2 = dxp * dxp + dyp * dyp
                d = dxp * uy - dyp * ux
                s = t
            else:
                cx = params[i, 0]
                cy = params[i, 1]
                r = params[i, 2]
                psi0 = params[i, 3]
                sweep = params[i, 4]
                turn = params[i, 5]
                relx = x - cx
                rely = y - cy
                rho = math.sqrt(relx * relx + rely * rely)
                psi = math.atan2(rely, relx)
                theta = (turn * (psi - psi0)) % TWO_PI
                radial = rho - r
                if theta <= sweep:
                    dist2 = radial * radial
                    s = theta * r
                else:
                    to_start = TWO_PI - theta
                    over = theta - sweep
                    if to_start < over:
                        exp_ = params[i, 6]
                        eyp_ = params[i, 7]
                        s = 0.0
                    else:
                        exp_ = params[i, 8]
                        eyp_ = params[i, 9]
                        s = sweep * r
                    dist2 = (x - exp_) ** 2 + (y - eyp_) ** 2
                d = turn * radial
            if dist2 < best:
                best = dist2
                bs = cums[i] + s
                bd = d
                bi = i
        lit = False
        if right_on[bi] and abs(bd - edge) <= half_w:
            lit = True
        elif left_on[bi] and abs(bd + edge) <= half_w:
            lit = True
        elif center_on[bi] and abs(bd) <= half_w:
            if (bs % period) < dash_len:
                lit = True
        out[k] = lit
    return out


class MarkingRenderer:
    """Per-track cache of packed geometry plus per-section marking flags."""

    def __init__(self, track, line_width: float):
        self.track = track
        self.line_width = line_width
        self.segtype, self.params, self.cums = pack_path(track.middle)
        labels = track.middle.labels
        pat = [track.patterns[track.section_pattern[l]] for l in labels]
        self.left_on = np.array([p.left_solid for p in pat], dtype=np.bool_)
        self.right_on = np.array([p.right_solid for p in pat], dtype=np.bool_)
        self.center_on = np.array([p.center_dashed for p in pat], dtype=np.bool_)
        self.edge = track.half_sep + track.marking_offset
        self.period = track.dash_len + track.gap_len

    def lit(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        if HAVE_NUMBA:
            return _lit_kernel(
                np.ascontiguousarray(px, dtype=np.float64),
                np.ascontiguousarray(py, dtype=np.float64),
                self.segtype, self.params, self.cums,
                self.left_on, self.right_on, self.center_on,
                self.edge, self.line_width / 2.0,
                self.track.dash_len, self.period)
        s, d, _, idx = self.track.middle.project_many(px, py)
        return self.track.marking_mask(s, d, idx, self.line_width).astype(np.uint8)

"""Spiking motor controllers: reward-trained and static-weight steering.

Both controllers share one structure: the 8x4 event-rate grid drives 32
Poisson sources connected all-to-all to two LIF motor neurons, and the
output spike counts are decoded into wheel speeds:

    m = min(n, n_max)/n_max            per motor, in [0, 1]
    a = m_left - m_right               activity difference, [-1, 1]
    S = c_turn * a                     turn speed
    V = -|a|*(v_max - v_min) + v_max   forward speed
    c = sqrt((m_l^2 + m_r^2)/2)        smoothing gate
    v <- c*V + (1-c)*v_prev            (frozen when the network is silent)
    s <- c*S + (1-c)*s_prev
    command = (v + s, v - s)

Teaching signal (learning controller only): per 50 ms cycle the signed
lane-center distance d injects opposite-sign rewards into the two motors'
dopamine fields, r_left/right = -/+ (d * c_r), so being right of center
strengthens whatever drove the right motor and that steers the robot left.

The static baseline wires each image half to its own motor with a weight
ramp growing toward the bottom center, the hand-designed analogue of what
the learning controller converges to.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .camera import EventFrame, condense_rstdp_input
from .config import RstdpConfig, RunConfig
from .plasticity import (
    TraceState,
    eligibility_series,
    integrate_weight_updates,
)
from .simulation import LaneSimulation, LapTracker
from .snn import LifParams, LifState, poisson_matrix, solve_lif_window
from .track import TrackSpec


def rstdp_reward(d: float, c_r: float) -> Tuple[float, float]:
    """(r_left, r_right) = (-d*c_r, +d*c_r); d > 0 means right of center."""
    return (-d * c_r, +d * c_r)


@dataclass
class MotorCommand:
    v_left: float
    v_right: float


@dataclass
class DecodeState:
    v: float
    s: float = 0.0


def decode_motors(n_left: int, n_right: int, state: DecodeState,
                  cfg: RstdpConfig) -> Tuple[MotorCommand, DecodeState]:
    """Spike counts -> smoothed wheel speeds (see module docstring)."""
    if n_left < 0 or n_right < 0:
        raise ValueError("spike counts must be non-negative")
    m_l = min(n_left, cfg.n_max) / cfg.n_max
    m_r = min(n_right, cfg.n_max) / cfg.n_max
    a = m_l - m_r
    turn = cfg.c_turn * a
    speed = -abs(a) * (cfg.v_max - cfg.v_min) + cfg.v_max
    c = math.sqrt((m_l * m_l + m_r * m_r) / 2.0)
    v = c * speed + (1.0 - c) * state.v
    s = c * turn + (1.0 - c) * state.s
    return MotorCommand(v + s, v - s), DecodeState(v, s)


# ---------------------------------------------------------------------------
# Shared LIF steering core
# ---------------------------------------------------------------------------

N_INPUTS = 32
N_MOTORS = 2
LEFT, RIGHT = 0, 1


class LifSteeringController:
    """32 Poisson inputs -> 2 LIF motor neurons, optional plastic synapses.

    Network and plasticity state persist across episode resets (the neural
    simulation runs continuously); only the decode smoothing is re-seeded on
    reset so a teleported robot starts by driving straight.
    """

    def __init__(self, cfg: RstdpConfig, rng: np.random.Generator,
                 weights: Optional[np.ndarray] = None, plastic: bool = True):
        self.cfg = cfg
        self.rng = rng
        self.plastic = plastic
        self.learning = plastic
        p = cfg.plasticity
        if weights is None:
            weights = np.full((N_INPUTS, N_MOTORS), p.w_init)
        self.w = np.asarray(weights, dtype=np.float64).reshape(N_INPUTS, N_MOTORS)
        self.params = LifParams(cfg.lif, cfg.sim_dt_ms)
        self.ticks = int(round(cfg.sim_window_ms / cfg.sim_dt_ms))
        self.lif_state = LifState.resting(self.params, N_MOTORS)
        self.traces = TraceState.zeros(N_INPUTS, N_MOTORS)
        self.dopamine = np.zeros(N_MOTORS)
        self.delay_carry = np.zeros(N_INPUTS)
        self.decode_state = DecodeState(v=cfg.v_max, s=0.0)

    def reset_decode(self) -> None:
        self.decode_state = DecodeState(v=self.cfg.v_max, s=0.0)

    def clear_dynamic_state(self) -> None:
        """Drop neuron and plasticity dynamics (weights persist).

        Used at trial resets so a crash's dopamine and eligibility cannot
        leak credit onto the next trial's unrelated scenery.
        """
        self.lif_state = LifState.resting(self.params, N_MOTORS)
        self.traces = TraceState.zeros(N_INPUTS, N_MOTORS)
        self.dopamine = np.zeros(N_MOTORS)
        self.delay_carry = np.zeros(N_INPUTS)

    def run_window(self, rates: np.ndarray) -> Tuple[int, int]:
        """Drive the network for one 50 ms window; returns output spike counts."""
        cfg = self.cfg
        dt_s = cfg.sim_dt_ms * 1e-3
        spikes_in = poisson_matrix(rates.reshape(-1), dt_s, self.ticks, self.rng)
        pre = spikes_in.astype(np.float64)
        # synaptic delay: spikes emitted at tick t drive currents at t+1
        delayed = np.vstack([self.delay_carry[None, :], pre[:-1]])
        inj = delayed @ (self.w * self.params.injection_gain)
        raster, self.lif_state, _ = solve_lif_window(self.params, inj,
                                                     self.lif_state)
        if self.plastic and self.learning:
            c_series, self.traces = eligibility_series(
                pre, raster.astype(np.float64), cfg.plasticity,
                cfg.sim_dt_ms, self.traces)
            self.dopamine = integrate_weight_updates(
                self.w, c_series, self.dopamine, cfg.plasticity, cfg.sim_dt_ms)
        else:
            kn = math.exp(-cfg.sim_window_ms / cfg.plasticity.tau_dopamine)
            self.dopamine = self.dopamine * kn
        self.delay_carry = pre[-1]
        counts = raster.sum(axis=0)
        return int(counts[LEFT]), int(counts[RIGHT])

    def inject_rewards(self, r_left: float, r_right: float) -> None:
        self.dopamine[LEFT] += r_left
        self.dopamine[RIGHT] += r_right

    def act(self, frame: EventFrame, crop: Tuple[int, int] = (8, 24)
            ) -> MotorCommand:
        """One 50 ms control step: frame -> rates -> window -> decoded command."""
        rates = condense_rstdp_input(frame, self.cfg.events_for_max_rate,
                                     self.cfg.poisson_max_rate, crop,
                                     rows=self.cfg.grid_rows,
                                     cols=self.cfg.grid_cols)
        n_l, n_r = self.run_window(rates)
        cmd, self.decode_state = decode_motors(n_l, n_r, self.decode_state,
                                               self.cfg)
        return cmd

    def weight_grids(self) -> Tuple[np.ndarray, np.ndarray]:
        rows, cols = self.cfg.grid_rows, self.cfg.grid_cols
        w = self.w.reshape(rows, cols, N_MOTORS)
        return w[:, :, LEFT].copy(), w[:, :, RIGHT].copy()


# ---------------------------------------------------------------------------
# Braitenberg baseline
# ---------------------------------------------------------------------------

def braitenberg_weights(cfg: RstdpConfig, peak: float) -> Tuple[np.ndarray, np.ndarray]:
    """Static mirror-image grids: each image half excites its own motor.

    Weight ramps from the top outer corner down to the bottom center of the
    half, so a line sliding toward the bottom center drives its motor
    hardest; events on the robot's right end up speeding the right motor,
    which steers the robot left, and mirror-wise for the left.
    """
    rows, cols = cfg.grid_rows, cfg.grid_cols
    half = cols // 2
    right = np.zeros((rows, cols))
    for r in range(rows):
        for c in range(half, cols):
            toward_bottom = r / (rows - 1)
            toward_center = (cols - 1 - c) / (half - 1)
            right[r, c] = peak * (toward_bottom + toward_center) / 2.0
    left = right[:, ::-1].copy()
    return left, right


def make_braitenberg(cfg: RunConfig, rng: np.random.Generator,
                     grids: Optional[Tuple[np.ndarray, np.ndarray]] = None
                     ) -> LifSteeringController:
    if grids is None:
        grids = braitenberg_weights(cfg.rstdp, cfg.braitenberg.peak_weight)
    w_left, w_right = grids
    w = np.stack([w_left.reshape(-1), w_right.reshape(-1)], axis=1)
    return LifSteeringController(cfg.rstdp, rng, weights=w, plastic=False)


def braitenberg_step(controller: LifSteeringController, frame: EventFrame
                     ) -> MotorCommand:
    return controller.act(frame)


# ---------------------------------------------------------------------------
# Closed-loop reward-modulated training
# ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    trial: int
    start_step: int
    end_step: int
    s_end: float
    section: str
    lane: str
    lap_completed: bool


@dataclass
class WeightSnapshot:
    step: int
    left: np.ndarray
    right: np.ndarray


@dataclass
class RstdpRunResult:
    controller: LifSteeringController
    trials: List[TrialRecord]
    snapshots: List[WeightSnapshot]
    world_steps: int
    first_lap_step: Optional[int]
    stable_step: Optional[int]


def rstdp_train(track: TrackSpec, cfg: RunConfig, total_steps: int,
                rng: Optional[np.random.Generator] = None,
                stop_when_stable: bool = True,
                stable_laps: int = 5,
                controller: Optional[LifSteeringController] = None,
                log_every: Optional[int] = None) -> RstdpRunResult:
    """Closed-loop training until stable lane keeping or the step budget."""
    rc = cfg.rstdp
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if controller is None:
        controller = LifSteeringController(rc, rng, plastic=True)
    crop = (cfg.camera.crop_row_start, cfg.camera.crop_row_stop)
    sim = LaneSimulation(track, cfg, start_lane="outer")
    tracker = LapTracker(track.lane(sim.lane).length)
    trials: List[TrialRecord] = []
    snapshots: List[WeightSnapshot] = []
    frame = EventFrame.empty()
    trial_start = 0
    consecutive_laps = 0
    first_lap = None
    stable_at = None
    pose = None

    def snapshot(step):
        left, right = controller.weight_grids()
        snapshots.append(WeightSnapshot(step, left, right))

    snapshot(0)
    while sim.world_step < total_steps:
        cmd = controller.act(frame, crop)
        frame, pose = sim.step(cmd.v_left, cmd.v_right)
        r_left, r_right = rstdp_reward(pose.d, rc.plasticity.reward_constant)
        if controller.learning:
            controller.inject_rewards(r_left, r_right)
        tracker.update(pose.s)
        off_center = abs(pose.d) > rc.reset_distance
        lap_done = tracker.lap_complete
        timed_out = (rc.max_trial_steps > 0
                     and sim.world_step - trial_start >= rc.max_trial_steps)
        if sim.world_step % rc.snapshot_every == 0:
            snapshot(sim.world_step)
        if off_center or lap_done or timed_out:
            trials.append(TrialRecord(len(trials), trial_start, sim.world_step,
                                      pose.s, pose.section, sim.lane, lap_done))
            if log_every and len(trials) % log_every == 0:
                t = trials[-1]
                print(f"  trial {t.trial}: steps={t.end_step - t.start_step} "
                      f"lap={t.lap_completed} section={t.section} "
                      f"w_max={controller.w.max():.0f}")
            if lap_done:
                consecutive_laps += 1
                if first_lap is None:
                    first_lap = sim.world_step
                if consecutive_laps >= stable_laps and stable_at is None:
                    stable_at = sim.world_step
                    if stop_when_stable:
                        break
            else:
                consecutive_laps = 0
            sim.switch_lane_reset()
            tracker = LapTracker(track.lane(sim.lane).length)
            controller.reset_decode()
            if rc.reset_clears_state:
                controller.clear_dynamic_state()
            frame = EventFrame.empty()
            trial_start = sim.world_step
    snapshot(sim.world_step)
    return RstdpRunResult(controller=controller, trials=trials,
                          snapshots=snapshots, world_steps=sim.world_step,
                          first_lap_step=first_lap, stable_step=stable_at)

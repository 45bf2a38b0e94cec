"""Run configuration: every tunable of the simulator and the four controllers.

One flat JSON document holds all parameters so a run can be reproduced from
its manifest.  Defaults are the values used throughout the experiments; the
per-section dataclasses below group them by subsystem.
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Tuple


@dataclass
class WorldConfig:
    dt: float = 0.05                 # world/camera step, s
    axle_width: float = 0.33         # wheel separation, m (Pioneer P3-DX)
    localize_bound: float = 2.0      # beyond this distance localization aborts, m


@dataclass
class CameraConfig:
    mount_height: float = 0.3        # m above ground
    forward_offset: float = 0.15     # m ahead of the axle center
    depression_deg: float = 30.0     # downward tilt of the optical axis
    horizontal_fov_deg: float = 70.0
    resolution: int = 128
    line_width: float = 0.1          # painted marking stroke width, m
    max_view_distance: float = 50.0  # ground points beyond this render dark, m
    crop_row_start: int = 8          # rows kept from the 32-row binned grid
    crop_row_stop: int = 24          # exclusive; 16 rows -> 32x16 state


@dataclass
class DqnConfig:
    hidden: Tuple[int, ...] = (200, 200)   # 512 - 200 - 200 - 3
    batch_size: int = 32
    update_frequency: int = 4        # one training step every N action steps
    soft_update_tau: float = 0.001
    learning_rate: float = 1e-4
    buffer_size: int = 5000
    pre_training_steps: int = 1000   # action steps at epsilon = 1.0
    annealing_steps: int = 49000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    gamma: float = 0.99
    reset_distance: float = 0.5      # m from lane center
    max_episode_steps: int = 1000    # action steps
    action_period: int = 10          # world steps per action (500 ms / 50 ms)
    motor_speed_straight: float = 1.0   # v_s, m/s
    motor_speed_turn: float = 0.25      # v_t, m/s
    reward_sigma: float = 0.15
    double_q: bool = True            # online argmax, target value; False = plain max
    eval_every_episodes: int = 20
    eval_success_steps: int = 500    # consecutive greedy action steps counted a success
    collect_after_steps: int = 2000  # extra greedy action steps archived post-success


@dataclass
class TransferConfig:
    hidden: int = 200                # 512(+bias) - 200 - 3
    batch_size: int = 50
    training_steps: int = 10000
    learning_rate: float = 1e-4
    holdout_fraction: float = 0.1
    sim_window_ms: float = 10.0
    sim_dt_ms: float = 1.0
    max_input_rate: float = 1000.0   # Hz
    if_threshold: float = 1.0
    trace_decay: float = 0.5         # action-trace decay per 50 ms step
    frames_per_state: int = 10       # runtime scale divisor is i_max / this


@dataclass
class LifConfig:
    """Leaky integrate-and-fire motor neuron with alpha-shaped input currents."""

    e_leak: float = -70.0            # mV
    c_membrane: float = 250.0        # pF
    tau_membrane: float = 10.0       # ms
    tau_synapse: float = 2.0         # ms
    t_refractory: float = 2.0        # ms
    v_reset: float = -70.0           # mV
    v_threshold: float = -55.0       # mV
    i_external: float = 0.0          # pA


@dataclass
class PlasticityConfig:
    a_plus: float = 1.0
    a_minus: float = 1.0
    tau_plus: float = 20.0           # ms
    tau_minus: float = 20.0          # ms (window symmetric with tau_plus)
    tau_eligibility: float = 1000.0  # ms
    tau_dopamine: float = 200.0      # ms
    w_min: float = 0.0
    w_max: float = 3000.0
    w_init: float = 200.0
    reward_constant: float = 0.01    # c_r
    eligibility_gain: float = 1.0    # injection gain on each pairing


@dataclass
class RstdpConfig:
    lif: LifConfig = field(default_factory=LifConfig)
    plasticity: PlasticityConfig = field(default_factory=PlasticityConfig)
    sim_window_ms: float = 50.0
    sim_dt_ms: float = 0.1
    synaptic_delay_ticks: int = 1
    poisson_max_rate: float = 300.0  # Hz
    events_for_max_rate: int = 15
    v_max: float = 1.5               # m/s
    v_min: float = 1.0               # m/s
    c_turn: float = 0.5
    n_max: int = 15                  # spike count that saturates the decoder
    reset_distance: float = 0.2      # m from lane center
    snapshot_every: int = 8000       # control steps between weight snapshots
    max_trial_steps: int = 1500      # reset a trial that never completes a lap
    reset_clears_state: bool = True  # drop traces/dopamine/membrane at resets
    grid_rows: int = 4
    grid_cols: int = 8


@dataclass
class BraitenbergConfig:
    peak_weight: float = 2400.0      # pA at the bottom-center of the ramp
    weights_file: str = ""           # optional JSON override of the two grids


@dataclass
class RunConfig:
    scenario: int = 1
    seed: int = 1
    world: WorldConfig = field(default_factory=WorldConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    rstdp: RstdpConfig = field(default_factory=RstdpConfig)
    braitenberg: BraitenbergConfig = field(default_factory=BraitenbergConfig)

    @property
    def depression(self) -> float:
        return math.radians(self.camera.depression_deg)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _build(cls, d)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")


def _build(tp, val):
    """Rebuild a (possibly nested) dataclass from plain JSON values."""
    if dataclasses.is_dataclass(tp) and isinstance(val, dict):
        kw = {}
        for f in dataclasses.fields(tp):
            if f.name in val:
                kw[f.name] = _build(f.type, val[f.name])
        return tp(**kw)
    if isinstance(val, list):
        return tuple(val)
    return val

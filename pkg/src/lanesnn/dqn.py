"""Deep Q-learning on the condensed binary event state.

The agent acts every ten 50 ms world steps on the 32x16 binary condensation
of the frame queue, with three discrete actions (steer left / straight /
steer right mapped to wheel-speed pairs), a Gaussian lane-center reward,
uniform experience replay, and a soft-updated target network.  Bootstrap
targets use the double-estimator by default (online argmax, target value);
off-center terminations cut the bootstrap, step-limit truncations do not.

Alongside the bounded replay ring, every visited state's count grid goes to
an append-only archive that later feeds the policy-transfer dataset.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .camera import FrameQueue, condense_dqn_state
from .config import DqnConfig, RunConfig
from .errors import ContractError
from .mlp import Adam, DenseNet, mse_loss, soft_update
from .simulation import LaneSimulation, LapTracker
from .track import TrackSpec

N_ACTIONS = 3
STATE_SIZE = 512


def gaussian_reward(d: float, sigma: float = 0.15) -> float:
    """Lane-center reward, peak-normalized to 1 at d = 0."""
    return math.exp(-(d * d) / (2.0 * sigma * sigma))


def action_to_motors(a: int, v_s: float = 1.0, v_t: float = 0.25
                     ) -> Tuple[float, float]:
    """0 = turn left, 1 = straight, 2 = turn right -> (v_left, v_right)."""
    if a == 0:
        return (v_s - v_t, v_s + v_t)
    if a == 1:
        return (v_s, v_s)
    if a == 2:
        return (v_s + v_t, v_s - v_t)
    raise ContractError(f"action {a!r} not in {{0, 1, 2}}")


def select_action(net: DenseNet, state_vec: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    q = net.forward(state_vec)
    return int(np.argmax(q))  # ties break to the lowest index


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.1
    pre_training_steps: int = 1000
    annealing_steps: int = 49000

    def value(self, t: int) -> float:
        if t <= self.pre_training_steps:
            return self.start
        frac = min((t - self.pre_training_steps) / self.annealing_steps, 1.0)
        return self.start + (self.end - self.start) * frac


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Uniform-sampling ring of transitions over the 512-bit binary states."""

    def __init__(self, capacity: int = 5000):
        self.capacity = capacity
        self.s = np.zeros((capacity, STATE_SIZE), dtype=np.uint8)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float64)
        self.s_next = np.zeros((capacity, STATE_SIZE), dtype=np.uint8)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.idx = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, tr: Transition) -> None:
        i = self.idx
        self.s[i] = tr.s
        self.a[i] = tr.a
        self.r[i] = tr.r
        self.s_next[i] = tr.s_next
        self.terminal[i] = tr.terminal
        self.idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(self.size, size=batch)
        return (self.s[idx].astype(np.float64), self.a[idx], self.r[idx],
                self.s_next[idx].astype(np.float64), self.terminal[idx])


class StateArchive:
    """Append-only store of every visited count grid (uint8, never evicts)."""

    def __init__(self, shape=(16, 32)):
        self.shape = shape
        self._chunks: List[np.ndarray] = []
        self._current = np.zeros((4096,) + shape, dtype=np.uint8)
        self._fill = 0

    def add(self, counts: np.ndarray) -> None:
        if self._fill == len(self._current):
            self._chunks.append(self._current)
            self._current = np.zeros_like(self._current)
            self._fill = 0
        self._current[self._fill] = np.minimum(counts, 255).astype(np.uint8)
        self._fill += 1

    def __len__(self) -> int:
        return sum(len(c) for c in self._chunks) + self._fill

    def as_array(self) -> np.ndarray:
        parts = self._chunks + [self._current[:self._fill]]
        return np.concatenate(parts) if parts else np.zeros((0,) + self.shape, np.uint8)

    def save(self, path) -> None:
        np.savez_compressed(path, counts=self.as_array())

    @staticmethod
    def load(path) -> np.ndarray:
        return np.load(path)["counts"]


def make_q_network(rng: np.random.Generator, hidden=(200, 200)) -> DenseNet:
    return DenseNet.create([STATE_SIZE, *hidden, N_ACTIONS], rng,
                           biases=True, tag="q-network")


def train_batch(online: DenseNet, target: DenseNet, opt: Adam,
                buffer: ReplayBuffer, rng: np.random.Generator,
                cfg: DqnConfig) -> Optional[float]:
    """One replay step; returns the loss or None when the buffer is short."""
    if len(buffer) < cfg.batch_size:
        return None
    s, a, r, s_next, terminal = buffer.sample(cfg.batch_size, rng)
    q_next_target = target.forward(s_next)
    if cfg.double_q:
        best = np.argmax(online.forward(s_next), axis=1)
        boot = q_next_target[np.arange(len(best)), best]
    else:
        boot = q_next_target.max(axis=1)
    y = r + cfg.gamma * boot * (~terminal)
    cache: list = []
    q = online.forward(s, cache=cache)
    target_mat = q.copy()
    target_mat[np.arange(len(a)), a] = y
    loss, d_out = mse_loss(q, target_mat)
    opt.step(online.backward(cache, d_out))
    soft_update(target, online, cfg.soft_update_tau)
    return loss


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    episode: int
    action_steps: int
    cumulative_reward: float
    reason: str


@dataclass
class EvalRecord:
    world_step: int           # training world steps consumed at eval time
    consecutive_steps: int    # greedy action steps before reset (capped)
    mean_abs_d: float
    success: bool


@dataclass
class DqnRunResult:
    online: DenseNet
    target: DenseNet
    episodes: List[EpisodeRecord]
    evals: List[EvalRecord]
    archive: StateArchive
    buffer: ReplayBuffer
    world_steps: int
    first_success_step: Optional[int]   # world steps at first >=500-step eval
    first_lap_step: Optional[int]       # world steps at first full greedy lap
    stable_step: Optional[int]          # world steps at 5 consecutive laps
    i_max: int


def _greedy_rollout(track: TrackSpec, cfg: RunConfig, net: DenseNet,
                    rng: np.random.Generator, lane: str,
                    max_action_steps: int,
                    archive: Optional[StateArchive] = None):
    """Run the greedy policy from a lane start; returns (action_steps, mean|d|, lap_done)."""
    dq = cfg.dqn
    sim = LaneSimulation(track, cfg, start_lane=lane)
    queue = FrameQueue()
    crop = (cfg.camera.crop_row_start, cfg.camera.crop_row_stop)
    state = condense_dqn_state(queue, crop)
    tracker = LapTracker(track.lane(lane).length)
    abs_d = []
    steps = 0
    lap_done = False
    for _ in range(max_action_steps):
        a = select_action(net, state.as_vector(), 0.0, rng)
        vl, vr = action_to_motors(a, dq.motor_speed_straight, dq.motor_speed_turn)
        off = False
        for _ in range(dq.action_period):
            ev, pose = sim.step(vl, vr)
            queue.push(ev)
            abs_d.append(abs(pose.d))
            tracker.update(pose.s)
            if abs(pose.d) > dq.reset_distance:
                off = True
                break
        state = condense_dqn_state(queue, crop)
        if archive is not None:
            archive.add(state.counts)
        steps += 1
        if off:
            break
        if tracker.lap_complete:
            lap_done = True
            break
    return steps, float(np.mean(abs_d)) if abs_d else 0.0, lap_done


def _stable_check(track: TrackSpec, cfg: RunConfig, net: DenseNet,
                  rng: np.random.Generator) -> bool:
    """Five consecutive alternating-lane greedy laps without an off-center reset."""
    lane = "outer"
    for _ in range(5):
        cap = int(3 * track.lane(lane).length
                  / (cfg.dqn.motor_speed_straight * cfg.world.dt
                     * cfg.dqn.action_period)) + 10
        _, _, lap_done = _greedy_rollout(track, cfg, net, rng, lane, cap)
        if not lap_done:
            return False
        lane = "inner" if lane == "outer" else "outer"
    return True


def run_dqn_training(track: TrackSpec, cfg: RunConfig,
                     total_world_steps: int,
                     rng: Optional[np.random.Generator] = None,
                     stop_when_stable: bool = True,
                     log_every: Optional[int] = None) -> DqnRunResult:
    dq = cfg.dqn
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    eval_seq = np.random.SeedSequence(entropy=(cfg.seed, 0xE7A1))
    online = make_q_network(rng, dq.hidden)
    target = online.copy()
    opt = Adam(online, lr=dq.learning_rate)
    buffer = ReplayBuffer(dq.buffer_size)
    archive = StateArchive()
    schedule = EpsilonSchedule(dq.epsilon_start, dq.epsilon_end,
                               dq.pre_training_steps, dq.annealing_steps)
    crop = (cfg.camera.crop_row_start, cfg.camera.crop_row_stop)

    sim = LaneSimulation(track, cfg, start_lane="outer")
    queue = FrameQueue()
    state = condense_dqn_state(queue, crop)
    episodes: List[EpisodeRecord] = []
    evals: List[EvalRecord] = []
    episode_steps = 0
    episode_reward = 0.0
    action_step = 0
    first_success = None
    first_lap = None
    stable_at = None

    while sim.world_step < total_world_steps:
        eps = schedule.value(action_step)
        a = select_action(online, state.as_vector(), eps, rng)
        vl, vr = action_to_motors(a, dq.motor_speed_straight, dq.motor_speed_turn)
        terminal = False
        reason = "none"
        pose = None
        for _ in range(dq.action_period):
            ev, pose = sim.step(vl, vr)
            queue.push(ev)
            if abs(pose.d) > dq.reset_distance:
                terminal = True
                reason = "off_center"
                break
        next_state = condense_dqn_state(queue, crop)
        r = gaussian_reward(pose.d, dq.reward_sigma)
        action_step += 1
        episode_steps += 1
        episode_reward += r
        truncated = not terminal and episode_steps >= dq.max_episode_steps
        buffer.add(Transition(state.binary.reshape(-1), a, r,
                              next_state.binary.reshape(-1), terminal))
        archive.add(next_state.counts)
        if action_step % dq.update_frequency == 0:
            train_batch(online, target, opt, buffer, rng, dq)
        if terminal or truncated:
            if truncated:
                reason = "step_limit"
            episodes.append(EpisodeRecord(len(episodes), episode_steps,
                                          episode_reward, reason))
            if log_every and len(episodes) % log_every == 0:
                print(f"  episode {len(episodes)}: steps={episode_steps} "
                      f"reward={episode_reward:.1f} eps={eps:.2f} "
                      f"world={sim.world_step}")
            if dq.eval_every_episodes and len(episodes) % dq.eval_every_episodes == 0:
                erng = np.random.default_rng(eval_seq.spawn(1)[0])
                steps, mean_d, lap_done = _greedy_rollout(
                    track, cfg, online, erng, "outer", dq.eval_success_steps)
                success = steps >= dq.eval_success_steps or lap_done
                evals.append(EvalRecord(sim.world_step, steps, mean_d, success))
                if lap_done and first_lap is None:
                    first_lap = sim.world_step
                if success and first_success is None:
                    first_success = sim.world_step
                if success and stable_at is None:
                    if _stable_check(track, cfg, online,
                                     np.random.default_rng(eval_seq.spawn(1)[0])):
                        stable_at = sim.world_step
                        if first_lap is None:
                            first_lap = sim.world_step
                        if stop_when_stable:
                            break
            sim.switch_lane_reset()
            queue.clear()
            state = condense_dqn_state(queue, crop)
            episode_steps = 0
            episode_reward = 0.0
        else:
            state = next_state

    # enrich the archive with post-convergence states for the transfer dataset
    if dq.collect_after_steps > 0 and (first_success is not None or stable_at is not None):
        erng = np.random.default_rng(eval_seq.spawn(1)[0])
        collected = 0
        lane = "outer"
        while collected < dq.collect_after_steps:
            steps, _, _ = _greedy_rollout(
                track, cfg, online, erng, lane,
                dq.collect_after_steps - collected, archive=archive)
            collected += max(steps, 1)
            lane = "inner" if lane == "outer" else "outer"

    counts = archive.as_array()
    i_max = int(counts.max()) if len(counts) else 0
    return DqnRunResult(online=online, target=target, episodes=episodes,
                        evals=evals, archive=archive, buffer=buffer,
                        world_steps=sim.world_step,
                        first_success_step=first_success,
                        first_lap_step=first_lap,
                        stable_step=stable_at, i_max=i_max)

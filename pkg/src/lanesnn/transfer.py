"""Q-policy transfer into a rate-coded spiking classifier.

Pipeline: label every archived count grid with the frozen Q-network's
greedy action; scale inputs to [0, 1] by the dataset-wide maximum cell
value; train a bias-free 512(+bias)-200-3 ReLU classifier (the input bias
is an always-on extra feature, so it transfers as an ordinary weight);
normalize each layer so the largest positive incoming-weight sum is exactly
1 (per-layer positive rescaling commutes with ReLU, so the argmax is
preserved sample-for-sample); copy the weights onto threshold-1
integrate-and-fire neurons driven by Poisson inputs.

At run time the controller reads one 50 ms event frame, scales its counts
by i_max/n (n = frames per training state), drives the network for a 10 ms
window at up to 1 kHz, and feeds output spike counts into exponentially
decaying per-action traces; the argmax trace is the action even on windows
with no output spikes at all.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .camera import EventFrame, accumulate_counts, dataset_scale
from .config import TransferConfig
from .errors import ConfigurationError
from .mlp import Adam, DenseNet, train_step_adam
from .snn import IfNetwork

N_ACTIONS = 3
STATE_SIZE = 512


@dataclass
class StateActionDataset:
    counts: np.ndarray       # (N, 16, 32) uint8
    labels: np.ndarray       # (N,) greedy actions of the frozen Q-network
    i_max: int

    def __len__(self) -> int:
        return len(self.counts)

    def scaled(self, idx) -> np.ndarray:
        """Inputs in [0, 1]: counts / i_max, flattened to (len(idx), 512)."""
        raw = self.counts[idx].reshape(len(np.atleast_1d(idx)), STATE_SIZE)
        return dataset_scale(raw, self.i_max)

    def label_distribution(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_ACTIONS) / max(len(self), 1)


def with_bias_feature(x: np.ndarray) -> np.ndarray:
    """Append the constant always-on input realizing the first-layer bias."""
    x = np.atleast_2d(x)
    return np.hstack([x, np.ones((x.shape[0], 1))])


def build_dataset(archive_counts: np.ndarray, dqn_net: DenseNet,
                  batch: int = 2048) -> StateActionDataset:
    """Label archived states with the frozen Q-network's argmax action."""
    if len(archive_counts) == 0:
        raise ConfigurationError("state archive is empty")
    i_max = int(archive_counts.max())
    if i_max < 1:
        raise ConfigurationError("archive contains no events; cannot scale")
    labels = np.empty(len(archive_counts), dtype=np.int64)
    for k in range(0, len(archive_counts), batch):
        chunk = archive_counts[k:k + batch]
        binary = (chunk > 0).reshape(len(chunk), STATE_SIZE).astype(np.float64)
        labels[k:k + batch] = np.argmax(dqn_net.forward(binary), axis=1)
    return StateActionDataset(counts=archive_counts, labels=labels, i_max=i_max)


def train_classifier(dataset: StateActionDataset, cfg: TransferConfig,
                     rng: np.random.Generator,
                     training_steps: Optional[int] = None
                     ) -> Tuple[DenseNet, float]:
    """Adam-trained softmax classifier; returns (net, held-out accuracy)."""
    n = len(dataset)
    order = rng.permutation(n)
    n_hold = max(1, int(round(n * cfg.holdout_fraction))) if n > 1 else 0
    hold_idx = order[:n_hold]
    train_idx = order[n_hold:] if n_hold < n else order
    net = DenseNet.create([STATE_SIZE + 1, cfg.hidden, N_ACTIONS], rng,
                          biases=False, tag="transfer-classifier")
    opt = Adam(net, lr=cfg.learning_rate)
    steps = cfg.training_steps if training_steps is None else training_steps
    for _ in range(steps):
        idx = train_idx[rng.integers(len(train_idx), size=cfg.batch_size)]
        x = with_bias_feature(dataset.scaled(idx))
        train_step_adam(net, opt, x, dataset.labels[idx], loss="cross_entropy")
    accuracy = (classifier_accuracy(net, dataset, hold_idx)
                if n_hold else float("nan"))
    return net, accuracy


def classifier_accuracy(net: DenseNet, dataset: StateActionDataset,
                        idx: np.ndarray, batch: int = 4096) -> float:
    idx = np.atleast_1d(idx)
    hits = 0
    for k in range(0, len(idx), batch):
        chunk = idx[k:k + batch]
        x = with_bias_feature(dataset.scaled(chunk))
        hits += int(np.sum(np.argmax(net.forward(x), axis=1)
                           == dataset.labels[chunk]))
    return hits / len(idx)


# ---------------------------------------------------------------------------
# Weight normalization
# ---------------------------------------------------------------------------

def normalize_model(net: DenseNet) -> DenseNet:
    """Per layer, divide incoming weights by the largest positive input sum.

    After this, max over neurons of sum(max(0, w_in)) == 1 for every layer,
    so a threshold-1 IF neuron can never be driven past threshold twice in
    one tick; the classifier argmax is unchanged for every input.
    """
    out = net.copy()
    for layer in out.layers:
        if layer.bias is not None:
            raise ConfigurationError("normalization expects bias-free layers")
        pos_sum = np.maximum(layer.weights, 0.0).sum(axis=1)
        max_input = float(pos_sum.max())
        if max_input <= 0.0:
            raise ConfigurationError("degenerate layer: no positive weights")
        layer.weights /= max_input
    out.tag = net.tag + "-normalized" if net.tag else "normalized"
    return out


def max_positive_input_sums(net: DenseNet) -> list:
    return [float(np.maximum(l.weights, 0.0).sum(axis=1).max())
            for l in net.layers]


# ---------------------------------------------------------------------------
# Spiking controller
# ---------------------------------------------------------------------------

@dataclass
class ActionTraces:
    z: np.ndarray = field(default_factory=lambda: np.zeros(N_ACTIONS))
    decay: float = 0.5

    def update(self, spike_counts: np.ndarray) -> int:
        self.z = self.decay * self.z + spike_counts
        return int(np.argmax(self.z))

    def reset(self) -> None:
        self.z = np.zeros(N_ACTIONS)


class SpikingPolicy:
    """IF-network controller reading one event frame per 50 ms control step."""

    def __init__(self, normalized: DenseNet, i_max: int, cfg: TransferConfig,
                 crop: Tuple[int, int] = (8, 24)):
        self.cfg = cfg
        self.crop = crop
        self.net = IfNetwork([l.weights for l in normalized.layers],
                             threshold=cfg.if_threshold)
        # one frame carries ~1/n of a training state's events
        self.frame_scale = max(i_max / cfg.frames_per_state, 1e-12)
        self.window_ticks = int(round(cfg.sim_window_ms / cfg.sim_dt_ms))
        self.traces = ActionTraces(decay=cfg.trace_decay)

    def reset(self) -> None:
        self.net.reset()
        self.traces.reset()

    def rates_from_frame(self, frame: EventFrame) -> np.ndarray:
        counts = accumulate_counts([frame])[self.crop[0]:self.crop[1], :]
        fractions = np.clip(counts.reshape(-1) / self.frame_scale, 0.0, 1.0)
        return np.append(fractions, 1.0)  # bias source at the maximum rate

    def control_step(self, frame: EventFrame, rng: np.random.Generator) -> int:
        counts = self.net.run_window(self.rates_from_frame(frame),
                                     self.window_ticks, rng)
        return self.traces.update(counts)


def snn_control_step(policy: SpikingPolicy, frame: EventFrame,
                     rng: np.random.Generator) -> int:
    return policy.control_step(frame, rng)


def snn_classifier_agreement(classifier: DenseNet, normalized: DenseNet,
                             dataset: StateActionDataset, n_states: int,
                             cfg: TransferConfig,
                             rng: np.random.Generator) -> float:
    """Fraction of dataset states where one SNN window matches the ANN argmax.

    Dataset values are rate fractions directly; each state gets a fresh
    network (no trace carry-over), so this isolates rate-code fidelity.
    """
    idx = rng.integers(len(dataset), size=n_states)
    x = with_bias_feature(dataset.scaled(idx))
    ann_actions = np.argmax(classifier.forward(x), axis=1)
    net = IfNetwork([l.weights for l in normalized.layers],
                    threshold=cfg.if_threshold)
    ticks = int(round(cfg.sim_window_ms / cfg.sim_dt_ms))
    hits = 0
    for row, ann_a in zip(x, ann_actions):
        net.reset()
        counts = net.run_window(row, ticks, rng)
        hits += int(int(np.argmax(counts)) == ann_a)
    return hits / n_states

"""Minimal dense feedforward network with hand-rolled backprop and Adam.

Exactly the three architectures the experiments need: the 512-200-200-3
Q-network, the bias-free 512(+bias)-200-3 transfer classifier, and small
nets for gradient checking.  Hidden layers are ReLU, the output layer is
linear; the classifier applies softmax inside the cross-entropy loss.
Parameters and accumulation are double precision throughout so central
finite differences resolve the gradients to < 1e-4 relative error.
"""

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, TrainingDivergenceError

CHECKPOINT_VERSION = 1


@dataclass
class Layer:
    weights: np.ndarray            # (out, in)
    bias: Optional[np.ndarray]     # (out,) or None
    activation: str                # "relu" | "identity"


class DenseNet:
    """A stack of affine layers; hidden activations ReLU, output identity."""

    def __init__(self, layers: List[Layer], tag: str = ""):
        self.layers = layers
        self.tag = tag
        for a, b in zip(layers[:-1], layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise ContractError("layer dimensions do not chain")

    @classmethod
    def create(cls, sizes: Sequence[int], rng: np.random.Generator,
               biases: bool = True, tag: str = "") -> "DenseNet":
        """He-uniform initialized net with ReLU hidden layers."""
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / n_in)
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
            b = np.zeros(n_out) if biases else None
            act = "identity" if i == len(sizes) - 2 else "relu"
            layers.append(Layer(w, b, act))
        return cls(layers, tag=tag)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return (self.layers[0].weights.shape[1],) + tuple(
            l.weights.shape[0] for l in self.layers)

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weights.copy(),
                               None if l.bias is None else l.bias.copy(),
                               l.activation) for l in self.layers], tag=self.tag)

    def parameters(self) -> List[np.ndarray]:
        out = []
        for l in self.layers:
            out.append(l.weights)
            if l.bias is not None:
                out.append(l.bias)
        return out

    def forward(self, x: np.ndarray, cache: Optional[list] = None) -> np.ndarray:
        """Forward pass on (batch, in) or a single (in,) vector."""
        single = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if h.shape[1] != self.layers[0].weights.shape[1]:
            raise ContractError(
                f"input width {h.shape[1]} != {self.layers[0].weights.shape[1]}")
        if cache is not None:
            cache.append(h)
        for l in self.layers:
            z = h @ l.weights.T
            if l.bias is not None:
                z = z + l.bias
            h = np.maximum(z, 0.0) if l.activation == "relu" else z
            if cache is not None:
                cache.append(h)
        return h[0] if single else h

    def backward(self, cache: list, d_out: np.ndarray) -> List[Tuple[np.ndarray, Optional[np.ndarray]]]:
        """Gradients of a scalar loss given d(loss)/d(output); returns per layer."""
        grads: List[Tuple[np.ndarray, Optional[np.ndarray]]] = [None] * len(self.layers)
        delta = d_out
        for i in range(len(self.layers) - 1, -1, -1):
            l = self.layers[i]
            h_out = cache[i + 1]
            h_in = cache[i]
            if l.activation == "relu":
                delta = delta * (h_out > 0.0)
            dw = delta.T @ h_in
            db = delta.sum(axis=0) if l.bias is not None else None
            grads[i] = (dw, db)
            if i > 0:
                delta = delta @ l.weights
        return grads


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Half squared error averaged over the batch; gradient wrt pred."""
    diff = pred - target
    n = pred.shape[0]
    loss = float(np.mean(0.5 * np.sum(diff * diff, axis=1)))
    return loss, diff / n


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray):
    """Softmax cross-entropy with integer labels; gradient wrt logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = float(-np.mean(np.log(p[np.arange(n), labels] + 1e-300)))
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class Adam:
    """Adam with bias-corrected moments over a DenseNet's parameters."""

    def __init__(self, net: DenseNet, lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    def step(self, grads: List[Tuple[np.ndarray, Optional[np.ndarray]]]) -> None:
        flat = []
        for dw, db in grads:
            flat.append(dw)
            if db is not None:
                flat.append(db)
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self.net.parameters(), self.m, self.v, flat):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.lr != 0.0:
                p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def train_step_adam(net: DenseNet, opt: Adam, inputs: np.ndarray,
                    targets: np.ndarray, loss: str = "mse") -> float:
    """One forward/backward/Adam step; returns the pre-update batch loss."""
    if len(inputs) == 0:
        raise ContractError("empty batch")
    cache: list = []
    pred = net.forward(inputs, cache=cache)
    if loss == "mse":
        value, d_out = mse_loss(pred, targets)
    elif loss == "cross_entropy":
        value, d_out = cross_entropy_loss(pred, targets)
    else:
        raise ContractError(f"unknown loss {loss!r}")
    if not np.isfinite(value):
        raise TrainingDivergenceError(f"non-finite loss {value}")
    opt.step(net.backward(cache, d_out))
    return value


def soft_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, parameter-wise."""
    tp, op = target.parameters(), online.parameters()
    if len(tp) != len(op) or any(a.shape != b.shape for a, b in zip(tp, op)):
        raise ContractError("architecture mismatch in soft update")
    for t, o in zip(tp, op):
        t *= (1.0 - tau)
        t += tau * o


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(net: DenseNet, path, extra: Optional[dict] = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "tag": net.tag,
        "layers": [
            {
                "weights": l.weights.tolist(),
                "bias": None if l.bias is None else l.bias.tolist(),
                "activation": l.activation,
            }
            for l in net.layers
        ],
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> Tuple[DenseNet, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {doc.get('version')}")
    layers = [
        Layer(np.array(l["weights"], dtype=np.float64),
              None if l["bias"] is None else np.array(l["bias"], dtype=np.float64),
              l["activation"])
        for l in doc["layers"]
    ]
    return DenseNet(layers, tag=doc.get("tag", "")), doc.get("extra", {})

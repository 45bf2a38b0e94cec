"""Fixed-timestep spiking neuron engine.

Two neuron families cover both controller paths:

  * dimensionless integrate-and-fire units (threshold 1, reset to zero,
    floored at zero) stepped at 1 ms for the transferred classifier;
  * leaky integrate-and-fire neurons with alpha-shaped synaptic currents
    stepped at 0.1 ms for the directly trained motor network.

LIF integration uses exact exponential propagators per tick for both the
membrane and the second-order synaptic filter, so free decay matches the
closed-form solution to machine precision and long runs do not drift.  The
alpha filter state is shared per postsynaptic neuron (currents superpose),
with the per-spike injection scaled so a lone spike's current peaks at the
synaptic weight after tau_syn.

`solve_lif_window` evaluates a whole window at once with linear-filter
scans, restarting the membrane recurrence only at threshold crossings; it
is tick-for-tick identical to `LifPopulation.step` and ~20x faster.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from .config import LifConfig
from .errors import ConfigurationError


# ---------------------------------------------------------------------------
# Poisson sources
# ---------------------------------------------------------------------------

def poisson_step(rate: float, dt: float, rng: np.random.Generator) -> bool:
    """Bernoulli spike with probability rate*dt for one tick."""
    p = rate * dt
    if p > 1.0:
        raise ConfigurationError(f"rate*dt = {p} exceeds 1 (shrink dt)")
    if p < 0.0:
        raise ConfigurationError("rate must be non-negative")
    return bool(rng.random() < p)


@dataclass
class PoissonSource:
    rate: float = 0.0

    def step(self, dt: float, rng: np.random.Generator) -> bool:
        return poisson_step(self.rate, dt, rng)


def poisson_matrix(rates: np.ndarray, dt: float, ticks: int,
                   rng: np.random.Generator) -> np.ndarray:
    """(ticks, n) boolean spike raster for n independent Poisson sources."""
    p = np.asarray(rates, dtype=np.float64) * dt
    if np.any(p > 1.0) or np.any(p < 0.0):
        raise ConfigurationError("rate*dt outside [0, 1]")
    return rng.random((ticks, p.size)) < p[None, :]


# ---------------------------------------------------------------------------
# Dimensionless integrate-and-fire (transfer path)
# ---------------------------------------------------------------------------

@dataclass
class IFNeuron:
    """Threshold-1 accumulator: reset to zero on spike, floored at zero."""

    v: float = 0.0
    threshold: float = 1.0

    def step(self, weighted_input: float) -> bool:
        return bool(if_step(self, weighted_input))


def if_step(n: IFNeuron, weighted_input: float) -> bool:
    if not math.isfinite(weighted_input):
        raise ConfigurationError("weighted input must be finite")
    n.v += weighted_input
    if n.v >= n.threshold:
        n.v = 0.0
        return True
    if n.v < 0.0:
        n.v = 0.0
    return False


class IfNetwork:
    """Feedforward layers of IF neurons with a one-tick synaptic delay.

    Weights are (out, in) per layer; the caller provides per-tick input spike
    vectors (Poisson draws plus any constant-rate bias source).
    """

    def __init__(self, weights: Sequence[np.ndarray], threshold: float = 1.0):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.threshold = threshold
        self.reset()

    def reset(self) -> None:
        self.potentials = [np.zeros(w.shape[0]) for w in self.weights]
        # spikes emitted by each layer on the previous tick (input layer first)
        self.prev_spikes = [np.zeros(w.shape[1]) for w in self.weights]

    def step(self, input_spikes: np.ndarray) -> np.ndarray:
        """Advance one tick; returns the output layer's spike vector."""
        carry = np.asarray(input_spikes, dtype=np.float64)
        for i, w in enumerate(self.weights):
            v = self.potentials[i]
            v += w @ self.prev_spikes[i]
            spikes = v >= self.threshold
            v[spikes] = 0.0
            np.maximum(v, 0.0, out=v)
            self.prev_spikes[i] = carry
            carry = spikes.astype(np.float64)
        return carry

    def run_window(self, rate_fractions: np.ndarray, ticks: int,
                   rng: np.random.Generator) -> np.ndarray:
        """Drive with Poisson inputs at `rate_fractions` of the tick rate limit."""
        p = np.asarray(rate_fractions, dtype=np.float64)
        if np.any(p > 1.0 + 1e-12) or np.any(p < 0.0):
            raise ConfigurationError("rate fractions must lie in [0, 1]")
        counts = np.zeros(self.weights[-1].shape[0])
        for _ in range(ticks):
            spikes_in = (rng.random(p.size) < p).astype(np.float64)
            counts += self.step(spikes_in)
        return counts


# ---------------------------------------------------------------------------
# Leaky integrate-and-fire with alpha currents (direct-training path)
# ---------------------------------------------------------------------------

def alpha_current(w: float, t_since_spike: float, tau_syn: float = 2.0) -> float:
    """Postsynaptic current kernel: peaks at the weight w when t = tau_syn (ms)."""
    if t_since_spike < 0:
        raise ConfigurationError("time since spike must be >= 0")
    x = t_since_spike / tau_syn
    return w * x * math.exp(1.0 - x)


@dataclass
class LifParams:
    """LIF constants plus the exact per-tick propagator entries.

    State per neuron is (y1, y2, V): y1/y2 the second-order alpha filter
    (y2 is the synaptic current in pA), V the membrane in mV.  A presynaptic
    spike of weight w adds w*e/tau_syn to y1.
    """

    cfg: LifConfig
    dt_ms: float

    def __post_init__(self):
        c = self.cfg
        h = self.dt_ms
        a = 1.0 / c.tau_membrane
        b = 1.0 / c.tau_synapse
        k = a - b
        self.p11 = math.exp(-h * b)
        self.p21 = h * self.p11
        self.p22 = self.p11
        self.p33 = math.exp(-h * a)
        ekh = math.exp(k * h)
        i0 = (ekh - 1.0) / k
        i1 = h * ekh / k - (ekh - 1.0) / (k * k)
        self.q31 = self.p33 * i1 / c.c_membrane
        self.q32 = self.p33 * i0 / c.c_membrane
        self.v_rest = c.e_leak + c.i_external * c.tau_membrane / c.c_membrane
        self.refractory_ticks = int(round(c.t_refractory / h))
        self.injection_gain = math.e / c.tau_synapse


@dataclass
class LifState:
    y1: np.ndarray
    y2: np.ndarray
    v: np.ndarray
    refractory: np.ndarray  # ticks still clamped

    @classmethod
    def resting(cls, params: LifParams, n: int) -> "LifState":
        return cls(y1=np.zeros(n), y2=np.zeros(n),
                   v=np.full(n, params.v_rest), refractory=np.zeros(n, dtype=np.int64))

    def copy(self) -> "LifState":
        return LifState(self.y1.copy(), self.y2.copy(),
                        self.v.copy(), self.refractory.copy())


class LifPopulation:
    """Reference per-tick stepper for a vector of LIF neurons."""

    def __init__(self, params: LifParams, n: int):
        self.params = params
        self.n = n
        self.state = LifState.resting(params, n)

    def step(self, injections: np.ndarray) -> np.ndarray:
        """One tick; injections are y1 increments (weight pA * e/tau per spike)."""
        p = self.params
        s = self.state
        u = s.y1 + injections
        s.y1 = p.p11 * u
        v_cand = p.v_rest + p.p33 * (s.v - p.v_rest) + p.q31 * u + p.q32 * s.y2
        s.y2 = p.p22 * s.y2 + p.p21 * u
        cfg = p.cfg
        spikes = np.zeros(self.n, dtype=bool)
        clamped = s.refractory > 0
        s.v = np.where(clamped, cfg.v_reset, v_cand)
        s.refractory = np.where(clamped, s.refractory - 1, 0)
        fire = ~clamped & (s.v >= cfg.v_threshold)
        if fire.any():
            spikes[fire] = True
            s.v[fire] = cfg.v_reset
            s.refractory[fire] = p.refractory_ticks - 1
        return spikes


def solve_lif_window(params: LifParams, injections: np.ndarray,
                     state: LifState, record_v: bool = False):
    """Run `injections` (ticks, n) through the LIF dynamics in vector form.

    Returns (spike_raster (ticks, n) bool, new_state, v_trace or None).
    Tick-for-tick identical to LifPopulation.step.
    """
    p = params
    cfg = p.cfg
    ticks, n = injections.shape
    # synaptic filter states are unaffected by spiking: scan them all at once
    u = lfilter([1.0], [1.0, -p.p11], injections, axis=0, zi=state.y1[None, :])[0]
    y2 = lfilter([p.p21], [1.0, -p.p22], u, axis=0,
                 zi=(p.p22 * state.y2)[None, :])[0]
    y2_prev = np.vstack([state.y2[None, :], y2[:-1]])
    drive = p.q31 * u + p.q32 * y2_prev + (1.0 - p.p33) * p.v_rest
    raster = np.zeros((ticks, n), dtype=bool)
    v_trace = np.empty((ticks, n)) if record_v else None
    v_final = np.empty(n)
    refr_final = np.zeros(n, dtype=np.int64)
    for j in range(n):
        t0 = 0
        v_prev = state.v[j]
        refr = int(state.refractory[j])
        if refr > 0:
            stop = min(refr, ticks)
            if record_v:
                v_trace[:stop, j] = cfg.v_reset
            t0 = stop
            refr_final[j] = refr - stop
            v_prev = cfg.v_reset
        while t0 < ticks:
            seg = lfilter([1.0], [1.0, -p.p33], drive[t0:, j],
                          zi=np.array([p.p33 * v_prev]))[0]
            over = np.nonzero(seg >= cfg.v_threshold)[0]
            if over.size == 0:
                if record_v:
                    v_trace[t0:, j] = seg
                v_prev = seg[-1]
                t0 = ticks
                break
            cross = int(over[0])
            t_spike = t0 + cross
            if record_v:
                v_trace[t0:t_spike, j] = seg[:cross]
                end = min(t_spike + p.refractory_ticks, ticks)
                v_trace[t_spike:end, j] = cfg.v_reset
            raster[t_spike, j] = True
            v_prev = cfg.v_reset
            t_next = t_spike + p.refractory_ticks
            if t_next >= ticks:
                refr_final[j] = t_next - ticks
                t0 = ticks
                break
            t0 = t_next
        v_final[j] = v_prev
    new_state = LifState(y1=p.p11 * u[-1], y2=y2[-1], v=v_final,
                         refractory=refr_final)
    return raster, new_state, v_trace

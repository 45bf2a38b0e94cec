"""Reward-modulated spike-timing-dependent plasticity.

Pairing rule: for a pre spike at t_pre and post spike at t_post with
lag = t_post - t_pre,

    W(lag) = A_plus * exp(-lag/tau_plus)   for lag >= 0
           = -A_minus * exp(lag/tau_minus) for lag < 0

Every pairing injects W * gain into a per-synapse eligibility trace c that
decays with tau_eligibility; a global dopamine level n (one field per motor
neuron, injected with the reward each control cycle, decaying with
tau_dopamine) converts eligibility into weight change, dw/dt = n * c,
clipped to [w_min, w_max].

Two implementations cover different needs:

  * `RStdpSynapse` / `DopamineField`: event-driven scalar reference with
    exact exponential decay between events.  The pairing bookkeeping uses
    pre/post traces, which is equivalent to the all-pairs double sum for
    exponential windows; simultaneous pre/post spikes pair as lag = 0
    potentiation (call on_pre_spike before on_post_spike for equal stamps).
  * `eligibility_series` / `integrate_weight_updates`: whole-window
    vectorized scan at fixed tick size used by the training loop
    (identical per-tick semantics, ~100x faster).
"""

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy.signal import lfilter

from .config import PlasticityConfig
from .errors import ContractError

PlasticityParams = PlasticityConfig  # one source of truth for the constants


def stdp_window(lag_ms: float, p: PlasticityParams) -> float:
    """Pair weight as a function of post-minus-pre spike lag (ms)."""
    if not math.isfinite(lag_ms):
        raise ContractError("lag must be finite")
    if lag_ms >= 0.0:
        return p.a_plus * math.exp(-lag_ms / p.tau_plus)
    return -p.a_minus * math.exp(lag_ms / p.tau_minus)


@dataclass
class DopamineField:
    """Global reward modulator: impulse injections, exponential decay."""

    p: PlasticityParams
    n: float = 0.0

    def decay(self, dt_ms: float) -> None:
        self.n *= math.exp(-dt_ms / self.p.tau_dopamine)

    def inject(self, reward: float) -> None:
        self.n += reward


def inject_reward(fld: DopamineField, reward: float) -> None:
    fld.inject(reward)


@dataclass
class RStdpSynapse:
    """Event-driven reference synapse; timestamps in ms, non-decreasing."""

    p: PlasticityParams
    w: float = None
    c: float = 0.0
    pre_trace: float = 0.0
    post_trace: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        if self.w is None:
            self.w = self.p.w_init

    def _advance(self, t_ms: float) -> None:
        dt = t_ms - self.t
        if dt < 0:
            raise ContractError(f"timestamp {t_ms} precedes {self.t}")
        if dt > 0:
            self.decay(dt)

    def decay(self, dt_ms: float) -> None:
        self.c *= math.exp(-dt_ms / self.p.tau_eligibility)
        self.pre_trace *= math.exp(-dt_ms / self.p.tau_plus)
        self.post_trace *= math.exp(-dt_ms / self.p.tau_minus)
        self.t += dt_ms

    def on_pre_spike(self, t_ms: float) -> None:
        self._advance(t_ms)
        self.pre_trace += 1.0
        self.c += -self.p.a_minus * self.post_trace * self.p.eligibility_gain

    def on_post_spike(self, t_ms: float) -> None:
        self._advance(t_ms)
        self.c += self.p.a_plus * self.pre_trace * self.p.eligibility_gain
        self.post_trace += 1.0

    def apply_update(self, fld: DopamineField, dt_ms: float) -> None:
        self.w += fld.n * self.c * dt_ms
        self.w = min(max(self.w, self.p.w_min), self.p.w_max)


def decay(syn: RStdpSynapse, fld: DopamineField, dt_ms: float) -> None:
    syn.decay(dt_ms)
    fld.decay(dt_ms)


def apply_update(syn: RStdpSynapse, fld: DopamineField, dt_ms: float) -> None:
    syn.apply_update(fld, dt_ms)


# ---------------------------------------------------------------------------
# Whole-window vectorized path
# ---------------------------------------------------------------------------

@dataclass
class TraceState:
    """Carry of the plasticity scan across windows."""

    pre_trace: np.ndarray   # (n_pre,)
    post_trace: np.ndarray  # (n_post,)
    c: np.ndarray           # (n_pre, n_post)

    @classmethod
    def zeros(cls, n_pre: int, n_post: int) -> "TraceState":
        return cls(np.zeros(n_pre), np.zeros(n_post), np.zeros((n_pre, n_post)))


def eligibility_series(pre_spikes: np.ndarray, post_spikes: np.ndarray,
                       p: PlasticityParams, dt_ms: float,
                       state: TraceState) -> Tuple[np.ndarray, TraceState]:
    """Per-tick eligibility over a window.

    Tick semantics (mirrored by the reference loop in the tests): traces
    decay, then this tick's spikes inject; the returned c[t] includes tick
    t's injections undecayed.  Pairing at identical ticks takes the lag = 0
    potentiation branch.
    """
    ticks, n_pre = pre_spikes.shape
    n_post = post_spikes.shape[1]
    kp = math.exp(-dt_ms / p.tau_plus)
    km = math.exp(-dt_ms / p.tau_minus)
    kc = math.exp(-dt_ms / p.tau_eligibility)
    pre_f = pre_spikes.astype(np.float64)
    post_f = post_spikes.astype(np.float64)
    pre_tr = lfilter([1.0], [1.0, -kp], pre_f, axis=0,
                     zi=(kp * state.pre_trace)[None, :])[0]
    post_tr = lfilter([1.0], [1.0, -km], post_f, axis=0,
                      zi=(km * state.post_trace)[None, :])[0]
    post_excl = post_tr - post_f  # trace seen by a pre spike at the same tick
    inj = p.eligibility_gain * (
        p.a_plus * np.einsum("ti,tj->tij", pre_tr, post_f)
        - p.a_minus * np.einsum("ti,tj->tij", pre_f, post_excl))
    flat = inj.reshape(ticks, n_pre * n_post)
    c = lfilter([1.0], [1.0, -kc], flat, axis=0,
                zi=(kc * state.c.reshape(-1))[None, :])[0]
    c = c.reshape(ticks, n_pre, n_post)
    new_state = TraceState(pre_trace=pre_tr[-1].copy(),
                           post_trace=post_tr[-1].copy(),
                           c=c[-1].copy())
    return c, new_state


def integrate_weight_updates(w: np.ndarray, c_series: np.ndarray,
                             n0: np.ndarray, p: PlasticityParams,
                             dt_ms: float) -> np.ndarray:
    """Accumulate w += n(t) * c(t) * dt over a window, then clip.

    n(t) decays from its window-start value n0 (per postsynaptic field) with
    tau_dopamine; the field itself is advanced by the caller.  Returns the
    dopamine values at window end.
    """
    ticks = c_series.shape[0]
    kn = math.exp(-dt_ms / p.tau_dopamine)
    n0 = np.asarray(n0, dtype=np.float64)
    if np.any(n0 != 0.0):
        kn_pow = kn ** np.arange(1, ticks + 1)
        acc = np.einsum("t,tij->ij", kn_pow, c_series)
        w += acc * n0[None, :] * dt_ms
        np.clip(w, p.w_min, p.w_max, out=w)
    return n0 * kn ** ticks

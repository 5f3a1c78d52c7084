"""Adaptive leaky integrate-and-fire machinery.

State updates for grids of LIF neurons driven by a forcing value, with
per-synapse exponentially decaying input traces, millisecond transmission
delays realized by a ring buffer, and absolute refractoriness.  All
functions operate on plain numpy arrays so a layer can batch every neuron
of a retinotopic map in one call; results do not depend on how neurons are
partitioned across calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NeuronParams:
    """Membrane, trace, and refractory constants for one layer.

    Units: potentials are dimensionless, time constants and the refractory
    period are in milliseconds.
    """

    v_th: float = 0.5
    v_rest: float = 0.0
    v_reset: float = 0.0
    lambda_v_ms: float = 5.0
    refr_ms: float = 3.0
    lambda_x_ms: float = 5.0
    alpha: float = 0.4

    def __post_init__(self):
        if self.lambda_v_ms <= 0 or self.lambda_x_ms <= 0:
            raise ValueError("time constants must be positive")
        if self.refr_ms < 0:
            raise ValueError("refractory period must be non-negative")
        if self.v_th <= self.v_rest:
            raise ValueError("threshold must exceed the resting potential")


@dataclass
class NeuronGridState:
    """Membrane potentials, refractory deadlines, and last spike flags."""

    v: np.ndarray
    refr_until: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, shape, params: NeuronParams):
        return cls(
            v=np.full(shape, params.v_rest, dtype=np.float64),
            refr_until=np.full(shape, -np.inf, dtype=np.float64),
            s=np.zeros(shape, dtype=bool),
        )

    def reset(self, params: NeuronParams):
        self.v.fill(params.v_rest)
        self.refr_until.fill(-np.inf)
        self.s.fill(False)


@dataclass
class SynapseTensor:
    """Weights and input traces indexed (postsynaptic, presynaptic, delay slot).

    ``tau_ms`` holds one strictly increasing transmission delay per slot,
    shared by all connections of the layer.
    """

    w: np.ndarray
    x: np.ndarray
    tau_ms: np.ndarray

    def __post_init__(self):
        self.tau_ms = np.asarray(self.tau_ms, dtype=np.float64)
        if self.w.shape != self.x.shape:
            raise ValueError("weight and trace tensors must have the same shape")
        if self.tau_ms.ndim != 1 or self.w.shape[-1] != self.tau_ms.size:
            raise ValueError("one delay per trailing slot axis required")
        if np.any(np.diff(self.tau_ms) <= 0):
            raise ValueError("delays must be strictly increasing")


def trace_decay(dt_ms, lambda_x_ms):
    """Exact per-step decay factor exp(-dt/lambda)."""
    return math.exp(-dt_ms / lambda_x_ms)


def update_traces(x, delayed_spikes, params: NeuronParams, dt_ms):
    """Advance input traces by one step: exact exponential decay plus an
    additive jump of ``alpha`` wherever the matching delayed spike is set.

    ``x`` is updated in place and returned.  ``delayed_spikes`` must
    broadcast against ``x``.
    """
    if dt_ms <= 0:
        raise ValueError("dt must be positive")
    x *= trace_decay(dt_ms, params.lambda_x_ms)
    if delayed_spikes.dtype == bool:
        x[delayed_spikes] += params.alpha
    else:
        x += params.alpha * delayed_spikes
    return x


def integrate_membrane(state: NeuronGridState, forcing, params: NeuronParams,
                       dt_ms, now_ms):
    """One forward-Euler membrane step for every non-refractory neuron.

    Refractory neurons stay pinned at the reset potential: input has no
    effect until the refractory deadline passes.  Requires dt < lambda_v
    for stability.
    """
    if not dt_ms < params.lambda_v_ms:
        raise ValueError("explicit Euler requires dt < lambda_v")
    active = now_ms >= state.refr_until
    dv = (dt_ms / params.lambda_v_ms) * (-(state.v - params.v_rest) + forcing)
    state.v = np.where(active, state.v + dv, state.v)
    return state


def fire_and_reset(state: NeuronGridState, params: NeuronParams, now_ms):
    """Emit spikes where v >= v_th (threshold inclusive), reset, and start
    the refractory period.  Returns the boolean spike array."""
    eligible = now_ms >= state.refr_until
    spikes = (state.v >= params.v_th) & eligible
    state.v[spikes] = params.v_reset
    state.refr_until[spikes] = now_ms + params.refr_ms
    state.s = spikes
    return spikes


class DelayBuffer:
    """Ring buffer of input spike frames for millisecond transmission delays.

    ``frame_at(k)`` returns the frame pushed exactly k steps ago; frames
    older than the maximum delay are overwritten.
    """

    def __init__(self, frame_shape, max_delay_steps):
        self.depth = int(max_delay_steps) + 1
        self._buf = np.zeros((self.depth, *frame_shape), dtype=bool)
        self._head = 0

    def reset(self):
        self._buf.fill(False)
        self._head = 0

    def push(self, frame):
        self._head = (self._head + 1) % self.depth
        self._buf[self._head] = frame

    def frame_at(self, steps_ago):
        if not 0 <= steps_ago < self.depth:
            raise IndexError("delay outside buffered range")
        return self._buf[(self._head - steps_ago) % self.depth]

"""Retinotopic layer types and their competition and learning machinery.

Six layer kinds cooperate in a fixed pipeline: an input stage that bins
events into binary polarity frames, a single-synaptic convolutional layer
for feature extraction, a merge layer that collapses feature maps, a
multisynaptic (delayed) convolutional layer for local motion, a pooling
layer, and a fully connected layer for global motion.  Convolutional
kernels are shared by every neuron of a map; plastic layers combine the
stable STDP rule with winner-take-all competition.

Conventions: spike frames are boolean arrays [channels, height, width];
kernels are [map, ky, kx, channel, delay_slot]; input traces are kept per
presynaptic neuron and delay slot as [slot, channel, height, width], which
is equivalent to the per-postsynaptic-neuron view because trace dynamics
depend only on the (delayed) presynaptic spike train.
"""

from __future__ import annotations

import enum
import os
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError
from .neuron import DelayBuffer, NeuronGridState, NeuronParams, fire_and_reset, \
    integrate_membrane, trace_decay
from .plasticity import RuleKind, StdpParams, comparison_update, \
    convergence_metric, normalize_traces, stdp_update


class LayerKind(enum.Enum):
    INPUT = "Input"
    SS_CONV = "SSConv"
    MERGE = "Merge"
    MS_CONV = "MSConv"
    POOLING = "Pooling"
    DENSE = "Dense"


@dataclass(frozen=True)
class LayerConfig:
    """Static description of one layer.

    ``r`` is the receptive-field side, ``s`` the stride, ``f`` the number of
    maps (or neurons, for the dense kind), ``m`` the synapses per
    connection, and ``beta`` the inhibitory scale used by the multisynaptic
    kind.  ``stdp`` may be None for non-plastic kinds.
    """

    kind: LayerKind
    name: str = ""
    r: int = 1
    s: int = 1
    f: int = 1
    m: int = 1
    tau_min_ms: float = 1.0
    tau_max_ms: float = 1.0
    beta: float = 0.0
    plastic: bool = False
    neuron: NeuronParams = field(default_factory=NeuronParams)
    stdp: Optional[StdpParams] = None


@dataclass(frozen=True)
class Kernel:
    """Shared convolutional weight block, optionally split into an
    excitatory (>= 0) and an inhibitory (<= 0) component."""

    exc: np.ndarray
    inh: Optional[np.ndarray] = None


@dataclass(frozen=True)
class WtaPolicy:
    """Scope of the winner-take-all suppression around each winner.

    ``radius`` is the Chebyshev radius on the output grid; radius 0 with
    ``cross_map`` set reduces to the neuron-specific (same location, all
    maps) competition kept after learning.
    """

    radius: int
    cross_map: bool = True


def delay_slots(tau_min_ms, tau_max_ms, m, dt_ms):
    """Linearly spaced transmission delays rounded to whole steps.

    Returns (tau_ms, steps); raises ConfigError when rounding collapses two
    slots together.
    """
    taus = np.linspace(tau_min_ms, tau_max_ms, m)
    steps = np.rint(taus / dt_ms).astype(np.int64)
    if np.any(steps < 0):
        raise ConfigError("negative transmission delay")
    if np.any(np.diff(steps) <= 0):
        raise ConfigError(
            f"{m} delay slots in [{tau_min_ms}, {tau_max_ms}] ms collide "
            f"after rounding to {dt_ms} ms steps"
        )
    return steps * dt_ms, steps


def conv_output_side(in_side, r, s):
    """Valid-placement output size: floor((in - r)/s) + 1."""
    return (in_side - r) // s + 1


def event_frames(stream, dt_ms, n_steps):
    """Bin an event stream into binary [2, H, W] frames, one per step.

    Channel 0 carries +1 polarity, channel 1 carries -1; several events of
    one pixel inside a bin still produce a single spike.
    """
    bin_us = dt_ms * 1000.0
    bins = np.floor(stream.t / bin_us).astype(np.int64)
    edges = np.searchsorted(bins, np.arange(n_steps + 1))
    chan = (stream.p < 0).astype(np.int64)
    for step in range(n_steps):
        frame = np.zeros((2, stream.height, stream.width), dtype=bool)
        lo, hi = edges[step], edges[step + 1]
        if hi > lo:
            frame[chan[lo:hi], stream.y[lo:hi], stream.x[lo:hi]] = True
        yield frame


def wta_resolve(v, candidates, policy: WtaPolicy):
    """Select winners among simultaneous threshold crossings.

    Candidates are visited in order of descending membrane potential with
    deterministic (map, y, x) tie-breaking.  Each winner suppresses every
    other neuron (candidate or not) within the policy neighborhood; later
    candidates inside a suppressed region cannot win.  Returns the winner
    coordinate list and the boolean suppression mask (winners excluded).
    """
    winners = []
    suppressed = np.zeros(v.shape, dtype=bool)
    idx = np.argwhere(candidates)
    if idx.size == 0:
        return winners, suppressed
    ks, ys, xs = idx[:, 0], idx[:, 1], idx[:, 2]
    order = np.lexsort((xs, ys, ks, -v[ks, ys, xs]))
    n_maps, height, width = v.shape
    rad = policy.radius
    for o in order:
        k, yy, xx = int(ks[o]), int(ys[o]), int(xs[o])
        if suppressed[k, yy, xx]:
            continue
        winners.append((k, yy, xx))
        y0, y1 = max(0, yy - rad), min(height, yy + rad + 1)
        x0, x1 = max(0, xx - rad), min(width, xx + rad + 1)
        if policy.cross_map:
            suppressed[:, y0:y1, x0:x1] = True
        else:
            suppressed[k, y0:y1, x0:x1] = True
        suppressed[k, yy, xx] = False
    return winners, suppressed


def shared_kernel_update(contributions):
    """Synapse-specific average of the local update of every winner of a map."""
    if not contributions:
        raise ValueError("at least one winner required")
    return np.mean(np.stack(contributions), axis=0)


def _box_sums(field, r, stride):
    # sum of every r x r window (valid placement, strided) via integral image
    h, w = field.shape
    integral = np.zeros((h + 1, w + 1))
    np.cumsum(field, axis=0, out=integral[1:, 1:])
    np.cumsum(integral[1:, 1:], axis=1, out=integral[1:, 1:])
    box = (integral[r:, r:] - integral[:-r, r:]
           - integral[r:, :-r] + integral[:-r, :-r])
    return box[::stride, ::stride]


def _neighborhood_max(grid):
    # 3x3 max including self; borders use the valid subset
    padded = np.pad(grid, 1, constant_values=-np.inf)
    return sliding_window_view(padded, (3, 3)).max(axis=(-1, -2))


def _trace_homeostasis(traces, r, stride):
    return _neighborhood_max(_box_sums(traces.sum(axis=(0, 1)), r, stride))


def _conv_drive(kernel, delayed_frames, stride):
    # kernel [f, r, r, C, m], frames [m, C, H, W] -> [f, Ho, Wo]
    f, r = kernel.shape[0], kernel.shape[1]
    m, c, h, w = delayed_frames.shape
    ho, wo = conv_output_side(h, r, stride), conv_output_side(w, r, stride)
    if not delayed_frames.any():
        return np.zeros((f, ho, wo))
    win = sliding_window_view(delayed_frames, (r, r), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                      # [m,C,Ho,Wo,r,r]
    col = np.ascontiguousarray(win.transpose(2, 3, 4, 5, 1, 0))
    flat = col.reshape(ho * wo, r * r * c * m)
    kflat = kernel.reshape(f, r * r * c * m)
    return (flat @ kflat.T).T.reshape(f, ho, wo)


def forcing_ssconv(kernel, delayed_frames, traces, stride):
    """Single-synaptic convolutional forcing: kernel drive minus the
    maximum receptive-field trace sum over the 3x3 spatial neighborhood."""
    drive = _conv_drive(kernel, delayed_frames.astype(np.float64, copy=False),
                        stride)
    return drive - _trace_homeostasis(traces, kernel.shape[1], stride)[None]


def forcing_msconv(kernel_exc, kernel_inh, beta, delayed_frames, traces, stride):
    """Multisynaptic forcing with scaled inhibition: (W_exc + beta W_inh)
    applied across delay slots, minus neighborhood-max trace homeostasis."""
    return forcing_ssconv(kernel_exc + beta * kernel_inh, delayed_frames,
                          traces, stride)


def forcing_merge(delayed_frame):
    """Unit-weight 1x1 aggregation of all presynaptic maps into one map."""
    return delayed_frame.sum(axis=0, dtype=np.float64)[None]


def forcing_pooling(delayed_frame, r):
    """Per-map spike count over non-overlapping r x r blocks."""
    win = sliding_window_view(delayed_frame, (r, r), axis=(1, 2))
    return win[:, ::r, ::r].sum(axis=(-1, -2), dtype=np.float64)


def forcing_dense(weights, delayed_frame, traces):
    """Fully connected forcing with per-neuron trace homeostasis."""
    flat = delayed_frame.reshape(-1).astype(np.float64)
    return weights.reshape(weights.shape[0], -1) @ flat - traces.sum()


class _ClockedLayer:
    """Common stepping skeleton: push input, read delayed frames, update
    traces, integrate the forcing, then fire (with competition where the
    layer is plastic)."""

    def __init__(self, cfg: LayerConfig, in_shape, dt_ms):
        self.cfg = cfg
        self.in_shape = tuple(in_shape)
        self.dt_ms = float(dt_ms)
        self.tau_ms, self.delay_steps = delay_slots(
            cfg.tau_min_ms, cfg.tau_max_ms, cfg.m, dt_ms
        )
        self.ring = DelayBuffer(self.in_shape, int(self.delay_steps.max()))
        self.out_shape = self._output_shape()
        self.state = NeuronGridState.zeros(self.out_shape, cfg.neuron)
        self.rule = RuleKind.OURS
        self.l_events = []
        self.recent_xhat = deque(maxlen=8)
        self.last_winners = []
        self.last_suppressed = np.zeros(self.out_shape, dtype=bool)

    @property
    def plastic(self):
        return self.cfg.plastic

    def reset(self):
        """Clear all dynamic state (weights are preserved)."""
        self.ring.reset()
        self.state.reset(self.cfg.neuron)
        self.last_winners = []
        self.last_suppressed = np.zeros(self.out_shape, dtype=bool)

    def pop_l_events(self):
        out = self.l_events
        self.l_events = []
        return out

    def get_weights(self):
        """(excitatory, inhibitory) weight arrays, or (None, None) for
        layers whose kernels are fixed and unitary."""
        return None, None

    def set_weights(self, exc, inh=None):
        raise ConfigError(
            f"layer {self.cfg.name or self.cfg.kind.value} has no stored weights")

    def step(self, in_frame, step_idx, learn=False):
        """One simulation step.

        The forcing is computed against the traces as they stood before the
        spikes of this step arrive: the homeostasis term penalizes recent
        history, so a fresh activity onset is maximally excitable.  The
        alpha jump lands right after, so the traces seen by plasticity at
        the moment of firing do include the spikes that caused it.
        """
        if in_frame.shape != self.in_shape:
            raise ValueError(
                f"{self.cfg.name or self.cfg.kind.value}: input frame "
                f"{in_frame.shape} does not match {self.in_shape}"
            )
        now = step_idx * self.dt_ms
        self.ring.push(in_frame)
        frames = np.stack(
            [self.ring.frame_at(int(d)) for d in self.delay_steps]
        ).astype(np.float64)
        self._decay_traces()
        forcing = self._forcing(frames)
        self._bump_traces(frames)
        integrate_membrane(self.state, forcing, self.cfg.neuron, self.dt_ms, now)
        return self._fire(now, learn)

    def _decay_traces(self):
        pass

    def _bump_traces(self, frames):
        pass

    def _fire(self, now, learn):
        return fire_and_reset(self.state, self.cfg.neuron, now)


class _PlasticLayer(_ClockedLayer):
    """Adds trace bookkeeping, WTA firing, and STDP application."""

    def __init__(self, cfg, in_shape, dt_ms):
        super().__init__(cfg, in_shape, dt_ms)
        if cfg.stdp is None:
            raise ConfigError(f"layer {cfg.name}: plastic layer needs stdp params")
        self.x = np.zeros((cfg.m, *self.in_shape), dtype=np.float64)
        self.learn_policy = WtaPolicy(radius=cfg.r // 2, cross_map=True)
        self.infer_policy = WtaPolicy(radius=0, cross_map=True)

    def reset(self):
        super().reset()
        self.x.fill(0.0)

    def _decay_traces(self):
        self.x *= trace_decay(self.dt_ms, self.cfg.neuron.lambda_x_ms)

    def _bump_traces(self, frames):
        self.x += self.cfg.neuron.alpha * frames

    def _fire(self, now, learn):
        params = self.cfg.neuron
        eligible = now >= self.state.refr_until
        candidates = (self.state.v >= params.v_th) & eligible
        policy = self.learn_policy if learn else self.infer_policy
        winners, suppressed = wta_resolve(self.state.v, candidates, policy)
        spikes = np.zeros(self.out_shape, dtype=bool)
        for k, yy, xx in winners:
            spikes[k, yy, xx] = True
        touched = spikes | suppressed
        self.state.v[touched] = params.v_reset
        self.state.refr_until[touched] = now + params.refr_ms
        self.state.s = spikes
        self.last_winners = winners
        self.last_suppressed = suppressed
        if learn and winners:
            self._apply_stdp(winners)
        return spikes


class SSConvLayer(_PlasticLayer):
    """Single-synaptic convolution with shared excitatory kernels."""

    kind = LayerKind.SS_CONV

    def __init__(self, cfg, in_shape, dt_ms):
        super().__init__(cfg, in_shape, dt_ms)
        c_in = self.in_shape[0]
        self.k_exc = np.full(
            (cfg.f, cfg.r, cfg.r, c_in, cfg.m), cfg.stdp.w_init, dtype=np.float64
        )
        self.k_inh = None

    def _output_shape(self):
        _, h, w = self.in_shape
        return (self.cfg.f, conv_output_side(h, self.cfg.r, self.cfg.s),
                conv_output_side(w, self.cfg.r, self.cfg.s))

    def _forcing(self, frames):
        return forcing_ssconv(self.k_exc, frames, self.x, self.cfg.s)

    def _winner_xhat(self, yy, xx):
        y0, x0 = yy * self.cfg.s, xx * self.cfg.s
        win = self.x[:, :, y0:y0 + self.cfg.r, x0:x0 + self.cfg.r]
        return normalize_traces(win.transpose(2, 3, 1, 0))

    def _apply_stdp(self, winners):
        stdp = self.cfg.stdp
        by_map = {}
        for k, yy, xx in winners:
            by_map.setdefault(k, []).append(self._winner_xhat(yy, xx))
        for k, xhats in by_map.items():
            if self.rule is RuleKind.OURS:
                parts = [stdp_update(self.k_exc[k], xh, stdp) for xh in xhats]
            else:
                parts = [comparison_update(self.rule, self.k_exc[k], xh >= 0.5, stdp)
                         for xh in xhats]
            self.k_exc[k] += shared_kernel_update(parts)
            if self.k_inh is not None:
                parts = [stdp_update(self.k_inh[k], xh, stdp, w_init=-stdp.w_init)
                         for xh in xhats]
                self.k_inh[k] += shared_kernel_update(parts)
            peak = self.k_exc[k].max()
            what = self.k_exc[k] / peak if peak > 0 else np.zeros_like(self.k_exc[k])
            for xh in xhats:
                self.l_events.append(convergence_metric(xh, what))
                self.recent_xhat.append((k, xh))


    def get_weights(self):
        return self.k_exc, self.k_inh

    def set_weights(self, exc, inh=None):
        self.k_exc = np.array(exc, dtype=np.float64)
        if self.k_inh is not None:
            if inh is None:
                raise ConfigError("layer expects an inhibitory kernel")
            self.k_inh = np.array(inh, dtype=np.float64)


class MSConvLayer(SSConvLayer):
    """Multisynaptic convolution: delayed excitatory/inhibitory kernel pairs."""

    kind = LayerKind.MS_CONV

    def __init__(self, cfg, in_shape, dt_ms):
        super().__init__(cfg, in_shape, dt_ms)
        # inhibitory weights start at zero; their update is centered on -w_init
        self.k_inh = np.zeros_like(self.k_exc)

    def _forcing(self, frames):
        return forcing_msconv(self.k_exc, self.k_inh, self.cfg.beta, frames,
                              self.x, self.cfg.s)


class MergeLayer(_ClockedLayer):
    """Non-plastic 1x1 aggregation of all presynaptic maps."""

    kind = LayerKind.MERGE

    def _output_shape(self):
        _, h, w = self.in_shape
        return (1, h, w)

    def _forcing(self, frames):
        return forcing_merge(frames[0])


class PoolingLayer(_ClockedLayer):
    """Non-plastic, non-overlapping spatial pooling of each map."""

    kind = LayerKind.POOLING

    def _output_shape(self):
        c, h, w = self.in_shape
        return (c, conv_output_side(h, self.cfg.r, self.cfg.r),
                conv_output_side(w, self.cfg.r, self.cfg.r))

    def _forcing(self, frames):
        return forcing_pooling(frames[0], self.cfg.r)


class DenseLayer(_PlasticLayer):
    """Fully connected output neurons; competition spans the whole layer."""

    kind = LayerKind.DENSE

    def __init__(self, cfg, in_shape, dt_ms):
        super().__init__(cfg, in_shape, dt_ms)
        self.w = np.full((cfg.f, *self.in_shape), cfg.stdp.w_init, dtype=np.float64)

    def _output_shape(self):
        return (self.cfg.f, 1, 1)

    def _forcing(self, frames):
        return forcing_dense(self.w, frames[0], self.x).reshape(self.out_shape)

    def _apply_stdp(self, winners):
        stdp = self.cfg.stdp
        xhat = normalize_traces(self.x[0])
        for k, _, _ in winners:
            if self.rule is RuleKind.OURS:
                self.w[k] += stdp_update(self.w[k], xhat, stdp)
            else:
                self.w[k] += comparison_update(self.rule, self.w[k],
                                               xhat >= 0.5, stdp)
            peak = self.w[k].max()
            what = self.w[k] / peak if peak > 0 else np.zeros_like(self.w[k])
            self.l_events.append(convergence_metric(xhat, what))
            self.recent_xhat.append((k, xhat))


    def get_weights(self):
        return self.w, None

    def set_weights(self, exc, inh=None):
        self.w = np.array(exc, dtype=np.float64)


_LAYER_CLASSES = {
    LayerKind.SS_CONV: SSConvLayer,
    LayerKind.MERGE: MergeLayer,
    LayerKind.MS_CONV: MSConvLayer,
    LayerKind.POOLING: PoolingLayer,
    LayerKind.DENSE: DenseLayer,
}


def make_layer(cfg: LayerConfig, in_shape, dt_ms):
    try:
        cls = _LAYER_CLASSES[cfg.kind]
    except KeyError:
        raise ConfigError(f"layer {cfg.name}: kind {cfg.kind} cannot be built")
    return cls(cfg, in_shape, dt_ms)


# ---------------------------------------------------------------------------
# kernel export


def kernel_csv(exc, inh, tau_ms):
    """Render one kernel as CSV text: columns ky,kx,ch,slot,tau_ms,w_exc[,w_inh]."""
    r1, r2, c_in, m = exc.shape
    cols = "ky,kx,ch,slot,tau_ms,w_exc"
    if inh is not None:
        cols += ",w_inh"
    lines = [cols]
    for ky in range(r1):
        for kx in range(r2):
            for ch in range(c_in):
                for d in range(m):
                    row = f"{ky},{kx},{ch},{d},{tau_ms[d]:g},{exc[ky, kx, ch, d]!r}"
                    if inh is not None:
                        row += f",{inh[ky, kx, ch, d]!r}"
                    lines.append(row)
    return "\n".join(lines) + "\n"


def kernel_slot_image(slot_weights, peak):
    """Map one [r, r, C] weight slice to a uint8 grayscale strip, channels
    side by side, brightness proportional to weight magnitude."""
    block = np.abs(slot_weights)
    if peak <= 0:
        peak = 1.0
    strip = np.concatenate([block[:, :, ch] for ch in range(block.shape[2])], axis=1)
    return np.clip(np.rint(strip / peak * 255.0), 0, 255).astype(np.uint8)


def export_kernels(kernels, tau_ms, out_dir, fmt="csv", prefix="kernel"):
    """Write per-kernel CSV grids or per-(kernel, slot) PGM images.

    ``kernels`` is a :class:`Kernel`; PGM brightness encodes weight
    magnitude normalized to the layer-wide maximum, separately for the
    excitatory and inhibitory components.  Returns the written paths.
    """
    from . import rasters

    os.makedirs(out_dir, exist_ok=True)
    exc, inh = kernels.exc, kernels.inh
    paths = []
    if fmt == "csv":
        for k in range(exc.shape[0]):
            path = os.path.join(out_dir, f"{prefix}{k:02d}.csv")
            text = kernel_csv(exc[k], None if inh is None else inh[k], tau_ms)
            tmp = f"{path}.tmp"
            with open(tmp, "w", encoding="ascii") as f:
                f.write(text)
            os.replace(tmp, path)
            paths.append(path)
        return paths
    if fmt != "pgm":
        raise ValueError(f"unknown kernel export format {fmt!r}")
    peak_exc = float(np.abs(exc).max())
    peak_inh = float(np.abs(inh).max()) if inh is not None else 0.0
    for k in range(exc.shape[0]):
        for d in range(exc.shape[-1]):
            path = os.path.join(out_dir, f"{prefix}{k:02d}_slot{d:02d}_exc.pgm")
            rasters.write_pgm(path, kernel_slot_image(exc[k][:, :, :, d], peak_exc))
            paths.append(path)
            if inh is not None:
                path = os.path.join(out_dir, f"{prefix}{k:02d}_slot{d:02d}_inh.pgm")
                rasters.write_pgm(path, kernel_slot_image(inh[k][:, :, :, d], peak_inh))
                paths.append(path)
    return paths

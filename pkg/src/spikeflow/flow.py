"""Optical-flow readout of learned multisynaptic kernels.

A converged spatiotemporal kernel concentrates its excitatory weight along
the trace a moving feature leaves across its delay slots.  The
histogram-matching procedure here picks the two most distant delay slots
still carrying a substantial share of the weight, projects each onto the
two spatial axes, and fits a line to the difference of the projections;
the slopes, scaled by the delay span, give a velocity in pixels per
millisecond.  Hue encodes the direction of that velocity and brightness
its magnitude relative to the layer maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import FlowExtractionError
from .events import CameraModel, Checkerboard, PlanarMotion, generate_events
from .layers import LayerKind
from .rasters import hsv_to_rgb


@dataclass(frozen=True)
class KernelFlow:
    """Flow vector recovered from one kernel, in pixels/ms at the kernel's
    own layer resolution, plus the fitted slopes and the delay pair used."""

    u: float
    v: float
    theta_u: float
    theta_v: float
    tau_min_ms: float
    tau_max_ms: float


def select_slots(exc, gamma):
    """Pick the temporally most distant delay-slot pair whose total weight
    reaches ``gamma`` times the heaviest slot's total.

    ``exc`` is an [r, r, channels, m] excitatory kernel.  Raises
    :class:`FlowExtractionError` when fewer than two slots qualify.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if exc.shape[-1] < 2:
        raise FlowExtractionError("kernel has fewer than two delay slots")
    totals = exc.sum(axis=(0, 1, 2))
    qualifying = np.nonzero(totals >= gamma * totals.max())[0]
    if qualifying.size < 2:
        raise FlowExtractionError(
            "fewer than two delay slots carry enough weight for matching")
    return int(qualifying[0]), int(qualifying[-1])


def _axis_histogram(slot, axis):
    # slot: [r(y), r(x), channels]; project onto one spatial axis by summing
    # over the opposite axis and all channels.  The opposite axis is folded
    # in symmetric pairs so that mirroring it leaves every histogram entry
    # bitwise unchanged (pair sums commute exactly in IEEE arithmetic).
    w = np.moveaxis(slot.sum(axis=2), axis, 0)
    r = w.shape[1]
    acc = np.zeros(w.shape[0])
    for i in range(r // 2):
        acc += w[:, i] + w[:, r - 1 - i]
    if r % 2:
        acc += w[:, r // 2]
    return acc


def _centered_slope(values):
    """Unweighted least-squares slope over bin centers 0..r-1.

    The numerator is accumulated over mirror pairs so that reversing the
    bins negates the slope exactly in floating point.
    """
    r = len(values)
    center = (r - 1) / 2.0
    num = 0.0
    for i in range(r // 2):
        num += (i - center) * (values[i] - values[r - 1 - i])
    den = sum((i - center) ** 2 for i in range(r))
    return num / den


def kernel_flow(exc, tau_ms, gamma=0.5):
    """EdgeFlow estimate for one excitatory kernel.

    Spatial weight histograms of the earliest and latest qualifying delay
    slots are subtracted (latest minus earliest) and fitted with a line per
    axis; slope / delay-span gives pixels per millisecond, oriented from
    the earliest-delay slot's mass toward the latest-delay slot's mass.
    """
    d_min, d_max = select_slots(exc, gamma)
    tau_lo, tau_hi = float(tau_ms[d_min]), float(tau_ms[d_max])
    span = tau_hi - tau_lo
    theta = []
    for axis in (1, 0):  # x axis first, then y
        hist_lo = _axis_histogram(exc[:, :, :, d_min], axis)
        hist_hi = _axis_histogram(exc[:, :, :, d_max], axis)
        theta.append(_centered_slope(hist_hi - hist_lo))
    return KernelFlow(u=theta[0] / span, v=theta[1] / span,
                      theta_u=theta[0], theta_v=theta[1],
                      tau_min_ms=tau_lo, tau_max_ms=tau_hi)


def layer_flows(exc, tau_ms, gamma=0.5):
    """Per-kernel flow table for a whole [f, r, r, C, m] kernel stack.

    Kernels that do not admit an estimate appear as None.
    """
    out = []
    for k in range(exc.shape[0]):
        try:
            out.append(kernel_flow(exc[k], tau_ms, gamma))
        except FlowExtractionError:
            out.append(None)
    return out


def flows_csv(flows) -> str:
    """CSV table of per-kernel flow vectors (units: pixels/ms at the
    kernel's layer resolution)."""
    lines = ["kernel,u,v,theta_u,theta_v,tau_min_ms,tau_max_ms"]
    for k, fl in enumerate(flows):
        if fl is None:
            lines.append(f"{k},nan,nan,nan,nan,nan,nan")
        else:
            lines.append(f"{k},{fl.u!r},{fl.v!r},{fl.theta_u!r},{fl.theta_v!r},"
                         f"{fl.tau_min_ms:g},{fl.tau_max_ms:g}")
    return "\n".join(lines) + "\n"


def colorize(uv):
    """Map flow vectors [n, 2] to RGB: hue from direction, brightness from
    speed normalized to the layer maximum.  Zero flow is black; with no
    nonzero flow at all the output is uniformly black."""
    uv = np.asarray(uv, dtype=np.float64)
    speed = np.hypot(uv[..., 0], uv[..., 1])
    peak = speed.max() if speed.size else 0.0
    value = speed / peak if peak > 0 else np.zeros_like(speed)
    hue = (np.arctan2(uv[..., 1], uv[..., 0]) / (2.0 * math.pi)) % 1.0
    rgb = hsv_to_rgb(hue, np.ones_like(hue), value)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def colorize_grid(uv, cols=None):
    """Arrange per-kernel colors into a small raster, one pixel per kernel."""
    colors = colorize(uv)
    n = colors.shape[0]
    if cols is None:
        cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    grid = np.zeros((rows, cols, 3), dtype=np.uint8)
    for k in range(n):
        grid[k // cols, k % cols] = colors[k]
    return grid


def colorize_winner_map(winner_idx, uv):
    """Color a per-pixel winner map [H, W] (entries are kernel indices, -1
    for no winner) by each winner's flow color."""
    colors = colorize(uv)
    h, w = winner_idx.shape
    out = np.zeros((h, w, 3), dtype=np.uint8)
    mask = winner_idx >= 0
    out[mask] = colors[winner_idx[mask]]
    return out


@dataclass
class ResponseTable:
    """Mean firing rates on a grid of ventral-flow stimuli.

    ``msconv`` holds spikes/ms per multisynaptic map and ``dense`` per
    fully-connected neuron (None when the network has no such layer).
    """

    points: np.ndarray
    msconv: Optional[np.ndarray]
    dense: Optional[np.ndarray]

    def csv(self) -> str:
        header = ["wx", "wy"]
        if self.msconv is not None:
            header += [f"msconv_k{k}" for k in range(self.msconv.shape[1])]
        if self.dense is not None:
            header += [f"dense_i{i}" for i in range(self.dense.shape[1])]
        lines = [",".join(header)]
        for i, (wx, wy) in enumerate(self.points):
            row = [f"{wx:g}", f"{wy:g}"]
            if self.msconv is not None:
                row += [repr(x) for x in self.msconv[i]]
            if self.dense is not None:
                row += [repr(x) for x in self.dense[i]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def response_curve(network, points, pattern=None, camera=None,
                   duration_ms=500.0, beta=None, lambda_y_ms=100.0):
    """Stimulate the network with synthetic streams over a grid of ventral
    flow values and tabulate the per-map response rates.

    ``beta`` temporarily overrides the inhibition scale of multisynaptic
    layers for the replay (the selectivity ablation experiment).
    """
    from .network import infer  # local import to avoid a cycle

    pattern = pattern if pattern is not None else Checkerboard()
    camera = camera if camera is not None else CameraModel()
    ms_idx = [i for i, l in enumerate(network.layers)
              if l.cfg.kind is LayerKind.MS_CONV]
    dn_idx = [i for i, l in enumerate(network.layers)
              if l.cfg.kind is LayerKind.DENSE]

    saved = {}
    if beta is not None:
        for i in ms_idx:
            saved[i] = network.layers[i].cfg
            network.layers[i].cfg = replace(saved[i], beta=float(beta))
    try:
        ms_rows, dn_rows = [], []
        pts = np.asarray(list(points), dtype=np.float64)
        for wx, wy in pts:
            motion = PlanarMotion.from_ventral_flow(float(wx), float(wy))
            stream = generate_events(pattern, motion, camera,
                                     int(duration_ms * 1000),
                                     network.config.width, network.config.height)
            result = infer(network, stream, lambda_y_ms=lambda_y_ms)
            if ms_idx:
                ms_rows.append(result.records[ms_idx[-1]].map_rates(duration_ms))
            if dn_idx:
                dn_rows.append(result.records[dn_idx[-1]].map_rates(duration_ms))
    finally:
        for i, cfg in saved.items():
            network.layers[i].cfg = cfg
    return ResponseTable(
        points=pts,
        msconv=np.array(ms_rows) if ms_rows else None,
        dense=np.array(dn_rows) if dn_rows else None,
    )

"""Event data model, file I/O, synthetic event-camera streams, and planar-flow ground truth.

An event camera reports per-pixel brightness changes as a sparse stream of
(timestamp, x, y, polarity) tuples.  This module provides the in-memory
representation of such streams, a deterministic simulator that produces them
from moving intensity patterns, the spatial/polarity augmentations used
during training, and the planar-motion observables that serve as ground
truth for motion experiments.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Iterator, Protocol

import numpy as np

from .errors import EventFormatError

EVENT_MAGIC = b"SPKEVT01"
_RECORD = struct.Struct("<QHHb")  # t_us, x, y, p

CSV_HEADER = "t_us,x,y,p"


@dataclass(frozen=True)
class Event:
    """One address-event: timestamp in microseconds, pixel location, polarity."""

    t: int
    x: int
    y: int
    p: int


class EventStream:
    """An ordered sequence of events on a fixed-size pixel grid.

    Events are kept in canonical order: ascending timestamp, ties broken by
    (y, x, p).  The constructor sorts and validates; all transforms return
    new streams in canonical order.
    """

    __slots__ = ("width", "height", "duration_us", "t", "x", "y", "p")

    def __init__(self, width, height, t, x, y, p, duration_us=None):
        if width <= 0 or height <= 0:
            raise ValueError("stream dimensions must be positive")
        t = np.asarray(t, dtype=np.int64)
        x = np.asarray(x, dtype=np.int32)
        y = np.asarray(y, dtype=np.int32)
        p = np.asarray(p, dtype=np.int8)
        if not (t.shape == x.shape == y.shape == p.shape) or t.ndim != 1:
            raise ValueError("event columns must be equal-length 1-d arrays")
        if t.size:
            if t.min() < 0:
                raise ValueError("negative timestamp")
            if x.min() < 0 or x.max() >= width:
                raise ValueError("x coordinate outside pixel array")
            if y.min() < 0 or y.max() >= height:
                raise ValueError("y coordinate outside pixel array")
            if not np.all(np.abs(p) == 1):
                raise ValueError("polarity must be -1 or +1")
        order = np.lexsort((p, x, y, t))
        self.t = t[order]
        self.x = x[order]
        self.y = y[order]
        self.p = p[order]
        if duration_us is None:
            duration_us = int(self.t[-1]) if t.size else 0
        if t.size and duration_us < int(self.t[-1]):
            raise ValueError("duration shorter than last event")
        self.width = int(width)
        self.height = int(height)
        self.duration_us = int(duration_us)

    @classmethod
    def empty(cls, width, height, duration_us=0):
        z = np.zeros(0, dtype=np.int64)
        return cls(width, height, z, z, z, z, duration_us)

    def __len__(self):
        return self.t.size

    def __iter__(self) -> Iterator[Event]:
        for i in range(self.t.size):
            yield Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.duration_us == other.duration_us
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def __repr__(self):
        return (
            f"EventStream({self.width}x{self.height}, {len(self)} events, "
            f"{self.duration_us} us)"
        )


class Pattern(Protocol):
    """A scalar intensity field I(tx, ty, t) > 0 in texture coordinates."""

    def intensity(self, tx: np.ndarray, ty: np.ndarray, t_s: float) -> np.ndarray: ...


def _soft_square(u, period, edge):
    """Square wave in [-1, 1] with linear transitions of width ``edge``.

    Approximates what a real pixel sees as a hard edge sweeps across its
    footprint: the brightness ramps over about one pixel rather than
    stepping, so threshold crossings spread over the traversal time.
    """
    phase = np.mod(u / period + 0.25, 1.0)
    tri = 1.0 - 4.0 * np.abs(phase - 0.5)
    if edge <= 0:
        return np.sign(tri) + (tri == 0)
    return np.clip(tri * (period / (2.0 * edge)), -1.0, 1.0)


@dataclass(frozen=True)
class Checkerboard:
    """Checkerboard texture; ``period_px`` is the full spatial period (two
    squares).  ``edge_px`` is the anti-aliasing transition width."""

    period_px: float = 16.0
    bright: float = 2.0
    dark: float = 1.0
    edge_px: float = 1.0

    def intensity(self, tx, ty, t_s=0.0):
        check = (_soft_square(tx, self.period_px, self.edge_px)
                 * _soft_square(ty, self.period_px, self.edge_px))
        return self.dark + (self.bright - self.dark) * (check + 1.0) / 2.0


@dataclass(frozen=True)
class Bar:
    """Single bright bar on a dark background.

    ``horizontal`` bars span the x axis (edges normal to y); vertical bars
    span the y axis.  ``edge_px`` is the anti-aliasing transition width.
    """

    width_px: float = 4.0
    horizontal: bool = True
    bright: float = 2.0
    dark: float = 1.0
    edge_px: float = 1.0

    def intensity(self, tx, ty, t_s=0.0):
        c = ty if self.horizontal else tx
        outside = np.abs(c) - self.width_px / 2.0
        if self.edge_px <= 0:
            inside = (outside < 0).astype(np.float64)
        else:
            inside = np.clip(0.5 - outside / self.edge_px, 0.0, 1.0)
        return self.dark + (self.bright - self.dark) * inside


@dataclass(frozen=True)
class CameraModel:
    """Event-camera intrinsics for the simulator.

    ``contrast`` is the log-intensity threshold that triggers an event.
    ``frame_rate_hz`` is the dense rendering rate between which log intensity
    is linearly interpolated.  ``focal_px`` converts normalized velocities
    into pixel velocities (pixel speed = focal_px * ventral flow).
    """

    contrast: float = 0.15
    frame_rate_hz: float = 1000.0
    focal_px: float = 100.0

    def __post_init__(self):
        if self.contrast <= 0:
            raise ValueError("contrast threshold must be positive")
        if self.frame_rate_hz <= 0:
            raise ValueError("frame rate must be positive")


@dataclass(frozen=True)
class PlanarMotion:
    """Constant camera velocity relative to a fronto-parallel textured plane.

    ``u_c, v_c, w_c`` are the camera-frame velocity components; ``z0`` is the
    initial distance to the plane along the optical axis.
    """

    u_c: float = 0.0
    v_c: float = 0.0
    w_c: float = 0.0
    z0: float = 1.0

    def __post_init__(self):
        if self.z0 <= 0:
            raise ValueError("plane distance z0 must be positive")

    @classmethod
    def from_ventral_flow(cls, wx, wy, z0=1.0):
        """Motion whose observables are exactly (wx, wy, 0)."""
        return cls(u_c=-wx * z0, v_c=-wy * z0, w_c=0.0, z0=z0)


def flow_observables(motion: PlanarMotion):
    """Ventral flow components and divergence for a planar motion.

    Returns (wx, wy, D) = (-U/Z0, -V/Z0, 2*W/Z0).
    """
    return (
        -motion.u_c / motion.z0,
        -motion.v_c / motion.z0,
        2.0 * motion.w_c / motion.z0,
    )


def generate_events(pattern, motion, camera, duration_us, width, height):
    """Simulate an event camera viewing ``pattern`` under ``motion``.

    Intensity frames are rendered at ``camera.frame_rate_hz`` and log
    intensity is linearly interpolated between consecutive frames.  Each
    pixel keeps a reference log level that is re-armed at every emitted
    event; an event of polarity +-1 fires at the interpolated instant the
    log level departs from the reference by one contrast threshold.

    Raises ValueError if any rendered intensity is not strictly positive or
    if the camera would reach the plane within the sequence.
    """
    if duration_us <= 0:
        raise ValueError("duration must be positive")
    duration_us = int(duration_us)

    frame_us = 1e6 / camera.frame_rate_hz
    times = np.arange(0.0, duration_us, frame_us)
    times = np.append(times, float(duration_us))

    gx, gy = np.meshgrid(
        np.arange(width, dtype=np.float64) - (width - 1) / 2.0,
        np.arange(height, dtype=np.float64) - (height - 1) / 2.0,
    )
    wx, wy, _ = flow_observables(motion)

    def render_log(t_us):
        t_s = t_us * 1e-6
        z = motion.z0 - motion.w_c * t_s
        if z <= 0:
            raise ValueError("camera reaches the plane inside the sequence")
        scale = z / motion.z0
        tx = gx * scale - camera.focal_px * wx * t_s
        ty = gy * scale - camera.focal_px * wy * t_s
        img = pattern.intensity(tx, ty, t_s)
        if np.any(img <= 0):
            raise ValueError("pattern intensity must be strictly positive")
        return np.log(img)

    c = camera.contrast
    log_prev = render_log(times[0])
    ref = log_prev.copy()
    out_t, out_x, out_y, out_p = [], [], [], []

    for k in range(1, len(times)):
        log_cur = render_log(times[k])
        delta = log_cur - ref
        # small relative slack so exact-threshold arrivals are counted
        n = np.floor(np.abs(delta) / c + 1e-9).astype(np.int64)
        if n.max(initial=0) > 0:
            yy, xx = np.nonzero(n)
            counts = n[yy, xx]
            sign = np.where(delta[yy, xx] > 0, 1, -1).astype(np.int8)
            rep_y = np.repeat(yy, counts)
            rep_x = np.repeat(xx, counts)
            rep_s = np.repeat(sign, counts)
            j = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts) + 1
            level = ref[rep_y, rep_x] + rep_s * j * c
            l0 = log_prev[rep_y, rep_x]
            l1 = log_cur[rep_y, rep_x]
            frac = np.clip((level - l0) / (l1 - l0), 0.0, 1.0)
            t_ev = times[k - 1] + frac * (times[k] - times[k - 1])
            out_t.append(np.rint(t_ev).astype(np.int64))
            out_x.append(rep_x.astype(np.int32))
            out_y.append(rep_y.astype(np.int32))
            out_p.append(rep_s)
            ref[yy, xx] += sign * counts * c
        log_prev = log_cur

    if out_t:
        t = np.concatenate(out_t)
        x = np.concatenate(out_x)
        y = np.concatenate(out_y)
        p = np.concatenate(out_p)
    else:
        t = x = y = p = np.zeros(0, dtype=np.int64)
    return EventStream(width, height, t, x, y, p, duration_us)


def apply_flips(stream, hflip=False, vflip=False, pflip=False):
    """Return a copy of the stream with the selected involutive flips applied."""
    x = stream.width - 1 - stream.x if hflip else stream.x
    y = stream.height - 1 - stream.y if vflip else stream.y
    p = -stream.p if pflip else stream.p
    return EventStream(stream.width, stream.height, stream.t, x, y, p, stream.duration_us)


def augment(stream, seed):
    """Randomly flip the stream horizontally, vertically, and in polarity.

    Each flip is applied independently with probability 1/2, drawn in the
    fixed order (horizontal, vertical, polarity) from a generator seeded
    with ``seed``.
    """
    rng = np.random.default_rng(seed)
    hflip = bool(rng.random() < 0.5)
    vflip = bool(rng.random() < 0.5)
    pflip = bool(rng.random() < 0.5)
    return apply_flips(stream, hflip, vflip, pflip)


def downsample_half(stream):
    """Halve the spatial resolution; each event maps to (x//2, y//2)."""
    return EventStream(
        (stream.width + 1) // 2,
        (stream.height + 1) // 2,
        stream.t,
        stream.x // 2,
        stream.y // 2,
        stream.p,
        stream.duration_us,
    )


def write_events(stream, path, fmt=None):
    """Write a stream to ``path`` as CSV or binary.

    ``fmt`` is "csv" or "bin"; when omitted it is inferred from the
    extension (".csv" is text, anything else binary).  Files are written
    atomically (temp file + rename).
    """
    if fmt is None:
        fmt = "csv" if str(path).endswith(".csv") else "bin"
    tmp = f"{path}.tmp"
    try:
        if fmt == "csv":
            with open(tmp, "w", encoding="ascii") as f:
                f.write(f"# width={stream.width} height={stream.height} "
                        f"duration_us={stream.duration_us}\n")
                f.write(CSV_HEADER + "\n")
                disk_p = (stream.p > 0).astype(np.int8)
                for i in range(len(stream)):
                    f.write(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{disk_p[i]}\n")
        elif fmt == "bin":
            with open(tmp, "wb") as f:
                f.write(EVENT_MAGIC)
                f.write(struct.pack("<IIQ", stream.width, stream.height, len(stream)))
                rec = np.zeros(
                    len(stream),
                    dtype=[("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")],
                )
                rec["t"] = stream.t
                rec["x"] = stream.x
                rec["y"] = stream.y
                rec["p"] = stream.p
                f.write(rec.tobytes())
        else:
            raise ValueError(f"unknown event format {fmt!r}")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def read_events(path):
    """Read an event stream written by :func:`write_events`.

    The binary format is detected by its magic prefix; everything else is
    parsed as CSV.  Malformed lines and non-monotone timestamps raise
    :class:`EventFormatError` with the offending line number.
    """
    with open(path, "rb") as f:
        head = f.read(len(EVENT_MAGIC))
    if head == EVENT_MAGIC:
        return _read_binary(path)
    return _read_csv(path)


def _read_binary(path):
    with open(path, "rb") as f:
        data = f.read()
    base = len(EVENT_MAGIC)
    if len(data) < base + 16:
        raise EventFormatError("truncated header")
    width, height, count = struct.unpack_from("<IIQ", data, base)
    body = data[base + 16 :]
    if len(body) != count * _RECORD.size:
        raise EventFormatError(
            f"expected {count} records ({count * _RECORD.size} bytes), "
            f"got {len(body)} bytes"
        )
    rec = np.frombuffer(
        body, dtype=[("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")]
    )
    if count and not np.all(np.abs(rec["p"]) == 1):
        raise EventFormatError("polarity must be -1 or +1")
    if count and np.any(np.diff(rec["t"].astype(np.int64)) < 0):
        raise EventFormatError("timestamps not non-decreasing")
    try:
        return EventStream(
            width, height,
            rec["t"].astype(np.int64), rec["x"].astype(np.int32),
            rec["y"].astype(np.int32), rec["p"].astype(np.int8),
        )
    except ValueError as exc:
        raise EventFormatError(str(exc)) from exc


def _read_csv(path):
    meta = {}
    t, x, y, p = [], [], [], []
    last_t = -1
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            if line == CSV_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise EventFormatError("expected 4 comma-separated integers", lineno)
            try:
                ti, xi, yi, pi = (int(s) for s in parts)
            except ValueError as exc:
                raise EventFormatError(f"not an integer: {exc}", lineno) from exc
            if pi not in (0, 1):
                raise EventFormatError(f"polarity {pi} not in {{0,1}}", lineno)
            if ti < last_t:
                raise EventFormatError("timestamps not non-decreasing", lineno)
            last_t = ti
            t.append(ti)
            x.append(xi)
            y.append(yi)
            p.append(1 if pi == 1 else -1)
    width = int(meta.get("width", (max(x) + 1) if x else 1))
    height = int(meta.get("height", (max(y) + 1) if y else 1))
    duration = meta.get("duration_us")
    try:
        return EventStream(
            width, height,
            np.array(t, dtype=np.int64), np.array(x, dtype=np.int32),
            np.array(y, dtype=np.int32), np.array(p, dtype=np.int8),
            int(duration) if duration is not None else None,
        )
    except ValueError as exc:
        raise EventFormatError(str(exc)) from exc

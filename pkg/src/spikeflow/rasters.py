"""Minimal binary PGM/PPM writers and HSV conversion for visual exports."""

from __future__ import annotations

import os

import numpy as np


def _atomic_write(path, payload: bytes):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def write_pgm(path, gray):
    """Write a 2-d uint8 array as binary PGM (P5)."""
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ValueError("PGM data must be 2-d")
    header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode("ascii")
    _atomic_write(path, header + gray.tobytes())


def write_ppm(path, rgb):
    """Write an [H, W, 3] uint8 array as binary PPM (P6)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("PPM data must be [H, W, 3]")
    header = f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode("ascii")
    _atomic_write(path, header + rgb.tobytes())


def read_pnm(path):
    """Read back a binary PGM/PPM written by this module (for tests)."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        dims = f.readline().split()
        maxval = int(f.readline())
        if maxval != 255:
            raise ValueError("only 8-bit PNM supported")
        w, h = int(dims[0]), int(dims[1])
        data = np.frombuffer(f.read(), dtype=np.uint8)
    if magic == b"P5":
        return data.reshape(h, w)
    if magic == b"P6":
        return data.reshape(h, w, 3)
    raise ValueError(f"unsupported PNM magic {magic!r}")


def hsv_to_rgb(h, s, v):
    """Vectorized HSV -> RGB for arrays in [0, 1]; returns float in [0, 1]."""
    h = np.asarray(h, dtype=np.float64) % 1.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)

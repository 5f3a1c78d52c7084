"""Inherently stable multiplicative STDP.

The weight update combines two non-exclusive processes, potentiation and
depression, each the product of an exponential weight dependency (centered
on the initialization weight) and an exponential dependency on the input
trace normalized to its maximum at the moment of firing:

    dW = eta * (exp(-(W - w_init)) * (exp(Xhat) - a)
                - exp(W - w_init) * (exp(1 - Xhat) - a))

For eta > 0 and a < 1 every synapse has a globally attracting equilibrium
weight, available in closed form from :func:`equilibrium_weight`, so no
clipping or renormalization of weights is ever needed.  Two classic
multiplicative rules are provided for comparison: one proportional to
W(1-W) that saturates at {0,1}, and one inversely proportional in W that
drifts without bound.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StdpParams:
    """Learning-rule constants.

    ``window`` is the moving-average length (in updates) used when deciding
    convergence against the threshold ``l_th``.
    """

    eta: float = 1e-4
    a: float = 0.0
    w_init: float = 0.5
    l_th: float = 5e-2
    window: int = 200

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("learning rate must be positive")
        if self.a >= 1:
            raise ValueError("steepness offset must satisfy a < 1")
        if self.window < 1:
            raise ValueError("moving-average window must be at least 1")


class RuleKind(enum.Enum):
    """Which plasticity formulation drives a training run."""

    OURS = "ours"
    KHERADPISHEH = "kheradpisheh"
    SHRESTHA = "shrestha"


def normalize_traces(x):
    """Scale a trace block to [0, 1] by its maximum.

    An all-zero block stays all zero, which makes the subsequent update a
    pure depression (the conservative action for degenerate sparse input).
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.max() if x.size else 0.0
    if m <= 0.0:
        return np.zeros_like(x)
    return x / m


def stdp_update(w, xhat, params: StdpParams, w_init=None):
    """Weight increment for one postsynaptic firing.

    ``xhat`` must already be normalized to [0, 1].  ``w_init`` overrides the
    centering weight of the exponentials; inhibitory kernels pass the
    negated excitatory initialization weight here.
    """
    if w_init is None:
        w_init = params.w_init
    dw = np.exp(-(w - w_init)) * (np.exp(xhat) - params.a)
    dw -= np.exp(w - w_init) * (np.exp(1.0 - xhat) - params.a)
    return params.eta * dw


def equilibrium_weight(xhat, a=0.0, w_init=0.5):
    """Closed-form fixed point of :func:`stdp_update` for a given trace level."""
    if a >= 1:
        raise ValueError("equilibrium requires a < 1")
    xhat = np.asarray(xhat, dtype=np.float64)
    return 0.5 * np.log((np.exp(xhat) - a) / (np.exp(1.0 - xhat) - a)) + w_init


def convergence_metric(xhat, what):
    """Mean squared error between normalized traces and normalized weights.

    Both arguments are expected normalized to their own maxima; the result
    is in [0, 1] and reaches 0 only when they agree elementwise.
    """
    xhat = np.asarray(xhat, dtype=np.float64)
    what = np.asarray(what, dtype=np.float64)
    if xhat.shape != what.shape:
        raise ValueError(
            f"shape mismatch: traces {xhat.shape} vs weights {what.shape}"
        )
    return float(np.mean((xhat - what) ** 2))


def comparison_update(rule: RuleKind, w, potentiate, params: StdpParams):
    """Weight increment under one of the reference multiplicative rules.

    ``potentiate`` is a boolean mask: True entries are strengthened, False
    entries weakened.  In this trace-based engine eligibility stands in for
    the fixed timing windows of the original formulations.
    """
    w = np.asarray(w, dtype=np.float64)
    potentiate = np.asarray(potentiate, dtype=bool)
    if rule is RuleKind.KHERADPISHEH:
        if w.size and (w.min() < 0.0 or w.max() > 1.0):
            raise ValueError("rule requires weights in [0, 1]")
        mag = params.eta * w * (1.0 - w)
        return np.where(potentiate, mag, -mag)
    if rule is RuleKind.SHRESTHA:
        up = params.eta * np.exp(-(w - params.w_init))
        down = -params.eta * np.exp(w - params.w_init)
        return np.where(potentiate, up, down)
    if rule is RuleKind.OURS:
        xhat = potentiate.astype(np.float64)
        return stdp_update(w, xhat, params)
    raise ValueError(f"unknown plasticity rule {rule!r}")

"""Displacement/visibility consistency penalty with analytic gradients.

Per sampled object center the penalty is |g * h - v| where g is the
Euclidean norm of the displacement vector, h = exp(-relu(c)) is a learned
shrink ratio in (0, 1], and v is the visibility score. The loss is the
mean over samples, 0.0 when there are none. Samples must come from
visible objects; for invisible ones both the displacement and visibility
sit near zero and c is unconstrained, which destabilizes training.

Subgradient conventions: sign(0) = 0, d/dc at c = 0 is 0, and the
displacement gradient at a zero vector is the zero vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CenterSample:
    """Values read off the head maps at one detected object center."""

    d: tuple[float, float]
    v: float
    c: float


def stack_samples(samples: Sequence[CenterSample]):
    d = np.array([s.d for s in samples], np.float64).reshape(-1, 2)
    c = np.array([s.c for s in samples], np.float64)
    v = np.array([s.v for s in samples], np.float64)
    return d, c, v


def g_norm(d) -> np.ndarray | float:
    """Euclidean norm of displacement vectors; last axis holds (dx, dy)."""
    return np.linalg.norm(np.asarray(d, np.float64), axis=-1)


def h_ratio(c) -> np.ndarray | float:
    """Shrink ratio exp(-relu(c)); 1.0 for c <= 0, decaying for c > 0."""
    return np.exp(-np.maximum(np.asarray(c, np.float64), 0.0))


def _residual(d: np.ndarray, c: np.ndarray, v: np.ndarray) -> np.ndarray:
    return g_norm(d) * h_ratio(c) - v


def consistency_loss(d, c, v) -> float:
    """Mean absolute residual |g(d) * h(c) - v| over all samples."""
    d = np.asarray(d, np.float64).reshape(-1, 2)
    c = np.asarray(c, np.float64).reshape(-1)
    v = np.asarray(v, np.float64).reshape(-1)
    if d.shape[0] == 0:
        return 0.0
    return float(np.mean(np.abs(_residual(d, c, v))))


def consistency_loss_grad(d, c, v):
    """Analytic partials of consistency_loss w.r.t. d, c, and v.

    Returns (grad_d, grad_c, grad_v) with shapes (N, 2), (N,), (N,).
    """
    d = np.asarray(d, np.float64).reshape(-1, 2)
    c = np.asarray(c, np.float64).reshape(-1)
    v = np.asarray(v, np.float64).reshape(-1)
    n = d.shape[0]
    if n == 0:
        return np.zeros((0, 2)), np.zeros(0), np.zeros(0)
    g = g_norm(d)
    h = h_ratio(c)
    s = np.sign(g * h - v)
    unit = np.zeros_like(d)
    nz = g > 0
    unit[nz] = d[nz] / g[nz, None]
    grad_d = (s * h)[:, None] * unit / n
    grad_c = -s * g * h * (c > 0).astype(np.float64) / n
    grad_v = -s / n
    return grad_d, grad_c, grad_v

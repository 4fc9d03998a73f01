"""Embedding distances and the two metric-learning losses.

Both losses take batched embeddings of shape (N, D) and return
``(loss, grads)`` with one gradient array per input embedding batch.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch, ZeroVector


def _pair(h1, h2):
    a = np.asarray(h1, dtype=np.float64)
    b = np.asarray(h2, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return a, b


def dist_euclidean(h1, h2):
    """Row-wise Euclidean distance (scalar for 1D inputs)."""
    a, b = _pair(h1, h2)
    return np.sqrt(((a - b) ** 2).sum(axis=-1))


def dist_manhattan(h1, h2):
    a, b = _pair(h1, h2)
    return np.abs(a - b).sum(axis=-1)


def dist_cosine_sim(h1, h2):
    a, b = _pair(h1, h2)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return np.clip((a * b).sum(axis=-1) / (na * nb), -1.0, 1.0)


def _unit_diff(diff, d):
    # direction of d(distance)/d(h1); zero where the distance is zero
    safe = np.where(d > 0, d, 1.0)
    return np.where((d > 0)[:, None], diff / safe[:, None], 0.0)


def contrastive_loss(h1, h2, y, margin: float = 1.0):
    """Mean of (1 - y) D^2 + y max(0, m - D)^2 with D the Euclidean distance.

    Label 0 marks a genuine pair, 1 a forged or cross-writer pair.
    Returns ``(loss, (dh1, dh2))``.
    """
    a, b = _pair(h1, h2)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if a.ndim != 2 or y.shape[0] != a.shape[0]:
        raise ShapeMismatch("contrastive loss expects (N, D) embeddings and N labels")
    if margin <= 0:
        raise ValueError("margin must be positive")
    n = a.shape[0]
    diff = a - b
    d = np.sqrt((diff**2).sum(axis=1))
    hinge = np.maximum(0.0, margin - d)
    loss = ((1 - y) * d**2 + y * hinge**2).mean()
    # d/dh1 of D^2 is 2 diff; of hinge^2 is -2 hinge * diff / D
    g = (2 * (1 - y))[:, None] * diff - (2 * y * hinge)[:, None] * _unit_diff(diff, d)
    g /= n
    return float(loss), (g, -g)


def triplet_loss(ha, hp, hn, margin: float = 1.0):
    """Mean of max(0, d(a, p) - d(a, n) + m). Returns ``(loss, (da, dp, dn))``."""
    a, p = _pair(ha, hp)
    _, q = _pair(ha, hn)
    if a.ndim != 2:
        raise ShapeMismatch("triplet loss expects (N, D) embeddings")
    if margin <= 0:
        raise ValueError("margin must be positive")
    n = a.shape[0]
    dap_vec, dan_vec = a - p, a - q
    dap = np.sqrt((dap_vec**2).sum(axis=1))
    dan = np.sqrt((dan_vec**2).sum(axis=1))
    z = dap - dan + margin
    active = (z > 0).astype(np.float64)[:, None] / n
    up = _unit_diff(dap_vec, dap)
    un = _unit_diff(dan_vec, dan)
    ga = active * (up - un)
    return float(np.maximum(0.0, z).mean()), (ga, -active * up, active * un)

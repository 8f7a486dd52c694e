"""Reconstruction and physical-plausibility metrics."""

from __future__ import annotations

import numpy as np

from pita.dynamics import recover_kbm_trajectory
from pita.errors import ContractError


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.shape[-1] != 2:
        raise ContractError(f"position arrays differ in shape: {a.shape} vs {b.shape}")
    return a, b


def rmse(predicted, target) -> np.ndarray | float:
    """Root mean squared position error over time (per trajectory for batches)."""
    p, q = _check_pair(predicted, target)
    out = np.sqrt(np.mean(np.sum((p - q) ** 2, axis=-1), axis=-1))
    return float(out) if out.ndim == 0 else out


def control_effort(positions, dt: float, trim: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Absolute acceleration and curvature needed to follow ``positions``.

    Values are recovered by finite differences and the ``trim`` samples at
    each end, where one-sided differences are used, are dropped.  Returns
    arrays of shape ``(..., T - 2 * trim)``.
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.shape[-2] < 5:
        raise ContractError(f"control effort needs >= 5 positions, got {p.shape[-2]}")
    _, controls = recover_kbm_trajectory(p, dt)
    inner = slice(trim, p.shape[-2] - trim)
    return np.abs(controls[..., inner, 1]), np.abs(controls[..., inner, 0])


def point_to_polyline(points, path) -> np.ndarray:
    """Distance of each point ``(..., N, 2)`` to the polyline ``(..., M, 2)``."""
    p = np.asarray(points, dtype=np.float64)[..., :, None, :]
    path = np.asarray(path, dtype=np.float64)
    a = path[..., None, :-1, :]
    seg = path[..., None, 1:, :] - a
    seg_len2 = np.sum(seg * seg, axis=-1)
    t = np.sum((p - a) * seg, axis=-1) / np.where(seg_len2 > 0, seg_len2, 1.0)
    t = np.clip(np.where(seg_len2 > 0, t, 0.0), 0.0, 1.0)
    closest = a + t[..., None] * seg
    return np.min(np.linalg.norm(p - closest, axis=-1), axis=-1)


def smoothness_distance(positions, smoothed) -> np.ndarray | float:
    """Mean distance of the positions to the smoothed reference polyline."""
    p, s = _check_pair(positions, smoothed)
    out = np.mean(point_to_polyline(p, s), axis=-1)
    return float(out) if out.ndim == 0 else out

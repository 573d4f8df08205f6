"""Error metrics and Monte-Carlo aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .so3 import check_on_manifold


def _pair(est, truth, width):
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise InvalidArgumentError(f"length mismatch: {est.shape} vs {truth.shape}")
    if est.ndim != 2 or est.shape[1:] != (width,):
        raise InvalidArgumentError(f"expected an (N, {width}) array, got {est.shape}")
    if est.shape[0] == 0:
        raise InvalidArgumentError("empty sequence")
    return est, truth


def position_errors(est, truth):
    est, truth = _pair(est, truth, 3)
    return np.linalg.norm(est - truth, axis=1)


def rmse_position(est, truth):
    """``sqrt(mean_k |p_hat_k - p_k|^2)`` in metres."""
    e = position_errors(est, truth)
    return float(np.sqrt(np.mean(e**2)))


def nearest_rotation(m):
    """Frobenius-nearest rotation to ``m`` (polar factor with det +1)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return (u * [1.0, 1.0, d]) @ vt


def geodesic_angles(est, truth, tol=1e-6):
    """Per-step angle of ``est_k^T truth_k`` in degrees.

    Both sequences must hold rotations (checked at ``tol``).
    """
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise InvalidArgumentError(f"length mismatch: {est.shape} vs {truth.shape}")
    if est.ndim != 3 or est.shape[1:] != (3, 3):
        raise InvalidArgumentError(f"expected an (N, 3, 3) array, got {est.shape}")
    for seq in (est, truth):
        for m in seq:
            if not check_on_manifold(m, tol):
                raise InvalidArgumentError("sequence contains a matrix that is not a rotation")
    tr = np.einsum("kij,kij->k", est, truth)
    c = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    return np.degrees(np.arccos(c))


def rmse_orientation(est, truth, tol=1e-6):
    """RMS geodesic angle between two rotation sequences, in degrees."""
    if len(est) == 0:
        raise InvalidArgumentError("empty sequence")
    a = geodesic_angles(est, truth, tol)
    return float(np.sqrt(np.mean(a**2)))


def error_cdf(errors, grid):
    """Fraction of ``errors`` at or below each point of an ascending ``grid``."""
    e = np.sort(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise InvalidArgumentError("no errors to summarize")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise InvalidArgumentError("grid must be sorted ascending")
    return np.searchsorted(e, grid, side="right") / e.size


@dataclass(frozen=True)
class RunResult:
    """Per-step errors of one filter on one trial."""

    kind: str
    seed: int
    scenario: str
    pos_err: np.ndarray
    ori_err: np.ndarray

    def __post_init__(self):
        if len(self.pos_err) != len(self.ori_err):
            raise InvalidArgumentError("position and orientation error lengths differ")
        if np.any(np.asarray(self.pos_err) < 0) or np.any(np.asarray(self.ori_err) < 0):
            raise InvalidArgumentError("errors must be non-negative")

    @property
    def rmse_pos(self):
        return float(np.sqrt(np.mean(np.square(self.pos_err))))

    @property
    def rmse_ori(self):
        return float(np.sqrt(np.mean(np.square(self.ori_err))))


@dataclass(frozen=True)
class KindSummary:
    kind: str
    trials: int
    rmse_pos_mean: float
    rmse_pos_std: float
    rmse_ori_mean: float
    rmse_ori_std: float
    p90_pos: float
    p90_rmse: float
    cdf_grid: np.ndarray
    cdf: np.ndarray


def default_grid(errors, points=201):
    hi = float(np.max(errors)) if np.size(errors) else 1.0
    return np.linspace(0.0, hi if hi > 0 else 1.0, points)


def aggregate_trials(results, grid=None):
    """Mean/std RMSE per filter kind, pooled-error CDF and trial count.

    The CDF is over the concatenated per-step position errors of every trial
    and ``p90_pos`` is its 90th percentile.  ``p90_rmse`` is the 90th
    percentile of the per-trial position RMSEs.
    """
    results = list(results)
    if not results:
        raise InvalidArgumentError("no results to aggregate")
    kinds = list(dict.fromkeys(r.kind for r in results))
    out = {}
    for kind in kinds:
        rs = [r for r in results if r.kind == kind]
        pos = np.array([r.rmse_pos for r in rs])
        ori = np.array([r.rmse_ori for r in rs])
        pooled = np.concatenate([np.asarray(r.pos_err) for r in rs])
        g = default_grid(pooled) if grid is None else np.asarray(grid, dtype=float)
        out[kind] = KindSummary(
            kind=kind,
            trials=len(rs),
            rmse_pos_mean=float(pos.mean()),
            rmse_pos_std=float(pos.std()),
            rmse_ori_mean=float(ori.mean()),
            rmse_ori_std=float(ori.std()),
            p90_pos=float(np.percentile(pooled, 90)),
            p90_rmse=float(np.percentile(pos, 90)),
            cdf_grid=g,
            cdf=error_cdf(pooled, g),
        )
    return out

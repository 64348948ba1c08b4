"""Rotation vectors, deviation suprema and sampled Herman sets.

The rotation vector is the endpoint quotient (X(T,x) - x) / T, compared with
the T/2 quotient as a convergence diagnostic.  The Herman set is reported
as an inner approximation: the segment (d = 2) or convex hull (d >= 3) of
the sampled rotation vectors.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FieldSpec
from .errors import SpecError, TorusFlowError
from .integrator import flow_map, integrate


@dataclass(frozen=True)
class RotationEstimate:
    zeta: np.ndarray
    horizon: float
    extrapolation_error: float
    half_zeta: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.extrapolation_error <= 10.0 / math.sqrt(self.horizon)


@dataclass(frozen=True, eq=False)
class DeviationReport:
    zeta: np.ndarray
    sup_deviation: float
    arg_time: float
    horizon: float
    times: np.ndarray | None = field(default=None, repr=False)
    deviations: np.ndarray | None = field(default=None, repr=False)

    def running_sup(self):
        return np.maximum.accumulate(self.deviations)


def estimate_rotation(spec: FieldSpec, x, horizon, tol=1e-9) -> RotationEstimate:
    """Endpoint quotient at T = ``horizon`` with a T/2 comparison.

    ``converged`` is False when the two quotients differ by more than
    10 / sqrt(T).
    """
    horizon = float(horizon)
    if horizon < 10:
        raise SpecError("rotation estimates need horizon >= 10")
    traj = integrate(spec, x, horizon, tol, t_eval=[0.0, 0.5 * horizon, horizon])
    x0 = traj.initial
    z = (traj.lifts[2] - x0) / horizon
    zh = (traj.lifts[1] - x0) / (0.5 * horizon)
    return RotationEstimate(z, horizon, float(np.linalg.norm(z - zh)), zh)


def deviation_sup(spec: FieldSpec, x, zeta=None, horizon=100.0, tol=1e-9, dt=0.1,
                  keep_series=True) -> DeviationReport:
    """max over the output grid of |X(t,x) - x - t zeta|.

    Without ``zeta`` the estimate from :func:`estimate_rotation` is used.
    The output grid step is ``min(dt, 0.1)``.
    """
    horizon = float(horizon)
    if zeta is None:
        zeta = estimate_rotation(spec, x, max(horizon, 10.0), tol).zeta
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (spec.dimension,):
        raise SpecError("zeta has wrong dimension")
    traj = integrate(spec, x, horizon, tol, dt=min(float(dt), 0.1))
    dev = np.linalg.norm(traj.lifts - traj.initial - traj.times[:, None] * zeta, axis=1)
    i = int(np.argmax(dev))
    return DeviationReport(zeta, float(dev[i]), float(traj.times[i]), horizon,
                           traj.times if keep_series else None, dev if keep_series else None)


@dataclass(frozen=True, eq=False)
class HermanSample:
    """Sampled rotation vectors and their hull (an inner approximation)."""

    points: list
    hull: np.ndarray
    failures: list
    affine_rank: int
    hull_tolerance: float
    direction: np.ndarray | None = None

    @property
    def zetas(self):
        return np.array([est.zeta for _, est in self.points])

    def max_hull_distance(self):
        """Largest distance from a sampled zeta to the reported hull."""
        if not self.points:
            return 0.0
        Z = self.zetas
        if len(self.hull) == 1:
            return float(np.linalg.norm(Z - self.hull[0], axis=1).max())
        if self.direction is not None:
            a, b = self.hull
            ab = b - a
            s = np.clip(((Z - a) @ ab) / max(ab @ ab, 1e-300), 0.0, 1.0)
            return float(np.linalg.norm(Z - (a + s[:, None] * ab), axis=1).max())
        return _hull_distance(Z, self.hull)


def _hull_distance(Z, vertices):
    # points are hull inputs, so the distance is only the affine-span defect
    c = vertices.mean(axis=0)
    _, s, vt = np.linalg.svd(vertices - c, full_matrices=False)
    basis = vt[s > 1e-12 * max(1.0, s.max(initial=0.0))]
    r = (Z - c) - ((Z - c) @ basis.T) @ basis
    return float(np.linalg.norm(r, axis=1).max())


def _estimate_task(args):
    spec, x, horizon, tol = args
    try:
        return x, estimate_rotation(spec, x, horizon, tol), None
    except TorusFlowError as exc:
        return x, None, str(exc)


def herman_sample(spec: FieldSpec, grid, horizon, tol=1e-9, workers=1, hull_tolerance=None) -> HermanSample:
    """Rotation estimates over ``grid`` and their hull.

    For d = 2 the hull is the pair of extreme points along the principal
    direction of the sampled zetas; for d >= 3 it is the convex-hull vertex
    set inside their affine span.  Failed points are recorded, not raised.
    """
    grid = [np.asarray(g, dtype=float) for g in grid]
    if not grid:
        raise SpecError("herman_sample needs a nonempty grid")
    tasks = [(spec, g, horizon, tol) for g in grid]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_estimate_task, tasks))
    else:
        results = [_estimate_task(t) for t in tasks]
    points = [(x, est) for x, est, err in results if est is not None]
    failures = [(x, err) for x, est, err in results if est is None]
    if hull_tolerance is None:
        hull_tolerance = 10.0 / float(horizon) + 1e-9
    if not points:
        return HermanSample([], np.zeros((0, spec.dimension)), failures, -1, hull_tolerance)
    Z = np.array([est.zeta for _, est in points])
    center = Z.mean(axis=0)
    _, s, vt = np.linalg.svd(Z - center, full_matrices=False)
    rank = int(np.sum(s > hull_tolerance))
    if spec.dimension == 2 or rank <= 1:
        if rank == 0:
            return HermanSample(points, center[None, :], failures, 0, hull_tolerance)
        u = vt[0]
        proj = (Z - center) @ u
        ends = center + np.outer([proj.min(), proj.max()], u)
        return HermanSample(points, ends, failures, rank, hull_tolerance, u)
    from scipy.spatial import ConvexHull

    basis = vt[:rank]
    coords = (Z - center) @ basis.T
    if rank == 1:
        idx = [int(np.argmin(coords[:, 0])), int(np.argmax(coords[:, 0]))]
    else:
        idx = list(ConvexHull(coords).vertices)
    return HermanSample(points, Z[idx], failures, rank, hull_tolerance)


@dataclass(frozen=True)
class InvarianceReport:
    residual: float
    base: np.ndarray
    per_time: list


def check_zeta_invariance(spec: FieldSpec, x, t_list, horizon, tol=1e-9) -> InvarianceReport:
    """max over t of |zeta(X(t,x)) - zeta(x)| with both sides estimated at ``horizon``."""
    x = np.asarray(x, dtype=float)
    z0 = estimate_rotation(spec, x, horizon, tol).zeta
    rows = []
    for t in t_list:
        y = flow_map(spec, x, float(t), tol)
        zt = estimate_rotation(spec, y, horizon, tol).zeta
        rows.append((float(t), float(np.linalg.norm(zt - z0))))
    return InvarianceReport(max((r for _, r in rows), default=0.0), z0, rows)


def rotation_header(d):
    return ([f"x{i + 1}" for i in range(d)] + [f"zeta{i + 1}" for i in range(d)]
            + ["extrap_err", "sup_dev", "arg_time"])


def rotation_row(x, est: RotationEstimate | None, dev: DeviationReport | None, d):
    nan = float("nan")
    zeta = list(est.zeta) if est is not None else (list(dev.zeta) if dev is not None else [nan] * d)
    return (list(np.asarray(x, dtype=float)) + zeta
            + [est.extrapolation_error if est is not None else nan,
               dev.sup_deviation if dev is not None else nan,
               dev.arg_time if dev is not None else nan])


def unit_grid(d, shape):
    """Cell-centred sample points of [0,1)^d with ``shape`` points per axis."""
    if isinstance(shape, int):
        shape = (shape,) * d
    if len(shape) != d:
        raise SpecError(f"grid shape {shape} does not match dimension {d}")
    axes = [(np.arange(n) + 0.5) / n for n in shape]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)

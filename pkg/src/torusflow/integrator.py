"""Adaptive integration of the lifted flow X' = b(X) in R^d.

The lift is integrated directly; reduction modulo Z^d would destroy the
drift that rotation vectors measure.  Step control keeps the DP5(4) local
error estimate per unit time below ``tol``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .core import FieldSpec, eval_field, lattice_vector
from .errors import HorizonError, NumericalError, SpecError, StepUnderflowError

DEFAULT_HORIZON_CAP = 1e6
_MAX_STEPS = 200_000_000


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-stamped lifted orbit; ``lifts[0]`` is the initial point."""

    initial: np.ndarray
    times: np.ndarray
    lifts: np.ndarray
    tolerance: float
    rejected_steps: int
    accepted_steps: int = 0

    @property
    def final(self):
        return self.lifts[-1]

    @property
    def dimension(self):
        return self.lifts.shape[1]

    def displacement(self):
        return self.lifts - self.initial

    def metadata(self):
        return {
            "tolerance": self.tolerance,
            "rejected_steps": int(self.rejected_steps),
            "accepted_steps": int(self.accepted_steps),
            "initial": [float(v) for v in self.initial],
            "samples": int(len(self.times)),
        }

    def to_csv(self, path, manifest=None):
        """Write ``t,x1..xd`` rows plus a ``.meta.json`` sidecar."""
        from .report.io import write_csv

        path = Path(path)
        header = ["t"] + [f"x{i + 1}" for i in range(self.dimension)]
        rows = np.column_stack([self.times, self.lifts])
        write_csv(path, header, rows, manifest=manifest)
        meta = self.metadata()
        if manifest is not None:
            meta["manifest"] = manifest
        path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path):
        from .report.io import read_csv

        path = Path(path)
        header, rows = read_csv(path)
        if not header or header[0] != "t":
            raise SpecError("trajectory CSV must start with a 't' column")
        meta_path = path.with_suffix(".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(rows[0, 1:].copy(), rows[:, 0].copy(), rows[:, 1:].copy(),
                   float(meta.get("tolerance", float("nan"))), int(meta.get("rejected_steps", 0)),
                   int(meta.get("accepted_steps", 0)))


@dataclass(frozen=True)
class PeriodicOrbit:
    base: np.ndarray
    period: float
    translation: tuple
    residual: float

    @property
    def rotation(self):
        return np.asarray(self.translation, dtype=float) / self.period


class DenseSolution:
    """Continuous extension of one integration over [0, horizon] (or [horizon, 0])."""

    def __init__(self, initial, horizon, tol, rec_t, rec_h, rec_c, sign, rejected):
        self.initial = initial
        self.horizon = horizon
        self.tolerance = tol
        self._t = rec_t
        self._h = rec_h
        self._c = rec_c
        self._sign = sign
        self.rejected_steps = rejected

    @property
    def steps(self):
        return len(self._t)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = self._sign * t
        if np.any(s < -1e-12) or np.any(s > abs(self.horizon) * (1 + 1e-12) + 1e-12):
            raise SpecError("dense output requested outside the integrated interval")
        if len(self._t) == 0:
            return np.repeat(self.initial[None, :], len(t), axis=0)
        return K.dense_eval(self._t, self._h, self._c, np.clip(s, 0.0, abs(self.horizon)))


def _hmax(spec):
    bound = spec.sup_bound
    return 1.0 if bound <= 0 else min(1.0, 0.25 / bound)


def _check_tol(tol):
    tol = float(tol)
    if not (1e-14 <= tol <= 1e-1):
        raise SpecError(f"tolerance {tol} outside [1e-14, 1e-1]")
    return tol


def _check_horizon(horizon, cap):
    horizon = float(horizon)
    if not math.isfinite(horizon):
        raise SpecError("horizon must be finite")
    if abs(horizon) > cap:
        raise HorizonError(f"horizon {horizon} exceeds the hard cap {cap}")
    return horizon


def _run(spec, x, t_out, tol, sign=1, record=False):
    if not isinstance(spec, FieldSpec):
        raise SpecError("integration needs a validated FieldSpec")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec.dimension:
        raise SpecError(f"initial point has dimension {x.shape[0]}, field has {spec.dimension}")
    if not np.all(np.isfinite(x)):
        raise SpecError("initial point must be finite")
    data = spec.kernel_data
    out = K.dp5_solve(*data, x.copy(), np.ascontiguousarray(t_out, dtype=float), float(sign), float(tol),
                      _hmax(spec), _MAX_STEPS, bool(record))
    Y, status, nacc, nrej, t_stop, x_stop = out[:6]
    if status == K.STATUS_UNDERFLOW:
        raise StepUnderflowError(
            f"step size underflow at t={sign * t_stop:.6g}, X={np.array2string(x_stop, precision=6)}",
            time=sign * t_stop, location=x_stop.copy())
    if status == K.STATUS_MAX_STEPS:
        raise NumericalError(f"step budget exhausted at t={sign * t_stop:.6g}")
    if status == K.STATUS_NONFINITE:
        raise NumericalError(f"non-finite field value near X={x_stop}")
    return out


def integrate(spec: FieldSpec, x, horizon, tol=1e-9, t_eval=None, dt=None,
              horizon_cap=DEFAULT_HORIZON_CAP) -> Trajectory:
    """Integrate the lift from ``x`` over [0, horizon].

    Parameters
    ----------
    t_eval : array, optional
        Increasing output times starting at 0 and ending at or before ``horizon``.
    dt : float, optional
        Uniform output spacing, used when ``t_eval`` is not given.  Without
        either, only ``t = 0`` and ``t = horizon`` are returned.
    """
    tol = _check_tol(tol)
    horizon = _check_horizon(horizon, horizon_cap)
    if horizon <= 0:
        raise SpecError("horizon must be positive")
    if t_eval is None:
        if dt is None:
            t_eval = np.array([0.0, horizon])
        else:
            n = max(1, int(math.ceil(horizon / float(dt) - 1e-9)))
            t_eval = np.linspace(0.0, horizon, n + 1)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or len(t_eval) < 1 or t_eval[0] != 0.0:
        raise SpecError("t_eval must be a 1-D sequence starting at 0")
    if np.any(np.diff(t_eval) <= 0):
        raise SpecError("t_eval must be strictly increasing")
    if t_eval[-1] > horizon * (1 + 1e-12):
        raise SpecError("t_eval extends beyond the horizon")
    out = _run(spec, x, t_eval, tol)
    x0 = np.asarray(x, dtype=float).reshape(-1).copy()
    lifts = out[0]
    lifts[0] = x0
    return Trajectory(x0, t_eval, lifts, tol, int(out[3]), int(out[2]))


def flow_map(spec: FieldSpec, x, t, tol=1e-9, horizon_cap=DEFAULT_HORIZON_CAP):
    """X(t, x) for a single time of either sign."""
    tol = _check_tol(tol)
    t = _check_horizon(t, horizon_cap)
    x = np.asarray(x, dtype=float).reshape(-1)
    if t == 0:
        return x.copy()
    sign = 1 if t > 0 else -1
    return _run(spec, x, np.array([abs(t)]), tol, sign)[0][0]


def flow_many(spec, points, t, tol=1e-9):
    """X(t, x) for each row of ``points``."""
    return np.array([flow_map(spec, p, t, tol) for p in np.atleast_2d(points)])


def dense_solution(spec: FieldSpec, x, horizon, tol=1e-9, horizon_cap=DEFAULT_HORIZON_CAP) -> DenseSolution:
    """Integrate once and return a callable interpolant on the whole interval."""
    tol = _check_tol(tol)
    horizon = _check_horizon(horizon, horizon_cap)
    x = np.asarray(x, dtype=float).reshape(-1)
    sign = 1 if horizon >= 0 else -1
    out = _run(spec, x, np.array([abs(horizon)]), tol, sign, record=True)
    return DenseSolution(x.copy(), horizon, tol, out[6], out[7], out[8], sign, int(out[3]))


@dataclass(frozen=True)
class FlowInvariantReport:
    semigroup: float
    equivariance: float
    samples: int
    tolerance: float
    per_sample: list = field(default_factory=list, repr=False)

    def passed(self, factor=5.0):
        return self.semigroup <= factor * self.tolerance and self.equivariance <= factor * self.tolerance


def verify_flow_invariants(spec: FieldSpec, samples, tol=1e-9) -> FlowInvariantReport:
    """Semigroup X(s+t,x) = X(t,X(s,x)) and equivariance X(t,x+k) = X(t,x)+k.

    ``samples`` is a list of ``(x, s, t, k)`` tuples; every composition uses
    independent integrations.
    """
    sg = eq = 0.0
    rows = []
    for x, s, t, k in samples:
        x = np.asarray(x, dtype=float)
        k = np.asarray(lattice_vector(k), dtype=float)
        direct = flow_map(spec, x, s + t, tol)
        composed = flow_map(spec, flow_map(spec, x, s, tol), t, tol)
        r1 = float(np.linalg.norm(direct - composed))
        shifted = flow_map(spec, x + k, t, tol)
        r2 = float(np.linalg.norm(shifted - flow_map(spec, x, t, tol) - k))
        rows.append((r1, r2))
        sg, eq = max(sg, r1), max(eq, r2)
    return FlowInvariantReport(sg, eq, len(rows), tol, rows)


def _lattice_distance(v):
    return np.linalg.norm(v - np.round(v), axis=-1)


def detect_periodic_orbit(spec: FieldSpec, x, max_period, tol=1e-9):
    """Smallest T in (0, max_period] with |X(T,x) - x - k| <= tol, or None.

    Returns are located on a uniform scan of the lattice distance of
    X(t,x) - x, then refined by secant iteration on the along-flow
    component of X(t,x) - x - k.  Equilibria give k = 0 and T = 1.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    max_period = float(max_period)
    if max_period <= 0:
        raise SpecError("max_period must be positive")
    b0 = eval_field(spec, x)
    speed = float(np.linalg.norm(b0))
    if speed <= tol:
        return PeriodicOrbit(x.copy(), 1.0, (0,) * spec.dimension, speed)
    itol = max(1e-12, min(1e-10, tol * 1e-2))
    sol = dense_solution(spec, x, max_period, itol)
    sup_b = max(spec.sup_bound, speed)
    delta = min(0.05, 0.05 / sup_b)
    n = max(8, int(math.ceil(max_period / delta)))
    ts = np.linspace(0.0, max_period, n + 1)
    D = _lattice_distance(sol(ts) - x)
    # skip the initial stretch where the orbit is still near x
    away = np.nonzero(D > min(0.25, 0.5 * D.max()))[0] if D.max() > 0 else []
    if len(away) == 0:
        return None
    start = away[0]
    thresh = 2.0 * delta * sup_b
    u = b0 / speed**2
    for i in range(max(start, 1), n + 1):
        left = D[i - 1]
        right = D[i + 1] if i < n else np.inf
        if not (D[i] <= left and D[i] <= right and D[i] < thresh):
            continue
        k = np.round(sol(ts[i])[0] - x)

        def g(t):
            return float(u @ (sol(min(max(t, 0.0), max_period))[0] - x - k))

        t0, t1 = ts[i], ts[i] - g(ts[i])
        g0 = g(t0)
        for _ in range(50):
            g1 = g(t1)
            if g1 == g0 or abs(t1 - t0) < 1e-15 * max(1.0, t1):
                break
            t0, t1, g0 = t1, t1 - g1 * (t1 - t0) / (g1 - g0), g1
        T = t1
        if not (0 < T <= max_period * (1 + 1e-12)):
            continue
        T = min(T, max_period)
        # the dense interpolant is only O(tol); confirm with a fresh integration
        XT = flow_map(spec, x, T, itol)
        res = float(np.linalg.norm(XT - x - k))
        if res <= tol:
            return PeriodicOrbit(x.copy(), float(T), lattice_vector(k), res)
    return None

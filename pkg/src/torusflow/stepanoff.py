"""Exact flows of unidirectional fields b = a xi.

With rho = 1/a the orbit is X(t,y) = y + F_y^{-1}(t) xi where
F_y(s) = int_0^s rho(r xi + y) dr.  Each Fourier mode of rho integrates in
closed form, so F_y is exact up to roundoff and its inverse is obtained by
safeguarded Newton inside the bracket [t/rho_max, t/rho_min].

Vanishing profiles a = g**p (g >= 0 with a single zero at the lattice) are
handled by quadrature of 1/a and a line search for the first root.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate as spi
from scipy import optimize as spo

from .core import FieldSpec, FourierSeries, Stepanoff, stepanoff_speed
from .errors import CertificationError, NumericalError, SpecError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class StepanoffFlow:
    """Unidirectional flow data; ``rho`` is None for vanishing profiles."""

    xi: np.ndarray
    rho: FourierSeries | None = None
    profile: FourierSeries | None = None
    exponent: float = 1.0
    vanishing: bool = False
    spec: FieldSpec | None = None

    @classmethod
    def from_spec(cls, spec: FieldSpec) -> "StepanoffFlow":
        analytic = spec.analytic
        v = analytic.variant
        if not isinstance(v, Stepanoff):
            raise SpecError("field is not a Stepanoff (unidirectional) field")
        return cls(np.asarray(v.direction, dtype=float), v.rho, v.profile, v.exponent, v.vanishing, spec)

    @classmethod
    def from_rho(cls, rho, xi, normalize=True):
        from .core import stepanoff_field

        return cls.from_spec(stepanoff_field(rho, xi, normalize))

    @property
    def dimension(self):
        return len(self.xi)

    def speed(self, x):
        """The scalar profile a(x)."""
        return stepanoff_speed(self.spec.analytic.variant, x)

    @cached_property
    def underline_a(self) -> float:
        """Harmonic mean (int 1/a)^{-1}."""
        if self.rho is not None:
            return 1.0 / self.rho.mean
        return 1.0 / _mean_inverse_profile(self.profile, self.exponent)

    @cached_property
    def _rho_bounds(self):
        cert = self.spec.analytic.certificates.get("rho")
        lo = cert.lower_bound if cert is not None else None
        hi = self.rho.mean + self.rho.without_mean().l1_norm()
        if lo is None or lo <= 0:
            raise CertificationError("rho has no certified positive lower bound")
        return lo, hi

    @cached_property
    def _packed(self):
        modes = np.array([n for n, _ in self.rho.coefficients], dtype=float).reshape(-1, self.dimension)
        coeffs = np.array([c for _, c in self.rho.coefficients], dtype=complex)
        return modes, coeffs, modes @ self.xi


def _mean_inverse_profile(g: FourierSeries, p):
    """int over Y_2 of g^{-p} for even, coordinate-symmetric g.

    Uses the reflection symmetry x_i -> 1 - x_i to integrate over a quarter
    cell with the singular corner at the origin.
    """
    if g.dimension != 2:
        raise SpecError("vanishing profiles are supported in d = 2 only")

    def inner(x1):
        return spi.quad(lambda x2: float(g(np.array([x1, x2]))) ** (-p), 0.0, 0.5,
                        limit=200, epsabs=1e-13, epsrel=1e-11)[0]

    # the inner integral is singular at x1 = 0; quadpack warns but the outer sum converges
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spi.IntegrationWarning)
        val = spi.quad(inner, 0.0, 0.5, limit=200, epsabs=1e-12, epsrel=1e-10)[0]
    return 4.0 * val


def profile_integral(flow: StepanoffFlow, y, t):
    """F_y(t) = int_0^t rho(s xi + y) ds, vectorised over ``t``.

    Each mode integrates to t e^{i pi c t} sinc(c t) with c = xi.n; exact
    zeros are used when c t is a nonzero integer.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if flow.rho is None:
        if np.ndim(t) == 0:
            return _vanishing_integral(flow, y, float(t))
        return np.array([_vanishing_integral(flow, y, float(s)) for s in t])
    modes, coeffs, c = flow._packed
    amp = coeffs * np.exp(2j * math.pi * (modes @ y))
    ct = np.multiply.outer(t, c)
    term = np.exp(1j * math.pi * ct) * np.sinc(ct)
    near_int = (np.abs(ct - np.round(ct)) <= 1e-12) & (np.round(ct) != 0)
    term = np.where(near_int, 0.0, term)
    return (t * (term @ amp)).real if np.ndim(t) == 0 else (t[..., None] * term @ amp).real


def _vanishing_integral(flow, y, s):
    if s == 0:
        return 0.0
    root = first_root(flow, y, math.copysign(1.0, s), abs(s) * 1.01 + 1.0)
    if root is not None and abs(root) <= abs(s):
        raise SpecError(f"s={s} is beyond the maximal interval (root at {root})")
    return _vanishing_quad(flow, y, s)


def _rtsafe(f, df, lo, hi, target, tol, maxit=100):
    """Newton with bisection fallback for an increasing function on [lo, hi]."""
    flo = f(lo) - target
    fhi = f(hi) - target
    if flo > 0 or fhi < 0:
        raise NumericalError("inverse bracket does not contain the target")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    s = 0.5 * (lo + hi)
    for _ in range(maxit):
        r = f(s) - target
        if abs(r) <= tol:
            return s
        if r < 0:
            lo = s
        else:
            hi = s
        step = r / df(s)
        s_new = s - step
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(s)):
            return s_new
        s = s_new
    r = f(s) - target
    if abs(r) <= 10 * tol:
        return s
    raise NumericalError(f"profile inversion did not converge (residual {r:.3g})")


def inverse_profile(flow: StepanoffFlow, y, t, tol=1e-12):
    """s with F_y(s) = t."""
    y = np.asarray(y, dtype=float)
    t = float(t)
    if t == 0:
        return 0.0
    lo_rho, hi_rho = flow._rho_bounds
    if t > 0:
        lo, hi = t / hi_rho, t / lo_rho
    else:
        lo, hi = t / lo_rho, t / hi_rho
    f = lambda s: float(profile_integral(flow, y, s))
    df = lambda s: float(flow.rho(y + s * flow.xi))
    # F_y(s) carries roundoff proportional to |t|
    return _rtsafe(f, df, lo, hi, t, max(tol, 8 * np.finfo(float).eps * abs(t)))


@dataclass(frozen=True)
class ExactPoint:
    point: np.ndarray
    arclength: float
    reached_limit: bool


def flow_exact(flow: StepanoffFlow, y, t, tol=1e-12, detail=False):
    """X(t, y) = y + F_y^{-1}(t) xi.

    For vanishing profiles, times past the numerically resolvable part of the
    asymptote return the limit point y + tau_y xi; pass ``detail=True`` to
    get an :class:`ExactPoint` carrying that flag.
    """
    y = np.asarray(y, dtype=float)
    if flow.rho is not None:
        s = inverse_profile(flow, y, t, tol)
        res = ExactPoint(y + s * flow.xi, s, False)
    else:
        res = _vanishing_flow(flow, y, float(t), tol)
    return res if detail else res.point


def _vanishing_flow(flow, y, t, tol):
    if t == 0 or is_lattice_point(y):
        return ExactPoint(y.copy(), 0.0, False)
    sign = math.copysign(1.0, t)
    amax = flow.profile.l1_norm() ** flow.exponent
    reach = abs(t) * amax
    root = first_root(flow, y, sign, reach + 1.0)
    f = lambda s: _vanishing_quad(flow, y, s)
    # f(s) >= |s| / amax, so the orbit stays within ``reach`` of y
    if root is not None and abs(root) <= reach:
        # stop short of the singular endpoint where quadrature loses accuracy
        s_cap = root * (1.0 - 1e-9) if abs(root) > 0 else 0.0
        if abs(f(s_cap)) <= abs(t):
            return ExactPoint(y + root * flow.xi, root, True)
        lo, hi = sorted((0.0, s_cap))
    else:
        lo, hi = sorted((0.0, sign * reach))
    s = spo.brentq(lambda s: f(s) - t, lo, hi, xtol=1e-14, rtol=8 * np.finfo(float).eps, maxiter=200)
    if abs(f(s) - t) > max(tol, 1e-9) * max(1.0, abs(t)):
        raise NumericalError("vanishing-profile inversion missed the tolerance")
    return ExactPoint(y + s * flow.xi, s, False)


def _vanishing_quad(flow, y, s):
    if s == 0:
        return 0.0
    f = lambda r: 1.0 / max(float(flow.speed(y + r * flow.xi)), 1e-300)
    with warnings.catch_warnings():
        # the integrand blows up near a root; callers compare against the target time only
        warnings.simplefilter("ignore", spi.IntegrationWarning)
        return spi.quad(f, 0.0, s, limit=1000, epsabs=1e-12, epsrel=1e-11)[0]


def is_lattice_point(y, tol=1e-12):
    y = np.asarray(y, dtype=float)
    return bool(np.all(np.abs(y - np.round(y)) <= tol))


def first_root(flow: StepanoffFlow, y, sign=1.0, search=100.0, step=0.01):
    """Signed arclength of the first zero of a(s xi + y) on the ray, or None.

    Scans the ray for local minima of the base profile, refines them by
    bounded Brent minimisation and accepts a minimum only when it lies on a
    lattice point; the root is then snapped to (k - y).xi.
    """
    if flow.rho is not None:
        return None
    y = np.asarray(y, dtype=float)
    g = flow.profile
    if float(g(y)) <= 1e-14 and is_lattice_point(y, 1e-9):
        return 0.0
    scale = max(1.0, g.second_moment())
    # scan in chunks so a near root ends the search early on long rays
    chunk = 4096
    n_total = max(4, int(math.ceil(search / step)))
    for start in range(0, n_total, chunk):
        idx = np.arange(max(start - 1, 0), min(start + chunk, n_total) + 2)
        s = idx * step
        vals = g(y[None, :] + sign * s[:, None] * flow.xi[None, :])
        for i in range(1, len(idx) - 1):
            if idx[i] == 0 or idx[i] > n_total:
                continue
            if not (vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]):
                continue
            # a C^2 base with a zero nearby must dip below its curvature envelope
            if vals[i] > scale * step * step:
                continue
            r = spo.minimize_scalar(lambda u: float(g(y + sign * u * flow.xi)), bounds=(s[i - 1], s[i + 1]),
                                    method="bounded", options={"xatol": 1e-12})
            p = y + sign * r.x * flow.xi
            k = np.round(p)
            if np.linalg.norm(p - k) <= 1e-6 and float(g(k)) <= 1e-14:
                tau = float((k - y) @ flow.xi)
                perp = np.linalg.norm((k - y) - tau * flow.xi)
                if perp <= 1e-9:
                    return tau
    return None


def commensurable_zeta(flow: StepanoffFlow, y, T):
    """zeta(y) = (T / F_y(T)) xi for a direction with T xi in Z^d."""
    T = float(T)
    if T <= 0:
        raise SpecError("T must be positive")
    k = T * flow.xi
    if np.max(np.abs(k - np.round(k))) > 1e-9:
        raise SpecError(f"T xi = {k} is not a lattice vector")
    if flow.rho is None:
        raise SpecError("commensurable zeta needs a positive profile")
    F = float(profile_integral(flow, y, T))
    return (T / F) * flow.xi


@dataclass(frozen=True)
class VanishingClassification:
    y: np.ndarray
    kind: str  # fixed, absorbed, emanating or generic
    tau: float | None
    limit_point: np.ndarray | None
    zeta: np.ndarray
    zeta_extrapolation_error: float | None = None

    @property
    def displacement(self):
        return 0.0 if self.tau is None else self.tau


@dataclass(frozen=True)
class ZeroCheck:
    single_zero: bool
    hessian_eigenvalues: np.ndarray
    grid_points: int


def check_single_zero(flow: StepanoffFlow, per_dim=64) -> ZeroCheck:
    """Grid evidence that the base profile vanishes only at the lattice.

    Every grid point other than the origin must exceed the base's local
    quadratic envelope, and the Hessian at the origin must be positive.
    """
    g = flow.profile
    d = g.dimension
    axes = [np.arange(per_dim) / per_dim] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    vals = g(pts)
    h = 1.0 / per_dim
    lip2 = g.second_moment()
    # a zero inside a cell forces the value at a corner below lip2 h^2 d / 2
    thresh = 0.5 * lip2 * h * h * d
    suspect = np.nonzero(vals <= thresh)[0]
    eig = np.linalg.eigvalsh(g.hessian(np.zeros(d)))
    # the quadratic model at the origin stays below thresh out to this radius
    radius = math.sqrt(2.0 * thresh / eig[0]) + h if eig[0] > 0 else 1.5 * h
    near_origin = np.all(np.minimum(pts[suspect], 1 - pts[suspect]) <= radius, axis=1)
    ok = bool(np.all(near_origin) and abs(float(g(np.zeros(d)))) <= 1e-12 and np.all(eig > 0))
    return ZeroCheck(ok, eig, len(pts))


def vanishing_analysis(flow: StepanoffFlow, y, horizon=1e4, tol=1e-9, search=None) -> VanishingClassification:
    """Classify the orbit of ``y`` for a single-zero vanishing profile.

    ``fixed``: y is a lattice point.  ``absorbed``: the forward ray meets a
    lattice point k at arclength tau >= 0 and the orbit converges to k.
    Otherwise the rotation vector is estimated by integration; ``emanating``
    marks points whose backward ray meets the lattice.
    """
    from .rotation import estimate_rotation

    y = np.asarray(y, dtype=float)
    if flow.dimension != 2 or not flow.vanishing:
        raise SpecError("vanishing analysis needs a d = 2 vanishing profile")
    zero = np.zeros(2)
    if is_lattice_point(y):
        return VanishingClassification(y, "fixed", 0.0, np.round(y), zero)
    search = float(search) if search is not None else max(50.0, 2.0 * flow.profile.l1_norm() ** flow.exponent)
    tau = first_root(flow, y, 1.0, search)
    if tau is not None:
        if tau < 0:
            raise NumericalError("forward root search returned a negative time")
        return VanishingClassification(y, "absorbed", tau, y + tau * flow.xi, zero)
    back = first_root(flow, y, -1.0, search)
    est = estimate_rotation(flow.spec, y, horizon, tol)
    return VanishingClassification(y, "emanating" if back is not None else "generic", None, None, est.zeta,
                                   est.extrapolation_error)


@dataclass(frozen=True)
class DeviationRow:
    tau: float
    start: np.ndarray
    limit_point: np.ndarray
    displacement: float
    finite_time_displacement: float


def large_deviation_demo(flow: StepanoffFlow, tau_list, v=None, k=None, t_final=1e4, tol=1e-9):
    """Terminal displacements along ``v`` for x = k - tau xi.

    The orbit from x reaches the lattice point k after arclength tau, so the
    terminal displacement along v is tau (xi.v).  ``finite_time_displacement``
    is the same quantity for the integrated orbit at ``t_final``.
    """
    from .integrator import flow_map

    v = flow.xi if v is None else np.asarray(v, dtype=float)
    k = np.zeros(flow.dimension) if k is None else np.asarray(k, dtype=float)
    rows = []
    for tau in tau_list:
        tau = float(tau)
        if tau < 0:
            raise SpecError("tau must be nonnegative")
        x = k - tau * flow.xi
        if tau == 0:
            rows.append(DeviationRow(0.0, x, x, 0.0, 0.0))
            continue
        root = first_root(flow, x, 1.0, tau * 1.01 + 1.0)
        if root is None:
            raise NumericalError(f"no lattice root found from x = k - {tau} xi")
        limit = x + root * flow.xi
        X = flow_map(flow.spec, x, t_final, tol)
        rows.append(DeviationRow(tau, x, limit, float((limit - x) @ v), float((X - x) @ v)))
    return rows

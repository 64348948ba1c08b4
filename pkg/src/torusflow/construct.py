"""Fields built from torus diffeomorphisms and their coboundary correctors.

Three routes produce a corrector Phi with X(t,x) - x - t zeta(x) = Phi(X) - Phi(x):

* a diffeomorphism Psi(x) = M x + Psi_sharp(x) and an invariant zeta give
  b = (grad Psi)^{-1} zeta, X(t,x) = Psi^{-1}(t zeta(x) + Psi(x)) and
  Phi = id - Psi;
* a potential u with b.grad(u) > 0 gives the equipotential time tau(x) and
  Phi(x) = int_0^tau (zeta - b(X(s,x))) ds;
* potentials U = (u_1, ..., u_d) with b.grad(u_j) = 0 for j >= 2 give the
  reduction Psi = M U, M = (mean grad U)^{-1}, to a unidirectional field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as spi
from scipy import optimize as spo

from .core import Constructed, FieldSpec, FourierSeries, _unit_grid, eval_field
from .errors import CertificationError, NumericalError, SpecError
from .integrator import dense_solution, flow_map


@dataclass(frozen=True, eq=False)
class Potential:
    """u(x) = c.x + f(x) with f periodic, so grad u is periodic."""

    linear: np.ndarray
    periodic: FourierSeries

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float))
        if self.linear.shape != (self.periodic.dimension,):
            raise SpecError("potential linear part has wrong dimension")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.linear + self.periodic(x)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.linear + self.periodic.gradient(x)


@dataclass(frozen=True, eq=False)
class DiffeoSpec:
    """Psi(x) = M x + Psi_sharp(x) with M unimodular."""

    M: np.ndarray
    psi_sharp: tuple

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        d = len(self.psi_sharp)
        if M.shape != (d, d):
            raise SpecError("M must be d x d with d the number of periodic components")
        if not np.array_equal(M, np.round(M)):
            raise CertificationError("M must be an integer matrix")
        if round(abs(np.linalg.det(M))) != 1:
            raise CertificationError(f"M must be unimodular, det M = {np.linalg.det(M):.6g}")
        if any(c.dimension != d for c in self.psi_sharp):
            raise SpecError("periodic part has wrong dimension")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "psi_sharp", tuple(self.psi_sharp))

    @property
    def dimension(self):
        return len(self.psi_sharp)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x @ self.M.T + np.stack([c(x) for c in self.psi_sharp], axis=-1)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return self.M + np.stack([c.gradient(x) for c in self.psi_sharp], axis=-2)

    def det_certificate(self, per_dim=32):
        """(min |det|, slack, sign) from a grid with a Lipschitz slack on det grad Psi.

        The determinant's Lipschitz constant is bounded through the cofactor
        expansion: sum_i L_i prod_{j != i} R_j with R_j a bound on row j of
        grad Psi and L_i a Lipschitz bound for row i.
        """
        d = self.dimension
        pts = _unit_grid(d, per_dim)
        det = np.linalg.det(self.jacobian(pts))
        R = [np.linalg.norm(self.M[i]) + self.psi_sharp[i].first_moment() for i in range(d)]
        L = [self.psi_sharp[i].second_moment() for i in range(d)]
        lip = sum(L[i] * math.prod(R[j] for j in range(d) if j != i) for i in range(d))
        slack = lip * math.sqrt(d) / (2 * per_dim)
        if np.all(det > 0):
            return float(det.min()), slack, 1
        if np.all(det < 0):
            return float(-det.max()), slack, -1
        return 0.0, slack, 0

    def certify(self, per_dim=32):
        lo, slack, sign = self.det_certificate(per_dim)
        while sign != 0 and lo <= slack and per_dim < 512 // max(1, self.dimension - 1):
            per_dim *= 2
            lo, slack, sign = self.det_certificate(per_dim)
        if sign == 0 or lo <= slack:
            raise CertificationError(
                f"det grad Psi is not certified nonzero (grid min {lo:.3g}, slack {slack:.3g})")
        return lo - slack

    def inverse(self, y, tol=1e-13, maxit=60):
        """Psi^{-1}(y) by damped Newton from M^{-1}(y - mean Psi_sharp)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        mean = np.array([c.mean for c in self.psi_sharp])
        Minv = np.linalg.inv(self.M)
        x = (y - mean) @ Minv.T
        for _ in range(maxit):
            r = self(x) - y
            nr = np.linalg.norm(r, axis=1)
            if np.all(nr <= tol * np.maximum(1.0, np.linalg.norm(y, axis=1))):
                break
            step = np.linalg.solve(self.jacobian(x), r[..., None])[..., 0]
            lam = np.ones(len(x))
            for _ in range(30):
                trial = x - lam[:, None] * step
                worse = np.linalg.norm(self(trial) - y, axis=1) > (1 - 1e-4 * lam) * nr
                worse &= nr > 0
                if not worse.any():
                    break
                lam = np.where(worse, 0.5 * lam, lam)
            x = x - lam[:, None] * step
        else:
            res = float(np.linalg.norm(self(x) - y, axis=1).max())
            if res > 1e-9:
                raise NumericalError(f"Psi inversion did not converge (residual {res:.3g})")
        return x if np.ndim(y) > 1 and len(y) > 1 else x[0]


@dataclass(frozen=True, eq=False)
class CoboundaryCorrector:
    """Phi with X(t,x) - x - t zeta(x) = Phi(X(t,x)) - Phi(x).

    ``bounded`` is True only when Phi is periodic by construction (then
    ``bound`` bounds sup|Phi|), False when it is provably unbounded, and None
    when unknown; ``sampled_sup`` holds the largest value seen.
    """

    phi: Callable
    zeta: Callable
    bounded: bool | None
    bound: float | None = None
    sampled_sup: float | None = None

    def expansion_bound(self):
        """2 sup|Phi|, the uniform bound on X(t,x) - x - t zeta(x)."""
        return None if self.bound is None else 2.0 * self.bound


@dataclass(frozen=True, eq=False)
class BuilderProduct:
    field: FieldSpec
    corrector: CoboundaryCorrector
    psi: DiffeoSpec
    zeta: tuple
    compatibility_residual: float

    def exact_flow(self, t, x):
        """Psi^{-1}(t zeta(x) + Psi(x))."""
        x = np.asarray(x, dtype=float)
        return self.psi.inverse(t * _eval_vector(self.zeta, x) + self.psi(x))

    def zeta_invariance(self, samples, tol=1e-11):
        """max |zeta(X(t,x)) - zeta(x)| over ``samples`` of (t, x), X integrated."""
        worst = 0.0
        for t, x in samples:
            x = np.asarray(x, dtype=float)
            X = flow_map(self.field, x, float(t), tol)
            worst = max(worst, float(np.linalg.norm(_eval_vector(self.zeta, X) - _eval_vector(self.zeta, x))))
        return worst


def _eval_vector(series, x):
    return np.stack([c(x) for c in series], axis=-1)


def compatibility_residual(psi: DiffeoSpec, zeta, per_dim=24):
    """max |grad(zeta) (grad Psi)^{-1} zeta| on a grid."""
    pts = _unit_grid(psi.dimension, per_dim)
    z = _eval_vector(zeta, pts)
    b = np.linalg.solve(psi.jacobian(pts), z[..., None])[..., 0]
    dz = np.stack([c.gradient(pts) for c in zeta], axis=-2)
    return float(np.abs(np.einsum("...ij,...j->...i", dz, b)).max())


def build_from_diffeo(psi: DiffeoSpec, zeta, tol=1e-10, label="diffeo") -> BuilderProduct:
    """b = (grad Psi)^{-1} zeta with corrector Phi = id - Psi.

    Rejects zeta violating grad(zeta) (grad Psi)^{-1} zeta = 0 beyond ``tol``.
    """
    d = psi.dimension
    zeta = tuple(FourierSeries.constant(d, float(z)) if not isinstance(z, FourierSeries) else z for z in zeta)
    if len(zeta) != d or any(z.dimension != d for z in zeta):
        raise SpecError("zeta must have d components on Y_d")
    psi.certify()
    res = compatibility_residual(psi, zeta)
    if res > tol:
        raise CertificationError(f"zeta is not invariant for the built field: residual {res:.3g} > {tol:.3g}")
    spec = FieldSpec(d, Constructed(tuple(tuple(int(v) for v in row) for row in psi.M), psi.psi_sharp, zeta, label))
    identity = np.array_equal(psi.M, np.eye(d))
    bound = math.sqrt(sum(c.l1_norm() ** 2 for c in psi.psi_sharp)) if identity else None

    def phi(x):
        x = np.asarray(x, dtype=float)
        return x - psi(x)

    corr = CoboundaryCorrector(phi, lambda x: _eval_vector(zeta, np.asarray(x, dtype=float)),
                               True if identity else False, bound)
    return BuilderProduct(spec, corr, psi, zeta, res)


def random_unimodular(rng, d):
    """A random integer matrix with |det| = 1 from elementary operations."""
    M = np.eye(d, dtype=int)
    for _ in range(2 * d):
        i, j = rng.choice(d, size=2, replace=False)
        M[i] += int(rng.integers(-1, 2)) * M[j]
    return M


def _random_series(rng, d, modes, amplitude, max_mode=2):
    s = FourierSeries.zero(d)
    for _ in range(modes):
        n = rng.integers(-max_mode, max_mode + 1, size=d)
        while not n.any():
            n = rng.integers(-max_mode, max_mode + 1, size=d)
        phase = rng.uniform(0, 2 * math.pi)
        s = s + FourierSeries.cosine(n, amplitude * math.cos(phase)) + FourierSeries.sine(n, amplitude * math.sin(phase))
    return s


def random_diffeo_product(rng, d=2, modes=2, kind=None) -> BuilderProduct:
    """Random compatible (Psi, zeta) pair.

    ``kind='constant'``: constant zeta, random unimodular M and periodic part.
    ``kind='sheared'``: zeta = f(w.x) v with w.v = 0 and Psi_sharp valued in
    the orthogonal complement of w, so that w.b = 0 and zeta is invariant.
    """
    kind = kind or ("constant" if rng.random() < 0.5 else "sheared")
    # keep grad Psi_sharp well inside the invertible range
    if kind == "constant":
        M = random_unimodular(rng, d)
        amp = 0.3 / (2 * math.pi * 2 * math.sqrt(d) * modes * math.sqrt(d)) * float(np.linalg.norm(M, -2))
        psi = DiffeoSpec(M, tuple(_random_series(rng, d, modes, amp) for _ in range(d)))
        zeta = tuple(FourierSeries.constant(d, float(v)) for v in rng.normal(size=d))
        return build_from_diffeo(psi, zeta, label="random-constant")
    w = np.zeros(d, dtype=int)
    w[rng.integers(d)] = 1
    if rng.random() < 0.5:
        w[(np.argmax(w) + 1) % d] = int(rng.choice([-1, 1]))
    basis = np.linalg.svd(w[None, :].astype(float))[2][1:]
    v = rng.normal(size=d - 1) @ basis
    amp = 0.3 / (2 * math.pi * 2 * math.sqrt(d) * modes)
    g = _random_series(rng, d, modes, amp)
    u = rng.normal(size=d - 1) @ basis
    u /= np.linalg.norm(u)
    psi = DiffeoSpec(np.eye(d, dtype=int), tuple(g * float(ui) for ui in u))
    f = FourierSeries.constant(d, 1.0)
    for m in range(1, modes + 1):
        f = f + FourierSeries.cosine(m * w, 0.5 * rng.normal() / m)
    zeta = tuple(f * float(vi) for vi in v)
    return build_from_diffeo(psi, zeta, label="random-sheared")


# -- equipotential corrector ------------------------------------------------------


@dataclass(frozen=True)
class EquipotentialResult:
    tau: float
    phi: np.ndarray
    phi_closed: np.ndarray
    tau_shift_residual: float
    positivity_margin: float


def _positivity_margin(spec, u: Potential, per_dim=48):
    pts = _unit_grid(spec.dimension, per_dim if spec.dimension <= 2 else 16)
    val = np.einsum("...i,...i->...", eval_field(spec, pts), u.gradient(pts))
    i = int(np.argmin(val))
    return float(val[i]), pts[i]


def _equipotential_time(spec, u, x, margin, tol):
    ux = float(u(x))
    if ux == 0:
        return 0.0
    tmax = 1.05 * abs(ux) / margin + 1.0
    horizon = -tmax if ux > 0 else tmax
    sol = dense_solution(spec, x, horizon, tol)
    g = lambda s: float(u(sol(s)[0]))
    a, b = sorted((0.0, horizon))
    if g(a) * g(b) > 0:
        raise NumericalError(f"no equipotential crossing within |t| <= {tmax:.3g}")
    tau = spo.brentq(g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return tau, sol


def phi_from_equipotential(spec: FieldSpec, u: Potential, zeta, x, tol=1e-11, t_test=None) -> EquipotentialResult:
    """Equipotential time tau(x) with u(X(tau,x)) = 0 and the corrector Phi(x).

    Phi is the orbit quadrature of zeta - b(X(s,x)) over [0, tau]; the
    closed form tau zeta - (X(tau,x) - x) is returned alongside as a check.
    ``tau_shift_residual`` is |tau(X(t,x)) - tau(x) + t| at ``t_test``.
    """
    x = np.asarray(x, dtype=float)
    margin, where = _positivity_margin(spec, u)
    if margin <= 0:
        raise CertificationError(f"b.grad(u) is not positive: {margin:.3g} at x = {where}")
    z = np.asarray(zeta(x) if callable(zeta) else zeta, dtype=float)
    out = _equipotential_time(spec, u, x, margin, tol)
    if np.isscalar(out):
        tau, sol = 0.0, None
        phi = np.zeros_like(x)
        closed = phi.copy()
    else:
        tau, sol = out
        phi = spi.quad_vec(lambda s: z - eval_field(spec, sol(s)[0]), min(0.0, tau), max(0.0, tau),
                           epsabs=1e-12, epsrel=1e-10)[0] * (1.0 if tau >= 0 else -1.0)
        closed = tau * z - (sol(tau)[0] - x)
    # backward legs expand errors at the rate of the unstable direction, keep t short
    t_test = 0.1 if t_test is None else float(t_test)
    y = flow_map(spec, x, t_test, tol)
    out_y = _equipotential_time(spec, u, y, margin, tol)
    tau_y = 0.0 if np.isscalar(out_y) else out_y[0]
    return EquipotentialResult(float(tau), phi, closed, abs(tau_y - (tau - t_test)), margin)


# -- Kozlov reduction ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KozlovInput:
    U: tuple
    field: FieldSpec


@dataclass(frozen=True, eq=False)
class KozlovResult:
    psi: DiffeoSpec
    stepanoff: object
    xi: np.ndarray
    zeta: np.ndarray
    phi: CoboundaryCorrector
    M: np.ndarray
    unit_speed: bool
    conjugacy_residual: float

    def reduced_profile(self, y):
        """a(y) = (b.grad u_1)(Psi^{-1}(y)) evaluated pointwise."""
        x = self.psi.inverse(np.atleast_2d(y))
        return np.einsum("...i,...i->...", eval_field(self._field, np.atleast_2d(x)), self._u1.gradient(x))


def _check_kozlov(inp: KozlovInput, per_dim, tol):
    spec = inp.field
    d = spec.dimension
    if len(inp.U) != d:
        raise SpecError("KozlovInput needs d potentials")
    pts = _unit_grid(d, per_dim)
    b = eval_field(spec, pts)
    grads = [u.gradient(pts) for u in inp.U]
    s1 = np.einsum("...i,...i->...", b, grads[0])
    i = int(np.argmin(s1))
    if s1[i] <= 0:
        raise CertificationError(f"b.grad(u_1) = {s1[i]:.3g} <= 0 at x = {pts[i]}")
    for j in range(1, d):
        sj = np.abs(np.einsum("...i,...i->...", b, grads[j]))
        k = int(np.argmax(sj))
        if sj[k] > tol:
            raise CertificationError(f"b.grad(u_{j + 1}) = {sj[k]:.3g} != 0 at x = {pts[k]}")
    det = np.linalg.det(np.stack(grads, axis=-2))
    if not (np.all(det > 0) or np.all(det < 0)):
        k = int(np.argmin(np.abs(det)))
        raise CertificationError(f"det grad U changes sign near x = {pts[k]}")
    return s1


def kozlov_reduction(inp: KozlovInput, truncation=8, per_dim=32, tol=1e-10) -> KozlovResult:
    """Reduce b to the unidirectional field a xi with Psi = M U.

    M = (mean grad U)^{-1}, xi = M e_1, and the reduced profile is
    a = (b.grad u_1) o Psi^{-1}.  Its inverse 1/a is sampled on a grid and
    truncated at sup-norm ``truncation`` to give the reduced Stepanoff flow;
    zeta = a_ xi with a_ the harmonic mean.  When b.grad(u_1) = 1 on the
    grid, a = 1, zeta = xi and Phi = id - M U is certified bounded.
    """
    from .core import stepanoff_field
    from .stepanoff import StepanoffFlow

    s1 = _check_kozlov(inp, per_dim, tol)
    spec = inp.field
    d = spec.dimension
    C = np.stack([u.linear for u in inp.U])
    # mean of grad U is the linear part: the periodic gradients have zero mean
    M = np.linalg.inv(C)
    sharp = [FourierSeries.zero(d) for _ in range(d)]
    for i in range(d):
        for j in range(d):
            if M[i, j] != 0:
                sharp[i] = sharp[i] + inp.U[j].periodic * float(M[i, j])
    # Psi(x) = M C x + M U_sharp(x) = x + M U_sharp(x)
    psi = DiffeoSpec(np.eye(d, dtype=int), tuple(sharp))
    xi = M[:, 0].copy()
    unit = bool(np.abs(s1 - 1.0).max() <= tol)
    u1 = inp.U[0]
    if unit:
        rho = FourierSeries.constant(d, 1.0)
    else:
        n = 2 * truncation + 2
        grid = _unit_grid(d, n)
        x = psi.inverse(grid)
        a = np.einsum("...i,...i->...", eval_field(spec, x), u1.gradient(x))
        rho = _fft_series(1.0 / a.reshape((n,) * d), truncation)
    flow = StepanoffFlow.from_spec(stepanoff_field(rho, xi, normalize=False))
    zeta = flow.underline_a * xi
    bound = math.sqrt(sum(c.l1_norm() ** 2 for c in sharp))

    def phi(x):
        x = np.asarray(x, dtype=float)
        return x - psi(x)

    corr = CoboundaryCorrector(phi, lambda x: np.broadcast_to(zeta, np.shape(x)).copy(),
                               True if unit else None, bound if unit else None)
    pts = _unit_grid(d, 16)
    lhs = np.einsum("...ij,...j->...i", psi.jacobian(pts), eval_field(spec, pts))
    rhs = np.einsum("...,i->...i", np.einsum("...i,...i->...", eval_field(spec, pts), u1.gradient(pts)), xi)
    res = KozlovResult(psi, flow, xi, zeta, corr, M, unit, float(np.abs(lhs - rhs).max()))
    object.__setattr__(res, "_field", spec)
    object.__setattr__(res, "_u1", u1)
    return res


def _fft_series(values, N):
    d = values.ndim
    n = values.shape[0]
    c = np.fft.fftn(values) / values.size
    out = []
    rng = range(-N, N + 1)
    for idx in np.ndindex(*(2 * N + 1,) * d):
        k = tuple(rng[i] for i in idx)
        v = c[tuple(ki % n for ki in k)]
        if abs(v) > 1e-15:
            out.append((k, complex(v)))
    # symmetrise against roundoff in the FFT
    s = dict(out)
    sym = {}
    for k, v in s.items():
        m = tuple(-x for x in k)
        w = 0.5 * (v + s.get(m, 0j).conjugate())
        if abs(w) > 1e-15:
            sym[k] = w
            sym[m] = w.conjugate()
    zero = (0,) * d
    if zero in sym:
        sym[zero] = complex(sym[zero].real, 0.0)
    return FourierSeries(d, tuple(sym.items()))


# -- verification --------------------------------------------------------------------


@dataclass(frozen=True)
class CoboundaryReport:
    trajectory_residual: float
    grid_residual: float
    samples: int
    sampled_sup_phi: float


def verify_coboundary(spec: FieldSpec, phi: CoboundaryCorrector, samples, tol=1e-11, per_dim=12, h=1e-5,
                      exact_flow=None) -> CoboundaryReport:
    """Residuals of X - x - t zeta(x) - Phi(X) + Phi(x) and of (I - grad Phi) b - zeta.

    X is taken from the integrator unless ``exact_flow(t, x)`` is supplied;
    grad Phi uses central differences with step ``h``.
    """
    r1 = 0.0
    sup = 0.0
    n = 0
    for t, x in samples:
        x = np.asarray(x, dtype=float)
        X = exact_flow(t, x) if exact_flow is not None else flow_map(spec, x, float(t), tol)
        z = np.asarray(phi.zeta(x), dtype=float)
        px, pX = np.asarray(phi.phi(x)), np.asarray(phi.phi(X))
        r1 = max(r1, float(np.linalg.norm(X - x - t * z - pX + px)))
        sup = max(sup, float(np.linalg.norm(px)), float(np.linalg.norm(pX)))
        n += 1
    d = spec.dimension
    pts = _unit_grid(d, per_dim)
    b = eval_field(spec, pts)
    grad = np.empty(pts.shape + (d,))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        grad[..., j] = (np.asarray(phi.phi(pts + e)) - np.asarray(phi.phi(pts - e))) / (2 * h)
    lhs = b - np.einsum("...ij,...j->...i", grad, b)
    z = np.asarray(phi.zeta(pts), dtype=float)
    r2 = float(np.abs(lhs - z).max())
    return CoboundaryReport(r1, r2, n, sup)

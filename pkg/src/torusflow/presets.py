"""Closed-form example flows used as oracles and demonstration inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import FieldSpec, FourierSeries, GeneralFourier, Preset as PresetVariant, Separable, Stepanoff
from .errors import SpecError

PHI = (1 + math.sqrt(5)) / 2

_DIRECTIONS = {
    "golden": (2, (PHI, 1.0)),
    "sqrt2": (2, (math.sqrt(2.0), 1.0)),
    "cubic": (3, (1.0, 2.0 ** (1 / 3), 4.0 ** (1 / 3))),
}


def named_direction(name: str, d: int):
    """Unit vector for a named incommensurable direction, or ``e<i>``."""
    if name in _DIRECTIONS:
        dim, v = _DIRECTIONS[name]
        if dim != d:
            raise SpecError(f"direction {name!r} is {dim}-dimensional, field is {d}-dimensional")
        v = np.array(v)
        return tuple(v / np.linalg.norm(v))
    if name.startswith("e") and name[1:].isdigit() and 1 <= int(name[1:]) <= d:
        v = np.zeros(d)
        v[int(name[1:]) - 1] = 1.0
        return tuple(v)
    if name == "liouville":
        from .arithmetic import LiouvilleNumber

        lam = float(LiouvilleNumber().partial_sum)
        if d != 2:
            raise SpecError("the liouville direction is 2-dimensional")
        return tuple(np.array([lam, 1.0]) / math.hypot(lam, 1.0))
    raise SpecError(f"unknown direction {name!r}; known: {sorted(_DIRECTIONS) + ['liouville', 'e1..ed']}")


@dataclass(frozen=True, eq=False)
class Preset:
    """A named field with its closed-form flow and known asymptotics.

    ``exact_flow(t, x)`` is None when no evaluable closed form exists.
    ``known_zeta`` is a constant vector, a callable, or None when it depends
    on the orbit class.  ``potentials`` carries the u or U used by the
    equipotential and Kozlov constructions when the example provides them.
    """

    name: str
    field: FieldSpec
    exact_flow: Callable | None
    known_zeta: object
    known_deviation_bound: float | None
    notes: str
    potentials: tuple | None = None
    extra: dict = field(default_factory=dict, repr=False)

    def zeta_at(self, x):
        z = self.known_zeta
        if z is None:
            return None
        return np.asarray(z(x) if callable(z) else z, dtype=float)


def _wrap(name, params, spec):
    return FieldSpec(spec.dimension, PresetVariant(name, tuple(sorted(params.items())), spec))


def _direction(xi, d):
    if isinstance(xi, str):
        return np.array(named_direction(xi, d))
    v = np.asarray(xi, dtype=float)
    if v.shape != (d,) or not np.all(np.isfinite(v)) or not np.linalg.norm(v) > 0:
        raise SpecError(f"xi must be a finite nonzero {d}-vector")
    return v / np.linalg.norm(v)


# -- individual presets ----------------------------------------------------------


def example_5_1(xi="golden"):
    """b = xi / (2 + cos(2 pi x_1)) with rotation vector xi / 2."""
    from .cohomology import alpha_series, deviation_bound, solve_theta
    from .construct import Potential
    from .stepanoff import StepanoffFlow, flow_exact

    u = _direction(xi, 2)
    rho = FourierSeries.constant(2, 2.0) + FourierSeries.cosine((1, 0), 1.0)
    spec = FieldSpec(2, Stepanoff(tuple(u), rho=rho))
    flow = StepanoffFlow.from_spec(spec)
    sol = solve_theta(alpha_series(rho)[1], u, 1)
    U = None
    if u[0] != 0:
        U = (Potential([2 / u[0], 0.0], FourierSeries.sine((1, 0), 1 / (2 * math.pi * u[0]))),
             Potential([u[1], -u[0]], FourierSeries.zero(2)))
    return Preset(
        "example_5_1", _wrap("example_5_1", {"xi": list(xi) if not isinstance(xi, str) else xi}, spec),
        lambda t, x: flow_exact(flow, x, t, tol=1e-13), 0.5 * u, deviation_bound(sol),
        "Stepanoff profile rho = 2 + cos(2 pi y_1); F uses the denominator 2 pi xi_1, "
        "which termwise integration of rho gives.",
        U, {"xi": u, "flow": flow},
    )


def _arctan_flow(t, x):
    x = np.asarray(x, dtype=float)
    n = math.floor(x[1] + 0.5)
    r = x[1] - n  # in [-1/2, 1/2)
    if abs(r + 0.5) <= 1e-12:
        x2 = x[1]
    else:
        s, c = math.sin(math.pi * r), math.cos(math.pi * r)
        # arctan(e^{4 pi^2 t} tan(pi r)) without overflow
        if t >= 0:
            x2 = n + math.atan2(s, c * math.exp(-4 * math.pi**2 * t)) / math.pi
        else:
            x2 = n + math.atan2(s * math.exp(4 * math.pi**2 * t), c) / math.pi
    return np.array([x[0] + t, x2])


def gradient_arctan():
    """b = e_1 + 2 pi sin(2 pi x_2) e_2 with X_2 = arctan(e^{4 pi^2 t} tan(pi x_2)) / pi."""
    from .construct import Potential

    spec = FieldSpec(2, GeneralFourier((FourierSeries.constant(2, 1.0),
                                        FourierSeries.sine((0, 1), 2 * math.pi))))
    u = Potential([1.0, 0.0], FourierSeries.cosine((0, 1), -1.0))
    return Preset(
        "gradient_arctan", _wrap("gradient_arctan", {}, spec), _arctan_flow, np.array([1.0, 0.0]), 1.0,
        "Two branches: the invariant lines x_2 = n + 1/2 (reduced coordinate within 1e-12) stay fixed; "
        "elsewhere X_2 tends to the nearest such line. Corrector bound |Phi| <= 1 via u = x_1 - cos(2 pi x_2).",
        (u,),
    )


def _separable_flow(scales):
    def flow(t, x):
        x = np.asarray(x, dtype=float)
        out = x.copy()
        for i, c in enumerate(scales):
            n = math.floor(x[i])
            r = x[i] - n
            if r <= 1e-15 or r >= 1 - 1e-15:
                continue
            th = math.pi * r
            # cot(pi (X - n)) = cot(pi r) - 2 pi c t
            w = 2 * math.pi * c * t
            out[i] = n + 0.5 - math.atan2(math.cos(th) - w * math.sin(th), math.sin(th)) / math.pi
        return out

    return flow


def separable(d=2, scales=None):
    """b_i(x_i) = c_i (1 - cos(2 pi x_i)), each with the single root 0 on the circle."""
    d = int(d)
    if d < 1:
        raise SpecError("separable preset needs d >= 1")
    scales = [1.0] * d if scales is None else [float(c) for c in scales]
    if len(scales) != d or any(c == 0 or not math.isfinite(c) for c in scales):
        raise SpecError("separable scales must be d finite nonzero numbers")
    profs = tuple(FourierSeries.constant(1, c) - FourierSeries.cosine((1,), c) for c in scales)
    spec = FieldSpec(d, Separable(profs))
    return Preset(
        "separable", _wrap("separable", {"d": d, "scales": scales}, spec), _separable_flow(scales),
        np.zeros(d), math.sqrt(d),
        "Each coordinate stays in its unit cell, so X(t,x) - x lies in (-1,1)^d.",
    )


def cos2_profile(gamma=1.0):
    """b = cos^2(pi x_1) (e_1 + gamma e_2), stationary on the lines x_1 = n + 1/2."""
    g = float(gamma)
    half = FourierSeries.constant(2, 0.5) + FourierSeries.cosine((1, 0), 0.5)
    spec = FieldSpec(2, GeneralFourier((half, half * g)))
    e = np.array([1.0, g])

    def flow(t, x):
        x = np.asarray(x, dtype=float)
        n = math.floor(x[0] + 0.5)
        r = x[0] - n
        if abs(r + 0.5) <= 1e-12:
            return x.copy()
        th = math.pi * r
        # arctan(pi t + tan(pi r)) with cos(pi r) > 0
        s = math.atan2(math.pi * t * math.cos(th) + math.sin(th), math.cos(th)) / math.pi
        return x + (s + n - x[0]) * e

    return Preset(
        "cos2_profile", _wrap("cos2_profile", {"gamma": g}, spec), flow, np.zeros(2), math.sqrt(1 + g * g),
        "Non-isolated zeros on x_1 = n + 1/2; bounded for every direction.",
    )


def vanishing_stepanoff(xi="golden", p=0.75):
    """b = a xi with a = (2 - cos(2 pi x_1) - cos(2 pi x_2))^p, single zero at the lattice."""
    from .stepanoff import StepanoffFlow, flow_exact

    u = _direction(xi, 2)
    p = float(p)
    if not p > 0:
        raise SpecError("exponent p must be positive")
    g = FourierSeries.constant(2, 2.0) - FourierSeries.cosine((1, 0)) - FourierSeries.cosine((0, 1))
    spec = FieldSpec(2, Stepanoff(tuple(u), profile=g, exponent=p, vanishing=True))
    flow = StepanoffFlow.from_spec(spec)
    return Preset(
        "vanishing_stepanoff",
        _wrap("vanishing_stepanoff", {"xi": list(xi) if not isinstance(xi, str) else xi, "p": p}, spec),
        lambda t, x: flow_exact(flow, x, t, tol=1e-12), None, None,
        "zeta is 0 on lattice points and on lines absorbed by them, harmonic-mean speed times xi elsewhere; "
        "the deviation is unbounded on R xi + Z^2.",
        None, {"xi": u, "flow": flow},
    )


def liouville(terms=3):
    """The Liouville-direction Stepanoff field rho = 1 + sum alpha_n cos(2 pi k_n.x)."""
    from .arithmetic import build_liouville_construction

    constr = build_liouville_construction(count=int(terms))
    xi = constr.xi_float
    spec = FieldSpec(2, Stepanoff(tuple(xi), rho=constr.rho, normalize=False))
    return Preset(
        "liouville", _wrap("liouville", {"terms": int(terms)}, spec), None, np.asarray(xi), None,
        "Evaluation only: the modes k_n reach 10^{n!}, beyond what double-precision phases can integrate. "
        "theta(tau_m xi) grows like q_m, so no uniform deviation bound exists.",
        None, {"construction": constr},
    )


TABLE = {
    "example_5_1": example_5_1,
    "gradient_arctan": gradient_arctan,
    "separable": separable,
    "cos2_profile": cos2_profile,
    "vanishing_stepanoff": vanishing_stepanoff,
    "liouville": liouville,
}


def preset(name: str, **params) -> Preset:
    """Look up and instantiate a preset by name."""
    try:
        factory = TABLE[name]
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; known: {sorted(TABLE)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise SpecError(f"bad parameters for preset {name!r}: {exc}") from None


def preset_names():
    return list(TABLE)


def summary_rows():
    """(name, dimension, known zeta, known bound, notes) for every preset at default parameters."""
    rows = []
    for name in TABLE:
        p = preset(name)
        z = p.known_zeta
        zs = "orbit-dependent" if z is None else " ".join(repr(float(v)) for v in np.asarray(z))
        rows.append([name, p.field.dimension, zs,
                     "none" if p.known_deviation_bound is None else p.known_deviation_bound, p.notes])
    return rows


def ode_residual(p: Preset, samples, h=1e-4):
    """max |(X(t+h) - X(t-h)) / 2h - b(X(t))| over (t, x) samples."""
    from .core import eval_field

    if p.exact_flow is None:
        raise SpecError(f"preset {p.name!r} has no closed-form flow")
    worst = 0.0
    for t, x in samples:
        X = p.exact_flow(t, x)
        dX = (p.exact_flow(t + h, x) - p.exact_flow(t - h, x)) / (2 * h)
        worst = max(worst, float(np.abs(dX - eval_field(p.field, X)).max()))
    return worst

"""Domain types for periodic vector fields on the torus.

A field is always described declaratively by a :class:`FieldSpec` whose
variant is built from finitely supported :class:`FourierSeries`, so that
Z^d-periodicity holds by construction.  Evaluation here is vectorised numpy;
the integrator uses the packed arrays from :meth:`FieldSpec.kernel_data`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import CertificationError, SpecError

TWO_PI = 2.0 * math.pi

# phases k.x lose all accuracy in double precision beyond this mode size
_FLOAT_MODE_LIMIT = 2**40

LatticeVector = tuple  # tuple[int, ...]


def lattice_vector(components) -> LatticeVector:
    out = []
    for c in components:
        if isinstance(c, (float, np.floating)):
            if not float(c).is_integer():
                raise SpecError(f"lattice component {c!r} is not an integer")
        out.append(int(c))
    if not out:
        raise SpecError("lattice vector needs d >= 1")
    return tuple(out)


def _is_positive_half(n) -> bool:
    for c in n:
        if c != 0:
            return c > 0
    return False


@dataclass(frozen=True)
class TorusPoint:
    """A lift in R^d; :meth:`reduce` gives the representative in [0,1)^d."""

    lift: tuple

    def reduce(self):
        x = np.asarray(self.lift, dtype=float)
        shift = np.floor(x)
        r = x - shift
        # tiny negative lifts round r up to exactly 1.0
        wrap = r >= 1.0
        r[wrap] = 0.0
        shift[wrap] += 1.0
        return r, lattice_vector(shift)


@dataclass(frozen=True, eq=False)
class FourierSeries:
    """Finitely supported real-valued Fourier series on Y_d.

    ``coefficients`` maps a lattice vector n to the complex amplitude of
    exp(2 i pi n.x).  The coefficient at -n must be the conjugate of the one
    at n; the zero mode must be real.
    """

    dimension: int
    coefficients: tuple = ()

    def __post_init__(self):
        d = int(self.dimension)
        if d < 1:
            raise SpecError("dimension must be >= 1")
        merged: dict = {}
        items = self.coefficients.items() if isinstance(self.coefficients, dict) else self.coefficients
        for n, c in items:
            n = lattice_vector(n)
            if len(n) != d:
                raise SpecError(f"mode {n} has wrong dimension (expected {d})")
            merged[n] = merged.get(n, 0j) + complex(c)
        scale = max((abs(c) for c in merged.values()), default=0.0)
        tol = 1e-12 * (1.0 + scale)
        for n, c in merged.items():
            m = tuple(-v for v in n)
            if m == n:
                if abs(c.imag) > tol:
                    raise SpecError(f"zero-mode coefficient must be real, got {c}")
                continue
            if m not in merged:
                if abs(c) <= tol:
                    continue
                raise SpecError(f"mode {n} stored without its conjugate partner {m}")
            if abs(merged[m] - c.conjugate()) > tol:
                raise SpecError(f"coefficients at {n} and {m} are not conjugate")
        cleaned = {}
        for n, c in merged.items():
            m = tuple(-v for v in n)
            if m == n:
                c = complex(c.real, 0.0)
            elif _is_positive_half(n):
                c = 0.5 * (c + merged.get(m, 0j).conjugate())
            else:
                c = 0.5 * (c + merged.get(m, 0j).conjugate())
            if c != 0:
                cleaned[n] = c
        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "coefficients", tuple(sorted(cleaned.items())))

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, d):
        return cls(d, ())

    @classmethod
    def constant(cls, d, value):
        return cls(d, (((0,) * d, complex(value)),))

    @classmethod
    def cosine(cls, mode, amplitude=1.0):
        """``amplitude * cos(2 pi mode . x)``."""
        n = lattice_vector(mode)
        m = tuple(-v for v in n)
        return cls(len(n), ((n, amplitude / 2), (m, amplitude / 2)))

    @classmethod
    def sine(cls, mode, amplitude=1.0):
        """``amplitude * sin(2 pi mode . x)``."""
        n = lattice_vector(mode)
        m = tuple(-v for v in n)
        return cls(len(n), ((n, -0.5j * amplitude), (m, 0.5j * amplitude)))

    # -- algebra ----------------------------------------------------------

    def as_dict(self):
        return dict(self.coefficients)

    def __getitem__(self, n):
        return self.as_dict().get(lattice_vector(n), 0j)

    def __len__(self):
        return len(self.coefficients)

    def __eq__(self, other):
        if not isinstance(other, FourierSeries):
            return NotImplemented
        return self.dimension == other.dimension and self.coefficients == other.coefficients

    def __hash__(self):
        return hash((self.dimension, self.coefficients))

    def _check(self, other):
        if not isinstance(other, FourierSeries) or other.dimension != self.dimension:
            raise SpecError("Fourier series dimensions differ")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = FourierSeries.constant(self.dimension, other)
        self._check(other)
        acc = self.as_dict()
        for n, c in other.coefficients:
            acc[n] = acc.get(n, 0j) + c
        return FourierSeries(self.dimension, tuple(acc.items()))

    __radd__ = __add__

    def __neg__(self):
        return FourierSeries(self.dimension, tuple((n, -c) for n, c in self.coefficients))

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierSeries):
            self._check(other)
            acc: dict = {}
            for n, c in self.coefficients:
                for m, e in other.coefficients:
                    k = tuple(a + b for a, b in zip(n, m))
                    acc[k] = acc.get(k, 0j) + c * e
            return FourierSeries(self.dimension, tuple(acc.items()))
        s = float(other)
        return FourierSeries(self.dimension, tuple((n, s * c) for n, c in self.coefficients))

    __rmul__ = __mul__

    def derivative(self, j):
        """Series of the partial derivative along coordinate ``j``."""
        return FourierSeries(
            self.dimension, tuple((n, 2j * math.pi * n[j] * c) for n, c in self.coefficients)
        )

    def truncate(self, N):
        """Keep modes with sup-norm at most ``N``."""
        return FourierSeries(
            self.dimension, tuple((n, c) for n, c in self.coefficients if max(map(abs, n)) <= N)
        )

    def without_mean(self):
        zero = (0,) * self.dimension
        return FourierSeries(self.dimension, tuple((n, c) for n, c in self.coefficients if n != zero))

    def embed(self, d, axis):
        """Lift a one-dimensional series to Y_d as a function of ``x[axis]``."""
        if self.dimension != 1:
            raise SpecError("only one-dimensional profiles can be embedded")
        out = []
        for (k,), c in self.coefficients:
            n = [0] * d
            n[axis] = k
            out.append((tuple(n), c))
        return FourierSeries(d, tuple(out))

    # -- scalar summaries -------------------------------------------------

    @property
    def mean(self) -> float:
        return self[(0,) * self.dimension].real

    @property
    def support(self):
        return [n for n, _ in self.coefficients]

    @property
    def max_mode(self) -> int:
        return max((max(map(abs, n)) for n, _ in self.coefficients), default=0)

    def l1_norm(self) -> float:
        """Sum of |c_n|; an upper bound for sup|f|."""
        return float(sum(abs(c) for _, c in self.coefficients))

    def first_moment(self) -> float:
        """Sum of 2 pi |n| |c_n|; a Lipschitz constant for f."""
        return float(sum(TWO_PI * math.sqrt(sum(v * v for v in n)) * abs(c) for n, c in self.coefficients))

    def second_moment(self) -> float:
        """Sum of (2 pi |n|)^2 |c_n|; bounds the Hessian norm."""
        return float(sum((TWO_PI**2) * sum(v * v for v in n) * abs(c) for n, c in self.coefficients))

    # -- packed arrays ----------------------------------------------------

    @cached_property
    def _arrays(self):
        if self.max_mode > _FLOAT_MODE_LIMIT:
            return None
        if not self.coefficients:
            return np.zeros((0, self.dimension)), np.zeros(0, dtype=complex)
        modes = np.array([n for n, _ in self.coefficients], dtype=float)
        coeffs = np.array([c for _, c in self.coefficients], dtype=complex)
        return modes, coeffs

    def evaluate_complex(self, x):
        """Complex partial sum; the imaginary part is roundoff for real data."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise SpecError(f"point has dimension {x.shape[-1]}, series has {self.dimension}")
        arrays = self._arrays
        if arrays is None:
            return self._evaluate_exact_phase(x)
        modes, coeffs = arrays
        if len(coeffs) == 0:
            return np.zeros(x.shape[:-1], dtype=complex)
        phase = TWO_PI * (x @ modes.T)
        return np.exp(1j * phase) @ coeffs

    def evaluate(self, x):
        return self.evaluate_complex(x).real

    __call__ = evaluate

    def gradient(self, x):
        """Termwise gradient, shape ``x.shape``."""
        x = np.asarray(x, dtype=float)
        arrays = self._arrays
        if arrays is None:
            raise SpecError("gradient of huge-mode series is not available in double precision")
        modes, coeffs = arrays
        if len(coeffs) == 0:
            return np.zeros_like(x)
        phase = TWO_PI * (x @ modes.T)
        w = np.exp(1j * phase) * (2j * math.pi * coeffs)
        return (w @ modes).real

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        modes, coeffs = self._arrays
        phase = TWO_PI * (x @ modes.T)
        w = (np.exp(1j * phase) * (-(TWO_PI**2) * coeffs)).real
        return np.einsum("...m,mi,mj->...ij", w, modes, modes)

    def _evaluate_exact_phase(self, x):
        # reduce k.x modulo 1 in exact rational arithmetic before taking exp
        flat = x.reshape(-1, self.dimension)
        out = np.empty(len(flat), dtype=complex)
        for i, p in enumerate(flat):
            fr = [Fraction(float(v)) for v in p]
            s = 0j
            for n, c in self.coefficients:
                t = sum((k * v for k, v in zip(n, fr)), Fraction(0))
                t -= math.floor(t)
                s += c * complex(math.cos(TWO_PI * float(t)), math.sin(TWO_PI * float(t)))
            out[i] = s
        return out.reshape(x.shape[:-1])

    def to_triples(self):
        return [[list(n), c.real, c.imag] for n, c in self.coefficients]

    @classmethod
    def from_triples(cls, d, triples):
        try:
            items = [(tuple(t[0]), complex(float(t[1]), float(t[2]))) for t in triples]
        except (TypeError, IndexError, ValueError) as exc:
            raise SpecError(f"Fourier coefficients must be [[n1..nd], re, im] triples: {exc}") from None
        return cls(d, tuple(items))


def _unit_grid(d, per_dim):
    axes = [np.arange(per_dim) / per_dim] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


@dataclass(frozen=True)
class PositivityCertificate:
    grid_min: float
    slack: float
    points_per_dim: int

    @property
    def lower_bound(self):
        return self.grid_min - self.slack

    @property
    def certified(self):
        return self.lower_bound > 0


def certify_positive(series: FourierSeries, per_dim=64, max_points=2**22) -> PositivityCertificate:
    """Grid minimum minus a Lipschitz slack, refined until certified or exhausted.

    The slack is L * h * sqrt(d) / 2 with L the first moment of the series,
    so ``lower_bound > 0`` proves positivity everywhere.
    """
    d = series.dimension
    lip = series.first_moment()
    n = per_dim
    while True:
        pts = _unit_grid(d, n)
        vals = np.concatenate([series(chunk) for chunk in np.array_split(pts, max(1, len(pts) // 65536))])
        cert = PositivityCertificate(float(vals.min()), lip * math.sqrt(d) / (2 * n), n)
        if cert.certified or cert.grid_min <= 0 or (2 * n) ** d > max_points:
            return cert
        n *= 2


def grid_minimum(series: FourierSeries, per_dim=64) -> float:
    return float(series(_unit_grid(series.dimension, per_dim)).min())


# -- field variants -----------------------------------------------------------


@dataclass(frozen=True)
class GeneralFourier:
    components: tuple


@dataclass(frozen=True)
class Stepanoff:
    """Unidirectional field b = a xi.

    Non-vanishing fields are given by ``rho = 1/a``; vanishing ones by a
    nonnegative base series g with ``a = g**exponent``.
    """

    xi: tuple
    rho: FourierSeries | None = None
    profile: FourierSeries | None = None
    exponent: float = 1.0
    vanishing: bool = False
    normalize: bool = True

    @property
    def direction(self):
        v = np.asarray(self.xi, dtype=float)
        if self.normalize:
            v = v / np.linalg.norm(v)
        return v


@dataclass(frozen=True)
class Separable:
    profiles: tuple


@dataclass(frozen=True)
class Constructed:
    """b = (M + grad psi_sharp)^{-1} zeta, the builder family of diffeomorphisms."""

    M: tuple
    psi_sharp: tuple
    zeta: tuple
    label: str = "diffeo"


@dataclass(frozen=True)
class Preset:
    name: str
    params: tuple
    resolved: "FieldSpec"


VARIANTS = ("fourier", "stepanoff", "separable", "constructed", "preset")


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Validated description of a Z^d-periodic vector field b."""

    dimension: int
    variant: object
    invariant_density: FourierSeries | None = None
    certificates: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        d = self.dimension
        v = self.variant
        if isinstance(v, GeneralFourier):
            if len(v.components) != d or any(c.dimension != d for c in v.components):
                raise SpecError("fourier variant needs d components of dimension d")
        elif isinstance(v, Stepanoff):
            if len(v.xi) != d:
                raise SpecError("direction xi has wrong dimension")
            if not np.all(np.isfinite(v.xi)) or np.linalg.norm(v.xi) == 0:
                raise SpecError("direction xi must be a finite nonzero vector")
            if (v.rho is None) == (v.profile is None):
                raise SpecError("stepanoff variant needs exactly one of rho / profile")
            if v.rho is not None:
                if v.vanishing:
                    raise SpecError("vanishing profiles must be given as 'profile', not 'rho'")
                if v.rho.dimension != d:
                    raise SpecError("rho has wrong dimension")
                cert = certify_positive(v.rho)
                self.certificates["rho"] = cert
                if not cert.certified:
                    raise CertificationError(
                        f"rho = 1/a is not certified positive (grid min {cert.grid_min:.3g}, "
                        f"slack {cert.slack:.3g}); set vanishing=true for vanishing profiles"
                    )
            else:
                if v.profile.dimension != d:
                    raise SpecError("profile has wrong dimension")
                if v.exponent <= 0:
                    raise SpecError("profile exponent must be positive")
                if v.vanishing:
                    gmin = grid_minimum(v.profile)
                    if gmin < -1e-12:
                        raise CertificationError(f"vanishing profile base is negative (grid min {gmin:.3g})")
                else:
                    cert = certify_positive(v.profile)
                    self.certificates["profile"] = cert
                    if not cert.certified:
                        raise CertificationError("profile a is not certified positive")
        elif isinstance(v, Separable):
            if len(v.profiles) != d or any(p.dimension != 1 for p in v.profiles):
                raise SpecError("separable variant needs d one-dimensional profiles")
        elif isinstance(v, Constructed):
            M = np.asarray(v.M, dtype=float)
            if M.shape != (d, d) or len(v.psi_sharp) != d or len(v.zeta) != d:
                raise SpecError("constructed variant has inconsistent shapes")
            if not np.allclose(M, np.round(M)) or abs(abs(round(np.linalg.det(M))) - 1) > 0:
                raise CertificationError("linear part M must be a unimodular integer matrix")
        elif isinstance(v, Preset):
            if v.resolved.dimension != d:
                raise SpecError("preset resolved to a different dimension")
        else:
            raise SpecError(f"unknown variant {type(v).__name__}")
        sigma = self.invariant_density
        if sigma is not None:
            if sigma.dimension != d:
                raise SpecError("invariant density has wrong dimension")
            if abs(sigma.mean - 1.0) > 1e-12:
                raise CertificationError(f"invariant density must have mean 1, got {sigma.mean}")
            cert = certify_positive(sigma)
            self.certificates["invariant_density"] = cert
            if not cert.certified:
                raise CertificationError("invariant density is not certified positive")

    @property
    def analytic(self) -> "FieldSpec":
        """The underlying analytic spec (presets resolve to their field)."""
        return self.variant.resolved.analytic if isinstance(self.variant, Preset) else self

    @property
    def kind(self) -> str:
        v = self.variant
        return {GeneralFourier: "fourier", Stepanoff: "stepanoff", Separable: "separable",
                Constructed: "constructed", Preset: "preset"}[type(v)]

    # -- bounds -----------------------------------------------------------

    @cached_property
    def sup_bound(self) -> float:
        """Upper bound on sup|b| from the Fourier data (sampled for constructed fields)."""
        spec = self.analytic
        v = spec.variant
        d = spec.dimension
        if isinstance(v, GeneralFourier):
            return math.sqrt(sum(c.l1_norm() ** 2 for c in v.components))
        if isinstance(v, Separable):
            return math.sqrt(sum(p.l1_norm() ** 2 for p in v.profiles))
        if isinstance(v, Stepanoff):
            n = np.linalg.norm(v.direction)
            if v.rho is not None:
                return n / spec.certificates["rho"].lower_bound
            return n * v.profile.l1_norm() ** v.exponent
        pts = _unit_grid(d, 32 if d <= 2 else 12)
        return 1.5 * float(np.linalg.norm(eval_field(spec, pts), axis=-1).max())

    @cached_property
    def kernel_data(self):
        from ._kernels import pack_field

        return pack_field(self.analytic)


# -- evaluation -----------------------------------------------------------------


def _as_points(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dimension:
        raise SpecError(f"point dimension {x.shape[-1]} does not match field dimension {spec.dimension}")
    return x


def eval_field(spec: FieldSpec, x):
    """b(x) for a single point (d,) or a batch (..., d)."""
    if not isinstance(spec, FieldSpec):
        raise SpecError("eval_field needs a validated FieldSpec")
    x = _as_points(spec, x)
    spec = spec.analytic
    v = spec.variant
    if isinstance(v, GeneralFourier):
        return np.stack([c(x) for c in v.components], axis=-1)
    if isinstance(v, Separable):
        return np.stack([p(x[..., i : i + 1]) for i, p in enumerate(v.profiles)], axis=-1)
    if isinstance(v, Stepanoff):
        return stepanoff_speed(v, x)[..., None] * v.direction
    if isinstance(v, Constructed):
        J = _constructed_jacobian_of_psi(v, x)
        z = np.stack([c(x) for c in v.zeta], axis=-1)
        return np.linalg.solve(J, z[..., None])[..., 0]
    raise SpecError(f"cannot evaluate variant {type(v).__name__}")


def stepanoff_speed(v: Stepanoff, x):
    """The scalar profile a(x) of a unidirectional field."""
    if v.rho is not None:
        return 1.0 / v.rho(x)
    g = np.maximum(v.profile(x), 0.0)
    return g if v.exponent == 1.0 else g**v.exponent


def _constructed_jacobian_of_psi(v: Constructed, x):
    M = np.asarray(v.M, dtype=float)
    rows = [c.gradient(x) for c in v.psi_sharp]
    return M + np.stack(rows, axis=-2)


def eval_jacobian(spec: FieldSpec, x):
    """Analytic grad b(x), entry [i, j] = d b_i / d x_j."""
    x = _as_points(spec, x)
    spec = spec.analytic
    v = spec.variant
    d = spec.dimension
    if isinstance(v, GeneralFourier):
        return np.stack([c.gradient(x) for c in v.components], axis=-2)
    if isinstance(v, Separable):
        out = np.zeros(x.shape + (d,))
        for i, p in enumerate(v.profiles):
            out[..., i, i] = p.gradient(x[..., i : i + 1])[..., 0]
        return out
    if isinstance(v, Stepanoff):
        xi = v.direction
        if v.rho is not None:
            r = v.rho(x)
            g = -v.rho.gradient(x) / (r * r)[..., None]
        else:
            base = v.profile(x)
            grad = v.profile.gradient(x)
            p = v.exponent
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(base > 0, p * np.maximum(base, 0.0) ** (p - 1.0), 0.0)
            if p < 1.0:
                fac = np.where(base > 0, fac, 0.0)
            g = fac[..., None] * grad
        return xi[:, None] * g[..., None, :]
    if isinstance(v, Constructed):
        J = _constructed_jacobian_of_psi(v, x)
        b = np.linalg.solve(J, np.stack([c(x) for c in v.zeta], axis=-1)[..., None])[..., 0]
        dz = np.stack([c.gradient(x) for c in v.zeta], axis=-2)
        H = np.stack([c.hessian(x) for c in v.psi_sharp], axis=-3)  # [..., i, k, j] = d_k d_j psi_i
        dJb = np.einsum("...ikj,...k->...ij", H, b)
        return np.linalg.solve(J, dz - dJb)
    raise SpecError(f"cannot differentiate variant {type(v).__name__}")


def divergence_residual(spec: FieldSpec, per_dim=32) -> float:
    """max |div(sigma b)| on a grid; zero when sigma dx is invariant."""
    sigma = spec.invariant_density
    if sigma is None:
        raise SpecError("field has no invariant density")
    pts = _unit_grid(spec.dimension, per_dim)
    b = eval_field(spec, pts)
    J = eval_jacobian(spec, pts)
    div = sigma(pts) * np.trace(J, axis1=-2, axis2=-1) + np.einsum("...i,...i->...", sigma.gradient(pts), b)
    return float(np.abs(div).max())


# -- documents --------------------------------------------------------------


def _series(d, triples, what):
    if not isinstance(triples, list):
        raise SpecError(f"{what} must be a list of [[n1..nd], re, im] triples")
    return FourierSeries.from_triples(d, triples)


def _vector(values, d, what):
    if isinstance(values, str):
        from .presets import named_direction

        values = named_direction(values, d)
    try:
        out = tuple(float(v) for v in values)
    except TypeError:
        raise SpecError(f"{what} must be a list of numbers") from None
    if len(out) != d:
        raise SpecError(f"{what} must have {d} entries")
    return out


def parse_spec(document) -> FieldSpec:
    """Build a validated :class:`FieldSpec` from a JSON-compatible tree.

    See ``docs/field-spec.md`` for the schema.  Positivity and mean-one checks
    run on construction.
    """
    if not isinstance(document, dict):
        raise SpecError("field-spec document must be a mapping")
    unknown = set(document) - {"dimension", "variant", "params", "invariant_density"}
    if unknown:
        raise SpecError(f"unknown top-level keys: {sorted(unknown)}")
    variant = document.get("variant")
    if variant not in VARIANTS:
        raise SpecError(f"variant must be one of {VARIANTS}, got {variant!r}")
    params = document.get("params", {})
    if not isinstance(params, dict):
        raise SpecError("params must be a mapping")
    if variant == "preset":
        from .presets import preset

        args = {k: v for k, v in params.items() if k != "name"}
        if "name" not in params:
            raise SpecError("preset document needs params.name")
        spec = preset(params["name"], **args).field
        if "dimension" in document and int(document["dimension"]) != spec.dimension:
            raise SpecError("declared dimension does not match preset")
        if document.get("invariant_density") is not None:
            raise SpecError("presets carry their own invariant density")
        return spec
    try:
        d = int(document["dimension"])
    except (KeyError, TypeError, ValueError):
        raise SpecError("document needs an integer 'dimension'") from None
    sigma = document.get("invariant_density")
    sigma = None if sigma is None else _series(d, sigma, "invariant_density")
    if variant == "fourier":
        comps = params.get("components")
        if not isinstance(comps, list) or len(comps) != d:
            raise SpecError("fourier params.components must list d series")
        v = GeneralFourier(tuple(_series(d, c, f"component {i}") for i, c in enumerate(comps)))
    elif variant == "stepanoff":
        allowed = {"xi", "rho", "profile", "exponent", "vanishing", "normalize"}
        if set(params) - allowed:
            raise SpecError(f"unknown stepanoff params: {sorted(set(params) - allowed)}")
        if "xi" not in params:
            raise SpecError("stepanoff params need 'xi'")
        v = Stepanoff(
            xi=_vector(params["xi"], d, "xi"),
            rho=_series(d, params["rho"], "rho") if "rho" in params else None,
            profile=_series(d, params["profile"], "profile") if "profile" in params else None,
            exponent=float(params.get("exponent", 1.0)),
            vanishing=bool(params.get("vanishing", False)),
            normalize=bool(params.get("normalize", True)),
        )
    elif variant == "separable":
        profs = params.get("profiles")
        if not isinstance(profs, list) or len(profs) != d:
            raise SpecError("separable params.profiles must list d one-dimensional series")
        v = Separable(tuple(_series(1, p, f"profile {i}") for i, p in enumerate(profs)))
    else:
        try:
            M = tuple(tuple(int(round(float(e))) for e in row) for row in params["M"])
            psi = tuple(_series(d, c, "psi_sharp") for c in params["psi_sharp"])
            zeta = tuple(_series(d, c, "zeta") for c in params["zeta"])
        except KeyError as exc:
            raise SpecError(f"constructed params missing {exc}") from None
        v = Constructed(M, psi, zeta, str(params.get("label", "diffeo")))
    return FieldSpec(d, v, sigma)


def to_document(spec: FieldSpec) -> dict:
    """Inverse of :func:`parse_spec`."""
    v = spec.variant
    d = spec.dimension
    doc = {"dimension": d}
    if isinstance(v, Preset):
        doc.update(variant="preset", params={"name": v.name, **dict(v.params)})
        return doc
    if isinstance(v, GeneralFourier):
        doc.update(variant="fourier", params={"components": [c.to_triples() for c in v.components]})
    elif isinstance(v, Stepanoff):
        params = {"xi": list(v.xi), "vanishing": v.vanishing, "normalize": v.normalize}
        if v.rho is not None:
            params["rho"] = v.rho.to_triples()
        else:
            params["profile"] = v.profile.to_triples()
            params["exponent"] = v.exponent
        doc.update(variant="stepanoff", params=params)
    elif isinstance(v, Separable):
        doc.update(variant="separable", params={"profiles": [p.to_triples() for p in v.profiles]})
    elif isinstance(v, Constructed):
        doc.update(
            variant="constructed",
            params={
                "M": [list(r) for r in v.M],
                "psi_sharp": [c.to_triples() for c in v.psi_sharp],
                "zeta": [c.to_triples() for c in v.zeta],
                "label": v.label,
            },
        )
    if spec.invariant_density is not None:
        doc["invariant_density"] = spec.invariant_density.to_triples()
    return doc


def fourier_field(components: Sequence[FourierSeries], invariant_density=None) -> FieldSpec:
    d = components[0].dimension
    return FieldSpec(d, GeneralFourier(tuple(components)), invariant_density)


def constant_field(xi) -> FieldSpec:
    d = len(xi)
    return fourier_field([FourierSeries.constant(d, float(c)) for c in xi])


def stepanoff_field(rho: FourierSeries, xi, normalize=True, invariant_density=None) -> FieldSpec:
    return FieldSpec(rho.dimension, Stepanoff(tuple(float(c) for c in xi), rho=rho, normalize=normalize),
                     invariant_density)

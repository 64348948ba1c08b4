"""Small-divisor solver for the directional cohomological equation.

For a unidirectional field b = a xi with rho = 1/a, the harmonic mean is
a_ = 1 / rho_hat(0) and alpha = a_ rho - 1 has zero mean.  The corrector

    theta(y) = sum_n theta_hat(n) (e(y.n) - e((y - (y.xi) xi).n)),
    theta_hat(n) = alpha_hat(n) / (2 i pi xi.n),

solves grad(theta).xi = alpha and vanishes on the hyperplane orthogonal to
xi.  It is not periodic: the second exponential carries the drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import FourierSeries
from .errors import SpecError, ZeroDivisorError

TWO_PI = 2.0 * math.pi

# |xi.n| at or below this multiple of |n|_1 eps is treated as an exact zero
_ZERO_DIVISOR_ULPS = 8.0


def alpha_series(rho: FourierSeries):
    """Return ``(underline_a, alpha)`` with alpha = underline_a * rho - 1."""
    r0 = rho.mean
    if not r0 > 0:
        raise SpecError(f"rho must have positive zero mode, got {r0}")
    a = 1.0 / r0
    return a, (rho * a).without_mean()


@dataclass(frozen=True, eq=False)
class CorrectorSolution:
    alpha: FourierSeries
    xi: np.ndarray
    theta_coeffs: dict
    truncation: int
    divisor_floor: float
    divisors: dict = field(repr=False, default_factory=dict)
    truncation_slack: float = 0.0

    @cached_property
    def _arrays(self):
        modes = np.array(list(self.theta_coeffs), dtype=float).reshape(-1, len(self.xi))
        coeffs = np.array([complex(c) for c in self.theta_coeffs.values()], dtype=complex)
        return modes, coeffs

    def reconstruction_residual(self):
        """max |2 i pi (xi.n) theta_hat(n) - alpha_hat(n)| over stored modes."""
        a = self.alpha.as_dict()
        return max((abs(2j * math.pi * self.divisors[n] * c - a[n]) for n, c in self.theta_coeffs.items()),
                   default=0.0)


def _unit(xi):
    xi = np.asarray(xi, dtype=float).reshape(-1)
    nrm = np.linalg.norm(xi)
    if not np.isfinite(nrm) or nrm == 0:
        raise SpecError("xi must be a finite nonzero vector")
    return xi / nrm


def solve_theta(alpha: FourierSeries, xi, N, divisors=None) -> CorrectorSolution:
    """Fourier coefficients of theta for modes with sup-norm at most ``N``.

    ``xi`` is normalised to a unit vector.  ``divisors`` may supply
    externally computed values of xi.n (e.g. high-precision small divisors);
    otherwise they are formed in double precision.  Modes of ``alpha`` beyond
    ``N`` enter only ``truncation_slack``, so the omitted tail is reported
    rather than silently added.
    """
    xi = _unit(xi)
    if alpha.dimension != len(xi):
        raise SpecError("alpha and xi dimensions differ")
    N = int(N)
    if N < 0:
        raise SpecError("truncation N must be nonnegative")
    if abs(alpha.mean) > 1e-14 * (1.0 + alpha.l1_norm()):
        raise SpecError(f"alpha must have zero mean, got {alpha.mean}")
    theta = {}
    used = {}
    floor = math.inf
    slack = 0.0
    for n, c in alpha.coefficients:
        if all(v == 0 for v in n):
            continue
        if divisors is not None and n in divisors:
            dot = divisors[n]
        else:
            dot = float(np.dot(xi, n))
            if abs(dot) <= _ZERO_DIVISOR_ULPS * np.finfo(float).eps * sum(map(abs, n)):
                dot = 0.0
        if dot == 0:
            raise ZeroDivisorError(n)
        if max(map(abs, n)) > N:
            slack += 2.0 * abs(c) / (TWO_PI * abs(float(dot)))
            continue
        theta[n] = c / (2j * math.pi * dot)
        used[n] = dot
        floor = min(floor, abs(dot))
    return CorrectorSolution(alpha, xi, theta, N, floor, used, slack)


def theta_eval(sol: CorrectorSolution, y):
    """theta(y) from the truncated series; ``y`` may be a batch (..., d)."""
    y = np.asarray(y, dtype=float)
    modes, coeffs = sol._arrays
    if len(coeffs) == 0:
        return np.zeros(y.shape[:-1])
    yperp = y - (y @ sol.xi)[..., None] * sol.xi
    e1 = np.exp(2j * math.pi * (y @ modes.T))
    e2 = np.exp(2j * math.pi * (yperp @ modes.T))
    return ((e1 - e2) @ coeffs).real


def theta_gradient(sol: CorrectorSolution, y):
    """Termwise gradient of theta."""
    y = np.asarray(y, dtype=float)
    modes, coeffs = sol._arrays
    if len(coeffs) == 0:
        return np.zeros_like(y)
    P = np.eye(len(sol.xi)) - np.outer(sol.xi, sol.xi)
    yperp = y - (y @ sol.xi)[..., None] * sol.xi
    w1 = np.exp(2j * math.pi * (y @ modes.T)) * (2j * math.pi * coeffs)
    w2 = np.exp(2j * math.pi * (yperp @ modes.T)) * (2j * math.pi * coeffs)
    return (w1 @ modes - w2 @ (modes @ P)).real


def small_divisor_sum(sol: CorrectorSolution):
    """Raw sum of |alpha_hat(n)| / |xi.n| over the stored modes."""
    a = sol.alpha.as_dict()
    return sum(abs(a[n]) / abs(dot) for n, dot in sol.divisors.items())


def deviation_bound(sol: CorrectorSolution):
    """2 sum |theta_hat(n)|, a bound for 2 sup|theta| and hence for the deviation."""
    return 2.0 * sum(abs(c) for c in sol.theta_coeffs.values())


@dataclass(frozen=True)
class GradientIdentityReport:
    residual: float
    samples: int


def verify_gradient_identity(sol: CorrectorSolution, rho: FourierSeries, samples) -> GradientIdentityReport:
    """max |grad(theta).xi - (a_ rho - 1)| over ``samples``."""
    Y = np.atleast_2d(np.asarray(samples, dtype=float))
    a, _ = alpha_series(rho)
    lhs = theta_gradient(sol, Y) @ sol.xi
    rhs = a * rho(Y) - 1.0
    return GradientIdentityReport(float(np.abs(lhs - rhs).max()), len(Y))


def divisor_spectrum(sol: CorrectorSolution):
    """Rows ``(n..., |alpha_hat|, |xi.n|, |theta_hat|)`` sorted by divisor size."""
    a = sol.alpha.as_dict()
    rows = []
    for n, c in sol.theta_coeffs.items():
        rows.append(list(n) + [abs(a[n]), abs(float(sol.divisors[n])), abs(c)])
    rows.sort(key=lambda r: r[-2])
    return rows


def divisor_header(d):
    return [f"n{i + 1}" for i in range(d)] + ["|alpha_hat|", "|xi·n|", "|theta_hat|"]

"""Continued fractions, exponent estimates and the Liouville profile construction.

Values are carried as rational enclosures [lo, hi]; partial quotients are
kept only while both endpoints agree, so every reported quotient is
certified.  The Liouville number lambda = sum_j 10^{-j!} is represented by
its exact partial sum S_J plus a tail in (10^{-(J+1)!}, 2 10^{-(J+1)!}).

Every inequality of the construction is decided with outward-rounded
interval arithmetic in a private mpmath context, so concurrent callers do
not share precision state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
from mpmath import libmp
from mpmath.ctx_iv import MPIntervalContext

from .core import FourierSeries
from .errors import CertificationError, PrecisionError, SpecError


def _iv(prec):
    ctx = MPIntervalContext()
    ctx.prec = prec
    return ctx


def _raw_fraction(raw) -> Fraction:
    sign, man, exp, _ = raw
    if not man and exp:
        raise PrecisionError("interval endpoint is not finite")
    v = Fraction(int(man)) * Fraction(2) ** int(exp)
    return -v if sign else v


def endpoints(x):
    """Exact rational endpoints of an mpmath interval."""
    a, b = x._mpi_
    return _raw_fraction(a), _raw_fraction(b)


def iv_float(x) -> float:
    """Midpoint of an interval rounded to double."""
    return libmp.to_float(x.mid._mpi_[0])


def iv_str(x, digits=17) -> str:
    return libmp.to_str(x.mid._mpi_[0], digits)


@dataclass(frozen=True)
class LiouvilleNumber:
    """lambda = sum_{j >= 1} 10^{-j!}, truncated after ``J`` terms with a tail bound."""

    J: int = 7

    def partial_sum(self, j) -> Fraction:
        return sum((Fraction(1, 10 ** math.factorial(i)) for i in range(1, j + 1)), Fraction(0))

    def enclosure(self):
        s = self.partial_sum(self.J)
        t = Fraction(1, 10 ** math.factorial(self.J + 1))
        return s + t, s + 2 * t

    def convergent(self, j):
        """(p_j, q_j) = (10^{j!} S_j, 10^{j!})."""
        q = 10 ** math.factorial(j)
        return int(self.partial_sum(j) * q), q


def named_enclosure(name, digits):
    """Rational enclosure of a named constant with at least ``digits`` digits."""
    ctx = _iv(int(digits * 3.33) + 64)
    if name == "golden":
        v = (1 + ctx.sqrt(5)) / 2
    elif name == "sqrt2":
        v = ctx.sqrt(2)
    elif name == "liouville":
        return LiouvilleNumber().enclosure()
    else:
        raise SpecError(f"unknown named value {name!r} (golden, sqrt2, liouville)")
    return endpoints(v)


@dataclass(frozen=True)
class ContinuedFraction:
    enclosure: tuple
    quotients: tuple
    convergents: tuple
    truncated: bool = False
    exact: bool = False

    @property
    def value(self) -> Fraction:
        """Midpoint of the enclosure (exact)."""
        lo, hi = self.enclosure
        return (lo + hi) / 2

    @property
    def denominators(self):
        return [q for _, q in self.convergents]

    def check_recurrences(self) -> bool:
        pm2, pm1, qm2, qm1 = 0, 1, 1, 0
        for a, (p, q) in zip(self.quotients, self.convergents):
            p_, q_ = a * pm1 + pm2, a * qm1 + qm2
            if (p_, q_) != (p, q):
                return False
            pm2, pm1, qm2, qm1 = pm1, p_, qm1, q_
        return True

    def check_approximation(self) -> bool:
        """|value - p_k/q_k| < 1/(q_k q_{k+1}) for every consecutive pair, on the whole enclosure."""
        lo, hi = self.enclosure
        for (p, q), (_, q1) in zip(self.convergents, self.convergents[1:]):
            r = Fraction(p, q)
            if max(abs(lo - r), abs(hi - r)) >= Fraction(1, q * q1):
                return False
        return True


def continued_fraction(value, depth=20) -> ContinuedFraction:
    """Certified partial quotients and exact convergents.

    ``value`` may be a :class:`~fractions.Fraction`, int, float (taken as the
    exact binary rational), decimal string, a named constant (``golden``,
    ``sqrt2``, ``liouville``), a :class:`LiouvilleNumber`, or an enclosure
    ``(lo, hi)``.  When the enclosure cannot decide a quotient before
    ``depth`` the expansion stops with ``truncated=True``.
    """
    depth = int(depth)
    if depth < 1:
        raise SpecError("depth must be >= 1")
    if isinstance(value, LiouvilleNumber):
        lo, hi = value.enclosure()
    elif isinstance(value, str) and value in ("golden", "sqrt2", "liouville"):
        lo, hi = named_enclosure(value, 40 + 2 * depth)
    elif isinstance(value, tuple):
        lo, hi = Fraction(value[0]), Fraction(value[1])
    else:
        try:
            lo = hi = Fraction(value)
        except (TypeError, ValueError):
            raise SpecError(f"cannot interpret {value!r} as a real number") from None
    if lo > hi:
        raise SpecError("enclosure endpoints are reversed")
    enclosure = (lo, hi)
    quotients, convergents = [], []
    pm2, pm1, qm2, qm1 = 0, 1, 1, 0
    truncated = False
    exact = lo == hi
    for _ in range(depth):
        a_lo, a_hi = math.floor(lo), math.floor(hi)
        if a_lo != a_hi:
            truncated = True
            break
        a = a_lo
        quotients.append(a)
        p, q = a * pm1 + pm2, a * qm1 + qm2
        convergents.append((p, q))
        pm2, pm1, qm2, qm1 = pm1, p, qm1, q
        rlo, rhi = lo - a, hi - a
        if rlo == 0 or rhi == 0:
            # an endpoint is rational; beyond this point the endpoints part ways
            truncated = not (rlo == 0 and rhi == 0) and len(quotients) < depth
            break
        lo, hi = 1 / rhi, 1 / rlo
    return ContinuedFraction(enclosure, tuple(quotients), tuple(convergents), truncated, exact)


def irrationality_exponent_estimate(cf: ContinuedFraction, tail=0.5) -> float:
    """max log(q_{k+1}) / log(q_k) + 1 over the last ``tail`` fraction of convergents.

    Early convergents (q = 1, 2, 3, ...) inflate the ratio for every
    irrational; restricting to the tail gives the finite-depth lim sup.
    """
    qs = [q for q in cf.denominators if q > 1]
    if len(cf.convergents) < 5 or len(qs) < 2:
        raise SpecError("exponent estimate needs at least 5 convergents")
    start = min(int(len(qs) * (1.0 - tail)), len(qs) - 2)
    best = 0.0
    for q, q1 in zip(qs[start:], qs[start + 1:]):
        best = max(best, _log(q1) / _log(q))
    return best + 1.0


def _log(n: int) -> float:
    # exact-ish log of huge integers without float overflow
    b = n.bit_length()
    if b < 1000:
        return math.log(n)
    shift = b - 60
    return math.log(n >> shift) + shift * math.log(2)


@dataclass(frozen=True)
class LiouvilleTerm:
    n: int
    j: int
    p: int
    q: int
    k: tuple
    defect: Fraction  # exact lower end of q lambda - p
    xi_dot_k: object  # interval
    alpha: object  # interval
    tau: object  # interval
    conditions: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class LiouvilleConstruction:
    lam: LiouvilleNumber
    xi2_sign: int
    xi: object  # interval pair
    terms: tuple  # every selected n = 1 .. 2 + count
    positivity_margin: object  # interval for 1 - sum |alpha_n|
    second_condition: object  # interval for sum 2 pi |xi2| / q_n^{n-2}
    prec: int

    @property
    def stored(self):
        """Terms entering rho (n >= 3)."""
        return tuple(t for t in self.terms if t.n >= 3)

    @property
    def xi_float(self):
        return (iv_float(self.xi[0]), iv_float(self.xi[1]))

    @property
    def rho(self) -> FourierSeries:
        """1 + sum alpha_n cos(2 pi k_n.x) with amplitudes rounded to double.

        Amplitudes below the double range round to zero and drop out; the
        interval records in :attr:`terms` keep them.
        """
        s = FourierSeries.constant(2, 1.0)
        for t in self.stored:
            a = iv_float(t.alpha)
            if a != 0.0:
                s = s + FourierSeries.cosine(t.k, a)
        return s

    def certified(self):
        ok = all(all(t.conditions.values()) for t in self.terms)
        return ok and self.positivity_margin.a > 0 and self.second_condition.b < 1

    def divisors(self):
        """Double-precision-free small divisors keyed by mode, as mpmath values."""
        return {t.k: mpmath.mpf(iv_str(t.xi_dot_k, 40)) for t in self.stored}


def _interval_of_fraction(ctx, f: Fraction):
    return ctx.mpf(f.numerator) / ctx.mpf(f.denominator)


def build_liouville_construction(lam: LiouvilleNumber | None = None, xi2_sign=1, count=3, prec=None):
    """Select (p_n, q_n) satisfying both subsequence conditions and assemble rho.

    Sequence indices run over n = 1 .. 2 + count; rho uses n >= 3.  The first
    condition is q_n >= |xi.k_{n-1}|^{1/(3-n)} + n + sum_{i<n} q_i for n >= 4;
    at n = 3 the exponent is undefined and the power term is omitted.  The
    divisors xi.k_n = xi_2 (q_n lambda - p_n) are formed from exact rationals.
    """
    count = int(count)
    if count < 0:
        raise SpecError("count must be nonnegative")
    if count > 5:
        raise SpecError("count above 5 is out of reach (factorial denominators)")
    if xi2_sign not in (1, -1):
        raise SpecError("xi2_sign must be +1 or -1")
    N = 2 + count
    if lam is None:
        lam = LiouvilleNumber(J=N + 2)
    # enough bits to resolve the smallest divisor relative to one
    prec = prec or 256 + int(3.33 * math.factorial(N + 1))
    ctx = _iv(prec)
    lo, hi = lam.enclosure()
    lam_iv = ctx.mpf([_interval_of_fraction(ctx, lo).a, _interval_of_fraction(ctx, hi).b])
    xi2 = xi2_sign / ctx.sqrt(1 + lam_iv * lam_iv)
    xi1 = lam_iv * xi2
    absxi2 = abs(xi2)
    terms = []
    q_sum = 0
    j = 0
    second = ctx.mpf(0)
    prev_dot = None
    for n in range(1, N + 1):
        chosen = None
        for j_try in range(j + 1, lam.J):
            p, q = lam.convergent(j_try)
            # q lambda - p lies in q * [lo - p/q, hi - p/q]
            dlo, dhi = q * lo - p, q * hi - p
            d_iv = ctx.mpf([_interval_of_fraction(ctx, dlo).a, _interval_of_fraction(ctx, dhi).b])
            dot = xi2 * d_iv
            conds = {"xikn": bool((abs(dot) < absxi2 / ctx.mpf(q) ** (n - 1)) is True)}
            if n >= 3:
                rhs = ctx.mpf(n + q_sum)
                if n >= 4:
                    rhs = rhs + abs(prev_dot) ** (ctx.mpf(1) / (3 - n))
                conds["qn_first"] = bool((ctx.mpf(q) >= rhs) is True)
            if all(conds.values()):
                chosen = (j_try, p, q, dlo, dot, conds)
                break
        if chosen is None:
            raise CertificationError(f"no admissible convergent for n={n} within J={lam.J}")
        j, p, q, dlo, dot, conds = chosen
        alpha = 2 * ctx.pi * q * dot
        tau = 1 / (4 * dot)
        if n >= 3:
            second = second + 2 * ctx.pi * absxi2 / ctx.mpf(q) ** (n - 2)
        terms.append(LiouvilleTerm(n, j, p, q, (q, -p), dlo, dot, alpha, tau, conds))
        q_sum += q
        prev_dot = dot
    margin = ctx.mpf(1) - sum((abs(t.alpha) for t in terms if t.n >= 3), ctx.mpf(0))
    constr = LiouvilleConstruction(lam, xi2_sign, (xi1, xi2), tuple(terms), margin, second, prec)
    if not (second.b < 1):
        raise CertificationError(f"second subsequence condition not certified: sum in {second}")
    if not (margin.a > 0):
        raise CertificationError("rho positivity 1 - sum|alpha_n| > 0 not certified")
    return constr


@dataclass(frozen=True)
class GrowthRow:
    m: int
    lower_bound: object  # interval
    partial_value: object  # interval

    @property
    def certified(self):
        return bool(self.partial_value.a >= self.lower_bound.b)


def theta_at_tau_growth(constr: LiouvilleConstruction, m_list=None):
    """theta(tau_m xi) over stored terms against m - (pi |xi_2| / 2) sum q_n^{-n}.

    theta(tau_m xi) = sum_n q_n sin(pi/2 (xi.k_n)/(xi.k_m)); the ratio of
    divisors is huge for n < m, so the working precision is raised above its
    decimal exponent.  Both quantities are returned as intervals; the sum in
    the bound includes a tail estimate for indices beyond the construction.
    """
    stored = {t.n: t for t in constr.stored}
    if m_list is None:
        m_list = sorted(stored)
    rows = []
    N = max(t.n for t in constr.terms) if constr.terms else 0
    for m in m_list:
        if m not in stored:
            raise SpecError(f"m={m} is not a stored term ({sorted(stored)})")
        tm = stored[m]
        # decimal size of the largest phase ratio
        mag = 0
        for t in stored.values():
            mag = max(mag, _log10_ratio(t.defect, tm.defect))
        prec = max(constr.prec, int(3.33 * (mag + 40)) + 64)
        ctx = _iv(prec)
        lo, hi = constr.lam.enclosure()
        total = ctx.mpf(0)
        for t in stored.values():
            num = _defect_interval(ctx, t, lo, hi)
            den = _defect_interval(ctx, tm, lo, hi)
            total = total + t.q * ctx.sin(ctx.pi / 2 * (num / den))
        lam_iv = ctx.mpf([_interval_of_fraction(ctx, lo).a, _interval_of_fraction(ctx, hi).b])
        absxi2 = 1 / ctx.sqrt(1 + lam_iv * lam_iv)
        s = sum((1 / ctx.mpf(t.q) ** t.n for t in constr.terms), ctx.mpf(0))
        # remaining indices have q_n >= 10^{n!}, so their sum is below 2 * 10^{-(N+1)(N+1)!}
        s = s + 2 * ctx.mpf(10) ** (-(N + 1) * math.factorial(N + 1))
        bound = m - ctx.pi * absxi2 / 2 * s
        rows.append(GrowthRow(m, bound, total))
    return rows


def _log10_ratio(a: Fraction, b: Fraction) -> int:
    if a == 0 or b == 0:
        return 0
    la = (_log(a.numerator) - _log(a.denominator)) / math.log(10)
    lb = (_log(b.numerator) - _log(b.denominator)) / math.log(10)
    return int(abs(la - lb)) + 2


def _defect_interval(ctx, t, lo, hi):
    return ctx.mpf([_interval_of_fraction(ctx, t.q * lo - t.p).a, _interval_of_fraction(ctx, t.q * hi - t.p).b])


def liouville_report(constr: LiouvilleConstruction, growth=None):
    """Structured rows (n, p_n, q_n, |xi.k_n| interval, alpha_n, tau_n, theta partial value)."""
    by_m = {r.m: r for r in (growth or [])}
    out = []
    for t in constr.terms:
        dot = abs(t.xi_dot_k)
        row = {
            "n": t.n,
            "p_n": str(t.p),
            "q_n": str(t.q),
            "abs_xi_dot_k": [iv_str(dot.a), iv_str(dot.b)],
            "alpha_n": iv_str(t.alpha),
            "tau_n": iv_str(t.tau),
            "stored": t.n >= 3,
            "conditions": t.conditions,
        }
        if t.n in by_m:
            g = by_m[t.n]
            row["theta_partial"] = iv_str(g.partial_value)
            row["lower_bound"] = iv_str(g.lower_bound)
            row["bound_certified"] = g.certified
        out.append(row)
    return out


def check_precision(constr: LiouvilleConstruction):
    """Raise if any stored divisor interval is not bounded away from zero."""
    for t in constr.terms:
        if t.xi_dot_k.a <= 0 <= t.xi_dot_k.b:
            raise PrecisionError(f"divisor interval for n={t.n} contains zero")

"""Compiled right-hand sides and the Dormand-Prince 5(4) stepper.

Fields are packed into flat arrays by :func:`pack_field`.  Real series are
stored on the half lattice {0} U {n > 0}, with doubled amplitudes off the
zero mode, so one cos/sin pair per mode suffices.
"""

import math

import numpy as np
from numba import njit

from .errors import SpecError

KIND_FOURIER = 0
KIND_INV_PROFILE = 1
KIND_PROFILE = 2
KIND_CONSTRUCTED = 3

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAX_STEPS = 2
STATUS_NONFINITE = 3

_MODE_LIMIT = 2**40


def _half_plane(series_list, d):
    """Union support on the half lattice and doubled amplitude tables."""
    modes = {}
    for s in series_list:
        for n, _ in s.coefficients:
            if all(v == 0 for v in n) or _positive(n):
                modes.setdefault(n, len(modes))
    if not modes:
        modes[(0,) * d] = 0
    order = sorted(modes)
    index = {n: i for i, n in enumerate(order)}
    cre = np.zeros((len(series_list), len(order)))
    cim = np.zeros((len(series_list), len(order)))
    for r, s in enumerate(series_list):
        for n, c in s.coefficients:
            if n not in index:
                continue
            w = 1.0 if all(v == 0 for v in n) else 2.0
            cre[r, index[n]] = w * c.real
            cim[r, index[n]] = w * c.imag
    if max((max(map(abs, n)) for n in order), default=0) > _MODE_LIMIT:
        raise SpecError("field has modes too large for double-precision integration")
    return np.array(order, dtype=np.float64).reshape(len(order), d), cre, cim


def _positive(n):
    for v in n:
        if v != 0:
            return v > 0
    return False


def pack_field(spec):
    """Flatten an analytic FieldSpec into kernel arrays.

    Returns ``(kind, modes, cre, cim, vec, mat, p)``.
    """
    from .core import Constructed, GeneralFourier, Separable, Stepanoff

    v = spec.variant
    d = spec.dimension
    vec = np.zeros(d)
    mat = np.zeros((d, d))
    p = 1.0
    if isinstance(v, GeneralFourier):
        kind = KIND_FOURIER
        series = list(v.components)
    elif isinstance(v, Separable):
        kind = KIND_FOURIER
        series = [prof.embed(d, i) for i, prof in enumerate(v.profiles)]
    elif isinstance(v, Stepanoff):
        vec = np.array(v.direction, dtype=float)
        if v.rho is not None:
            kind, series = KIND_INV_PROFILE, [v.rho]
        else:
            kind, series, p = KIND_PROFILE, [v.profile], float(v.exponent)
    elif isinstance(v, Constructed):
        kind = KIND_CONSTRUCTED
        series = list(v.psi_sharp) + list(v.zeta)
        mat = np.array(v.M, dtype=float)
    else:
        raise SpecError(f"no kernel for variant {type(v).__name__}")
    modes, cre, cim = _half_plane(series, d)
    return kind, modes, cre, cim, vec, mat, p


@njit(cache=True)
def _solve_small(A, b):
    n = b.shape[0]
    A = A.copy()
    x = b.copy()
    for c in range(n):
        piv = c
        for r in range(c + 1, n):
            if abs(A[r, c]) > abs(A[piv, c]):
                piv = r
        if piv != c:
            for j in range(n):
                A[c, j], A[piv, j] = A[piv, j], A[c, j]
            x[c], x[piv] = x[piv], x[c]
        for r in range(c + 1, n):
            f = A[r, c] / A[c, c]
            for j in range(c, n):
                A[r, j] -= f * A[c, j]
            x[r] -= f * x[c]
    for c in range(n - 1, -1, -1):
        s = x[c]
        for j in range(c + 1, n):
            s -= A[c, j] * x[j]
        x[c] = s / A[c, c]
    return x


@njit(cache=True)
def _eval_constructed(modes, cre, cim, mat, x, out):
    d = x.shape[0]
    J = mat.copy()
    z = np.zeros(d)
    for k in range(modes.shape[0]):
        ph = 0.0
        for j in range(d):
            ph += modes[k, j] * (x[j] - math.floor(x[j]))
        ph *= 2.0 * math.pi
        cs = math.cos(ph)
        sn = math.sin(ph)
        for i in range(d):
            # d/dx_j Re(c e^{i ph}) = -2 pi n_j Im(c e^{i ph})
            im_part = cre[i, k] * sn + cim[i, k] * cs
            for j in range(d):
                J[i, j] -= 2.0 * math.pi * modes[k, j] * im_part
            z[i] += cre[d + i, k] * cs - cim[d + i, k] * sn
    b = _solve_small(J, z)
    for i in range(d):
        out[i] = b[i]


@njit(cache=True, inline="always")
def eval_rhs(kind, modes, cre, cim, vec, mat, p, x, out):
    d = x.shape[0]
    if kind == KIND_CONSTRUCTED:
        _eval_constructed(modes, cre, cim, mat, x, out)
        return
    m = modes.shape[0]
    if kind == KIND_FOURIER:
        for i in range(d):
            out[i] = 0.0
    acc = 0.0
    for k in range(m):
        ph = 0.0
        for j in range(d):
            # reduce the lift first so phases stay accurate at large |x|
            ph += modes[k, j] * (x[j] - math.floor(x[j]))
        ph *= 2.0 * math.pi
        cs = math.cos(ph)
        sn = math.sin(ph)
        if kind == KIND_FOURIER:
            for i in range(d):
                out[i] += cre[i, k] * cs - cim[i, k] * sn
        else:
            acc += cre[0, k] * cs - cim[0, k] * sn
    if kind == KIND_INV_PROFILE:
        a = 1.0 / acc
        for i in range(d):
            out[i] = a * vec[i]
    elif kind == KIND_PROFILE:
        a = 0.0
        if acc > 0.0:
            a = acc if p == 1.0 else acc**p
        for i in range(d):
            out[i] = a * vec[i]


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
_A71, _A73, _A74, _A75, _A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
_D1, _D3, _D4 = -12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0, -10690763975.0 / 1880347072.0
_D5, _D6, _D7 = 701980252875.0 / 199316789632.0, -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0

_SAFE = 0.9
_ALPHA = 0.7 / 4.0
_BETA = 0.4 / 4.0
_FAC_MIN = 0.2
_FAC_MAX = 5.0


@njit(cache=True, inline="always")
def _rhs(kind, modes, cre, cim, vec, mat, p, sign, x, out):
    eval_rhs(kind, modes, cre, cim, vec, mat, p, x, out)
    if sign < 0:
        for i in range(out.shape[0]):
            out[i] = -out[i]


@njit(cache=True)
def dp5_solve(kind, modes, cre, cim, vec, mat, p, x0, t_out, sign, tol, hmax, max_steps, record):
    """Integrate from t=0 through the increasing times ``t_out`` (all >= 0).

    The local error estimate per unit time is kept below ``tol``.  With
    ``sign < 0`` the reversed field is integrated.  Returns the output lifts,
    a status code, step counters, the stop state and (if ``record``) the
    per-step dense-output coefficients.
    """
    d = x0.shape[0]
    nout = t_out.shape[0]
    Y = np.empty((nout, d))
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    k5 = np.empty(d)
    k6 = np.empty(d)
    k7 = np.empty(d)
    y = x0.copy()
    y1 = np.empty(d)
    tmp = np.empty(d)
    r2 = np.empty(d)
    r3 = np.empty(d)
    r4 = np.empty(d)
    r5 = np.empty(d)
    cap = 1024 if record else 1
    rec_t = np.empty(cap)
    rec_h = np.empty(cap)
    rec_c = np.empty((cap, 5, d))
    nrec = 0

    t_end = t_out[nout - 1] if nout > 0 else 0.0
    iout = 0
    while iout < nout and t_out[iout] <= 0.0:
        for i in range(d):
            Y[iout, i] = x0[i]
        iout += 1
    naccept = 0
    nreject = 0
    status = STATUS_OK
    t = 0.0
    if iout >= nout:
        return Y, status, naccept, nreject, t, y, rec_t[:0], rec_h[:0], rec_c[:0]

    _rhs(kind, modes, cre, cim, vec, mat, p, sign, y, k1)
    h = min(hmax, 0.1 * tol**0.25, t_end)
    errold = 1e-4
    last_rejected = False
    nsteps = 0
    while t < t_end:
        if nsteps >= max_steps:
            status = STATUS_MAX_STEPS
            break
        nsteps += 1
        clipped = t + h >= t_end
        if clipped:
            h = t_end - t
        # a short final leg to the end time is not an underflow
        if not clipped and h < 1e-14 * max(1.0, abs(t)):
            status = STATUS_UNDERFLOW
            break
        for i in range(d):
            tmp[i] = y[i] + h * _A21 * k1[i]
        _rhs(kind, modes, cre, cim, vec, mat, p, sign, tmp, k2)
        for i in range(d):
            tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(kind, modes, cre, cim, vec, mat, p, sign, tmp, k3)
        for i in range(d):
            tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(kind, modes, cre, cim, vec, mat, p, sign, tmp, k4)
        for i in range(d):
            tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
        _rhs(kind, modes, cre, cim, vec, mat, p, sign, tmp, k5)
        for i in range(d):
            tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
        _rhs(kind, modes, cre, cim, vec, mat, p, sign, tmp, k6)
        for i in range(d):
            y1[i] = y[i] + h * (_A71 * k1[i] + _A73 * k3[i] + _A74 * k4[i] + _A75 * k5[i] + _A76 * k6[i])
        _rhs(kind, modes, cre, cim, vec, mat, p, sign, y1, k7)
        err = 0.0
        for i in range(d):
            e = abs(_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i])
            if e > err:
                err = e
        err /= tol
        if not math.isfinite(err):
            status = STATUS_NONFINITE
            break
        if err <= 1.0:
            fac = _SAFE * max(err, 1e-10) ** (-_ALPHA) * errold**_BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if last_rejected:
                fac = min(fac, 1.0)
            errold = max(err, 1e-4)
            # Hairer's continuous extension of order 4
            t_new = t + h if t + h < t_end else t_end
            need = iout < nout and t_out[iout] <= t_new
            if need or record:
                for i in range(d):
                    r2[i] = y1[i] - y[i]
                    r3[i] = h * k1[i] - r2[i]
                    r4[i] = r2[i] - h * k7[i] - r3[i]
                    r5[i] = h * (_D1 * k1[i] + _D3 * k3[i] + _D4 * k4[i] + _D5 * k5[i] + _D6 * k6[i] + _D7 * k7[i])
                while iout < nout and t_out[iout] <= t_new:
                    if t_out[iout] == t_new:
                        for i in range(d):
                            Y[iout, i] = y1[i]
                    else:
                        th = (t_out[iout] - t) / h
                        th1 = 1.0 - th
                        for i in range(d):
                            Y[iout, i] = y[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])))
                    iout += 1
                if record:
                    if nrec >= cap:
                        cap2 = 2 * cap
                        nt = np.empty(cap2)
                        nh = np.empty(cap2)
                        nc = np.empty((cap2, 5, d))
                        nt[:cap] = rec_t
                        nh[:cap] = rec_h
                        nc[:cap] = rec_c
                        rec_t, rec_h, rec_c, cap = nt, nh, nc, cap2
                    rec_t[nrec] = t
                    rec_h[nrec] = h
                    for i in range(d):
                        rec_c[nrec, 0, i] = y[i]
                        rec_c[nrec, 1, i] = r2[i]
                        rec_c[nrec, 2, i] = r3[i]
                        rec_c[nrec, 3, i] = r4[i]
                        rec_c[nrec, 4, i] = r5[i]
                    nrec += 1
            t = t_new
            for i in range(d):
                y[i] = y1[i]
                k1[i] = k7[i]
            naccept += 1
            last_rejected = False
            h = min(hmax, h * fac)
        else:
            nreject += 1
            last_rejected = True
            h = h * max(_FAC_MIN, _SAFE * err ** (-0.25))
    return Y, status, naccept, nreject, t, y, rec_t[:nrec], rec_h[:nrec], rec_c[:nrec]


@njit(cache=True)
def dense_eval(rec_t, rec_h, rec_c, s):
    """Evaluate the recorded interpolant at times ``s`` (any order)."""
    n = rec_t.shape[0]
    d = rec_c.shape[2]
    out = np.empty((s.shape[0], d))
    for q in range(s.shape[0]):
        lo = 0
        hi = n - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if rec_t[mid] <= s[q]:
                lo = mid
            else:
                hi = mid - 1
        th = (s[q] - rec_t[lo]) / rec_h[lo]
        th1 = 1.0 - th
        for i in range(d):
            out[q, i] = rec_c[lo, 0, i] + th * (
                rec_c[lo, 1, i] + th1 * (rec_c[lo, 2, i] + th * (rec_c[lo, 3, i] + th1 * rec_c[lo, 4, i]))
            )
    return out


@njit(cache=True)
def eval_rhs_batch(kind, modes, cre, cim, vec, mat, p, X):
    out = np.empty_like(X)
    buf = np.empty(X.shape[1])
    for r in range(X.shape[0]):
        eval_rhs(kind, modes, cre, cim, vec, mat, p, X[r], buf)
        out[r] = buf
    return out

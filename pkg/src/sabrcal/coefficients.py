"""Maturity-dependent coefficient functionals of the dynamic SABR model.

For time-dependent ``nu(t)`` and ``rho(t)`` the dynamic smile formula needs

    nu1^2(T)  = 3/T^3  int_0^T (T-t)^2 nu(t)^2 dt
    nu2^2(T)  = 6/T^3  int_0^T (T-t) t nu(t)^2 dt
    eta1(T)   = 2/T^2  int_0^T (T-t) nu(t) rho(t) dt
    eta2^2(T) = 12/T^4 int_0^T int_0^t (int_0^s nu(u) rho(u) du)^2 ds dt

Case I has exact expressions for all four.  Case II has exact expressions for
the first three; the last is a double integral of a closed-form inner
antiderivative and is evaluated with nested Gauss-Legendre quadrature.

The exact expressions divide by powers of the decay rates and cancel
catastrophically as those rates go to zero.  Below a threshold the Case I
forms switch to their Taylor series and the Case II forms to an equivalent
expansion in the incomplete-gamma moments ``int_0^1 u^n exp(-x u) du``,
which are evaluated by series for small ``x``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConstraintError, DomainError
from .params import CaseIIParams, CaseIParams, DynCoefficients

# On the arguments 2bT and (a+b)T.  Closed forms carry a 1/x^4 cancellation,
# the series below are truncated at x^6: both are good to ~1e-11 here.
SERIES_THRESHOLD = 0.1
SERIES_ORDER = 6
# Case II closed forms are used when every decay argument is in this window.
CASE2_CLOSED_FORM_MIN = 0.5
CASE2_CLOSED_FORM_MAX = 150.0
DEFAULT_GL_NODES = 64


def _check_maturity(maturity):
    if not maturity > 0:
        raise DomainError(f"maturity must be positive, got {maturity}")


# ---------------------------------------------------------------------------
# Case I
# ---------------------------------------------------------------------------


def _series(coef, x, order=SERIES_ORDER):
    return sum(coef(k) * x**k for k in range(order + 1))


def _nu1_unit(x):
    """nu1^2 / nu0^2 as a function of x = 2bT."""
    if x < SERIES_THRESHOLD:
        return 6.0 * _series(lambda k: (-1) ** k / math.factorial(k + 3), x)
    return 6.0 / x**3 * ((x * x / 2.0 - x + 1.0) - math.exp(-x))


def _nu2_unit(x):
    """nu2^2 / nu0^2 as a function of x = 2bT."""
    if x < SERIES_THRESHOLD:
        return 6.0 * _series(lambda k: (-1) ** (k + 3) * (2 - (k + 3)) / math.factorial(k + 3), x)
    e = math.exp(-x)
    return 6.0 / x**3 * (2.0 * (e - 1.0) + x * (e + 1.0))


def _eta1_unit(c):
    """eta1 / (nu0 rho0) as a function of c = (a+b)T."""
    if c < SERIES_THRESHOLD:
        return 2.0 * _series(lambda k: (-1) ** k / math.factorial(k + 2), c)
    return 2.0 / c**2 * (math.exp(-c) - (1.0 - c))


def _eta2_unit(c):
    """eta2^2 / (nu0 rho0)^2 as a function of c = (a+b)T."""
    if c < SERIES_THRESHOLD:
        return 3.0 * _series(lambda k: ((-2) ** (k + 4) - 8 * (-1) ** (k + 4)) / math.factorial(k + 4), c)
    return 3.0 / c**4 * (math.exp(-2.0 * c) - 8.0 * math.exp(-c) + (7.0 + 2.0 * c * (-3.0 + c)))


def dyn_coeffs_case1(params: CaseIParams, maturity: float) -> DynCoefficients:
    """Exact coefficient functionals for exponentially decaying nu and rho.

    Parameters
    ----------
    params : CaseIParams
    maturity : float
        Option maturity T in years, > 0.

    Returns
    -------
    DynCoefficients
        ``nu1_sq``, ``nu2_sq``, ``eta1``, ``eta2_sq`` at T.  With ``a = b = 0``
        these collapse to ``nu0^2, nu0^2, nu0 rho0, (nu0 rho0)^2``.
    """
    _check_maturity(maturity)
    nu0, rho0 = params.nu0, params.rho0
    x = 2.0 * params.b * maturity
    c = (params.a + params.b) * maturity
    return DynCoefficients(
        nu1_sq=nu0 * nu0 * _nu1_unit(x),
        nu2_sq=nu0 * nu0 * _nu2_unit(x),
        eta1=nu0 * rho0 * _eta1_unit(c),
        eta2_sq=(nu0 * rho0) ** 2 * _eta2_unit(c),
    )


# ---------------------------------------------------------------------------
# Polynomial-times-exponential algebra (Case II fallback)
# ---------------------------------------------------------------------------


def exp_moments(n_max, x):
    """``m[n] = int_0^1 u^n exp(-x u) du`` for ``n = 0..n_max``; ``x >= 0`` array.

    Below ``x = 1`` a power series is summed; above it the upward recurrence
    ``m[n] = (n m[n-1] - exp(-x)) / x`` loses at most a factor ``n! / x^n``,
    which is harmless for the low degrees used here.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    x = x.reshape(-1)
    out = np.empty((n_max + 1, x.size))
    if not np.any(x):
        out[:] = 1.0 / np.arange(1, n_max + 2)[:, None]
        return out.reshape((n_max + 1,) + shape)
    small = x < 1.0
    xl = np.where(small, 1.0, x)
    ex = np.exp(-xl)
    out[0] = -np.expm1(-xl) / xl
    for n in range(1, n_max + 1):
        out[n] = (n * out[n - 1] - ex) / xl
    if np.any(small):
        xs = x[small]
        for n in range(n_max + 1):
            # x^22 / 22! < 1e-21 for x < 1
            term = np.ones_like(xs)
            acc = term / (n + 1)
            for k in range(1, 23):
                term = term * (-xs) / k
                acc = acc + term / (n + k + 1)
            out[n, small] = acc
    return out.reshape((n_max + 1,) + shape)


class PolyExp:
    """Finite sum of ``poly_k(t) * exp(-rate_k t)`` with ascending coefficients."""

    def __init__(self, terms=None):
        self.terms = {}
        for rate, coefs in (terms or {}).items():
            self._add(rate, np.asarray(coefs, dtype=float))

    def _add(self, rate, coefs):
        rate = float(rate)
        if rate in self.terms:
            self.terms[rate] = P.polyadd(self.terms[rate], coefs)
        else:
            self.terms[rate] = np.asarray(coefs, dtype=float)

    def __mul__(self, other):
        out = PolyExp()
        for r1, c1 in self.terms.items():
            for r2, c2 in other.terms.items():
                out._add(r1 + r2, P.polymul(c1, c2))
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return sum(P.polyval(t, c) * np.exp(-r * t) for r, c in self.terms.items())

    def weighted_integral(self, weight, upper):
        """``int_0^upper weight(t) * self(t) dt`` with ``weight`` a polynomial in t."""
        total = 0.0
        for rate, coefs in self.terms.items():
            poly = P.polymul(weight, coefs)
            m = exp_moments(len(poly) - 1, rate * upper)
            total += sum(poly[k] * upper ** (k + 1) * m[k] for k in range(len(poly)))
        return float(total)

    def antiderivative(self, s):
        """``int_0^s self(u) du`` evaluated at an array of ``s >= 0``."""
        s = np.asarray(s, dtype=float)
        total = np.zeros_like(s)
        for rate, coefs in self.terms.items():
            m = exp_moments(len(coefs) - 1, rate * s)
            for k, ck in enumerate(coefs):
                total = total + ck * s ** (k + 1) * m[k]
        return total


def case2_functions(params):
    nu = PolyExp({params.b: [params.nu0, params.q_nu]})
    nu._add(0.0, [params.d_nu])
    rho = PolyExp({params.a: [params.rho0, params.q_rho]})
    rho._add(0.0, [params.d_rho])
    return nu, rho


def _case2_by_moments(params, T):
    nu, rho = case2_functions(params)
    nu_sq = nu * nu
    nu_rho = nu * rho
    # (T - t)^2, (T - t) t, (T - t) as ascending coefficient lists
    nu1 = 3.0 / T**3 * nu_sq.weighted_integral([T * T, -2.0 * T, 1.0], T)
    nu2 = 6.0 / T**3 * nu_sq.weighted_integral([0.0, T, -1.0], T)
    eta1 = 2.0 / T**2 * nu_rho.weighted_integral([T, -1.0], T)
    return nu1, nu2, eta1, nu_rho.antiderivative


# ---------------------------------------------------------------------------
# Case II closed forms
# ---------------------------------------------------------------------------


def _nu1_sq_closed(n0, qn, dn, b, T):
    e = math.exp
    br = (
        9 * qn**2
        + 6 * b**4 * n0 * (4 * dn + n0) * T**2
        + 4 * b**5 * dn**2 * T**3
        + 9 * b * qn * (16 * dn + n0 - qn * T)
        + 6 * b**3 * T * (-n0 * (8 * dn + n0) + (4 * dn + n0) * qn * T)
        + 3 * b**2 * (n0 * (16 * dn + n0) - 4 * (8 * dn + n0) * qn * T + qn**2 * T**2)
        - 3
        * e(-2 * b * T)
        * (
            3 * qn**2
            + 3 * b * qn * (16 * dn * e(b * T) + n0 + qn * T)
            + b**2 * (n0 + qn * T) * (16 * dn * e(b * T) + n0 + qn * T)
        )
    )
    return br / (4 * b**5 * T**3)


def _nu2_sq_closed(n0, qn, dn, b, T):
    e = math.exp
    inner = (
        18 * qn**2
        + 6 * b**3 * T * (n0 + qn * T) ** 2
        + 6 * b**2 * (n0 + qn * T) * (n0 + 3 * qn * T)
        + 9 * b * qn * (2 * n0 + 3 * qn * T)
        + e(2 * b * T)
        * (
            -18 * qn**2
            + 6 * b**3 * n0 * (8 * dn + n0) * T
            + 4 * b**5 * dn**2 * T**3
            + 9 * b * qn * (-32 * dn - 2 * n0 + qn * T)
            + 6 * b**2 * (-n0 * (16 * dn + n0) + 2 * (8 * dn + n0) * qn * T)
        )
        + 48 * b * dn * e(b * T) * (6 * qn + b * (n0 * (2 + b * T) + qn * T * (4 + b * T)))
    )
    return e(-2 * b * T) * inner / (4 * b**5 * T**3)


def _eta1_closed(r0, qr, dr, n0, qn, dn, a, b, T):
    e = math.exp
    ab = a + b
    ab4 = ab**4
    head = (
        -2 * dn * qr / a**3
        - 2 * dr * qn / b**3
        - 6 * qr * qn / ab4
        + dr * n0 * T / b
        + dn * r0 * T / a
        + a**3 * n0 * r0 * T / ab4
        + b**3 * n0 * r0 * T / ab4
        + dn * (-r0 + qr * T) / a**2
        + dr * (-n0 + qn * T) / b**2
        + a**2 * (-n0 * r0 + n0 * qr * T + qn * r0 * T) / ab4
        - 2 * a * (n0 * qr + qn * (r0 - qr * T)) / ab4
        + b * (-2 * n0 * (qr + a * r0) + a * n0 * (2 * qr + 3 * a * r0) * T + 2 * qn * (qr * T + r0 * (-1 + a * T))) / ab4
        + b**2 * (qn * r0 * T + n0 * (qr * T + r0 * (-1 + 3 * a * T))) / ab4
    )
    ea, eb, eab = e(a * T), e(b * T), e(ab * T)
    tail = (
        4 * b**7 * dn * eb * qr
        + 8 * a**2 * b**5 * dn * eb * (b * r0 + qr * (3 + b * T))
        + 2 * a * b**6 * dn * eb * (b * r0 + qr * (8 + b * T))
        + a**7 * dr * ea * (4 * qn + b**3 * dn * eb * T**2 + 2 * b * (n0 + qn * T))
        + 4 * a**6 * b * dr * ea * (4 * qn + b**3 * dn * eb * T**2 + 2 * b * (n0 + qn * T))
        + 2
        * a**5
        * b**2
        * (
            12 * dr * ea * qn
            + 3 * b**3 * dr * dn * eab * T**2
            + 6 * b * dr * ea * (n0 + qn * T)
            + b * (r0 + qr * T) * (dn * eb + n0 + qn * T)
        )
        + 4
        * a**4
        * b**3
        * (
            dn * eb * qr
            + n0 * qr
            + 4 * dr * ea * qn
            + qn * r0
            + 2 * qr * qn * T
            + b**3 * dr * dn * eab * T**2
            + 2 * b * dr * ea * (n0 + qn * T)
            + b * (r0 + qr * T) * (2 * dn * eb + n0 + qn * T)
        )
        + a**3
        * b**3
        * (
            12 * qr * qn
            + b**4 * dr * dn * eab * T**2
            + 4 * b * (4 * dn * eb * qr + n0 * qr + qn * (dr * ea + r0 + 2 * qr * T))
            + 2 * b**2 * (dr * ea * (n0 + qn * T) + (r0 + qr * T) * (6 * dn * eb + n0 + qn * T))
        )
    )
    return 2.0 / T**2 * (head + e(-ab * T) * tail / (2 * a**3 * b**3 * ab4))


def _nu_rho_antiderivative_closed(r0, qr, dr, n0, qn, dn, a, b, s):
    """Closed-form ``int_0^s nu(u) rho(u) du``, vectorized in ``s``."""
    e = np.exp
    ab = a + b
    es_a, es_b, es_ab = e(a * s), e(b * s), e(ab * s)
    x = (
        b**5 * dn * es_b * (-1 + es_a) * qr
        - a * b**4 * dn * es_b * (3 * qr + b * r0 - es_a * (3 * qr + b * r0) + b * qr * s)
        + a**5 * dr * es_a * (-qn - b * (n0 + qn * s) + es_b * (qn + b * (n0 + b * dn * s)))
        + a**3
        * b**2
        * (
            -qn * (3 * dr * es_a + r0)
            + es_ab * ((dn + n0) * qr + qn * (3 * dr + r0) + b * (3 * dr * n0 + 3 * dn * r0 + 2 * n0 * r0) + 3 * b**2 * dr * dn * s)
            - dn * es_b * (qr + 3 * b * r0 + 3 * b * qr * s)
            - qr * (n0 + 2 * qn * s)
            - b * (n0 + qn * s) * (3 * dr * es_a + 2 * (r0 + qr * s))
        )
        + a**2
        * b**2
        * (
            -2 * qr * qn
            + es_ab * (2 * qr * qn + b**2 * (3 * dn * r0 + n0 * (dr + r0)) + b * ((3 * dn + n0) * qr + qn * (dr + r0)) + b**3 * dr * dn * s)
            - 3 * b * dn * es_b * (qr + b * r0 + b * qr * s)
            - b**2 * (dr * es_a + r0 + qr * s) * (n0 + qn * s)
            - b * (n0 * qr + qn * (dr * es_a + r0 + 2 * qr * s))
        )
        + a**4
        * b
        * (
            es_ab * (3 * b * dr * n0 + 3 * dr * qn + b * (dn + n0) * r0 + 3 * b**2 * dr * dn * s)
            - b * (r0 + qr * s) * (dn * es_b + n0 + qn * s)
            - 3 * dr * es_a * (qn + b * (n0 + qn * s))
        )
    )
    return e(-ab * s) * x / (a**2 * b**2 * ab**3)


@lru_cache(maxsize=16)
def _gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def nested_gauss_legendre(inner, T, nodes=DEFAULT_GL_NODES):
    """``int_0^T int_0^t inner(s)^2 ds dt`` on an ``nodes x nodes`` tensor rule."""
    x, w = _gauss_legendre(nodes)
    t = T * x
    s = np.outer(t, x)  # s[i, j] in [0, t_i]
    g = inner(s)
    inner_sums = t * ((g * g) @ w)
    return float(T * np.dot(w, inner_sums))


def uses_closed_form(params, maturity):
    lo = min(params.a, params.b) * maturity
    hi = max(params.a, params.b) * maturity
    return lo >= CASE2_CLOSED_FORM_MIN and hi <= CASE2_CLOSED_FORM_MAX


def dyn_coeffs_case2(params: CaseIIParams, maturity: float, nodes: int = DEFAULT_GL_NODES) -> DynCoefficients:
    """Coefficient functionals for the linear-times-exponential parameter functions.

    ``nu1_sq``, ``nu2_sq`` and ``eta1`` are exact.  ``eta2_sq`` is the nested
    Gauss-Legendre approximation (``nodes`` per axis) of its double integral,
    whose integrand is the exact antiderivative of ``nu(u) rho(u)``.

    Raises
    ------
    ConstraintError
        If ``rho(t)`` leaves [-1, 1] or ``nu(t)`` is not positive on the
        feasibility grid of ``(0, max(horizon, maturity)]``.
    """
    _check_maturity(maturity)
    if nodes < 2:
        raise DomainError(f"need at least 2 quadrature nodes, got {nodes}")
    if maturity > params.horizon:
        bad = params.violations(maturity)
        if bad:
            raise ConstraintError(f"Case II parameters infeasible on (0, {maturity}]: {bad[:8]}", bad)
    T = maturity
    p = params
    if uses_closed_form(p, T):
        nu1 = _nu1_sq_closed(p.nu0, p.q_nu, p.d_nu, p.b, T)
        nu2 = _nu2_sq_closed(p.nu0, p.q_nu, p.d_nu, p.b, T)
        eta1 = _eta1_closed(p.rho0, p.q_rho, p.d_rho, p.nu0, p.q_nu, p.d_nu, p.a, p.b, T)

        def inner(s):
            return _nu_rho_antiderivative_closed(p.rho0, p.q_rho, p.d_rho, p.nu0, p.q_nu, p.d_nu, p.a, p.b, s)

    else:
        nu1, nu2, eta1, inner = _case2_by_moments(p, T)
    eta2 = 12.0 / T**4 * nested_gauss_legendre(inner, T, nodes)
    return DynCoefficients(nu1_sq=nu1, nu2_sq=nu2, eta1=eta1, eta2_sq=eta2)


def dyn_coeffs(params, maturity, nodes=DEFAULT_GL_NODES):
    """Dispatch on the parameter type; static parameters give constant coefficients."""
    if isinstance(params, CaseIParams):
        return dyn_coeffs_case1(params, maturity)
    if isinstance(params, CaseIIParams):
        return dyn_coeffs_case2(params, maturity, nodes)
    _check_maturity(maturity)
    return DynCoefficients.constant(params.nu, params.rho)

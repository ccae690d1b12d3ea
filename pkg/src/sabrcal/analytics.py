"""Implied-volatility asymptotics for the static and dynamic SABR models.

Both formulas share the shape

    sigma(K, f, T) = (1 + A1 log(K/f) + A2 log(K/f)^2 + B T) / omega,
    omega = f^(1 - beta) / alpha,

and differ only in how A1, A2 and B depend on the model.  The functions accept
scalars or numpy arrays for ``strike``.
"""
from __future__ import annotations

import math

import numpy as np

from .coefficients import dyn_coeffs
from .errors import DomainError, NumericDomainError
from .params import DynCoefficients, StaticSabrParams

BETA_ONE_TOL = 1e-6
Z_SMALL = 1e-6


def forward_price(spot, rate, dividend, maturity):
    """Carry-adjusted forward ``spot * exp((rate - dividend) * maturity)``."""
    if not spot > 0:
        raise DomainError(f"spot must be positive, got {spot}")
    if not maturity > 0:
        raise DomainError(f"maturity must be positive, got {maturity}")
    return spot * math.exp((rate - dividend) * maturity)


def _check_inputs(strike, forward, maturity):
    if not np.all(np.asarray(strike) > 0):
        raise DomainError(f"strike must be positive, got {strike}")
    if not forward > 0:
        raise DomainError(f"forward must be positive, got {forward}")
    if not maturity > 0:
        raise DomainError(f"maturity must be positive, got {maturity}")


def _as_output(value, strike):
    return float(value) if np.ndim(strike) == 0 else value


def static_implied_vol(params: StaticSabrParams, strike, forward, maturity):
    """Black implied volatility of the constant-parameter model.

    The smile is the second-order expansion in log-moneyness of the
    Obloj-corrected Hagan formula, so no ``z / x(z)`` ratio is evaluated.

    Parameters
    ----------
    params : StaticSabrParams
    strike : float or ndarray
    forward : float
        Forward of the underlying for ``maturity``.
    maturity : float

    Returns
    -------
    float or ndarray
        Implied volatility (decimal), same shape as ``strike``.
    """
    _check_inputs(strike, forward, maturity)
    alpha, beta, nu, rho = params.alpha, params.beta, params.nu, params.rho
    omega = forward ** (1.0 - beta) / alpha
    omb = 1.0 - beta
    a1 = -0.5 * (omb - rho * nu * omega)
    a2 = (omb * omb + 3.0 * (omb - rho * nu * omega) + (2.0 - 3.0 * rho * rho) * nu * nu * omega * omega) / 12.0
    b = omb * omb / (24.0 * omega * omega) + beta * rho * nu / (4.0 * omega) + (2.0 - 3.0 * rho * rho) * nu * nu / 24.0
    lk = np.log(np.asarray(strike, dtype=float) / forward)
    return _as_output((1.0 + a1 * lk + a2 * lk * lk + b * maturity) / omega, strike)


def dynamic_implied_vol(coeffs: DynCoefficients, alpha, beta, strike, forward, maturity):
    """Black implied volatility of the time-dependent model.

    ``coeffs`` must have been computed at the same ``maturity``.  Constant
    coefficients (``DynCoefficients.constant(nu, rho)``) reproduce
    :func:`static_implied_vol` with the same ``nu`` and ``rho``.
    """
    _check_inputs(strike, forward, maturity)
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    omega = forward ** (1.0 - beta) / alpha
    omb = 1.0 - beta
    eta1 = coeffs.eta1
    a1 = (beta - 1.0) / 2.0 + eta1 * omega / 2.0
    a2 = (
        omb * omb / 12.0
        + (omb - eta1 * omega) / 4.0
        + (4.0 * coeffs.nu1_sq + 3.0 * (coeffs.eta2_sq - 3.0 * eta1 * eta1)) / 24.0 * omega * omega
    )
    b = (omb * omb / 24.0 + omega * beta * eta1 / 4.0 + (2.0 * coeffs.nu2_sq - 3.0 * coeffs.eta2_sq) / 24.0 * omega * omega) / (
        omega * omega
    )
    lk = np.log(np.asarray(strike, dtype=float) / forward)
    return _as_output((1.0 + a1 * lk + a2 * lk * lk + b * maturity) / omega, strike)


def model_implied_vol(params, strike, forward, maturity, nodes=64):
    """Implied vol for any parameter type (static, Case I or Case II)."""
    if isinstance(params, StaticSabrParams):
        return static_implied_vol(params, strike, forward, maturity)
    coeffs = dyn_coeffs(params, maturity, nodes)
    return dynamic_implied_vol(coeffs, params.alpha, params.beta, strike, forward, maturity)


# -- un-expanded Obloj formula; internal cross-check of the expansion --------


def _obloj_z(alpha, beta, nu, strike, forward):
    if abs(1.0 - beta) < BETA_ONE_TOL:
        return nu * math.log(forward / strike) / alpha
    return nu * (forward ** (1.0 - beta) - strike ** (1.0 - beta)) / (alpha * (1.0 - beta))


def _z_over_x(z, rho):
    if abs(z) < Z_SMALL:
        return 1.0 - rho * z / 2.0 + (2.0 - 3.0 * rho * rho) * z * z / 12.0
    if rho == 1.0:
        if z >= 1.0:
            raise NumericDomainError(f"x(z) undefined for rho = 1 and z = {z} >= 1")
        return z / -math.log1p(-z)
    arg = (math.sqrt(1.0 - 2.0 * rho * z + z * z) + z - rho) / (1.0 - rho)
    if not arg > 0.0:
        raise NumericDomainError(f"x(z) undefined: log argument {arg} <= 0 (rho = {rho}, z = {z})")
    return z / math.log(arg)


def _obloj_implied_vol(params: StaticSabrParams, strike, forward, maturity):
    """Obloj's corrected Hagan formula with the ``z / x(z)`` factor kept explicit."""
    _check_inputs(strike, forward, maturity)
    alpha, beta, nu, rho = params.alpha, params.beta, params.nu, params.rho
    omb = 1.0 - beta
    lfk = math.log(forward / strike)
    z = _obloj_z(alpha, beta, nu, strike, forward)
    # nu * log(f/K) / z, with nu cancelled so that nu = 0 and K = f are regular
    if abs(omb) < BETA_ONE_TOL:
        lead = alpha
    elif strike == forward:
        lead = alpha / forward**omb
    else:
        lead = alpha * omb * lfk / (forward**omb - strike**omb)
    denom = 1.0 + omb**2 / 24.0 * lfk**2 + omb**4 / 1920.0 * lfk**4
    fk = (strike * forward) ** (omb / 2.0)
    corr = 1.0 + (omb**2 / 24.0 * alpha**2 / fk**2 + rho * beta * nu * alpha / (4.0 * fk) + (2.0 - 3.0 * rho**2) / 24.0 * nu**2) * maturity
    return lead * _z_over_x(z, rho) * corr / denom

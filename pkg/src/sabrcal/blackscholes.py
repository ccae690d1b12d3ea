"""Black-Scholes call pricing with continuous dividend yield, and its inverse."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import DomainError

PRICE_TOL = 1e-10


def black_scholes_call(spot, strike, rate, dividend, maturity, vol):
    """European call price; ``strike`` and ``vol`` may be arrays.

    ``vol = 0`` gives the discounted intrinsic value
    ``max(spot e^{-yT} - strike e^{-rT}, 0)``.
    """
    if not spot > 0 or not maturity > 0:
        raise DomainError(f"spot and maturity must be positive, got {spot}, {maturity}")
    strike_a = np.asarray(strike, dtype=float)
    vol_a = np.asarray(vol, dtype=float)
    if np.any(strike_a <= 0):
        raise DomainError(f"strike must be positive, got {strike}")
    if np.any(vol_a < 0) or np.any(np.isnan(vol_a)):
        raise DomainError(f"vol must be non-negative, got {vol}")
    fwd_df = spot * math.exp(-dividend * maturity)
    k_df = strike_a * math.exp(-rate * maturity)
    sd = vol_a * math.sqrt(maturity)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(fwd_df / k_df) + 0.5 * sd * sd) / sd
        price = fwd_df * ndtr(d1) - k_df * ndtr(d1 - sd)
    price = np.where(sd > 0, price, np.maximum(fwd_df - k_df, 0.0))
    if np.ndim(strike) == 0 and np.ndim(vol) == 0:
        return float(price)
    return price


def call_price_bounds(spot, strike, rate, dividend, maturity):
    fwd_df = spot * math.exp(-dividend * maturity)
    return max(fwd_df - strike * math.exp(-rate * maturity), 0.0), fwd_df


def implied_vol_from_price(price, spot, strike, rate, dividend, maturity):
    """Black-Scholes volatility reproducing ``price`` to 1e-10 absolute.

    Raises
    ------
    DomainError
        If ``price`` is not strictly inside the no-arbitrage bounds.
    """
    if not spot > 0 or not strike > 0 or not maturity > 0:
        raise DomainError("spot, strike and maturity must be positive")
    lower, upper = call_price_bounds(spot, strike, rate, dividend, maturity)
    if not lower < price < upper:
        raise DomainError(f"price {price} outside the no-arbitrage interval ({lower}, {upper})")

    def f(v):
        return black_scholes_call(spot, strike, rate, dividend, maturity, v) - price

    hi = 1.0
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e4:
            raise DomainError(f"no volatility below {hi} reproduces price {price}")
    vol = brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(vol)) > PRICE_TOL:
        raise DomainError(f"root finder stalled: residual {f(vol):.3g} at vol {vol}")
    return vol

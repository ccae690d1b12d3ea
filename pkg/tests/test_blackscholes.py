import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bs_call
from reference import ES_MARKET_PRICES, ES_SPOT
from sabrcal.blackscholes import black_scholes_call, call_price_bounds, implied_vol_from_price
from sabrcal.errors import DomainError

FX_3M = dict(spot=1.2939, rate=0.013696, dividend=0.005894, maturity=0.2528)


def test_zero_vol_is_discounted_intrinsic():
    got = black_scholes_call(100.0, 90.0, 0.03, 0.01, 2.0, 0.0)
    assert got == pytest.approx(100 * math.exp(-0.02) - 90 * math.exp(-0.06), rel=1e-15)
    assert black_scholes_call(100.0, 130.0, 0.03, 0.01, 2.0, 0.0) == 0.0


def test_fx_3m_market_price():
    assert black_scholes_call(strike=1.2950, vol=0.1470, **FX_3M) == pytest.approx(0.038794, abs=5e-7)


def test_es_market_prices(es_surface):
    for T, frac, want in ES_MARKET_PRICES:
        i = es_surface.maturities.index(T)
        s = es_surface.slices[i]
        j = int(np.argmin(np.abs(np.array(s.strikes) - frac * ES_SPOT)))
        got = black_scholes_call(ES_SPOT, s.strikes[j], s.rate, s.dividend, T, s.vols[j])
        # one unit in the last printed digit
        assert got == pytest.approx(want, abs=1e-3)


@settings(max_examples=80, deadline=None)
@given(
    spot=st.floats(0.5, 5000), m=st.floats(0.5, 2.0), r=st.floats(-0.02, 0.08),
    y=st.floats(0.0, 0.06), T=st.floats(0.02, 5.0), v=st.floats(0.01, 1.5),
)
def test_matches_erf_oracle(spot, m, r, y, T, v):
    k = spot * m
    assert black_scholes_call(spot, k, r, y, T, v) == pytest.approx(bs_call(spot, k, r, y, T, v), rel=1e-9, abs=1e-12 * spot)


def test_vectorized_matches_scalar():
    ks = np.array([80.0, 100.0, 120.0])
    vs = np.array([0.3, 0.25, 0.2])
    got = black_scholes_call(100.0, ks, 0.01, 0.0, 1.0, vs)
    for k, v, g in zip(ks, vs, got):
        assert g == black_scholes_call(100.0, k, 0.01, 0.0, 1.0, v)


def test_negative_vol_rejected():
    with pytest.raises(DomainError):
        black_scholes_call(100.0, 100.0, 0.0, 0.0, 1.0, -0.1)


def test_implied_vol_of_reference_price():
    assert implied_vol_from_price(0.038794, strike=1.2950, **FX_3M) == pytest.approx(0.1470, abs=1e-4)


@settings(max_examples=80, deadline=None)
@given(m=st.floats(0.7, 1.4), T=st.floats(0.05, 3.0), v=st.floats(0.03, 1.0))
def test_implied_vol_round_trip(m, T, v):
    spot, r, y = 100.0, 0.02, 0.01
    k = spot * m
    price = black_scholes_call(spot, k, r, y, T, v)
    lo, hi = call_price_bounds(spot, k, r, y, T)
    if not lo < price < hi or price - lo < 1e-9 * spot:
        return  # vega too small to pin the vol down
    got = implied_vol_from_price(price, spot, k, r, y, T)
    assert abs(black_scholes_call(spot, k, r, y, T, got) - price) <= 1e-10
    assert got == pytest.approx(v, abs=1e-8)


def test_implied_vol_near_lower_bound():
    lo, _ = call_price_bounds(100.0, 90.0, 0.01, 0.0, 1.0)
    assert implied_vol_from_price(lo + 1e-8, 100.0, 90.0, 0.01, 0.0, 1.0) < 0.03


@pytest.mark.parametrize("price", [-1.0, 0.0, 100.0, 150.0])
def test_implied_vol_outside_bounds(price):
    with pytest.raises(DomainError):
        implied_vol_from_price(price, 100.0, 100.0, 0.0, 0.0, 1.0)

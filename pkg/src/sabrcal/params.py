"""Parameter sets for the static and the two dynamic SABR variants."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConstraintError, DomainError

FEASIBILITY_GRID_POINTS = 256


def _check_common(alpha, beta):
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")


class _ParamsMixin:
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise DomainError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return type(self)(**values)


@dataclass(frozen=True)
class StaticSabrParams(_ParamsMixin):
    """Constant-parameter SABR model.

    Attributes
    ----------
    alpha : float
        Initial level of the volatility process, > 0.
    beta : float
        CEV exponent of the forward, in [0, 1].
    nu : float
        Volatility of volatility, >= 0.
    rho : float
        Correlation between the two Brownian drivers, in [-1, 1].
    """

    alpha: float
    beta: float
    nu: float
    rho: float

    def __post_init__(self):
        _check_common(self.alpha, self.beta)
        if not self.nu >= 0:
            raise DomainError(f"nu must be non-negative, got {self.nu}")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")

    def nu_t(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.nu)

    def rho_t(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.rho)


@dataclass(frozen=True)
class CaseIParams(_ParamsMixin):
    """Dynamic SABR with rho(t) = rho0 exp(-a t) and nu(t) = nu0 exp(-b t)."""

    alpha: float
    beta: float
    rho0: float
    nu0: float
    a: float
    b: float

    def __post_init__(self):
        _check_common(self.alpha, self.beta)
        if not -1.0 <= self.rho0 <= 1.0:
            raise DomainError(f"rho0 must lie in [-1, 1], got {self.rho0}")
        if not self.nu0 > 0:
            raise DomainError(f"nu0 must be positive, got {self.nu0}")
        if not (self.a >= 0 and self.b >= 0):
            raise DomainError(f"decay rates must be non-negative, got a={self.a}, b={self.b}")

    def nu_t(self, t):
        return self.nu0 * np.exp(-self.b * np.asarray(t, dtype=float))

    def rho_t(self, t):
        return self.rho0 * np.exp(-self.a * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class CaseIIParams(_ParamsMixin):
    """Dynamic SABR with linear-times-exponential parameter functions.

    ``rho(t) = (rho0 + q_rho t) exp(-a t) + d_rho`` and
    ``nu(t) = (nu0 + q_nu t) exp(-b t) + d_nu``.  Construction checks
    ``rho(t)`` in [-1, 1] and ``nu(t) > 0`` on a uniform grid of 256 points
    covering ``(0, horizon]`` plus the interior stationary points of both
    functions; a :class:`ConstraintError` lists the offending times.
    """

    alpha: float
    beta: float
    rho0: float
    q_rho: float
    d_rho: float
    nu0: float
    q_nu: float
    d_nu: float
    a: float
    b: float
    horizon: float = 2.0

    def __post_init__(self):
        _check_common(self.alpha, self.beta)
        if not (self.a >= 0 and self.b >= 0):
            raise DomainError(f"decay rates must be non-negative, got a={self.a}, b={self.b}")
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        bad = self.violations()
        if bad:
            shown = ", ".join(f"t={t:.6g} ({what})" for t, what in bad[:8])
            more = f" and {len(bad) - 8} more" if len(bad) > 8 else ""
            raise ConstraintError(f"infeasible Case II parameters: {shown}{more}", bad)

    def nu_t(self, t):
        t = np.asarray(t, dtype=float)
        return (self.nu0 + self.q_nu * t) * np.exp(-self.b * t) + self.d_nu

    def rho_t(self, t):
        t = np.asarray(t, dtype=float)
        return (self.rho0 + self.q_rho * t) * np.exp(-self.a * t) + self.d_rho

    def feasibility_grid(self, horizon=None):
        horizon = self.horizon if horizon is None else horizon
        n = FEASIBILITY_GRID_POINTS
        grid = horizon * np.arange(1, n + 1) / n
        extra = [
            _stationary_point(self.rho0, self.q_rho, self.a),
            _stationary_point(self.nu0, self.q_nu, self.b),
        ]
        extra = [t for t in extra if t is not None and 0.0 < t <= horizon]
        return np.sort(np.concatenate([grid, extra]))

    def violations(self, horizon=None):
        """Return ``[(t, reason), ...]`` for every grid time breaking a constraint."""
        t = self.feasibility_grid(horizon)
        rho = self.rho_t(t)
        nu = self.nu_t(t)
        bad_rho = ~((rho >= -1.0) & (rho <= 1.0))
        bad_nu = ~(nu > 0.0)
        if not (bad_rho.any() or bad_nu.any()):
            return []
        out = []
        for ti, r, v, br, bn in zip(t, rho, nu, bad_rho, bad_nu):
            if br:
                out.append((float(ti), f"rho={r:.6g}"))
            if bn:
                out.append((float(ti), f"nu={v:.6g}"))
        return out


def _stationary_point(level, slope, rate):
    # d/dt (level + slope t) e^{-rate t} = 0  =>  t* = 1/rate - level/slope
    if rate <= 0 or slope == 0:
        return None
    return 1.0 / rate - level / slope


@dataclass(frozen=True)
class DynCoefficients:
    """The maturity-dependent functionals entering the dynamic smile formula."""

    nu1_sq: float
    nu2_sq: float
    eta1: float
    eta2_sq: float

    @classmethod
    def constant(cls, nu, rho):
        return cls(nu * nu, nu * nu, nu * rho, (nu * rho) ** 2)


MODEL_TYPES = {
    "static": StaticSabrParams,
    "case1": CaseIParams,
    "case2": CaseIIParams,
}


def params_from_dict(model, data):
    try:
        cls = MODEL_TYPES[model]
    except KeyError:
        raise DomainError(f"unknown model variant {model!r}; expected one of {sorted(MODEL_TYPES)}") from None
    return cls.from_dict(data)


def model_name(params):
    for name, cls in MODEL_TYPES.items():
        if type(params) is cls:
            return name
    raise DomainError(f"not a SABR parameter set: {params!r}")

"""Market surfaces, relative-error cost functions and the two calibration techniques.

Technique I fits the closed-form implied volatility to quoted vols.
Technique II fits Monte Carlo call prices to Black-Scholes prices of the
quoted vols, with one fixed simulation plan for the whole run so that the
objective is a deterministic function of the parameters.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .analytics import dynamic_implied_vol, static_implied_vol
from .annealing import AnnealingSchedule, SearchSpace, minimize
from .blackscholes import black_scholes_call
from .coefficients import dyn_coeffs
from .errors import DomainError, SabrError, ValidationError
from .montecarlo import ModelDynamics, NormalBank, SimulationPlan, estimate, simulate_forwards, time_grid
from .params import MODEL_TYPES, CaseIIParams, CaseIParams, StaticSabrParams, model_name

NU_FLOOR = 1e-4
ALPHA_FLOOR = 1e-6

DEFAULT_BOUNDS = {
    "alpha": (ALPHA_FLOOR, 2.0),
    "beta": (0.0, 1.0),
    "nu": (NU_FLOOR, 10.0),
    "nu0": (NU_FLOOR, 10.0),
    "rho": (-1.0, 1.0),
    "rho0": (-1.0, 1.0),
    "a": (0.0, 150.0),
    "b": (0.0, 150.0),
    "q_rho": (-15.0, 15.0),
    "q_nu": (-15.0, 15.0),
    "d_rho": (-1.0, 1.0),
    "d_nu": (-1.0, 1.0),
}

PARAM_NAMES = {
    "static": ("alpha", "beta", "nu", "rho"),
    "case1": ("alpha", "beta", "rho0", "nu0", "a", "b"),
    "case2": ("alpha", "beta", "rho0", "q_rho", "d_rho", "nu0", "q_nu", "d_nu", "a", "b"),
}

# The annealer works on asinh(x / scale) for parameters whose useful range
# sits near zero inside a wide box; the map is monotone and keeps 0 reachable.
SEARCH_SCALES = {
    "a": 1e-3,
    "b": 1e-3,
    "q_rho": 1e-2,
    "q_nu": 1e-2,
    "nu": 1e-2,
    "nu0": 1e-2,
}

# Technique I: the cost scale is ~1e-2, far below the generic default t0
TECHNIQUE_I_SCHEDULE = AnnealingSchedule(t0=0.1, step_scale=1.0, t_min=1e-7)
# Technique II refines a warm start: cold, fairly local, about 3600 simulations
TECHNIQUE_II_SCHEDULE = AnnealingSchedule(
    t0=0.01, cooling=0.85, chain_length=20, workers=8, t_min=1e-5, max_evals=3600, step_scale=0.1
)
TECHNIQUE_II_PLAN = SimulationPlan(num_paths=2**16)

# neutral starting values; alpha is replaced by an ATM estimate when free
START_VALUES = {
    "alpha": 0.2,
    "beta": 1.0,
    "nu": 0.5,
    "nu0": 0.5,
    "rho": 0.0,
    "rho0": 0.0,
    "a": 1.0,
    "b": 1.0,
    "q_rho": 0.0,
    "q_nu": 0.0,
    "d_rho": 0.0,
    "d_nu": 0.0,
}


# -- market data --------------------------------------------------------------


@dataclass(frozen=True)
class SurfaceSlice:
    maturity: float
    rate: float
    dividend: float
    strikes: tuple
    vols: tuple

    def __post_init__(self):
        object.__setattr__(self, "strikes", tuple(float(k) for k in self.strikes))
        object.__setattr__(self, "vols", tuple(float(v) for v in self.vols))

    def forward(self, spot):
        return spot * math.exp((self.rate - self.dividend) * self.maturity)


@dataclass(frozen=True)
class VolSurface:
    """Spot plus one smile of (strike, implied vol) quotes per maturity.

    Rates, dividend yields and vols are decimals; strikes are absolute.
    """

    spot: float
    slices: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "slices", tuple(self.slices))
        if not self.spot > 0:
            raise ValidationError(f"spot must be positive, got {self.spot}")
        if not self.slices:
            raise ValidationError("a surface needs at least one maturity slice")
        prev = 0.0
        for i, s in enumerate(self.slices):
            name = f"slice {i} (T={s.maturity})"
            if not s.maturity > prev:
                raise ValidationError(f"{name}: maturities must be positive and strictly increasing")
            prev = s.maturity
            if len(s.strikes) == 0:
                raise ValidationError(f"{name}: empty quote block")
            if len(s.strikes) != len(s.vols):
                raise ValidationError(f"{name}: {len(s.strikes)} strikes but {len(s.vols)} vols")
            if s.strikes[0] <= 0 or any(b <= a for a, b in zip(s.strikes, s.strikes[1:])):
                raise ValidationError(f"{name}: strikes must be positive and strictly increasing")
            if any(not v > 0 for v in s.vols):
                raise ValidationError(f"{name}: all vols must be positive")

    @property
    def num_quotes(self):
        return sum(len(s.strikes) for s in self.slices)

    @property
    def maturities(self):
        return tuple(s.maturity for s in self.slices)

    def forwards(self):
        return [s.forward(self.spot) for s in self.slices]

    @cached_property
    def _prices(self):
        return tuple(
            np.asarray(black_scholes_call(self.spot, np.array(s.strikes), s.rate, s.dividend, s.maturity, np.array(s.vols)))
            for s in self.slices
        )

    def market_values(self, quantity="vol"):
        """Per-slice arrays of quoted vols or of their Black-Scholes call prices."""
        if quantity == "vol":
            return [np.array(s.vols) for s in self.slices]
        if quantity == "price":
            return [p.copy() for p in self._prices]
        raise DomainError(f"quantity must be 'vol' or 'price', got {quantity!r}")

    def atm_vol(self, index=0):
        """Quoted vol interpolated linearly in strike at the forward (flat outside)."""
        s = self.slices[index]
        return float(np.interp(s.forward(self.spot), s.strikes, s.vols))


# -- costs ----------------------------------------------------------------------


def _slice_cost(market, model):
    market = np.asarray(market, dtype=float)
    if np.any(market == 0):
        raise DomainError("market value 0 makes the relative error undefined")
    rel = (market - np.asarray(model, dtype=float)) / market
    return float(np.sum(rel * rel))


def cost_individual(surface: VolSurface, slice_index, model_eval, quantity="vol"):
    """Sum of squared relative errors over one maturity.

    ``model_eval(strikes, slice_index)`` returns model values for the
    strikes of that slice.
    """
    if not 0 <= slice_index < len(surface.slices):
        raise DomainError(f"slice index {slice_index} out of range")
    market = surface.market_values(quantity)[slice_index]
    strikes = np.array(surface.slices[slice_index].strikes)
    return _slice_cost(market, model_eval(strikes, slice_index))


def cost_joint(surface: VolSurface, model_eval, quantity="vol"):
    """Sum of :func:`cost_individual` over every maturity."""
    total = 0
    for i in range(len(surface.slices)):
        total += cost_individual(surface, i, model_eval, quantity)
    return total


# -- reports --------------------------------------------------------------------


@dataclass(frozen=True)
class QuoteRow:
    maturity: float
    strike: float
    market: float
    model: float

    @property
    def rel_error(self):
        return abs(self.market - self.model) / self.market


@dataclass
class CalibrationReport:
    model: str
    technique: str
    quantity: str
    params: object
    cost: float
    rows: list
    seed: int | None = None
    wall_time: float = 0.0
    evals: int = 0
    fixed: dict = field(default_factory=dict)
    mean_rel_error: float = field(init=False)
    max_rel_error: float = field(init=False)

    def __post_init__(self):
        self.mean_rel_error, self.max_rel_error = aggregate_errors(self.rows)

    def to_dict(self):
        return {
            "model": self.model,
            "technique": self.technique,
            "quantity": self.quantity,
            "params": self.params.to_dict(),
            "fixed": dict(self.fixed),
            "cost": self.cost,
            "mean_rel_error": self.mean_rel_error,
            "max_rel_error": self.max_rel_error,
            "seed": self.seed,
            "evals": self.evals,
            "wall_time": self.wall_time,
            "rows": [
                {"T": r.maturity, "K": r.strike, "market": r.market, "model": r.model, "rel_error": r.rel_error}
                for r in self.rows
            ],
        }


def aggregate_errors(rows):
    if not rows:
        return float("nan"), float("nan")
    errs = np.array([r.rel_error for r in rows])
    return float(np.mean(errs)), float(np.max(errs))


# -- model evaluators -----------------------------------------------------------


def vol_evaluator(params, surface: VolSurface, nodes=64):
    """``model_eval`` giving closed-form implied vols for every slice."""
    forwards = surface.forwards()

    def model_eval(strikes, i):
        s = surface.slices[i]
        if isinstance(params, StaticSabrParams):
            return static_implied_vol(params, strikes, forwards[i], s.maturity)
        coeffs = dyn_coeffs(params, s.maturity, nodes)
        return dynamic_implied_vol(coeffs, params.alpha, params.beta, strikes, forwards[i], s.maturity)

    return model_eval


def formula_price_evaluator(params, surface: VolSurface, nodes=64):
    """Black-Scholes prices of the closed-form implied vols."""
    vols = vol_evaluator(params, surface, nodes)

    def model_eval(strikes, i):
        s = surface.slices[i]
        return black_scholes_call(surface.spot, strikes, s.rate, s.dividend, s.maturity, np.maximum(vols(strikes, i), 0.0))

    return model_eval


def mc_surface_prices(params, surface: VolSurface, plan: SimulationPlan, bank=None):
    """Monte Carlo call prices for every quote, as a list of per-slice estimate lists.

    With ``beta = 1`` the log-forward increments do not depend on the
    starting forward, so one simulation serves every maturity; otherwise each
    slice gets its own simulation from its own forward.  Either way every
    slice sees the same random numbers for the same parameters.
    """
    model = ModelDynamics(params)
    out = []
    if params.beta == 1.0:
        horizon = surface.slices[-1].maturity
        nodes = [len(time_grid(s.maturity, plan.dt, plan.final_step)[0]) for s in surface.slices]
        rel = simulate_forwards(model, 1.0, params.alpha, horizon, plan, record=nodes, bank=bank)
        terminals = [s.forward(surface.spot) * rel[j] for j, s in enumerate(surface.slices)]
    else:
        terminals = [
            simulate_forwards(model, s.forward(surface.spot), params.alpha, s.maturity, plan, bank=bank)[0]
            for s in surface.slices
        ]
    for s, f_t in zip(surface.slices, terminals):
        disc = math.exp(-s.rate * s.maturity)
        out.append([estimate(disc * np.maximum(f_t - k, 0.0)) for k in s.strikes])
    return out


def mc_price_evaluator(params, surface: VolSurface, plan: SimulationPlan, bank=None):
    prices = [np.array([e.value for e in row]) for row in mc_surface_prices(params, surface, plan, bank)]

    def model_eval(strikes, i):
        return prices[i]

    return model_eval


def report_rows(surface: VolSurface, model_eval, quantity="vol"):
    rows = []
    market = surface.market_values(quantity)
    for i, s in enumerate(surface.slices):
        model = np.asarray(model_eval(np.array(s.strikes), i), dtype=float)
        for k, m, v in zip(s.strikes, market[i], model):
            rows.append(QuoteRow(s.maturity, k, float(m), float(v)))
    return rows


# -- beta and alpha pre-estimates ------------------------------------------------


def estimate_beta_loglog(history):
    """``beta = 1 + slope`` of the regression of ``log atm_vol`` on ``log forward``, clipped to [0, 1]."""
    data = np.asarray(history, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 2:
        raise DomainError("history must be a sequence of at least two (forward, atm_vol) pairs")
    if np.any(data <= 0):
        raise DomainError("forwards and ATM vols must be positive")
    x, y = np.log(data[:, 0]), np.log(data[:, 1])
    if np.ptp(x) == 0.0:
        raise DomainError("degenerate regression: all forwards are equal")
    slope = np.polyfit(x, y, 1)[0]
    return float(np.clip(1.0 + slope, 0.0, 1.0))


def estimate_alpha_atm(beta, forward, atm_vol):
    """ATM collapse of the smile: ``alpha = forward^(1 - beta) * atm_vol``."""
    if not forward > 0 or not atm_vol > 0:
        raise DomainError(f"forward and atm_vol must be positive, got {forward}, {atm_vol}")
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [0, 1], got {beta}")
    return forward ** (1.0 - beta) * atm_vol


# -- generic driver -------------------------------------------------------------


@dataclass
class Problem:
    """Maps between a parameter dataclass and the annealer's free-coordinate vector."""

    model: str
    fixed: dict
    bounds: dict
    horizon: float | None = None

    def __post_init__(self):
        if self.model not in PARAM_NAMES:
            raise DomainError(f"unknown model variant {self.model!r}")
        names = PARAM_NAMES[self.model]
        unknown = set(self.fixed) - set(names)
        if unknown:
            raise DomainError(f"cannot fix unknown parameters {sorted(unknown)} of model {self.model!r}")
        unknown = set(self.bounds) - set(DEFAULT_BOUNDS)
        if unknown:
            raise DomainError(f"bounds given for unknown parameters {sorted(unknown)}")
        self.fixed = {k: float(v) for k, v in self.fixed.items()}
        merged = dict(DEFAULT_BOUNDS)
        merged.update({k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()})
        for k, (lo, hi) in merged.items():
            if not lo < hi:
                raise DomainError(f"bounds for {k}: lower {lo} must be below upper {hi}")
        self.bounds = merged
        self.free = tuple(n for n in names if n not in self.fixed)

    def to_search(self, values):
        """Parameter values (in ``free`` order) to annealer coordinates."""
        return np.array([_forward_map(n, v) for n, v in zip(self.free, values)])

    def from_search(self, x):
        return [_inverse_map(n, v) for n, v in zip(self.free, x)]

    def space(self):
        lower = self.to_search([self.bounds[n][0] for n in self.free])
        upper = self.to_search([self.bounds[n][1] for n in self.free])
        feasible = self.feasible if self.model == "case2" else None
        return SearchSpace(lower, upper, feasible)

    def build(self, x):
        """Parameter set for the annealer coordinates ``x``."""
        values = dict(self.fixed)
        lo_hi = [self.bounds[n] for n in self.free]
        # clip away round-off of the coordinate map at the box edges
        values.update((n, min(max(v, lo), hi)) for n, v, (lo, hi) in zip(self.free, self.from_search(x), lo_hi))
        if self.model == "case2" and self.horizon is not None:
            values["horizon"] = self.horizon
        return MODEL_TYPES[self.model](**values)

    def feasible(self, x):
        try:
            self.build(x)
        except SabrError:
            return False
        return True

    def start(self, surface: VolSurface, given=None):
        if given is not None:
            values = given if isinstance(given, dict) else given.to_dict()
        else:
            beta = self.fixed.get("beta", START_VALUES["beta"])
            values = dict(START_VALUES)
            values["alpha"] = estimate_alpha_atm(beta, surface.slices[0].forward(surface.spot), surface.atm_vol(0))
        x = [min(max(float(values[n]), self.bounds[n][0]), self.bounds[n][1]) for n in self.free]
        return self.to_search(x)


def _forward_map(name, value):
    scale = SEARCH_SCALES.get(name)
    return float(value) if scale is None else math.asinh(value / scale)


def _inverse_map(name, value):
    scale = SEARCH_SCALES.get(name)
    return float(value) if scale is None else scale * math.sinh(value)


def _run(problem: Problem, objective, surface, schedule, start, technique, quantity, evaluator, max_workers=1):
    t0 = time.perf_counter()
    if problem.free:
        space = problem.space()
        x0 = problem.start(surface, start)
        if not space.admits(x0):
            raise DomainError(f"starting point {dict(zip(problem.free, x0))} is infeasible")
        result = minimize(objective, space, schedule, x0, max_workers=max_workers)
        best, evals = problem.build(result.best_point), result.evals
    else:
        best, evals = problem.build(np.array([])), 0
    model_eval = evaluator(best)
    cost = cost_joint(surface, model_eval, quantity)
    rows = report_rows(surface, model_eval, quantity)
    return CalibrationReport(
        model=problem.model,
        technique=technique,
        quantity=quantity,
        params=best,
        cost=cost,
        rows=rows,
        seed=schedule.seed,
        wall_time=time.perf_counter() - t0,
        evals=evals,
        fixed=dict(problem.fixed),
    )


def _single_slice(surface: VolSurface, index):
    if not 0 <= index < len(surface.slices):
        raise DomainError(f"slice index {index} out of range")
    return VolSurface(surface.spot, (surface.slices[index],), surface.label)


def calibrate_formula(surface: VolSurface, model, bounds=None, schedule=None, fixed=None, start=None, max_workers=1):
    """Technique I: fit closed-form implied vols of ``model`` to every quote of ``surface``."""
    schedule = schedule or TECHNIQUE_I_SCHEDULE
    problem = Problem(model, dict(fixed or {}), dict(bounds or {}), horizon=surface.slices[-1].maturity)
    n_free = len(problem.free)
    if surface.num_quotes < n_free:
        raise DomainError(f"{surface.num_quotes} quotes cannot determine {n_free} free parameters")

    def objective(x):
        try:
            params = problem.build(x)
            return cost_joint(surface, vol_evaluator(params, surface), "vol")
        except SabrError:
            return math.inf

    return _run(
        problem, objective, surface, schedule, start, "T_I", "vol",
        lambda p: vol_evaluator(p, surface), max_workers,
    )


def calibrate_static_T1(surface: VolSurface, slice_index, bounds=None, schedule=None, fixed=None, start=None):
    """Static model fitted to one maturity (sum of squared relative vol errors)."""
    return calibrate_formula(_single_slice(surface, slice_index), "static", bounds, schedule, fixed, start)


def calibrate_dynamic_case1_T1(surface: VolSurface, bounds=None, schedule=None, fixed=None, start=None):
    """Case I dynamic model fitted jointly to all maturities."""
    if len(surface.slices) < 2:
        raise DomainError("a joint dynamic calibration needs at least two maturities")
    return calibrate_formula(surface, "case1", bounds, schedule, fixed, start)


def calibrate_case2_T2(
    surface: VolSurface, bounds=None, schedule=None, plan: SimulationPlan | None = None, fixed=None, start=None
):
    """Case II dynamic model fitted jointly to Monte Carlo prices.

    Every candidate is priced with the same ``plan`` (and hence the same
    random numbers).  Candidates whose parameter functions leave
    ``rho in [-1, 1]`` or ``nu > 0`` are rejected before any simulation.

    Without ``start`` the search begins from a Technique I Case I fit
    (``q_rho = d_rho = q_nu = d_nu = 0``) made with the same seed, which
    costs about a minute and saves most of the expensive Monte Carlo budget.
    Fixing ``beta = 1`` lets one simulation serve every maturity.
    """
    if len(surface.slices) < 2:
        raise DomainError("a joint dynamic calibration needs at least two maturities")
    schedule = schedule or TECHNIQUE_II_SCHEDULE
    plan = plan or TECHNIQUE_II_PLAN
    fixed = dict(fixed or {})
    problem = Problem("case2", fixed, dict(bounds or {}), horizon=surface.slices[-1].maturity)
    if start is None and problem.free:
        start = case2_warm_start(surface, fixed, seed=schedule.seed)
    bank = NormalBank(plan, len(time_grid(surface.slices[-1].maturity, plan.dt, plan.final_step)[0]))

    def objective(x):
        try:
            params = problem.build(x)
            return cost_joint(surface, mc_price_evaluator(params, surface, plan, bank), "price")
        except SabrError:
            return math.inf

    return _run(
        problem, objective, surface, schedule, start, "T_II", "price",
        lambda p: mc_price_evaluator(p, surface, plan, bank),
    )


def case2_warm_start(surface: VolSurface, fixed=None, seed=0, schedule=None):
    """Case II starting values from a Technique I Case I fit.

    Fixed values shared by both models are honored in the Case I fit; fixed
    Case II-only values override the zero slopes and asymptotes.
    """
    fixed = dict(fixed or {})
    shared = {k: v for k, v in fixed.items() if k in PARAM_NAMES["case1"]}
    schedule = schedule or TECHNIQUE_I_SCHEDULE.replace(seed=seed)
    fit = calibrate_formula(surface, "case1", schedule=schedule, fixed=shared)
    values = {**fit.params.to_dict(), "q_rho": 0.0, "d_rho": 0.0, "q_nu": 0.0, "d_nu": 0.0}
    values.update(fixed)
    return values


def evaluate(surface: VolSurface, params, technique="T_I", plan: SimulationPlan | None = None):
    """Tabulate model against market without optimizing (every parameter fixed)."""
    model = model_name(params)
    if technique == "T_I":
        model_eval, quantity = vol_evaluator(params, surface), "vol"
    elif technique == "T_II":
        model_eval, quantity = mc_price_evaluator(params, surface, plan or SimulationPlan()), "price"
    else:
        raise DomainError(f"technique must be 'T_I' or 'T_II', got {technique!r}")
    return CalibrationReport(
        model=model,
        technique=technique,
        quantity=quantity,
        params=params,
        cost=cost_joint(surface, model_eval, quantity),
        rows=report_rows(surface, model_eval, quantity),
        seed=plan.seed if plan is not None and technique == "T_II" else None,
        fixed=params.to_dict(),
    )

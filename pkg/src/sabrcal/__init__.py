"""Calibration and pricing toolkit for static and dynamic SABR models."""
from .analytics import dynamic_implied_vol, forward_price, model_implied_vol, static_implied_vol
from .annealing import AnnealingSchedule, AnnealResult, SearchSpace, minimize, propose
from .blackscholes import black_scholes_call, implied_vol_from_price
from .calibration import (
    CalibrationReport,
    SurfaceSlice,
    VolSurface,
    calibrate_case2_T2,
    calibrate_dynamic_case1_T1,
    calibrate_static_T1,
    cost_individual,
    cost_joint,
    estimate_alpha_atm,
    estimate_beta_loglog,
    evaluate,
)
from .coefficients import dyn_coeffs, dyn_coeffs_case1, dyn_coeffs_case2
from .dataio import RunConfig, parse_surface, serialize_surface
from .errors import (
    ConfigError,
    ConstraintError,
    DomainError,
    NumericDomainError,
    ParseError,
    SabrError,
    ValidationError,
)
from .montecarlo import (
    CliquetSpec,
    ModelDynamics,
    PriceEstimate,
    SimulationPlan,
    price_cliquet,
    price_european_batch,
    price_european_call,
)
from .params import CaseIIParams, CaseIParams, DynCoefficients, StaticSabrParams

__version__ = "0.1.0"

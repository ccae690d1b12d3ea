"""Monte Carlo pricing under static and dynamic SABR dynamics.

Paths follow the log-Euler scheme

    alpha_{i+1} = alpha_i exp(nu_i Z1 sqrt(h) - nu_i^2 h / 2)
    vhat        = alpha_i F_i^(beta - 1)
    F_{i+1}     = F_i exp(vhat (rho_i Z1 + sqrt(1 - rho_i^2) Z2) sqrt(h) - vhat^2 h / 2)

carried out on ``log F`` and ``log alpha`` so both stay strictly positive.
``nu_i`` and ``rho_i`` are the parameter functions evaluated at the end of
step ``i`` (time ``(i + 1) h``), and the grid has ``floor(T / dt)`` steps of
``dt`` unless ``final_step="exact"`` appends a short step landing on ``T``.

Paths are split into blocks of ``block_size``; block ``k`` always draws from
substream ``(seed, k)`` so estimates do not depend on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, DomainError, NumericDomainError
from .params import CaseIIParams, CaseIParams, StaticSabrParams, model_name
from .rng import box_muller, substream

GRID_EPS = 1e-9


@dataclass(frozen=True)
class SimulationPlan:
    num_paths: int = 2**20
    dt: float = 1.0 / 250.0
    seed: int = 20111230
    workers: int = 1
    block_size: int = 2**16
    final_step: str = "truncate"

    def __post_init__(self):
        if int(self.num_paths) != self.num_paths or self.num_paths < 1:
            raise DomainError(f"num_paths must be a positive integer, got {self.num_paths}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.workers < 1 or self.block_size < 1:
            raise DomainError("workers and block_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.final_step not in ("truncate", "exact"):
            raise DomainError(f"final_step must be 'truncate' or 'exact', got {self.final_step!r}")

    def blocks(self):
        starts = range(0, self.num_paths, self.block_size)
        return [(k, min(self.block_size, self.num_paths - s)) for k, s in enumerate(starts)]

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return SimulationPlan(**values)


def time_grid(maturity, dt, final_step="truncate"):
    """Step sizes and step end times for a simulation up to ``maturity``."""
    if not maturity > 0:
        raise DomainError(f"maturity must be positive, got {maturity}")
    m = int(math.floor(maturity / dt + GRID_EPS))
    if m < 1:
        raise DomainError(f"maturity {maturity} is shorter than one time step {dt}")
    steps = [dt] * m
    rest = maturity - m * dt
    if final_step == "exact" and rest > GRID_EPS * dt:
        steps.append(rest)
    steps = np.asarray(steps)
    return steps, np.cumsum(steps)


@dataclass(frozen=True)
class ModelDynamics:
    """Parameter functions of one SABR variant, ready to be tabulated on a grid."""

    params: StaticSabrParams | CaseIParams | CaseIIParams

    @property
    def variant(self):
        return {"static": "Static", "case1": "CaseI", "case2": "CaseII"}[model_name(self.params)]

    @property
    def alpha(self):
        return self.params.alpha

    @property
    def beta(self):
        return self.params.beta

    def tables(self, times):
        """``(nu(t_i), rho(t_i))`` on the grid, checked for admissibility."""
        times = np.asarray(times, dtype=float)
        nu = np.asarray(self.params.nu_t(times), dtype=float)
        rho = np.asarray(self.params.rho_t(times), dtype=float)
        bad = [(float(t), f"nu={v:.6g}") for t, v in zip(times, nu) if not v >= 0]
        bad += [(float(t), f"rho={r:.6g}") for t, r in zip(times, rho) if not -1.0 <= r <= 1.0]
        if bad:
            raise ConstraintError(f"parameter functions inadmissible on the time grid: {bad[:8]}", bad)
        return nu, rho


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    std_error: float
    num_paths: int

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error, "num_paths": self.num_paths}


@dataclass(frozen=True)
class CliquetSpec:
    """Sum of locally capped/floored periodic returns with a global clamp."""

    local_floor: float
    local_cap: float
    global_floor: float
    global_cap: float
    reset_dates: tuple

    def __post_init__(self):
        object.__setattr__(self, "reset_dates", tuple(float(d) for d in self.reset_dates))
        if self.local_floor > self.local_cap:
            raise DomainError("local floor exceeds local cap")
        if self.global_floor > self.global_cap:
            raise DomainError("global floor exceeds global cap")
        d = self.reset_dates
        if len(d) < 2:
            raise DomainError("a cliquet needs at least two reset dates")
        if d[0] <= 0 or any(b <= a for a, b in zip(d, d[1:])):
            raise DomainError(f"reset dates must be positive and strictly increasing, got {d}")

    @property
    def maturity(self):
        return self.reset_dates[-1]

    @classmethod
    def evenly_spaced(cls, maturity, count, local_floor, local_cap, global_floor, global_cap):
        dates = [i * maturity / count for i in range(1, count + 1)]
        return cls(local_floor, local_cap, global_floor, global_cap, dates)


class NormalBank:
    """Normals of a plan drawn once and reused by later simulations.

    A calibration that prices every candidate with the same plan sees the
    same numbers anyway; keeping them skips the Box-Muller transform, which
    dominates the cost of a step.  Holds ``16 * num_steps * num_paths`` bytes.
    """

    def __init__(self, plan: SimulationPlan, num_steps):
        self.plan = plan
        self.num_steps = int(num_steps)
        self._blocks = {}

    def block(self, k, n, steps):
        if steps > self.num_steps:
            raise DomainError(f"bank holds {self.num_steps} steps, {steps} requested")
        z = self._blocks.get(k)
        if z is None:
            gen = substream(self.plan.seed, k)
            z = np.empty((self.num_steps, 2, n))
            for i in range(self.num_steps):
                z[i, 0], z[i, 1] = box_muller(gen, n)
            self._blocks[k] = z
        return z


def _simulate_block(beta, nu, rho, steps, log_f0, log_a0, record, seed, bank, block, n):
    if bank is None:
        gen = substream(seed, block)
    else:
        bank_z = bank.block(block, n, len(steps))
    log_f = np.full(n, log_f0)
    log_a = np.full(n, log_a0)
    out = np.empty((len(record), n))
    slot = {step: j for j, step in enumerate(record)}
    sq = np.sqrt(steps)
    comp = np.sqrt(np.maximum(1.0 - rho * rho, 0.0))
    # overflow shows up as non-finite output and is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for i, h in enumerate(steps):
            z1, z2 = box_muller(gen, n) if bank is None else bank_z[i]
            if beta == 1.0:
                vhat = np.exp(log_a)
            else:
                vhat = np.exp(log_a + (beta - 1.0) * log_f)
            log_f += vhat * ((rho[i] * z1 + comp[i] * z2) * sq[i] - 0.5 * vhat * h)
            log_a += nu[i] * sq[i] * z1 - 0.5 * nu[i] * nu[i] * h
            j = slot.get(i + 1)
            if j is not None:
                out[j] = log_f
    if not np.all(np.isfinite(out)):
        raise NumericDomainError(f"non-finite forward in path block {block}")
    return np.exp(out)


def simulate_forwards(model: ModelDynamics, forward0, alpha0, maturity, plan: SimulationPlan, record=None, bank=None):
    """Simulated forwards at the grid nodes listed in ``record``.

    Parameters
    ----------
    record : sequence of int, optional
        Node indices (1 = after the first step).  Defaults to the final node.
    bank : NormalBank, optional
        Pre-drawn normals of ``plan``; the result is identical without it.

    Returns
    -------
    ndarray, shape (len(record), plan.num_paths)
    """
    if not forward0 > 0 or not alpha0 > 0:
        raise DomainError(f"forward0 and alpha0 must be positive, got {forward0}, {alpha0}")
    steps, times = time_grid(maturity, plan.dt, plan.final_step)
    nu, rho = model.tables(times)
    record = [len(steps)] if record is None else [int(r) for r in record]
    if any(not 1 <= r <= len(steps) for r in record):
        raise DomainError(f"record nodes {record} outside 1..{len(steps)}")
    if bank is not None and bank.plan.blocks() != plan.blocks() or bank is not None and bank.plan.seed != plan.seed:
        raise DomainError("normal bank was drawn for a different simulation plan")
    args = (model.beta, nu, rho, steps, math.log(forward0), math.log(alpha0), record, plan.seed, bank)
    blocks = plan.blocks()
    if plan.workers == 1 or len(blocks) == 1:
        parts = [_simulate_block(*args, k, n) for k, n in blocks]
    else:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            parts = list(pool.map(lambda kn: _simulate_block(*args, *kn), blocks))
    return np.concatenate(parts, axis=1)


def simulate_terminals(model: ModelDynamics, forward0, alpha0, maturity, plan: SimulationPlan):
    """Terminal forwards of ``plan.num_paths`` paths (block order)."""
    return simulate_forwards(model, forward0, alpha0, maturity, plan)[0]


def estimate(discounted_payoffs):
    x = np.asarray(discounted_payoffs, dtype=float)
    n = x.size
    if n < 2 or np.ptp(x) == 0.0:
        # a constant payoff is known exactly; np.mean could round it
        return PriceEstimate(float(x.flat[0]), 0.0, n)
    value = float(np.mean(x))
    return PriceEstimate(value, float(np.std(x, ddof=1) / math.sqrt(n)), n)


def _as_dynamics(model):
    return model if isinstance(model, ModelDynamics) else ModelDynamics(model)


def price_terminal_payoff(model, spot, rate, dividend, maturity, plan, payoff):
    """``exp(-rT) E[payoff(S_T)]`` for a vectorized ``payoff`` of terminal spot."""
    model = _as_dynamics(model)
    f0 = spot * math.exp((rate - dividend) * maturity)
    terminal = simulate_terminals(model, f0, model.alpha, maturity, plan)
    return estimate(math.exp(-rate * maturity) * payoff(terminal))


def price_european_batch(model, spot, strikes, rate, dividend, maturity, plan):
    """Call prices for every strike from one shared set of paths."""
    strikes = np.asarray(strikes, dtype=float)
    if strikes.ndim != 1 or np.any(strikes <= 0):
        raise DomainError(f"strikes must be a list of positive numbers, got {strikes}")
    if not spot > 0:
        raise DomainError(f"spot must be positive, got {spot}")
    model = _as_dynamics(model)
    f0 = spot * math.exp((rate - dividend) * maturity)
    terminal = simulate_terminals(model, f0, model.alpha, maturity, plan)
    disc = math.exp(-rate * maturity)
    return [estimate(disc * np.maximum(terminal - k, 0.0)) for k in strikes]


def price_european_call(model, spot, strike, rate, dividend, maturity, plan):
    return price_european_batch(model, spot, [strike], rate, dividend, maturity, plan)[0]


def reset_nodes(dates, dt, final_step="truncate", maturity=None):
    """Indices of the grid nodes the reset dates snap to."""
    maturity = dates[-1] if maturity is None else maturity
    _, times = time_grid(maturity, dt, final_step)
    nodes = []
    for d in dates:
        j = int(np.argmin(np.abs(times - d)))
        if abs(times[j] - d) > dt / 2.0 + GRID_EPS:
            raise DomainError(f"reset date {d} is more than dt/2 away from every grid node")
        nodes.append(j + 1)
    if len(set(nodes)) != len(nodes):
        raise DomainError(f"reset dates {dates} collapse onto the same grid nodes {nodes}")
    return nodes, times


def cliquet_payoff(spots, spec: CliquetSpec):
    """Globally clamped sum of locally clamped returns; ``spots`` has one row per reset date."""
    returns = spots[1:] / spots[:-1] - 1.0
    local = np.clip(returns, spec.local_floor, spec.local_cap).sum(axis=0)
    return np.maximum(spec.global_floor, np.minimum(spec.global_cap, local))


def price_cliquet(model, spot, rate, dividend, spec: CliquetSpec, plan: SimulationPlan):
    """Cliquet price; spot levels are recovered from forwards at the reset nodes."""
    if not spot > 0:
        raise DomainError(f"spot must be positive, got {spot}")
    model = _as_dynamics(model)
    T = spec.maturity
    nodes, times = reset_nodes(spec.reset_dates, plan.dt, plan.final_step)
    f0 = spot * math.exp((rate - dividend) * T)
    fwd = simulate_forwards(model, f0, model.alpha, T, plan, record=nodes)
    node_times = times[np.asarray(nodes) - 1]
    spots = fwd * np.exp(-(rate - dividend) * (T - node_times))[:, None]
    return estimate(math.exp(-rate * T) * cliquet_payoff(spots, spec))

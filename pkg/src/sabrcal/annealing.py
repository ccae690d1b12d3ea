"""Synchronous parallel simulated annealing over a box.

At every temperature level each of ``groups * workers`` logical chains runs a
Metropolis walk of ``chain_length`` proposals starting from the shared
incumbent.  Chain end states are min-reduced inside each group, the group
winners are min-reduced against each other and against the previous
incumbent, and the winner seeds every chain at the next (cooler) level.

Each chain draws from the substream ``(seed, level, global_chain_index)``,
so the result does not depend on how chains are scheduled onto threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .rng import substream


@dataclass(frozen=True)
class AnnealingSchedule:
    t0: float = 10.0
    cooling: float = 0.95
    chain_length: int = 100
    workers: int = 8
    groups: int = 1
    t_min: float = 1e-5
    max_evals: int = 10**7
    seed: int = 0
    step_scale: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.cooling < 1.0:
            raise DomainError(f"cooling must lie in (0, 1), got {self.cooling}")
        if not 0.0 < self.t_min < self.t0:
            raise DomainError(f"need 0 < t_min < t0, got t_min={self.t_min}, t0={self.t0}")
        for name in ("chain_length", "workers", "groups", "max_evals"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if not self.step_scale > 0:
            raise DomainError(f"step_scale must be positive, got {self.step_scale}")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def num_chains(self):
        return self.workers * self.groups

    def levels(self):
        """Temperatures ``t0 * cooling**k`` down to (and including the last one above) ``t_min``."""
        k = 0
        while True:
            t = self.t0 * self.cooling**k
            if t < self.t_min:
                return
            yield k, t
            k += 1

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return AnnealingSchedule(**values)


@dataclass
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray
    feasible: Callable[[np.ndarray], bool] | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise DomainError("lower and upper must be 1-d arrays of equal length")
        if not np.all(self.lower < self.upper):
            raise DomainError(f"every lower bound must be below its upper bound: {self.lower} vs {self.upper}")

    @property
    def dim(self):
        return self.lower.size

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def admits(self, x):
        return self.contains(x) and (self.feasible is None or bool(self.feasible(x)))


@dataclass
class AnnealResult:
    best_point: np.ndarray
    best_value: float
    evals: int
    temperature_trace: list = field(default_factory=list)
    nan_evals: int = 0
    rejected: int = 0


def reflect(x, lower, upper):
    """Fold every coordinate back into ``[lower, upper]`` by mirror reflection."""
    width = upper - lower
    y = np.mod(x - lower, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lower + y


def propose(current, temperature, space: SearchSpace, rng: np.random.Generator, schedule: AnnealingSchedule):
    """Uniform box step of half-width ``step_scale * range * min(1, T / t0)``, reflected into the box."""
    radius = schedule.step_scale * (space.upper - space.lower) * min(1.0, temperature / schedule.t0)
    step = rng.uniform(-1.0, 1.0, size=space.dim) * radius
    return reflect(np.asarray(current, dtype=float) + step, space.lower, space.upper)


def _safe(value):
    value = float(value)
    return math.inf if math.isnan(value) else value


def _run_chain(objective, space, schedule, level, temperature, chain, start, f_start, steps):
    rng = substream(schedule.seed, level, chain)
    x, fx = start, f_start
    best_x, best_f = x, fx
    evals = nans = rejected = 0
    for _ in range(steps):
        y = propose(x, temperature, space, rng, schedule)
        u = rng.random()
        if not space.admits(y):
            rejected += 1
            continue
        raw = float(objective(y))
        evals += 1
        if math.isnan(raw):
            nans += 1
        fy = _safe(raw)
        if fy <= fx or u < math.exp(-(fy - fx) / temperature):
            x, fx = y, fy
            if fx < best_f:
                best_x, best_f = x, fx
    return x, fx, best_x, best_f, evals, nans, rejected


def minimize(objective, space: SearchSpace, schedule: AnnealingSchedule, start, max_workers=1) -> AnnealResult:
    """Minimize ``objective`` over ``space`` from the feasible point ``start``.

    ``max_workers`` only controls how many threads execute the logical
    chains; it has no effect on the result.
    """
    start = np.asarray(start, dtype=float)
    if start.shape != space.lower.shape:
        raise DomainError(f"start has shape {start.shape}, expected {space.lower.shape}")
    if not space.admits(start):
        raise DomainError(f"start point {start} is outside the box or infeasible")

    raw = float(objective(start))
    incumbent, f_inc = start, _safe(raw)
    best, f_best = incumbent, f_inc
    evals, nans, rejected = 1, int(math.isnan(raw)), 0
    trace = []
    n_chains = schedule.num_chains
    pool = ThreadPoolExecutor(max_workers) if max_workers > 1 else None
    try:
        for level, temp in schedule.levels():
            remaining = schedule.max_evals - evals
            if remaining <= 0:
                break
            steps = min(schedule.chain_length, -(-remaining // n_chains))
            jobs = [
                (objective, space, schedule, level, temp, c, incumbent, f_inc, steps) for c in range(n_chains)
            ]
            if pool is None:
                results = [_run_chain(*job) for job in jobs]
            else:
                results = list(pool.map(lambda job: _run_chain(*job), jobs))
            for _, _, bx, bf, ev, nn, rj in results:
                evals += ev
                nans += nn
                rejected += rj
                if bf < f_best:
                    best, f_best = bx, bf
            # two-level reduction over chain end states: within groups, then across
            winners = []
            for g in range(schedule.groups):
                group = results[g * schedule.workers : (g + 1) * schedule.workers]
                winners.append(min(group, key=lambda r: r[1]))
            x_end, f_end = min(((w[0], w[1]) for w in winners), key=lambda r: r[1])
            if f_end < f_inc:
                incumbent, f_inc = x_end, f_end
            trace.append((temp, f_inc))
    finally:
        if pool is not None:
            pool.shutdown()
    return AnnealResult(
        best_point=np.array(best),
        best_value=f_best,
        evals=evals,
        temperature_trace=trace,
        nan_evals=nans,
        rejected=rejected,
    )

"""Modulation-parameter search against a pluggable converter evaluator.

Candidates are points in the strategy's phase-shift box (d0 alone for SPS up
to all three ratios for TPS).  The power-delivery requirement is handled as
a quadratic exterior penalty on top of the normalized objective, so swarms
can cross infeasible regions instead of stalling at the constraint boundary.
Evaluators are deterministic; anything that maps (converter, operating
point) to metrics plugs in, which is how the analytical oracle and the
trained surrogate stay interchangeable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .physics import (
    ConverterParams,
    ModulationParams,
    PerformanceMetrics,
    SamplingGrid,
    Strategy,
    compute_metrics,
    solve_steady_state,
    sps_shift_for_power,
)
from .surrogate import OperatingPoint, SurrogatePair, rollout_batch

GOALS = ("min_current_stress", "min_rms_current", "max_zvs_range")


class InfeasibleTargetError(ValueError):
    """Requested power cannot be delivered inside the search space."""


@dataclass(frozen=True)
class SearchSpace:
    """Active phase-shift dimensions and their bounds for one strategy."""

    strategy: Strategy
    d0_bounds: tuple[float, float] = (0.0, 0.5)
    d_min: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.d0_bounds[0] >= self.d0_bounds[1]:
            raise ValueError("d0 bounds must be increasing")
        if not 0.0 < self.d_min < 1.0:
            raise ValueError("d_min must lie in (0, 1)")

    @property
    def dimension_names(self) -> tuple[str, ...]:
        return {
            Strategy.SPS: ("d0",),
            Strategy.EPS: ("d0", "d1"),
            Strategy.DPS: ("d0", "d1"),
            Strategy.TPS: ("d0", "d1", "d2"),
        }[self.strategy]

    def bounds(self) -> list[tuple[float, float]]:
        # EPS keeps d2 pinned at 1; its free duty stays strictly below 1 so
        # the "exactly one duty at 1" invariant cannot be tripped at the edge
        duty_hi = 1.0 - 1.0 / 256.0 if self.strategy is Strategy.EPS else 1.0
        out: list[tuple[float, float]] = [self.d0_bounds]
        for _ in self.dimension_names[1:]:
            out.append((self.d_min, duty_hi))
        return out

    def to_modulation(self, x: np.ndarray) -> ModulationParams:
        if self.strategy is Strategy.SPS:
            return ModulationParams(Strategy.SPS, float(x[0]))
        if self.strategy is Strategy.EPS:
            return ModulationParams(Strategy.EPS, float(x[0]), float(x[1]), 1.0)
        if self.strategy is Strategy.DPS:
            return ModulationParams(Strategy.DPS, float(x[0]), float(x[1]), float(x[1]))
        return ModulationParams(Strategy.TPS, float(x[0]), float(x[1]), float(x[2]))

    def to_vector(self, mp: ModulationParams) -> np.ndarray:
        if self.strategy is Strategy.SPS:
            return np.array([mp.d0])
        if self.strategy in (Strategy.EPS, Strategy.DPS):
            return np.array([mp.d0, mp.d1])
        return np.array([mp.d0, mp.d1, mp.d2])


@dataclass(frozen=True)
class ObjectiveSpec:
    goal: str
    target_power: float
    power_tol: float = 0.01
    # large enough that the equilibrium power miss stays within ~5% of the
    # tolerance band for objective slopes seen on this converter family
    penalty_weight: float = 10_000.0

    def __post_init__(self) -> None:
        if self.goal not in GOALS:
            raise ValueError(f"goal must be one of {GOALS}, got {self.goal!r}")
        if self.target_power <= 0:
            raise ValueError("target_power must be positive")
        if self.penalty_weight <= 0:
            raise ValueError("penalty_weight must be positive")


class OracleEvaluator:
    """Closed-form converter solution and metrics; the reference evaluator."""

    tag = "oracle"

    def __init__(self, grid: SamplingGrid):
        self.grid = grid

    def evaluate(self, cp: ConverterParams, op: OperatingPoint) -> PerformanceMetrics:
        cp_op = replace(cp, v_in=op.v_in, v_out=op.v_out)
        w = solve_steady_state(cp_op, op.mp, self.grid)
        return compute_metrics(cp_op, w)


class SurrogateEvaluator:
    """Trained pair rollout and metrics; batch evaluation runs one rollout."""

    tag = "surrogate"

    def __init__(self, pair: SurrogatePair, cp: ConverterParams):
        self.pair = pair
        self.cp = cp

    def evaluate(self, cp: ConverterParams, op: OperatingPoint) -> PerformanceMetrics:
        return self.evaluate_batch(cp, [op])[0]

    def evaluate_batch(self, cp: ConverterParams,
                       ops: list[OperatingPoint]) -> list[PerformanceMetrics]:
        rolls = rollout_batch(self.pair, ops, cp)
        out = []
        for op, r in zip(ops, rolls):
            cp_op = replace(cp, v_in=op.v_in, v_out=op.v_out)
            out.append(compute_metrics(cp_op, r.waveform, periodicity_tol=math.inf))
        return out


def objective_value(metrics: PerformanceMetrics, obj: ObjectiveSpec,
                    cp: ConverterParams) -> float:
    i_base = obj.target_power / cp.v_out
    if obj.goal == "min_current_stress":
        return metrics.i_pp / i_base
    if obj.goal == "min_rms_current":
        return metrics.i_rms / i_base
    flags = metrics.zvs_flags
    return 1.0 - (sum(flags) / len(flags) if flags else 1.0)


def fitness_from_metrics(metrics: PerformanceMetrics, obj: ObjectiveSpec,
                         cp: ConverterParams) -> float:
    miss = abs(metrics.p_avg - obj.target_power) / obj.target_power
    penalty = obj.penalty_weight * max(0.0, miss - obj.power_tol) ** 2
    return objective_value(metrics, obj, cp) + penalty


def evaluate_candidate(ev, cp: ConverterParams, op: OperatingPoint,
                       obj: ObjectiveSpec) -> float:
    return fitness_from_metrics(ev.evaluate(cp, op), obj, cp)


def _evaluate_many(ev, cp: ConverterParams, ops: list[OperatingPoint]
                   ) -> list[PerformanceMetrics]:
    if hasattr(ev, "evaluate_batch"):
        return ev.evaluate_batch(cp, ops)
    return [ev.evaluate(cp, op) for op in ops]


@dataclass
class LandscapePoint:
    mp: ModulationParams
    fitness: float
    p_avg: float
    i_pp: float
    zvs_complete: bool

    def to_dict(self) -> dict:
        return {"d0": self.mp.d0, "d1": self.mp.d1, "d2": self.mp.d2,
                "fitness": self.fitness, "p_avg": self.p_avg,
                "i_pp": self.i_pp, "zvs_complete": self.zvs_complete}


@dataclass
class OptimizationResult:
    best_mp: ModulationParams
    best_fitness: float
    metrics: PerformanceMetrics
    history: list[float]
    landscape: list[LandscapePoint]
    evaluator_tag: str
    seed: int
    feasible: bool
    evaluations: int

    def to_dict(self) -> dict:
        return {
            "best_mp": self.best_mp.to_dict(),
            "best_fitness": self.best_fitness,
            "metrics": self.metrics.to_dict(),
            "history": self.history,
            "landscape": [p.to_dict() for p in self.landscape],
            "evaluator_tag": self.evaluator_tag,
            "seed": self.seed,
            "feasible": self.feasible,
            "evaluations": self.evaluations,
        }


def _result(space: SearchSpace, obj: ObjectiveSpec, ev, cp: ConverterParams,
            op_base: OperatingPoint, best_x: np.ndarray, best_fit: float,
            history: list[float], seed: int, evaluations: int) -> OptimizationResult:
    best_mp = space.to_modulation(best_x)
    metrics = ev.evaluate(cp, replace(op_base, mp=best_mp))
    miss = abs(metrics.p_avg - obj.target_power) / obj.target_power
    # the exterior penalty leaves the optimum a hair outside the dead band;
    # a 5% margin on the tolerance keeps that from reading as infeasible
    return OptimizationResult(
        best_mp=best_mp, best_fitness=best_fit, metrics=metrics,
        history=history, landscape=[], evaluator_tag=ev.tag, seed=seed,
        feasible=bool(miss <= obj.power_tol * 1.05 + 1e-12), evaluations=evaluations)


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 40
    iterations: int = 150
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    seed: int = 0


def pso_optimize(space: SearchSpace, obj: ObjectiveSpec, ev, cp: ConverterParams,
                 op_base: OperatingPoint, cfg: PsoConfig = PsoConfig()) -> OptimizationResult:
    """Global-best particle swarm with reflecting bounds, seeded and deterministic."""
    if cfg.swarm_size <= 0 or cfg.iterations <= 0:
        raise ValueError("swarm size and iterations must be positive")
    rng = np.random.default_rng(cfg.seed)
    bounds = np.array(space.bounds())
    lo, hi = bounds[:, 0], bounds[:, 1]
    dim = len(bounds)

    x = rng.uniform(lo, hi, size=(cfg.swarm_size, dim))
    v = rng.uniform(-(hi - lo), hi - lo, size=(cfg.swarm_size, dim)) * 0.1

    def fitness_of(points: np.ndarray) -> np.ndarray:
        ops = [replace(op_base, mp=space.to_modulation(row)) for row in points]
        ms = _evaluate_many(ev, cp, ops)
        return np.array([fitness_from_metrics(m, obj, cp) for m in ms])

    fit = fitness_of(x)
    pbest_x, pbest_f = x.copy(), fit.copy()
    g = int(np.argmin(fit))
    gbest_x, gbest_f = x[g].copy(), float(fit[g])
    history = [gbest_f]
    evaluations = cfg.swarm_size

    for _ in range(cfg.iterations):
        r1 = rng.uniform(size=(cfg.swarm_size, dim))
        r2 = rng.uniform(size=(cfg.swarm_size, dim))
        v = (cfg.inertia * v + cfg.cognitive * r1 * (pbest_x - x)
             + cfg.social * r2 * (gbest_x - x))
        x = x + v
        # reflect at the box walls
        for _ in range(2):
            under = x < lo
            x[under] = (2 * lo - x)[under]
            v[under] = -v[under]
            over = x > hi
            x[over] = (2 * hi - x)[over]
            v[over] = -v[over]
        x = np.clip(x, lo, hi)

        fit = fitness_of(x)
        evaluations += cfg.swarm_size
        better = fit < pbest_f
        pbest_x[better], pbest_f[better] = x[better], fit[better]
        g = int(np.argmin(pbest_f))
        if pbest_f[g] < gbest_f:
            gbest_x, gbest_f = pbest_x[g].copy(), float(pbest_f[g])
        history.append(gbest_f)

    return _result(space, obj, ev, cp, op_base, gbest_x, gbest_f, history,
                   cfg.seed, evaluations)


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 150
    tournament: int = 3
    crossover_eta: float = 15.0
    mutation_eta: float = 20.0
    crossover_prob: float = 0.9
    mutation_prob: float | None = None   # default 1/dim
    elite: int = 2
    seed: int = 0


def _sbx_pair(p1: np.ndarray, p2: np.ndarray, eta: float, lo: np.ndarray,
              hi: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simulated binary crossover with per-gene exchange and bound clipping."""
    u = rng.uniform(size=p1.shape)
    beta = np.where(u <= 0.5,
                    (2.0 * u) ** (1.0 / (eta + 1.0)),
                    (0.5 / (1.0 - u)) ** (1.0 / (eta + 1.0)))
    c1 = 0.5 * ((1 + beta) * p1 + (1 - beta) * p2)
    c2 = 0.5 * ((1 - beta) * p1 + (1 + beta) * p2)
    swap = rng.uniform(size=p1.shape) < 0.5
    c1, c2 = np.where(swap, c2, c1), np.where(swap, c1, c2)
    return np.clip(c1, lo, hi), np.clip(c2, lo, hi)


def _polynomial_mutation(x: np.ndarray, eta: float, prob: float, lo: np.ndarray,
                         hi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bounded polynomial mutation (perturbation shrinks near the walls)."""
    span = hi - lo
    y = x.copy()
    mutate = rng.uniform(size=x.shape) < prob
    u = rng.uniform(size=x.shape)
    d_lo = (y - lo) / span
    d_hi = (hi - y) / span
    exp = 1.0 / (eta + 1.0)
    low = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d_lo) ** (eta + 1.0)
    high = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d_hi) ** (eta + 1.0)
    delta = np.where(u <= 0.5, low ** exp - 1.0, 1.0 - high ** exp)
    y = np.where(mutate, y + delta * span, y)
    return np.clip(y, lo, hi)


def ga_optimize(space: SearchSpace, obj: ObjectiveSpec, ev, cp: ConverterParams,
                op_base: OperatingPoint, cfg: GaConfig = GaConfig()) -> OptimizationResult:
    """Tournament selection, SBX crossover, polynomial mutation, elitist merge."""
    rng = np.random.default_rng(cfg.seed)
    bounds = np.array(space.bounds())
    lo, hi = bounds[:, 0], bounds[:, 1]
    dim = len(bounds)
    p_mut = cfg.mutation_prob if cfg.mutation_prob is not None else 1.0 / dim

    def fitness_of(points: np.ndarray) -> np.ndarray:
        ops = [replace(op_base, mp=space.to_modulation(row)) for row in points]
        ms = _evaluate_many(ev, cp, ops)
        return np.array([fitness_from_metrics(m, obj, cp) for m in ms])

    pop = rng.uniform(lo, hi, size=(cfg.population, dim))
    fit = fitness_of(pop)
    evaluations = cfg.population
    g = int(np.argmin(fit))
    best_x, best_f = pop[g].copy(), float(fit[g])
    history = [best_f]

    def tournament() -> np.ndarray:
        picks = rng.integers(cfg.population, size=cfg.tournament)
        return pop[picks[np.argmin(fit[picks])]]

    for _ in range(cfg.generations):
        children = np.empty_like(pop)
        for k in range(0, cfg.population, 2):
            p1, p2 = tournament(), tournament()
            if rng.uniform() < cfg.crossover_prob:
                c1, c2 = _sbx_pair(p1, p2, cfg.crossover_eta, lo, hi, rng)
            else:
                c1, c2 = p1.copy(), p2.copy()
            children[k] = c1
            children[(k + 1) % cfg.population] = c2
        children = _polynomial_mutation(children, cfg.mutation_eta, p_mut, lo, hi, rng)

        child_fit = fitness_of(children)
        evaluations += cfg.population
        # generational replacement with a small elite: merging parents and
        # children wholesale collapses diversity early on narrow valleys
        elite_idx = np.argsort(fit, kind="stable")[: cfg.elite]
        worst_children = np.argsort(child_fit, kind="stable")[-cfg.elite:]
        children[worst_children] = pop[elite_idx]
        child_fit[worst_children] = fit[elite_idx]
        pop, fit = children, child_fit
        g = int(np.argmin(fit))
        if fit[g] < best_f:
            best_x, best_f = pop[g].copy(), float(fit[g])
        history.append(best_f)

    return _result(space, obj, ev, cp, op_base, best_x, best_f, history,
                   cfg.seed, evaluations)


def grid_search(space: SearchSpace, obj: ObjectiveSpec, ev, cp: ConverterParams,
                op_base: OperatingPoint, resolution: int) -> OptimizationResult:
    """Exhaustive lattice scan; exact argmin on the lattice, lexicographic ties."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per active dimension")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in space.bounds()]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)

    best_fit, best_x = math.inf, points[0]
    history = []
    chunk = 4096
    for start in range(0, len(points), chunk):
        block = points[start: start + chunk]
        ops = [replace(op_base, mp=space.to_modulation(row)) for row in block]
        ms = _evaluate_many(ev, cp, ops)
        fits = np.array([fitness_from_metrics(m, obj, cp) for m in ms])
        k = int(np.argmin(fits))
        # strict improvement keeps the lexicographically smallest tie winner,
        # because ij-ordered lattice points enumerate in lexicographic order
        if fits[k] < best_fit:
            best_fit, best_x = float(fits[k]), block[k]
        history.append(best_fit)
    return _result(space, obj, ev, cp, op_base, best_x, best_fit, history,
                   seed=0, evaluations=len(points))


def sample_landscape(space: SearchSpace, ev, cp: ConverterParams,
                     op_base: OperatingPoint, obj: ObjectiveSpec,
                     resolution: int = 33,
                     slice_through: ModulationParams | None = None
                     ) -> tuple[list[LandscapePoint], list[LandscapePoint]]:
    """Lattice fitness samples for visualization.

    Returns (samples, slice_samples): for 1- and 2-D spaces the full lattice
    plus an empty slice; for TPS a coarse 3-D lattice plus the (d1, d2) plane
    through the best point (or ``slice_through`` when given).
    """
    if resolution > 128:
        raise ValueError("resolution capped at 128 per dimension")

    def eval_points(points: np.ndarray) -> list[LandscapePoint]:
        ops = [replace(op_base, mp=space.to_modulation(row)) for row in points]
        ms = _evaluate_many(ev, cp, ops)
        return [LandscapePoint(o.mp, fitness_from_metrics(m, obj, cp),
                               m.p_avg, m.i_pp, m.zvs_complete)
                for o, m in zip(ops, ms)]

    bounds = space.bounds()
    if len(bounds) < 3:
        axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        samples = eval_points(np.stack([m.ravel() for m in mesh], axis=-1))
        return samples, []

    coarse = min(resolution, 17)
    axes = [np.linspace(lo, hi, coarse) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    samples = eval_points(np.stack([m.ravel() for m in mesh], axis=-1))

    if slice_through is None:
        best = min(samples, key=lambda p: p.fitness)
        d0_star = best.mp.d0
    else:
        d0_star = slice_through.d0
    d1_axis = np.linspace(bounds[1][0], bounds[1][1], resolution)
    d2_axis = np.linspace(bounds[2][0], bounds[2][1], resolution)
    m1, m2 = np.meshgrid(d1_axis, d2_axis, indexing="ij")
    plane = np.stack([np.full(m1.size, d0_star), m1.ravel(), m2.ravel()], axis=-1)
    return samples, eval_points(plane)


@dataclass
class StrategyComparison:
    tps: OptimizationResult
    sps_mp: ModulationParams
    sps_metrics: PerformanceMetrics
    improvement_i_pp: float
    improvement_i_rms: float
    zvs_edges_tps: int
    zvs_edges_sps: int

    def to_dict(self) -> dict:
        return {
            "tps": {"mp": self.tps.best_mp.to_dict(),
                    "metrics": self.tps.metrics.to_dict()},
            "sps": {"mp": self.sps_mp.to_dict(),
                    "metrics": self.sps_metrics.to_dict()},
            "improvement_i_pp": self.improvement_i_pp,
            "improvement_i_rms": self.improvement_i_rms,
            "zvs_edges_tps": self.zvs_edges_tps,
            "zvs_edges_sps": self.zvs_edges_sps,
        }


def match_sps_power(ev, cp: ConverterParams, op_base: OperatingPoint,
                    target_power: float, tol: float = 1e-3) -> ModulationParams:
    """Bisection on the (monotone) forward SPS power curve via the evaluator."""
    def power(d0: float) -> float:
        return ev.evaluate(cp, replace(op_base, mp=ModulationParams("SPS", d0))).p_avg

    lo, hi = 0.0, 0.5
    p_hi = power(hi)
    if p_hi < target_power * (1.0 - tol):
        raise InfeasibleTargetError(
            f"target {target_power} W exceeds the SPS maximum {p_hi:.1f} W")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if power(mid) < target_power:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return ModulationParams("SPS", 0.5 * (lo + hi))


def compare_strategies(cp: ConverterParams, op_base: OperatingPoint,
                       target_power: float, ev,
                       tps_result: OptimizationResult | None = None,
                       seed: int = 0) -> StrategyComparison:
    """Optimized TPS against the SPS setting that delivers the same power."""
    if tps_result is None:
        space = SearchSpace(Strategy.TPS)
        obj = ObjectiveSpec("min_current_stress", target_power)
        tps_result = pso_optimize(space, obj, ev, cp, op_base,
                                  PsoConfig(seed=seed))
    sps_mp = match_sps_power(ev, cp, op_base, target_power)
    sps_metrics = ev.evaluate(cp, replace(op_base, mp=sps_mp))
    t, s = tps_result.metrics, sps_metrics
    return StrategyComparison(
        tps=tps_result, sps_mp=sps_mp, sps_metrics=sps_metrics,
        improvement_i_pp=(s.i_pp - t.i_pp) / s.i_pp if s.i_pp else 0.0,
        improvement_i_rms=(s.i_rms - t.i_rms) / s.i_rms if s.i_rms else 0.0,
        zvs_edges_tps=sum(t.zvs_flags), zvs_edges_sps=sum(s.zvs_flags))


# ---------------------------------------------------------------------------
# export formats
# ---------------------------------------------------------------------------

LANDSCAPE_CSV_HEADER = "d0,d1,d2,fitness,p_avg,i_pp,zvs_complete"


def landscape_to_csv(points: list[LandscapePoint], path: str | Path) -> None:
    lines = [LANDSCAPE_CSV_HEADER]
    for p in points:
        lines.append(f"{p.mp.d0!r},{p.mp.d1!r},{p.mp.d2!r},{p.fitness!r},"
                     f"{p.p_avg!r},{p.i_pp!r},{str(p.zvs_complete).lower()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def result_to_json(result: OptimizationResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), sort_keys=True, indent=2),
                          encoding="utf-8")

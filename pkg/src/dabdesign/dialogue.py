"""Guided design dialogue: collect a specification, run the search, explain it.

The flow walks six requests: strategy, objective, operating conditions,
optimizer choice, execution, and presentation.  The state machine owns the
flow; a language model, when configured, only helps interpret free-form user
text, and a deterministic rule-based extractor always stands behind it so
the whole pipeline runs offline.  Extraction never trusts either path:
every collected value is checked against the grounding ranges before the
dialogue moves forward.
"""

from __future__ import annotations

import json
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from enum import Enum
from threading import Lock

from .optim import (
    GaConfig,
    ObjectiveSpec,
    OptimizationResult,
    OracleEvaluator,
    PsoConfig,
    SearchSpace,
    StrategyComparison,
    SurrogateEvaluator,
    compare_strategies,
    ga_optimize,
    grid_search,
    pso_optimize,
    sample_landscape,
)
from .physics import (
    ConverterParams,
    ModulationParams,
    SamplingGrid,
    Strategy,
    Waveform,
    compute_metrics,
    solve_steady_state,
)
from .surrogate import OperatingPoint, SurrogatePair

OBJECTIVES = ("min_current_stress", "min_rms_current", "max_zvs_range")
OPTIMIZERS = ("PSO", "GA")

PERSONA = ("assistant to electrical engineer responsible for documenting "
           "modulation design specifications.")

SUB_TASK = (
    "Collect the design specification one step at a time. Ask for exactly one "
    "missing item per question, in this order: (1) modulation strategy, "
    "(2) design objective, (3) operating conditions (target power, input and "
    "output voltage), (4) optimization algorithm. Confirm each value before "
    "moving on.")

OUTPUT_STR = (
    "Reply with a single JSON object and nothing else. Keys: strategy, "
    "objective, target_power_w, v_in_v, v_out_v, optimizer. Use null for "
    "anything the user did not state. Do not invent values.")


@dataclass(frozen=True)
class PromptTemplate:
    s_message: str = PERSONA
    sub_task: str = SUB_TASK
    ground_c: str = ""
    output_str: str = OUTPUT_STR

    def __post_init__(self) -> None:
        for name in ("s_message", "sub_task", "output_str"):
            if not getattr(self, name):
                raise ValueError(f"prompt part {name} must not be empty")


def assemble_pe_prompt(t: PromptTemplate, delimiter: str = "\n---\n") -> str:
    """Persona + task + grounding + output contract, in that order."""
    parts = [t.s_message, t.sub_task, t.ground_c, t.output_str]
    names = ["s_message", "sub_task", "ground_c", "output_str"]
    for name, part in zip(names, parts):
        if not part:
            raise ValueError(f"prompt part {name} must not be empty")
    return delimiter.join(parts)


@dataclass(frozen=True)
class GroundingContext:
    strategies: tuple[str, ...] = tuple(s.value for s in Strategy)
    objectives: tuple[str, ...] = OBJECTIVES
    optimizers: tuple[str, ...] = OPTIMIZERS
    power_max: float = 200.0
    v_in_range: tuple[float, float] = (160.0, 240.0)
    v_out_range: tuple[float, float] = (128.0, 192.0)

    @classmethod
    def for_converter(cls, cp: ConverterParams,
                      voltage_band: tuple[float, float] = (0.8, 1.2)) -> "GroundingContext":
        lo, hi = voltage_band
        return cls(power_max=cp.p_rated,
                   v_in_range=(lo * cp.v_in, hi * cp.v_in),
                   v_out_range=(lo * cp.v_out, hi * cp.v_out))

    def render(self) -> str:
        return (
            f"Allowed modulation strategies: {', '.join(self.strategies)}.\n"
            f"Allowed objectives: {', '.join(self.objectives)}.\n"
            f"Allowed optimizers: {', '.join(self.optimizers)}.\n"
            f"Target power must lie in (0, {self.power_max:g}] W.\n"
            f"Input voltage must lie in [{self.v_in_range[0]:g}, {self.v_in_range[1]:g}] V.\n"
            f"Output voltage must lie in [{self.v_out_range[0]:g}, {self.v_out_range[1]:g}] V.")


@dataclass
class DesignSpec:
    strategy: str | None = None
    objective: str | None = None
    target_power: float | None = None
    v_in: float | None = None
    v_out: float | None = None
    optimizer: str | None = None

    FIELDS = ("strategy", "objective", "target_power", "v_in", "v_out", "optimizer")

    def missing(self) -> list[str]:
        return [f for f in self.FIELDS if getattr(self, f) is None]

    def complete(self) -> bool:
        return not self.missing()

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "DesignSpec":
        return cls(**{f: d.get(f) for f in cls.FIELDS})


@dataclass(frozen=True)
class Violation:
    field: str
    value: object
    allowed: str

    def __str__(self) -> str:
        return f"{self.field} ∉ {self.allowed}"


def validate_spec(spec: DesignSpec, g: GroundingContext) -> list[Violation]:
    """Check every populated field against the grounding; empty list means ok."""
    out: list[Violation] = []
    if spec.strategy is not None and spec.strategy not in g.strategies:
        out.append(Violation("strategy", spec.strategy, "{" + ", ".join(g.strategies) + "}"))
    if spec.objective is not None and spec.objective not in g.objectives:
        out.append(Violation("objective", spec.objective, "{" + ", ".join(g.objectives) + "}"))
    if spec.optimizer is not None and spec.optimizer not in g.optimizers:
        out.append(Violation("optimizer", spec.optimizer, "{" + ", ".join(g.optimizers) + "}"))
    if spec.target_power is not None and not 0.0 < spec.target_power <= g.power_max:
        out.append(Violation("target_power", spec.target_power, f"(0, {g.power_max:g}]"))
    if spec.v_in is not None and not g.v_in_range[0] <= spec.v_in <= g.v_in_range[1]:
        out.append(Violation("v_in", spec.v_in,
                             f"[{g.v_in_range[0]:g}, {g.v_in_range[1]:g}]"))
    if spec.v_out is not None and not g.v_out_range[0] <= spec.v_out <= g.v_out_range[1]:
        out.append(Violation("v_out", spec.v_out,
                             f"[{g.v_out_range[0]:g}, {g.v_out_range[1]:g}]"))
    return out


# ---------------------------------------------------------------------------
# extraction: rule-based fallback, optional LLM assist
# ---------------------------------------------------------------------------

_STRATEGY_PATTERNS = [
    (Strategy.TPS.value, r"\btps\b|triple[\s-]?phase"),
    (Strategy.DPS.value, r"\bdps\b|dual[\s-]?phase[\s-]?shift|dual[\s-]?phase\b"),
    (Strategy.EPS.value, r"\beps\b|extended[\s-]?phase"),
    (Strategy.SPS.value, r"\bsps\b|single[\s-]?phase|conventional[\s-]?phase"),
]

_OBJECTIVE_PATTERNS = [
    ("min_current_stress", r"current[\s-]?stress|peak[\s-]?to[\s-]?peak|\bi_?pp\b|stress"),
    ("min_rms_current", r"\brms\b|conduction[\s-]?loss"),
    ("max_zvs_range", r"\bzvs\b|zero[\s-]?voltage|soft[\s-]?switch"),
]

_OPTIMIZER_PATTERNS = [
    ("PSO", r"\bpso\b|particle[\s-]?swarm"),
    ("GA", r"\bga\b|genetic"),
]

_SI = {"k": 1e3, "m": 1e-3, "": 1.0}

_NUMBER = r"([0-9]+(?:\.[0-9]+)?)\s*(k|m)?"


def _find_value(text: str, labels: str, unit: str) -> float | None:
    pattern = rf"(?:{labels})\s*(?:is|of|:|=)?\s*{_NUMBER}\s*{unit}\b"
    m = re.search(pattern, text, re.IGNORECASE)
    if not m:
        return None
    return float(m.group(1)) * _SI[(m.group(2) or "").lower()]


def extract_fields_rules(user_text: str, expected: set[str]) -> dict:
    """Deterministic keyword/number extraction of the expected spec fields."""
    text = user_text.lower()
    found: dict = {}
    if "strategy" in expected:
        for value, pattern in _STRATEGY_PATTERNS:
            if re.search(pattern, text):
                found["strategy"] = value
                break
    if "objective" in expected:
        for value, pattern in _OBJECTIVE_PATTERNS:
            if re.search(pattern, text):
                found["objective"] = value
                break
    if "optimizer" in expected:
        for value, pattern in _OPTIMIZER_PATTERNS:
            if re.search(pattern, text):
                found["optimizer"] = value
                break
    if "target_power" in expected:
        v = _find_value(text, r"rated power|target power|output power|power|deliver", "w")
        if v is None:
            m = re.search(rf"\b{_NUMBER}\s*w\b", text, re.IGNORECASE)
            v = float(m.group(1)) * _SI[(m.group(2) or "").lower()] if m else None
        if v is not None:
            found["target_power"] = v
    if "v_in" in expected:
        v = _find_value(text, r"input voltage|input|v_?in|primary voltage|primary", "v")
        if v is not None:
            found["v_in"] = v
    if "v_out" in expected:
        v = _find_value(text, r"output voltage|output|v_?out|secondary voltage|secondary", "v")
        if v is not None:
            found["v_out"] = v
    return found


class LlmError(RuntimeError):
    pass


@dataclass
class LlmClientConfig:
    endpoint: str = ""
    model: str = "gpt-4"
    temperature: float = 0.0
    timeout: float = 10.0
    api_key_env: str = "DABDESIGN_LLM_API_KEY"
    enabled: bool = False

    def to_dict(self) -> dict:
        return {"endpoint": self.endpoint, "model": self.model,
                "temperature": self.temperature, "timeout": self.timeout,
                "api_key_env": self.api_key_env, "enabled": self.enabled}


class LlmClient:
    """Minimal chat-completions client over HTTP; shareable across sessions."""

    def __init__(self, cfg: LlmClientConfig):
        self.cfg = cfg
        self._lock = Lock()

    def complete(self, system: str, user_text: str) -> str:
        import os
        body = json.dumps({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "system", "content": system},
                         {"role": "user", "content": user_text}],
        }).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(self.cfg.endpoint, data=body, headers=headers)
        try:
            with self._lock:
                with urllib.request.urlopen(req, timeout=self.cfg.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
            return payload["choices"][0]["message"]["content"]
        except (urllib.error.URLError, OSError, KeyError, IndexError,
                json.JSONDecodeError, ValueError) as exc:
            raise LlmError(f"chat completion failed: {exc}") from exc


_LLM_KEY_MAP = {"strategy": "strategy", "objective": "objective",
                "target_power_w": "target_power", "v_in_v": "v_in",
                "v_out_v": "v_out", "optimizer": "optimizer"}


def extract_fields(user_text: str, expected: set[str], grounding: GroundingContext,
                   llm: LlmClient | None = None) -> tuple[dict, bool]:
    """Extract expected fields; returns (values, degraded).

    With a configured client the model's structured reply is parsed and then
    grounded exactly like the rule-based path; any failure falls back to the
    rules and flags degraded mode.
    """
    if not expected:
        raise ValueError("expected field set must not be empty")
    degraded = False
    if llm is not None and llm.cfg.enabled:
        try:
            prompt = assemble_pe_prompt(replace(
                DEFAULT_TEMPLATE, ground_c=grounding.render()))
            reply = llm.complete(prompt, user_text)
            raw = json.loads(re.sub(r"^```(?:json)?|```$", "", reply.strip(),
                                    flags=re.MULTILINE).strip())
            values = {}
            for key, field_name in _LLM_KEY_MAP.items():
                if field_name in expected and raw.get(key) is not None:
                    v = raw[key]
                    values[field_name] = float(v) if field_name in (
                        "target_power", "v_in", "v_out") else str(v)
            return values, False
        except (LlmError, json.JSONDecodeError, TypeError, ValueError):
            degraded = True
    return extract_fields_rules(user_text, expected), degraded


DEFAULT_TEMPLATE = PromptTemplate()


# ---------------------------------------------------------------------------
# dialogue state machine
# ---------------------------------------------------------------------------

class Phase(str, Enum):
    COLLECT_STRATEGY = "CollectStrategy"
    COLLECT_OBJECTIVE = "CollectObjective"
    COLLECT_CONDITIONS = "CollectConditions"
    COLLECT_OPTIMIZER = "CollectOptimizer"
    RUNNING = "Running"
    PRESENTING = "Presenting"
    DONE = "Done"


PHASE_ORDER = [Phase.COLLECT_STRATEGY, Phase.COLLECT_OBJECTIVE,
               Phase.COLLECT_CONDITIONS, Phase.COLLECT_OPTIMIZER,
               Phase.RUNNING, Phase.PRESENTING, Phase.DONE]

_EXPECTED_BY_PHASE = {
    Phase.COLLECT_STRATEGY: {"strategy"},
    Phase.COLLECT_OBJECTIVE: {"objective"},
    Phase.COLLECT_CONDITIONS: {"target_power", "v_in", "v_out"},
    Phase.COLLECT_OPTIMIZER: {"optimizer"},
}


@dataclass
class ChatTurn:
    role: str
    text: str
    timestamp: float
    extraction: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"role": self.role, "text": self.text, "timestamp": self.timestamp,
                "extraction": self.extraction, "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "ChatTurn":
        return cls(d["role"], d["text"], float(d["timestamp"]),
                   d.get("extraction"), dict(d.get("meta", {})))


@dataclass
class DialogueState:
    phase: Phase = Phase.COLLECT_STRATEGY
    spec: DesignSpec = field(default_factory=DesignSpec)
    transcript: list[ChatTurn] = field(default_factory=list)
    report: "DesignReport | RestoredReport | None" = None

    def to_dict(self) -> dict:
        return {
            "phase": self.phase.value,
            "spec": self.spec.to_dict(),
            "transcript": [t.to_dict() for t in self.transcript],
            "report": self.report.to_dict() if self.report else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DialogueState":
        return cls(
            phase=Phase(d["phase"]),
            spec=DesignSpec.from_dict(d["spec"]),
            transcript=[ChatTurn.from_dict(t) for t in d["transcript"]],
            report=RestoredReport(d["report"]) if d.get("report") else None,
        )


@dataclass
class DesignEngines:
    """Everything run_design needs: converter, grid, optimizer configs, surrogate."""

    cp: ConverterParams
    grid: SamplingGrid
    pair: SurrogatePair | None = None
    pso: PsoConfig | None = None
    ga: GaConfig | None = None
    landscape_resolution: int = 21
    seed: int = 0


@dataclass
class DesignReport:
    spec: DesignSpec
    result: OptimizationResult
    comparison: StrategyComparison | None
    landscape: list
    landscape_slice: list
    analysis: dict[str, str]
    oracle_metrics: dict
    waveform: Waveform
    evaluator_tag: str
    elapsed_seconds: float

    def to_dict(self) -> dict:
        """Deterministic report payload; wall-clock time is kept out of it."""
        return {
            "spec": self.spec.to_dict(),
            "result": self.result.to_dict(),
            "comparison": self.comparison.to_dict() if self.comparison else None,
            "landscape": [p.to_dict() for p in self.landscape],
            "landscape_slice": [p.to_dict() for p in self.landscape_slice],
            "analysis": self.analysis,
            "oracle_metrics": self.oracle_metrics,
            "evaluator_tag": self.evaluator_tag,
        }

    def meta_dict(self) -> dict:
        return {"elapsed_seconds": self.elapsed_seconds}


class RestoredReport:
    """Read-only view of a persisted report payload.

    Reloaded sessions only present and re-serialize the report; the live
    optimizer objects and the waveform live in the artifact files.
    """

    def __init__(self, payload: dict):
        self._payload = payload

    @property
    def analysis(self) -> dict[str, str]:
        return self._payload.get("analysis", {})

    def to_dict(self) -> dict:
        return self._payload


def _reevaluate(result: OptimizationResult, ev, cp: ConverterParams,
                op_base: OperatingPoint, obj: ObjectiveSpec) -> OptimizationResult:
    """The same optimum re-measured by another evaluator (for presentation)."""
    from .optim import fitness_from_metrics
    metrics = ev.evaluate(cp, replace(op_base, mp=result.best_mp))
    return replace(result, metrics=metrics,
                   best_fitness=fitness_from_metrics(metrics, obj, cp),
                   evaluator_tag=ev.tag)


def _strategy_default_mp(strategy: str) -> ModulationParams:
    s = Strategy(strategy)
    if s is Strategy.SPS:
        return ModulationParams(s, 0.25)
    if s is Strategy.EPS:
        return ModulationParams(s, 0.25, 0.8, 1.0)
    if s is Strategy.DPS:
        return ModulationParams(s, 0.25, 0.8, 0.8)
    return ModulationParams(s, 0.25, 0.8, 0.8)


def run_design(spec: DesignSpec, cp: ConverterParams, engines: DesignEngines,
               grounding: GroundingContext | None = None) -> DesignReport:
    """Optimize the collected specification and assemble the full report."""
    grounding = grounding or GroundingContext.for_converter(cp)
    violations = validate_spec(spec, grounding)
    if not spec.complete() or violations:
        raise ValueError("design spec incomplete or out of grounding: "
                         + "; ".join(str(v) for v in violations))

    start = time.perf_counter()
    surrogate_mode = engines.pair is not None
    ev = (SurrogateEvaluator(engines.pair, cp) if surrogate_mode
          else OracleEvaluator(engines.grid))
    space = SearchSpace(Strategy(spec.strategy))
    obj = ObjectiveSpec(spec.objective, spec.target_power)
    op_base = OperatingPoint(_strategy_default_mp(spec.strategy), spec.v_in, spec.v_out)

    if spec.optimizer == "GA":
        cfg = engines.ga or (GaConfig(population=20, generations=30, seed=engines.seed)
                             if surrogate_mode else GaConfig(seed=engines.seed))
        result = ga_optimize(space, obj, ev, cp, op_base, cfg)
    else:
        cfg = engines.pso or (PsoConfig(swarm_size=20, iterations=30, seed=engines.seed)
                              if surrogate_mode else PsoConfig(seed=engines.seed))
        result = pso_optimize(space, obj, ev, cp, op_base, cfg)

    # the search runs against the chosen evaluator; the presented landscape,
    # strategy comparison and waveform come from the analytical engine, which
    # both cross-validates a surrogate-led design and keeps the design step
    # interactive (lattice sampling through a recurrent surrogate is slow)
    oracle_ev = OracleEvaluator(engines.grid)
    landscape, slice_ = sample_landscape(
        space, oracle_ev, cp, op_base, obj,
        resolution=engines.landscape_resolution, slice_through=result.best_mp)

    comparison = None
    try:
        tps_res = None
        if space.strategy is Strategy.TPS:
            # the comparison presents THIS design against SPS, analytically
            # evaluated on both sides; no second search is needed
            tps_res = _reevaluate(result, oracle_ev, cp, op_base, obj)
        comparison = compare_strategies(cp, op_base, spec.target_power, oracle_ev,
                                        tps_result=tps_res, seed=engines.seed)
    except Exception:
        pass  # comparison is advisory; an infeasible SPS match leaves it out

    cp_op = replace(cp, v_in=spec.v_in, v_out=spec.v_out)
    oracle_wave = solve_steady_state(cp_op, result.best_mp, engines.grid)
    oracle_metrics = compute_metrics(cp_op, oracle_wave)

    analysis = {
        "optimum": (
            f"Best {spec.strategy} setting: d0={result.best_mp.d0:.4f}, "
            f"d1={result.best_mp.d1:.4f}, d2={result.best_mp.d2:.4f} with "
            f"{result.metrics.p_avg:.1f} W delivered and peak-to-peak current "
            f"{result.metrics.i_pp:.3f} A ({'feasible' if result.feasible else 'power target missed'})."),
        "oracle_check": (
            f"Analytical cross-check at the optimum: {oracle_metrics.p_avg:.1f} W, "
            f"i_pp {oracle_metrics.i_pp:.3f} A, complete ZVS: "
            f"{'yes' if oracle_metrics.zvs_complete else 'no'}."),
        "landscape": (
            f"Objective landscape sampled at {len(landscape)} points"
            + (f" plus a {int(len(slice_) ** 0.5)}x{int(len(slice_) ** 0.5)} slice "
               f"through the optimum" if slice_ else "") + "."),
    }
    if comparison:
        analysis["comparison"] = (
            f"Optimized TPS i_pp {comparison.tps.metrics.i_pp:.3f} A vs SPS "
            f"{comparison.sps_metrics.i_pp:.3f} A at the same power: "
            f"{100 * comparison.improvement_i_pp:.1f}% improvement; "
            f"{comparison.zvs_edges_tps} of {len(comparison.tps.metrics.zvs_flags)} "
            f"TPS edges soft-switch.")

    return DesignReport(
        spec=spec, result=result, comparison=comparison,
        landscape=landscape, landscape_slice=slice_, analysis=analysis,
        oracle_metrics=oracle_metrics.to_dict(), waveform=oracle_wave,
        evaluator_tag=ev.tag, elapsed_seconds=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# replies
# ---------------------------------------------------------------------------

def _reply_strategy_prompt(g: GroundingContext) -> str:
    return (
        "Happy to design the modulation for your dual active bridge. "
        f"Supported strategies: {', '.join(g.strategies)}. "
        "SPS is the simplest (one knob); EPS and DPS add an inner duty ratio; "
        "TPS uses all three degrees of freedom and typically reaches the "
        "lowest current stress, so it is the usual recommendation. "
        "Which strategy should I use?")


def _reply_objective_prompt(spec: DesignSpec, g: GroundingContext) -> str:
    return (
        f"Noted, strategy = {spec.strategy}. Now the design objective - one of: "
        f"{', '.join(g.objectives)}. Minimizing current stress reduces device "
        "peak current, minimizing RMS current reduces conduction loss, and "
        "maximizing the ZVS range favors light-load efficiency. Which matters "
        "most for your application?")


def _reply_conditions_prompt(spec: DesignSpec, g: GroundingContext) -> str:
    return (
        f"Objective set to {spec.objective}. Please give the operating "
        f"conditions: target power in (0, {g.power_max:g}] W, input voltage in "
        f"[{g.v_in_range[0]:g}, {g.v_in_range[1]:g}] V and output voltage in "
        f"[{g.v_out_range[0]:g}, {g.v_out_range[1]:g}] V.")


def _reply_optimizer_prompt(spec: DesignSpec) -> str:
    return (
        f"Operating point recorded: {spec.target_power:g} W, "
        f"{spec.v_in:g} V -> {spec.v_out:g} V. Which optimization algorithm "
        "should run the search? PSO (particle swarm, the default) explores the "
        "phase-shift box with a cooperating swarm; GA (genetic algorithm) is "
        "the evolutionary alternative.")


def _reply_progress(spec: DesignSpec, report: DesignReport) -> str:
    return (
        f"All specifications collected - running {spec.optimizer} on the "
        f"{spec.strategy} search space against the "
        f"{'surrogate model' if report.evaluator_tag == 'surrogate' else 'analytical model'}... "
        f"done after {report.result.evaluations} evaluations. "
        "Say anything to see the design outcome and analysis.")


def _reply_presentation(report: DesignReport) -> str:
    lines = ["Design outcome:", report.analysis["optimum"],
             report.analysis["oracle_check"]]
    if "comparison" in report.analysis:
        lines.append(report.analysis["comparison"])
    lines.append(report.analysis["landscape"])
    lines.append("Waveform, landscape and report artifacts are attached to "
                 "this session.")
    return "\n".join(lines)


def advance(state: DialogueState, user_text: str, grounding: GroundingContext,
            engines: DesignEngines | None = None, llm: LlmClient | None = None,
            clock=time.time) -> tuple[DialogueState, str]:
    """Process one user turn: extract, validate, transition, reply."""
    if state.phase is Phase.DONE:
        raise ValueError("dialogue already complete")

    now = clock()
    expected = _EXPECTED_BY_PHASE.get(state.phase)
    extraction: dict = {}
    degraded = False
    if expected:
        extraction, degraded = extract_fields(user_text, expected, grounding, llm)
    state.transcript.append(ChatTurn("user", user_text, now, extraction or None,
                                     {"degraded": True} if degraded else {}))

    def say(text: str) -> tuple[DialogueState, str]:
        state.transcript.append(ChatTurn("assistant", text, clock()))
        return state, text

    if state.phase is Phase.PRESENTING:
        state.phase = Phase.DONE
        return say(_reply_presentation(state.report))

    # merge extracted fields, then ground them; on violation, drop the bad
    # values and stay in phase with the range echoed back
    candidate = replace(state.spec, **extraction)
    violations = validate_spec(candidate, grounding)
    if violations:
        for v in violations:
            setattr(candidate, v.field, None)
        state.spec = candidate
        return say("That does not fit the design envelope: "
                   + "; ".join(str(v) for v in violations)
                   + ". " + grounding.render())
    state.spec = candidate

    if state.phase is Phase.COLLECT_STRATEGY:
        if state.spec.strategy is None:
            return say(_reply_strategy_prompt(grounding))
        state.phase = Phase.COLLECT_OBJECTIVE
        return say(_reply_objective_prompt(state.spec, grounding))

    if state.phase is Phase.COLLECT_OBJECTIVE:
        if state.spec.objective is None:
            return say("I did not catch the objective. "
                       + _reply_objective_prompt(state.spec, grounding))
        state.phase = Phase.COLLECT_CONDITIONS
        return say(_reply_conditions_prompt(state.spec, grounding))

    if state.phase is Phase.COLLECT_CONDITIONS:
        if state.spec.target_power is None:
            return say("I still need the target power. "
                       + _reply_conditions_prompt(state.spec, grounding))
        if state.spec.v_in is None and engines is not None:
            state.spec.v_in = engines.cp.v_in
        if state.spec.v_out is None and engines is not None:
            state.spec.v_out = engines.cp.v_out
        if state.spec.v_in is None or state.spec.v_out is None:
            return say("Please also give the input and output voltages. "
                       + _reply_conditions_prompt(state.spec, grounding))
        state.phase = Phase.COLLECT_OPTIMIZER
        return say(_reply_optimizer_prompt(state.spec))

    if state.phase is Phase.COLLECT_OPTIMIZER:
        if state.spec.optimizer is None:
            return say("Please pick an optimizer. " + _reply_optimizer_prompt(state.spec))
        if engines is None:
            raise ValueError("design engines are required to run the optimization")
        state.phase = Phase.RUNNING
        try:
            state.report = run_design(state.spec, engines.cp, engines, grounding)
        except Exception as exc:
            state.phase = Phase.COLLECT_OPTIMIZER
            return say(f"The design run failed ({exc}); you can pick an "
                       "optimizer again or adjust the specification.")
        state.phase = Phase.PRESENTING
        return say(_reply_progress(state.spec, state.report))

    raise AssertionError(f"unhandled phase {state.phase}")

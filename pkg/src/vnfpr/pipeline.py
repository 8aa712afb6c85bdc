"""Multi-objective resolution pipeline on top of the exact solver.

The lexicographic drive first minimizes the maximum link utilization (U*),
then re-solves for the NFV cost under ``U <= U* (+ alpha)``, warm-starting
each stage from the previous incumbent.  For the hardest variants a cascade
of increasingly complete models (basic, with latency, with flow scaling)
supplies the warm starts, routing worst-case bandwidths in the pre-scaling
stages so incumbents stay feasible downstream.  A bisection on the open-copy
count provides optimality certificates for the NFV goal through feasibility
probes, which are cheaper than optimality proofs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

from .instance import Instance, extend_graph, worst_case_bandwidth
from .model import Extensions, MilpModel, ObjectiveSpec, VariantSpec, build
from .solution import Solution, extract_solution
from .solver import SolveResult, SolverConfig, check_feasible, solve


class PipelineError(RuntimeError):
    def __init__(self, message: str, trace: "PipelineTrace | None" = None):
        super().__init__(message)
        self.trace = trace


class PipelineInfeasible(PipelineError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    variant: str = "basic"
    regime: str | None = None
    extensions: Extensions = field(default_factory=Extensions)
    te_time_limit: float = 600.0
    nfv_time_limit: float = 800.0
    gap_tol: float = 1e-9
    node_limit: int | None = None
    cascade: bool = False
    alpha_schedule: tuple[float, ...] = (0.0, 0.2, 0.4)
    alpha_stop_tol: float = 1e-9
    extend_until_flat: bool = False
    alpha_step: float = 0.2
    alpha_max: float = 1.0
    bisect_start: int | None = None
    bisect_u_cap: float | None = None

    def __post_init__(self) -> None:
        if self.te_time_limit <= 0 or self.nfv_time_limit <= 0:
            raise ValueError("time limits must be > 0")
        if self.alpha_schedule:
            if self.alpha_schedule[0] != 0.0:
                raise ValueError("alpha schedule must start at 0")
            if any(
                b < a for a, b in zip(self.alpha_schedule, self.alpha_schedule[1:])
            ):
                raise ValueError("alpha schedule must be nondecreasing")

    def spec(self, objective: ObjectiveSpec, variant: str | None = None) -> VariantSpec:
        v = variant if variant is not None else self.variant
        return VariantSpec(
            variant=v,
            regime=self.regime if "lat" in v.split("-") else None,
            objective=objective,
            extensions=self.extensions,
        )

    def solver(self, time_limit: float) -> SolverConfig:
        return SolverConfig(
            time_limit=time_limit, gap_tol=self.gap_tol, node_limit=self.node_limit
        )


@dataclass
class StageRecord:
    name: str
    variant: str
    objective: str
    status: str
    objective_value: float | None
    bound: float
    gap: float
    elapsed: float
    nodes: int
    warm_start: str = "none"  # none | used | rejected
    u_value: float | None = None
    nfv_cost: float | None = None

    def to_line(self) -> str:
        return (
            f"stage={self.name} variant={self.variant} objective={self.objective} "
            f"status={self.status} value={self.objective_value!r} gap={self.gap:.3e} "
            f"nodes={self.nodes} warm={self.warm_start} u={self.u_value!r} "
            f"cost={self.nfv_cost!r}"
        )


@dataclass
class AlphaRow:
    alpha: float
    cost: float | None
    status: str
    gap: float


@dataclass
class BisectProbe:
    cap: int
    status: str  # feasible | infeasible


@dataclass
class PipelineTrace:
    stages: list[StageRecord] = field(default_factory=list)
    alpha_rows: list[AlphaRow] = field(default_factory=list)
    probes: list[BisectProbe] = field(default_factory=list)
    u_star: float | None = None

    def to_text(self) -> str:
        lines = [s.to_line() for s in self.stages]
        if self.u_star is not None:
            lines.append(f"u_star={self.u_star!r}")
        for row in self.alpha_rows:
            lines.append(
                f"alpha={row.alpha} cost={row.cost!r} status={row.status} gap={row.gap:.3e}"
            )
        for p in self.probes:
            lines.append(f"probe cap={p.cap} {p.status}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def enc(o: Any):
            if hasattr(o, "__dict__"):
                return o.__dict__
            return str(o)

        return json.dumps(self.__dict__, default=enc, indent=2)


def _nfv_cost(model: MilpModel, assignment: dict[int, float]) -> float:
    from .instance import CPU

    instance = model.meta["built_instance"]
    cost = 0.0
    for v in model.variables:
        if v.sym == "y" and assignment[v.id] > 0.5:
            cost += instance.vnf_map[v.key[1]].resources.get(CPU, 0.0)
    return cost


def _record(
    name: str, model: MilpModel, res: SolveResult, trace: PipelineTrace
) -> StageRecord:
    warm = "none"
    if res.warm_start_used:
        warm = "used"
    elif res.warm_start_error:
        warm = "rejected"
    rec = StageRecord(
        name=name,
        variant=model.meta["variant"],
        objective=model.meta["objective"],
        status=res.status,
        objective_value=res.objective,
        bound=res.bound,
        gap=res.gap,
        elapsed=res.elapsed,
        nodes=res.nodes,
        warm_start=warm,
        u_value=(
            res.assignment[model.var("u")]
            if res.assignment is not None and model.has_var("u")
            else None
        ),
        nfv_cost=_nfv_cost(model, res.assignment) if res.assignment else None,
    )
    trace.stages.append(rec)
    return rec


def _transfer_warm_start(
    target: MilpModel, source: MilpModel, assignment: dict[int, float]
) -> dict[int, float] | None:
    """Map an incumbent onto another model of the same instance.

    Shared binaries are matched by semantic tag; continuous variables are
    recomputed by the target's exact completion.  Returns None when the
    result is not feasible for the target (caller starts cold).
    """
    binaries: dict[int, float] = {}
    for v in target.variables:
        if v.kind != "bin":
            continue
        src = source.var_index.get((v.sym, v.key))
        if src is None:
            return None
        binaries[v.id] = float(round(assignment[src]))
    if target.completion is None:
        return None
    try:
        completed = target.completion(binaries)
    except Exception:
        return None
    if check_feasible(target, completed):
        return None
    return completed


def _inflated(instance: Instance) -> Instance:
    demands = tuple(
        replace(d, bandwidth=worst_case_bandwidth(d, instance.vnf_map))
        for d in instance.demands
    )
    return Instance(
        topology=instance.topology,
        vnf_types=instance.vnf_types,
        demands=demands,
        options=instance.options,
    )


def cascade_solve(
    instance: Instance, config: PipelineConfig
) -> tuple[SolveResult, MilpModel, PipelineTrace]:
    """TE-objective warm-start cascade basic -> basic-lat -> target variant.

    Pre-scaling stages route each demand's worst-case bandwidth so their
    incumbents remain feasible once flow scaling enters; a stage whose warm
    start fails the next stage's feasibility check is recorded and the next
    stage starts cold.
    """
    target = config.variant
    if target not in ("basic-lat", "basic-lat-cd"):
        raise PipelineError(f"cascade targets latency variants, not {target!r}")
    trace = PipelineTrace()
    scaled = "cd" in target.split("-")
    base = extend_graph(instance) if scaled else instance
    stage_instance = _inflated(base) if scaled else base

    stages: list[str] = ["basic", "basic-lat"]
    if scaled:
        stages.append("basic-lat-cd")

    te = ObjectiveSpec(kind="te")
    warm: dict[int, float] | None = None
    prev_model: MilpModel | None = None
    res: SolveResult | None = None
    model: MilpModel | None = None
    for stage_variant in stages:
        inst = stage_instance if scaled and stage_variant != target else base
        model = build(inst, config.spec(te, variant=stage_variant))
        if warm is not None and prev_model is not None:
            model.warm_start = _transfer_warm_start(model, prev_model, warm)
            if model.warm_start is None:
                model.meta["warm_start_note"] = "previous incumbent rejected"
        limit = config.te_time_limit
        res = solve(model, config.solver(limit))
        _record(f"cascade-{stage_variant}", model, res, trace)
        if res.status == "Infeasible":
            raise PipelineInfeasible(f"cascade stage {stage_variant} infeasible", trace)
        if res.assignment is None:
            raise PipelineError(
                f"cascade stage {stage_variant} hit the limit without an incumbent",
                trace,
            )
        warm = res.assignment
        prev_model = model
    return res, model, trace


def lexicographic_solve(
    instance: Instance, config: PipelineConfig
) -> tuple[Solution, PipelineTrace]:
    """Minimize the maximum utilization, then the NFV cost under U <= U*."""
    res, model, trace = _te_phase(instance, config)
    u_star = res.objective
    trace.u_star = u_star

    nfv_model = build(
        instance, config.spec(ObjectiveSpec(kind="nfv", u_cap=u_star))
    )
    nfv_model.warm_start = _transfer_warm_start(nfv_model, model, res.assignment)
    nfv_res = solve(nfv_model, config.solver(config.nfv_time_limit))
    _record("te-nfv", nfv_model, nfv_res, trace)
    if nfv_res.assignment is None:
        raise PipelineError("cost phase found no solution under the U* cap", trace)
    return extract_solution(nfv_model, nfv_res.assignment), trace


def _te_phase(
    instance: Instance, config: PipelineConfig
) -> tuple[SolveResult, MilpModel, PipelineTrace]:
    if config.cascade:
        return cascade_solve(instance, config)
    trace = PipelineTrace()
    model = build(instance, config.spec(ObjectiveSpec(kind="te")))
    res = solve(model, config.solver(config.te_time_limit))
    _record("te", model, res, trace)
    if res.status == "Infeasible":
        raise PipelineInfeasible("utilization phase infeasible", trace)
    if res.assignment is None:
        raise PipelineError("utilization phase hit the limit without an incumbent", trace)
    return res, model, trace


def alpha_sweep(
    instance: Instance, config: PipelineConfig
) -> tuple[list[AlphaRow], PipelineTrace]:
    """NFV cost at increasing slack over U*; stops once the cost flattens.

    The sweep endpoint (cost no longer decreasing) is the cost-first
    ordering of the two objectives.
    """
    res, model, trace = _te_phase(instance, config)
    u_star = res.objective
    trace.u_star = u_star

    alphas = list(config.alpha_schedule)
    rows: list[AlphaRow] = []
    prev_model: MilpModel = model
    prev_assignment = res.assignment
    idx = 0
    while idx < len(alphas):
        alpha = alphas[idx]
        nfv_model = build(
            instance, config.spec(ObjectiveSpec(kind="nfv", u_cap=u_star + alpha))
        )
        nfv_model.warm_start = _transfer_warm_start(
            nfv_model, prev_model, prev_assignment
        )
        nfv_res = solve(nfv_model, config.solver(config.nfv_time_limit))
        _record(f"alpha-{alpha}", nfv_model, nfv_res, trace)
        rows.append(
            AlphaRow(
                alpha=alpha,
                cost=nfv_res.objective,
                status=nfv_res.status,
                gap=nfv_res.gap,
            )
        )
        if nfv_res.assignment is not None:
            prev_model = nfv_model
            prev_assignment = nfv_res.assignment
        if (
            len(rows) >= 2
            and rows[-1].cost is not None
            and rows[-2].cost is not None
            and abs(rows[-1].cost - rows[-2].cost) <= config.alpha_stop_tol
        ):
            break
        idx += 1
        if (
            idx == len(alphas)
            and config.extend_until_flat
            and alphas[-1] + config.alpha_step <= config.alpha_max + 1e-12
        ):
            alphas.append(alphas[-1] + config.alpha_step)
    trace.alpha_rows = rows
    return rows, trace


def bisect_vnf_count(
    instance: Instance, config: PipelineConfig
) -> tuple[Solution, PipelineTrace]:
    """Minimal feasible cap on the number of open copies, by bisection.

    Feasibility probes carry a constant objective, so the solver stops at
    the first incumbent.  The default schedule starts at the trivial upper
    bound and halves while feasible, then bisects the bracket, keeping the
    probe count within ceil(log2(C_max)) + 3; a bisect_start below the
    minimum feasible cap adds doubling probes beyond that bound.
    """
    trace = PipelineTrace()
    probe_spec = ObjectiveSpec(kind="feasibility", u_cap=config.bisect_u_cap)
    base_model = build(instance, config.spec(probe_spec))
    c_max = sum(1 for v in base_model.variables if v.sym == "y")

    witnesses: dict[int, tuple[MilpModel, dict[int, float]]] = {}

    def probe(cap: int) -> bool:
        spec = config.spec(
            ObjectiveSpec(
                kind="feasibility", u_cap=config.bisect_u_cap, copy_cap=cap
            )
        )
        model = build(instance, spec)
        res = solve(model, config.solver(config.nfv_time_limit))
        _record(f"probe-{cap}", model, res, trace)
        if res.status == "TimeLimit" and res.assignment is None:
            raise PipelineError(f"probe at cap {cap} undecided within the limit", trace)
        feasible = res.assignment is not None
        trace.probes.append(BisectProbe(cap, "feasible" if feasible else "infeasible"))
        if feasible:
            witnesses[cap] = (model, res.assignment)
        return feasible

    start = c_max if config.bisect_start is None else min(config.bisect_start, c_max)
    cur = start
    last_infeasible = -1
    # find a feasible upper end (doubling when starting low)
    while not probe(cur):
        last_infeasible = cur
        if cur >= c_max:
            raise PipelineInfeasible(
                f"infeasible even at the trivial copy bound {c_max}", trace
            )
        cur = min(max(2 * cur, 1), c_max)
    hi = cur
    lo = last_infeasible
    while hi - lo > 1:
        mid = hi // 2
        if mid <= lo:
            mid = (lo + hi) // 2
        if probe(mid):
            hi = mid
        else:
            lo = mid
    model, assignment = witnesses[hi]
    return extract_solution(model, assignment), trace

"""Model-free verification of solutions straight from the instance.

Every check recomputes the quantity it verifies from the routing, the
placements and the instance data: flows are propagated along each path,
latencies are evaluated on the true forwarding curves, utilizations and
costs are re-derived.  Nothing here looks at a MILP, its big-M constants or
its linearizations, so validator verdicts are an independent oracle for the
solver side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .instance import (
    CPU,
    FastpathLatency,
    Instance,
    StandardLatency,
    bandwidth_bounds,
    chain_pairs,
    extend_graph,
)
from .model import VariantSpec
from .solution import DemandRouting, Solution, walk_route

FLOW_TOL = 1e-9
CHECK_TOL = 1e-7


class SolutionStructureError(ValueError):
    """Dangling references: the solution does not fit the instance at all."""


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst_slack: float = 0.0
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)
    max_util: float | None = None
    nfv_cost: float | None = None
    #: demand id -> (link latency, vnf latency, total)
    latency: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            extra = f" {c.detail}" if c.detail else ""
            lines.append(f"check={c.name} {status} worst_slack={c.worst_slack:.3e}{extra}")
        lines.append(f"recomputed max_util={self.max_util!r} nfv_cost={self.nfv_cost!r}")
        for k, (link, vnf, total) in self.latency.items():
            lines.append(f"latency demand={k} link={link!r} vnf={vnf!r} total={total!r}")
        return "\n".join(lines) + "\n"


def _working_instance(instance: Instance, variant: str) -> Instance:
    if "cd" in variant.split("-") and not instance.extended:
        return extend_graph(instance)
    return instance


def _check_structure(instance: Instance, solution: Solution) -> None:
    topo = instance.topology
    for k, routing in solution.demands.items():
        if k not in instance.demand_map:
            raise SolutionStructureError(f"unknown demand {k!r}")
        for u, v in routing.arcs:
            if (u, v) not in topo.arc_map:
                raise SolutionStructureError(f"demand {k!r}: unknown arc ({u!r},{v!r})")
        for f, (i, n) in routing.assignments.items():
            if f not in instance.vnf_map:
                raise SolutionStructureError(f"demand {k!r}: unknown vnf {f!r}")
            if i not in topo.node_map:
                raise SolutionStructureError(f"demand {k!r}: unknown node {i!r}")
            if n < 1:
                raise SolutionStructureError(f"demand {k!r}: copy index {n} < 1")
    for i, f, n in solution.opens:
        if i not in topo.node_map or f not in instance.vnf_map:
            raise SolutionStructureError(f"open copy ({i!r},{f!r},{n}) dangling")
    missing = set(instance.demand_map) - set(solution.demands)
    if missing:
        raise SolutionStructureError(f"solution misses demands {sorted(missing)}")


def _walked(instance: Instance, solution: Solution) -> dict[str, list[str]]:
    """Per-demand walked path; raises on routings without a simple walk."""
    paths = {}
    for k, routing in solution.demands.items():
        demand = instance.demand_map[k]
        path, _leftover, err = walk_route(demand.origin, demand.destination, routing.arcs)
        if path is None:
            raise SolutionStructureError(f"demand {k!r}: path not simple ({err})")
        paths[k] = path
    return paths


def propagate_flows(
    instance: Instance, solution: Solution
) -> dict[str, dict[tuple[str, str], float]]:
    """Per-demand per-arc flows implied by routing and placements.

    Walks each path from the origin at the nominal bandwidth, multiplying by
    the rate factor of every VNF assigned at each node on arrival.  Raises
    SolutionStructureError for routings without a simple origin->destination
    walk or assignments to nodes the demand never enters; detached arcs are
    ignored here (the full check reports them separately).
    """
    instance = _working_instance(instance, solution.variant)
    _check_structure(instance, solution)
    vnf_map = instance.vnf_map
    paths = _walked(instance, solution)
    out: dict[str, dict[tuple[str, str], float]] = {}
    for k, routing in solution.demands.items():
        demand = instance.demand_map[k]
        path = paths[k]
        entered = set(path[1:])
        at_node: dict[str, list[str]] = {}
        for f, (i, _n) in routing.assignments.items():
            if i not in entered:
                raise SolutionStructureError(
                    f"demand {k!r}: vnf {f!r} assigned at {i!r}, never entered"
                )
            at_node.setdefault(i, []).append(f)
        flows: dict[tuple[str, str], float] = {}
        cur = demand.bandwidth
        for u, v in zip(path, path[1:]):
            flows[(u, v)] = cur
            for f in sorted(at_node.get(v, ())):
                cur *= vnf_map[f].rate_factor
        out[k] = flows
    return out


def _node_inflows(
    solution: Solution,
    paths: Mapping[str, list[str]],
    flows: Mapping[str, Mapping[tuple[str, str], float]],
) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for k in solution.demands:
        inflow = {}
        path = paths[k]
        for u, v in zip(path, path[1:]):
            inflow[v] = flows[k][(u, v)]
        out[k] = inflow
    return out


def _copy_loads(
    instance: Instance,
    solution: Solution,
    inflows: Mapping[str, Mapping[str, float]] | None,
) -> dict[tuple[str, str, int], float]:
    """Aggregate load per copy, accumulated in instance demand order."""
    loads: dict[tuple[str, str, int], float] = {}
    for demand in instance.demands:
        routing = solution.demands[demand.id]
        for f, (i, n) in routing.assignments.items():
            if inflows is not None:
                add = inflows[demand.id].get(i, 0.0)
            else:
                add = demand.bandwidth
            loads[(i, f, n)] = loads.get((i, f, n), 0.0) + add
    return loads


def compute_latency(
    instance: Instance, solution: Solution
) -> dict[str, tuple[float, float, float]]:
    """Per-demand (link, vnf, total) latency on the true curves.

    Standard profiles are evaluated at the copy's aggregate load across all
    demands assigned to it; fastpath profiles contribute their fixed delay.
    """
    instance = _working_instance(instance, solution.variant)
    _check_structure(instance, solution)
    scaled = "cd" in solution.variant.split("-")
    paths = _walked(instance, solution)
    flows = propagate_flows(instance, solution) if scaled else None
    inflows = _node_inflows(solution, paths, flows) if flows is not None else None
    loads = _copy_loads(instance, solution, inflows)
    topo = instance.topology
    out: dict[str, tuple[float, float, float]] = {}
    for k in solution.demands:
        routing = solution.demands[k]
        path = paths[k]
        link = 0.0
        for u, v in zip(path, path[1:]):
            link += topo.arc_map[(u, v)].latency
        vnf_total = 0.0
        for f, (i, n) in routing.assignments.items():
            profile = instance.vnf_map[f].latency
            if isinstance(profile, FastpathLatency):
                vnf_total += profile.delay
            elif isinstance(profile, StandardLatency):
                vnf_total += profile.value(loads[(i, f, n)])
        out[k] = (link, vnf_total, link + vnf_total)
    return out


def check(instance: Instance, solution: Solution, spec: VariantSpec) -> ValidationReport:
    """Full semantic verification of a solution for the given variant."""
    instance = _working_instance(instance, spec.variant)
    _check_structure(instance, solution)
    report = ValidationReport()
    topo = instance.topology
    vnf_map = instance.vnf_map
    scaled = spec.with_scaling

    paths: dict[str, list[str]] = {}
    leftovers: dict[str, list[tuple[str, str]]] = {}
    ok, detail = True, ""
    for demand in instance.demands:
        routing = solution.demands[demand.id]
        path, leftover, err = walk_route(demand.origin, demand.destination, routing.arcs)
        if path is None:
            ok, detail = False, f"{demand.id}: {err}"
            break
        paths[demand.id] = path
        leftovers[demand.id] = leftover
    report.checks.append(CheckResult("simple_path", ok, detail=detail))
    if not ok:
        return report

    detached = {k: lo for k, lo in leftovers.items() if lo}
    report.checks.append(
        CheckResult(
            "cycle_free",
            not detached,
            detail="; ".join(f"{k}: {lo}" for k, lo in detached.items()),
        )
    )

    # assignments: one open on-path copy per requested type
    opens = solution.open_set()
    ok, detail = True, ""
    for demand in instance.demands:
        routing = solution.demands[demand.id]
        if set(routing.assignments) != set(demand.vnfs):
            ok, detail = False, f"{demand.id}: assigned types differ from request"
            break
        entered = set(paths[demand.id][1:])
        for f, (i, n) in routing.assignments.items():
            if i not in entered:
                ok, detail = False, f"{demand.id}: {f} at {i} not on entered path"
                break
            if not topo.node_map[i].nfvi:
                ok, detail = False, f"{demand.id}: {f} on non-NFVI node {i}"
                break
            if (i, f, n) not in opens:
                ok, detail = False, f"{demand.id}: {f} uses closed copy ({i},{f},{n})"
                break
            if n > instance.copies(i, vnf_map[f]):
                ok, detail = False, f"{demand.id}: copy index {n} over limit at {i}"
                break
        if not ok:
            break
    report.checks.append(CheckResult("assignments", ok, detail=detail))
    if not ok:
        return report

    # chain order along path positions (same node allowed)
    ok, detail = True, ""
    for demand in instance.demands:
        routing = solution.demands[demand.id]
        pos = {node: p for p, node in enumerate(paths[demand.id])}
        for f1, f2 in chain_pairs(demand):
            i1 = routing.assignments.get(f1)
            i2 = routing.assignments.get(f2)
            if i1 is None or i2 is None:
                continue
            if pos[i2[0]] < pos[i1[0]]:
                ok = False
                detail = f"{demand.id}: {f2} at {i2[0]} precedes {f1} at {i1[0]}"
                break
        if not ok:
            break
    report.checks.append(CheckResult("chain_order", ok, detail=detail))

    # flows: propagation, destination balance, route coherence bounds
    flows = None
    inflows = None
    if scaled:
        flows = propagate_flows(instance, solution)
        inflows = _node_inflows(solution, paths, flows)
        ok, worst_slack, detail = True, 0.0, ""
        for demand in instance.demands:
            routing = solution.demands[demand.id]
            expected = demand.bandwidth
            for f in demand.vnfs:
                expected *= vnf_map[f].rate_factor
            path = paths[demand.id]
            delivered = flows[demand.id][(path[-2], path[-1])]
            err = abs(delivered - expected)
            worst_slack = max(worst_slack, err)
            if err > FLOW_TOL:
                ok, detail = False, f"{demand.id}: delivers {delivered}, expected {expected}"
                break
            if routing.flows is not None:
                for arc, val in flows[demand.id].items():
                    err = abs(val - routing.flows.get(arc, 0.0))
                    worst_slack = max(worst_slack, err)
                    if err > FLOW_TOL:
                        ok, detail = False, f"{demand.id}: stored flow off on {arc}"
                        break
                if not ok:
                    break
        report.checks.append(CheckResult("flow_balance", ok, worst_slack, detail))

        ok, worst_slack, detail = True, 0.0, ""
        for demand in instance.demands:
            bmin, bmax = bandwidth_bounds(demand, vnf_map)
            for arc, val in flows[demand.id].items():
                over = max(val - bmax, bmin - val)
                worst_slack = max(worst_slack, over)
                if over > CHECK_TOL:
                    ok, detail = False, f"{demand.id}: flow {val} outside [{bmin},{bmax}] on {arc}"
                    break
            if not ok:
                break
        report.checks.append(CheckResult("flow_bounds", ok, worst_slack, detail))

        ok, detail = True, ""
        for demand in instance.demands:
            routing = solution.demands[demand.id]
            per_node: dict[str, int] = {}
            for f, (i, _n) in routing.assignments.items():
                if vnf_map[f].rate_factor != 1.0:
                    per_node[i] = per_node.get(i, 0) + 1
            bad = [i for i, cnt in per_node.items() if cnt > 1]
            if bad:
                ok, detail = False, f"{demand.id}: multiple rate-changing VNFs at {bad[0]}"
                break
        report.checks.append(CheckResult("one_scaler_per_node", ok, detail=detail))

    # utilization and recomputed objective value
    arc_sets = {k: set(r.arcs) for k, r in solution.demands.items()}
    max_util = 0.0
    for a in topo.arcs:
        load = 0.0
        for demand in instance.demands:
            if scaled:
                load += flows[demand.id].get((a.src, a.dst), 0.0)
            elif (a.src, a.dst) in arc_sets[demand.id]:
                load += demand.bandwidth
        max_util = max(max_util, load / a.capacity)
    report.max_util = max_util
    ok, detail = True, ""
    if solution.max_util is not None and abs(solution.max_util - max_util) > FLOW_TOL:
        ok, detail = False, f"stored {solution.max_util}, recomputed {max_util}"
    report.checks.append(CheckResult("max_util", ok, detail=detail))

    # node capacities over open copies (plus switched traffic when the
    # routing function itself is virtualized)
    loads_for_core = None
    if spec.extensions.core_router_vnf:
        loads_for_core = {}
        for demand in instance.demands:
            path = paths[demand.id]
            for u, v in zip(path, path[1:]):
                add = flows[demand.id][(u, v)] if scaled else demand.bandwidth
                loads_for_core[u] = loads_for_core.get(u, 0.0) + add
                loads_for_core[v] = loads_for_core.get(v, 0.0) + add
    resources = sorted({r for v in instance.vnf_types for r in v.resources})
    ok, worst_slack, detail = True, 0.0, ""
    for node in topo.nodes:
        if not node.nfvi:
            continue
        for r in resources:
            used = 0.0
            for i, f, _n in solution.opens:
                if i == node.id:
                    used += vnf_map[f].resources.get(r, 0.0)
            if loads_for_core is not None:
                used += loads_for_core.get(node.id, 0.0)
            cap = node.capacity.get(r, 0.0)
            over = used - cap
            worst_slack = max(worst_slack, over)
            if over > CHECK_TOL:
                ok, detail = False, f"{node.id}/{r}: {used} > {cap}"
                break
        if not ok:
            break
    report.checks.append(CheckResult("node_capacity", ok, worst_slack, detail))

    ok, detail = True, ""
    for i, f, n in solution.opens:
        if not topo.node_map[i].nfvi or n > instance.copies(i, vnf_map[f]):
            ok, detail = False, f"open ({i},{f},{n}) exceeds the node's copy limit"
            break
    report.checks.append(CheckResult("copy_limits", ok, detail=detail))

    # latency budget and fastpath caps
    if spec.with_latency:
        loads = _copy_loads(instance, solution, inflows)
        latency = compute_latency(instance, solution)
        report.latency = latency
        ok, worst_slack, detail = True, 0.0, ""
        for demand in instance.demands:
            _link, _vnf, total = latency[demand.id]
            bound = demand.max_latency if demand.max_latency is not None else math.inf
            over = total - bound
            worst_slack = max(worst_slack, over)
            if over > CHECK_TOL:
                ok, detail = False, f"{demand.id}: latency {total} over bound {bound}"
                break
        report.checks.append(CheckResult("latency_budget", ok, worst_slack, detail))

        if spec.regime == "fastpath":
            ok, worst_slack, detail = True, 0.0, ""
            for (i, f, n), load in sorted(loads.items()):
                profile = vnf_map[f].latency
                if not isinstance(profile, FastpathLatency):
                    continue
                over = load - profile.max_bandwidth
                worst_slack = max(worst_slack, over)
                if over > CHECK_TOL:
                    ok, detail = False, f"copy ({i},{f},{n}) load {load} over cap"
                    break
            report.checks.append(CheckResult("copy_bw_cap", ok, worst_slack, detail))

    # NFV cost
    cost = 0.0
    for i, f, _n in solution.opens:
        cost += vnf_map[f].resources.get(CPU, 0.0)
    report.nfv_cost = cost
    ok, detail = True, ""
    if solution.nfv_cost is not None and abs(solution.nfv_cost - cost) > FLOW_TOL:
        ok, detail = False, f"stored {solution.nfv_cost}, recomputed {cost}"
    report.checks.append(CheckResult("nfv_cost", ok, detail=detail))

    return report

"""Domain-level solutions: routing, placements, assignments, flows.

This is the common currency between the solver side (which extracts a
Solution from a model assignment) and the validator (which re-checks it
against the instance without looking at any model).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

SOLUTION_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DemandRouting:
    #: arcs carrying the demand (any order; a valid routing forms one path)
    arcs: tuple[tuple[str, str], ...]
    #: requested type -> (node, copy index)
    assignments: Mapping[str, tuple[str, int]] = field(default_factory=dict)
    #: arc -> flow value (scaling variants only)
    flows: Mapping[tuple[str, str], float] | None = None


def walk_route(
    origin: str, destination: str, arcs: tuple[tuple[str, str], ...]
) -> tuple[list[str] | None, list[tuple[str, str]], str]:
    """Order a routing arc set into a path from origin to destination.

    Returns (path, leftover arcs, error).  The path is None when no simple
    origin->destination walk exists; leftover arcs are those not on the walk
    (detached cycles).
    """
    nxt: dict[str, tuple[str, str]] = {}
    for u, v in arcs:
        if u in nxt:
            return None, [], f"two arcs leave {u!r}"
        nxt[u] = (u, v)
    path = [origin]
    used: set[tuple[str, str]] = set()
    seen = {origin}
    while path[-1] != destination:
        cur = path[-1]
        if cur not in nxt:
            return None, [], f"route stops at {cur!r}"
        arc = nxt[cur]
        if arc[1] in seen:
            return None, [], f"route revisits {arc[1]!r}"
        used.add(arc)
        path.append(arc[1])
        seen.add(arc[1])
    leftover = [a for a in arcs if a not in used]
    return path, leftover, ""


@dataclass(frozen=True)
class Solution:
    variant: str
    regime: str | None
    #: demand id -> routing
    demands: Mapping[str, DemandRouting] = field(default_factory=dict)
    #: open copies as (node, type, copy index)
    opens: tuple[tuple[str, str, int], ...] = ()
    max_util: float | None = None
    nfv_cost: float | None = None

    def open_set(self) -> set[tuple[str, str, int]]:
        return set(self.opens)


def save_solution(solution: Solution) -> str:
    doc: dict[str, Any] = {
        "schema_version": SOLUTION_SCHEMA_VERSION,
        "variant": solution.variant,
        "regime": solution.regime,
        "demands": {
            k: {
                "arcs": [[u, v] for u, v in r.arcs],
                "assignments": {f: [i, n] for f, (i, n) in r.assignments.items()},
                **(
                    {
                        "flows": {f"{u}->{v}": fl for (u, v), fl in r.flows.items()}
                    }
                    if r.flows is not None
                    else {}
                ),
            }
            for k, r in solution.demands.items()
        },
        "opens": [list(o) for o in solution.opens],
        "objectives": {
            "max_util": solution.max_util,
            "nfv_cost": solution.nfv_cost,
        },
    }
    return json.dumps(doc, indent=2)


def load_solution(text: str) -> Solution:
    doc = json.loads(text)
    if doc.get("schema_version") != SOLUTION_SCHEMA_VERSION:
        raise ValueError(f"unsupported solution schema {doc.get('schema_version')!r}")
    demands = {}
    for k, rd in doc.get("demands", {}).items():
        flows = None
        if "flows" in rd:
            flows = {}
            for arc, fl in rd["flows"].items():
                u, v = arc.split("->")
                flows[(u, v)] = float(fl)
        demands[k] = DemandRouting(
            arcs=tuple((u, v) for u, v in rd["arcs"]),
            assignments={f: (i, int(n)) for f, (i, n) in rd.get("assignments", {}).items()},
            flows=flows,
        )
    objectives = doc.get("objectives", {})
    return Solution(
        variant=doc.get("variant", "basic"),
        regime=doc.get("regime"),
        demands=demands,
        opens=tuple((i, f, int(n)) for i, f, n in doc.get("opens", [])),
        max_util=objectives.get("max_util"),
        nfv_cost=objectives.get("nfv_cost"),
    )


def extract_solution(model, assignment: Mapping[int, float]) -> Solution:
    """Build a Solution from a model assignment (model-aware side).

    Flow values are taken from the assignment, which the solver completes
    exactly for integral incumbents, so downstream comparisons against the
    validator's independent propagation are meaningful.
    """
    from .instance import CPU
    from .model import decode_paths  # local import, no cycle

    instance = model.meta["built_instance"]
    spec_variant = model.meta["variant"]
    with_scaling = "cd" in spec_variant.split("-")
    paths = decode_paths(model, assignment)

    demands = {}
    arc_sets: dict[str, set[tuple[str, str]]] = {}
    for d in instance.demands:
        assignments: dict[str, tuple[str, int]] = {}
        for v in model.variables:
            if v.sym == "z" and v.key[0] == d.id and assignment[v.id] > 0.5:
                _, i, f, n = v.key
                assignments[f] = (i, int(n))
        flows = None
        if with_scaling:
            flows = {}
            for v in model.variables:
                if v.sym == "flow" and v.key[0] == d.id and assignment[v.id] > 1e-12:
                    flows[(v.key[1], v.key[2])] = assignment[v.id]
        path = paths[d.id]
        routing = DemandRouting(
            arcs=tuple(zip(path, path[1:])), assignments=assignments, flows=flows
        )
        demands[d.id] = routing
        arc_sets[d.id] = set(routing.arcs)

    opens = tuple(
        (v.key[0], v.key[1], int(v.key[2]))
        for v in model.variables
        if v.sym == "y" and assignment[v.id] > 0.5
    )
    nfv_cost = 0.0
    for i, f, _n in opens:
        nfv_cost += instance.vnf_map[f].resources.get(CPU, 0.0)

    max_util = 0.0
    for a in instance.topology.arcs:
        load = 0.0
        for d in instance.demands:
            if with_scaling:
                load += (demands[d.id].flows or {}).get((a.src, a.dst), 0.0)
            elif (a.src, a.dst) in arc_sets[d.id]:
                load += d.bandwidth
        max_util = max(max_util, load / a.capacity)

    return Solution(
        variant=spec_variant,
        regime=model.meta.get("regime"),
        demands=demands,
        opens=opens,
        max_util=max_util,
        nfv_cost=nfv_cost,
    )

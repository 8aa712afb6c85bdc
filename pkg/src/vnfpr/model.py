"""Solver-agnostic MILP construction for the placement-and-routing variants.

Four variants are supported: ``basic`` (routing + location), ``basic-lat``
(adds per-demand latency budgets under a standard or fastpath forwarding
profile), ``basic-cd`` (adds flow scaling on the extended graph) and
``basic-lat-cd`` (both).  Each emitted constraint carries a family tag so a
model can be audited constraint by constraint; the families are listed in
``CONSTRAINT_FAMILIES``.

Variable tags:

====== =============== ========================================
tag    index           meaning
====== =============== ========================================
u      ()              maximum link utilization
x      (k, i, j)       demand k routed over arc (i, j)
y      (i, f, n)       copy n of type f open on node i
z      (k, i, f, n)    demand k assigned to copy (i, f, n)
w      (k, i, f)       demand k uses type f on node i
pi     (k, i)          position of node i on demand k's path
lat    (k, i, f)       forwarding latency k incurs at (i, f)
flow   (k, i, j)       actual flow of k on arc (i, j)
vin    (k, i, f, n)    flow of k entering node i for copy (i, f, n)
====== =============== ========================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

from .instance import (
    CPU,
    Demand,
    FastpathLatency,
    Instance,
    StandardLatency,
    VnfType,
    bandwidth_bounds,
    chain_pairs,
    extend_graph,
    incoming_capacity,
    validate_instance,
)

VARIANTS = ("basic", "basic-lat", "basic-cd", "basic-lat-cd")

CONSTRAINT_FAMILIES = {
    "flow_conserve": "single-path flow balance per demand and node",
    "link_util": "per-arc load bounded by utilization times capacity",
    "node_capacity": "per-node resource budget over open copies",
    "assign_once": "exactly one copy serves each requested type",
    "assign_needs_open": "assignments only to open copies",
    "assign_on_path": "assignments only on nodes the demand enters",
    "assign_use_count": "node-type use variable equals copy assignments",
    "no_cycle": "position-based elimination of detached routing cycles",
    "chain_order": "path positions respect the requested type order",
    "latency_budget": "per-demand end-to-end latency bound",
    "latency_curve": "piecewise-linear forwarding latency lower bounds",
    "latency_fixed": "fixed forwarding latency at used nodes",
    "copy_bw_cap": "per-copy aggregate bandwidth cap",
    "access_balance": "flow balance at access nodes",
    "nfvi_balance": "flow scaling balance at hosting nodes",
    "flow_route_ub": "flow only on routed arcs (upper bound)",
    "flow_route_lb": "minimum flow on routed arcs",
    "inflow_ub": "per-copy inflow upper linearization",
    "inflow_lb": "per-copy inflow lower linearization",
    "inflow_off": "per-copy inflow forced to zero when unassigned",
    "one_scaler_per_node": "at most one scaling VNF per node and demand",
    "copy_symmetry": "copy indices opened in order",
    "util_cap": "utilization cap (relaxed lexicographic bound)",
    "copy_count_cap": "cap on the total number of open copies",
    "presence_link": "type-presence indicator tied to open copies",
    "affinity_pair": "two types co-located node by node",
    "affinity_pin": "type pinned onto a node",
    "affinity_subset": "type placed on exactly one node of a subset",
    "anti_affinity_spread": "type spread over a minimum number of nodes",
    "anti_affinity_pair": "two types never co-located",
    "anti_affinity_forbid": "type banned from a node",
    "isolation": "two demands never share a copy",
}


class BuildError(ValueError):
    """Raised when a variant specification cannot be built."""


@dataclass(frozen=True)
class ObjectiveSpec:
    """What to optimize and which side constraints to cap it with.

    kind ``te`` minimizes the maximum link utilization; ``nfv`` minimizes the
    CPU cores of open copies; ``feasibility`` has a constant objective.  When
    ``u_cap`` is set a utilization variable is kept and capped; without it,
    non-TE models bound each arc by its plain capacity.  ``copy_cap`` bounds
    the total number of open copies.
    """

    kind: str = "te"  # te | nfv | feasibility
    u_cap: float | None = None
    copy_cap: int | None = None


@dataclass(frozen=True)
class Extensions:
    colocate: tuple[tuple[str, str], ...] = ()  # type pairs sharing nodes
    pin: tuple[tuple[str, str], ...] = ()  # (node, type) forced presence
    pin_subset: tuple[tuple[tuple[str, ...], str], ...] = ()  # one node of subset
    spread_min: Mapping[str, int] = field(default_factory=dict)  # type -> min node count
    forbid_pair: tuple[tuple[str, str], ...] = ()  # type pairs never co-located
    forbid: tuple[tuple[str, str], ...] = ()  # (node, type) banned
    isolate: tuple[tuple[str, str], ...] = ()  # demand pairs never sharing a copy
    core_router_vnf: bool = False

    def any_rules(self) -> bool:
        return bool(
            self.colocate
            or self.pin
            or self.pin_subset
            or self.spread_min
            or self.forbid_pair
            or self.forbid
            or self.isolate
            or self.core_router_vnf
        )


@dataclass(frozen=True)
class VariantSpec:
    variant: str = "basic"
    regime: str | None = None  # standard | fastpath, required for -lat variants
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    extensions: Extensions = field(default_factory=Extensions)
    #: audit switch: emit the additive-signed per-copy inflow lower bound
    #: (makes any model with an unused copy infeasible; diagnostics only)
    plus_signed_inflow_lb: bool = False
    #: drop the copy_symmetry family (used by counting tests)
    symmetry_breaking: bool = True

    @property
    def with_latency(self) -> bool:
        return "lat" in self.variant.split("-")

    @property
    def with_scaling(self) -> bool:
        return "cd" in self.variant.split("-")


@dataclass
class Variable:
    id: int
    name: str
    kind: str  # "bin" | "cont"
    lb: float
    ub: float
    sym: str
    key: tuple


@dataclass
class Constraint:
    name: str
    family: str
    coeffs: dict[int, float]
    sense: str  # "<=" | ">=" | "="
    rhs: float


@dataclass
class Objective:
    coeffs: dict[int, float] = field(default_factory=dict)
    constant: float = 0.0
    sense: str = "min"


@dataclass
class MilpModel:
    variables: list[Variable]
    constraints: list[Constraint]
    objective: Objective
    warm_start: dict[int, float] | None = None
    meta: dict[str, Any] = field(default_factory=dict)
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    #: model-aware exact completion of an integral assignment (not serialized)
    completion: Callable[[dict[int, float]], dict[int, float]] | None = field(
        default=None, repr=False, compare=False
    )
    #: model-aware rounding heuristic: LP values -> integral binary proposal
    primal_heuristic: Callable[[Mapping[int, float]], dict[int, float] | None] | None = (
        field(default=None, repr=False, compare=False)
    )

    def __post_init__(self) -> None:
        self.var_index: dict[tuple[str, tuple], int] = {
            (v.sym, v.key): v.id for v in self.variables
        }
        self.var_names: dict[str, int] = {v.name: v.id for v in self.variables}

    def var(self, sym: str, *key) -> int:
        return self.var_index[(sym, tuple(key))]

    def has_var(self, sym: str, *key) -> bool:
        return (sym, tuple(key)) in self.var_index

    def vars_of(self, sym: str) -> list[Variable]:
        return [v for v in self.variables if v.sym == sym]

    def constraints_of(self, family: str) -> list[Constraint]:
        return [c for c in self.constraints if c.family == family]

    def binaries(self) -> list[Variable]:
        return [v for v in self.variables if v.kind == "bin"]

    def objective_value(self, assignment: Mapping[int, float]) -> float:
        total = self.objective.constant
        for vid, coef in self.objective.coeffs.items():
            total += coef * assignment[vid]
        return total


from .names import encode_name  # noqa: E402  (tiny helper, no cycle)


class _Builder:
    def __init__(self) -> None:
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self._index: dict[tuple[str, tuple], int] = {}

    def add_var(self, sym: str, key: tuple, kind: str, lb: float, ub: float) -> int:
        vid = len(self.variables)
        self.variables.append(
            Variable(vid, encode_name(sym, key), kind, lb, ub, sym, tuple(key))
        )
        self._index[(sym, tuple(key))] = vid
        return vid

    def var(self, sym: str, *key) -> int:
        return self._index[(sym, tuple(key))]

    def has(self, sym: str, *key) -> bool:
        return (sym, tuple(key)) in self._index

    def add(
        self,
        family: str,
        key: tuple,
        coeffs: Mapping[int, float],
        sense: str,
        rhs: float,
    ) -> None:
        # drop explicit zeros so the matrix sparsity is well defined
        clean = {vid: c for vid, c in coeffs.items() if c != 0.0}
        self.constraints.append(
            Constraint(encode_name(family, key), family, clean, sense, rhs)
        )


def _requested(demand: Demand) -> tuple[str, ...]:
    return demand.vnfs


def build(instance: Instance, spec: VariantSpec) -> MilpModel:
    """Translate an instance plus a variant spec into a MILP.

    Scaling variants are built on the extended graph; if the instance is not
    extended yet this happens here and the twin mapping is kept in the model
    meta.  Raises BuildError on incompatible specs (unknown variant, missing
    or mismatched latency regime, contradictory extension rules, missing
    latency bounds).
    """
    if spec.variant not in VARIANTS:
        raise BuildError(f"unknown variant {spec.variant!r}")
    if spec.objective.kind not in ("te", "nfv", "feasibility"):
        raise BuildError(f"unknown objective kind {spec.objective.kind!r}")
    if spec.with_latency and spec.regime not in ("standard", "fastpath"):
        raise BuildError("latency variants need regime 'standard' or 'fastpath'")
    if not spec.with_latency and spec.regime is not None:
        raise BuildError(f"regime {spec.regime!r} given but {spec.variant!r} has no latency")
    validate_instance(instance)
    if spec.with_scaling and not instance.extended:
        instance = extend_graph(instance)

    topo = instance.topology
    nv = list(topo.nfvi_nodes)
    demands = instance.demands
    vnf_map = instance.vnf_map
    n_nodes = len(topo.nodes)

    b = _Builder()
    use_u = spec.objective.kind == "te" or spec.objective.u_cap is not None
    if use_u:
        b.add_var("u", (), "cont", 0.0, math.inf)

    copies: dict[tuple[str, str], int] = {}
    for i in nv:
        for f in vnf_map:
            copies[(i, f)] = instance.copies(i, vnf_map[f])

    for d in demands:
        for a in topo.arcs:
            b.add_var("x", (d.id, a.src, a.dst), "bin", 0.0, 1.0)
    for i in nv:
        for f, vnf in vnf_map.items():
            for n in range(1, copies[(i, f)] + 1):
                b.add_var("y", (i, f, n), "bin", 0.0, 1.0)
    for d in demands:
        for i in nv:
            for f in _requested(d):
                for n in range(1, copies[(i, f)] + 1):
                    b.add_var("z", (d.id, i, f, n), "bin", 0.0, 1.0)
    for d in demands:
        for i in nv:
            for f in _requested(d):
                b.add_var("w", (d.id, i, f), "bin", 0.0, 1.0)
    for d in demands:
        for i in topo.nodes:
            b.add_var("pi", (d.id, i.id), "cont", 0.0, float(n_nodes))

    _routing_location(b, instance, spec, use_u, copies)
    if spec.with_scaling:
        add_scaling(b, instance, spec, use_u, copies)
    if spec.with_latency:
        add_latency(b, instance, spec, copies)
    _node_capacity(b, instance, spec, copies)
    if spec.extensions.any_rules():
        add_extensions(b, instance, spec, copies)
    if spec.symmetry_breaking:
        for i in nv:
            for f in vnf_map:
                for n in range(1, copies[(i, f)]):
                    b.add(
                        "copy_symmetry",
                        (i, f, n),
                        {b.var("y", i, f, n): -1.0, b.var("y", i, f, n + 1): 1.0},
                        "<=",
                        0.0,
                    )

    objective = Objective()
    if spec.objective.kind == "te":
        objective.coeffs[b.var("u")] = 1.0
    elif spec.objective.kind == "nfv":
        for v in b.variables:
            if v.sym == "y":
                objective.coeffs[v.id] = vnf_map[v.key[1]].resources.get(CPU, 0.0)
    if spec.objective.u_cap is not None:
        b.add("util_cap", (), {b.var("u"): 1.0}, "<=", float(spec.objective.u_cap))
    if spec.objective.copy_cap is not None:
        ys = {v.id: 1.0 for v in b.variables if v.sym == "y"}
        b.add("copy_count_cap", (), ys, "<=", float(spec.objective.copy_cap))

    model = MilpModel(
        variables=b.variables,
        constraints=b.constraints,
        objective=objective,
        meta={
            "variant": spec.variant,
            "regime": spec.regime,
            "objective": spec.objective.kind,
            "u_cap": spec.objective.u_cap,
            "copy_cap": spec.objective.copy_cap,
            "extended": instance.extended,
            "twins": dict(instance.options.get("twins", {})),
        },
    )
    model.completion = _make_completion(model, instance, spec)
    model.primal_heuristic = _make_primal_heuristic(model, instance, spec)
    model.meta["built_instance"] = instance
    return model


def _routing_location(
    b: _Builder,
    instance: Instance,
    spec: VariantSpec,
    use_u: bool,
    copies: Mapping[tuple[str, str], int],
) -> None:
    topo = instance.topology
    nv = list(topo.nfvi_nodes)
    n_nodes = len(topo.nodes)

    for d in instance.demands:
        for node in topo.nodes:
            i = node.id
            coeffs: dict[int, float] = {}
            for a in topo.out_arcs[i]:
                coeffs[b.var("x", d.id, a.src, a.dst)] = 1.0
            for a in topo.in_arcs[i]:
                coeffs[b.var("x", d.id, a.src, a.dst)] = coeffs.get(
                    b.var("x", d.id, a.src, a.dst), 0.0
                ) - 1.0
            rhs = 1.0 if i == d.origin else (-1.0 if i == d.destination else 0.0)
            b.add("flow_conserve", (d.id, i), coeffs, "=", rhs)

    if not spec.with_scaling:
        for a in topo.arcs:
            coeffs = {
                b.var("x", d.id, a.src, a.dst): d.bandwidth for d in instance.demands
            }
            if use_u:
                coeffs[b.var("u")] = -a.capacity
                b.add("link_util", (a.src, a.dst), coeffs, "<=", 0.0)
            else:
                b.add("link_util", (a.src, a.dst), coeffs, "<=", a.capacity)

    for d in instance.demands:
        for f in _requested(d):
            coeffs = {}
            for i in nv:
                for n in range(1, copies[(i, f)] + 1):
                    coeffs[b.var("z", d.id, i, f, n)] = 1.0
            b.add("assign_once", (d.id, f), coeffs, "=", 1.0)

    for d in instance.demands:
        for i in nv:
            for f in _requested(d):
                for n in range(1, copies[(i, f)] + 1):
                    b.add(
                        "assign_needs_open",
                        (d.id, i, f, n),
                        {b.var("z", d.id, i, f, n): 1.0, b.var("y", i, f, n): -1.0},
                        "<=",
                        0.0,
                    )
                for n in range(1, copies[(i, f)] + 1):
                    coeffs = {b.var("z", d.id, i, f, n): 1.0}
                    for a in topo.in_arcs[i]:
                        coeffs[b.var("x", d.id, a.src, a.dst)] = -1.0
                    b.add("assign_on_path", (d.id, i, f, n), coeffs, "<=", 0.0)
                coeffs = {b.var("w", d.id, i, f): -1.0}
                for n in range(1, copies[(i, f)] + 1):
                    coeffs[b.var("z", d.id, i, f, n)] = 1.0
                b.add("assign_use_count", (d.id, i, f), coeffs, "=", 0.0)

    # positions increase along used arcs; the deactivation constant must
    # dominate any feasible position difference, i.e. the node count
    big = float(n_nodes)
    for d in instance.demands:
        for a in topo.arcs:
            b.add(
                "no_cycle",
                (d.id, a.src, a.dst),
                {
                    b.var("pi", d.id, a.dst): 1.0,
                    b.var("pi", d.id, a.src): -1.0,
                    b.var("x", d.id, a.src, a.dst): -(1.0 + big),
                },
                ">=",
                -big,
            )

    big_order = float(n_nodes) + 1.0
    for d in instance.demands:
        for f1, f2 in chain_pairs(d):
            for i in nv:
                for j in nv:
                    if i == j:
                        continue
                    b.add(
                        "chain_order",
                        (d.id, i, j, f1, f2),
                        {
                            b.var("pi", d.id, j): 1.0,
                            b.var("pi", d.id, i): -1.0,
                            b.var("w", d.id, i, f1): -big_order,
                            b.var("w", d.id, j, f2): -big_order,
                        },
                        ">=",
                        -2.0 * big_order,
                    )


def _node_capacity(
    b: _Builder,
    instance: Instance,
    spec: VariantSpec,
    copies: Mapping[tuple[str, str], int],
) -> None:
    topo = instance.topology
    vnf_map = instance.vnf_map
    resources = sorted({r for v in instance.vnf_types for r in v.resources})
    for i in topo.nfvi_nodes:
        for r in resources:
            coeffs: dict[int, float] = {}
            for f, vnf in vnf_map.items():
                req = vnf.resources.get(r, 0.0)
                for n in range(1, copies[(i, f)] + 1):
                    coeffs[b.var("y", i, f, n)] = req
            if spec.extensions.core_router_vnf:
                # virtualized switching consumes resources in proportion to
                # the node's aggregate in+out traffic
                for d in instance.demands:
                    for a in list(topo.out_arcs[i]) + list(topo.in_arcs[i]):
                        if spec.with_scaling:
                            vid = b.var("flow", d.id, a.src, a.dst)
                            coeffs[vid] = coeffs.get(vid, 0.0) + 1.0
                        else:
                            vid = b.var("x", d.id, a.src, a.dst)
                            coeffs[vid] = coeffs.get(vid, 0.0) + d.bandwidth
            cap = topo.node_map[i].capacity.get(r, 0.0)
            b.add("node_capacity", (i, r), coeffs, "<=", cap)


def add_latency(
    b: _Builder,
    instance: Instance,
    spec: VariantSpec,
    copies: Mapping[tuple[str, str], int],
) -> None:
    """Latency budget, per-copy latency bounds and fastpath bandwidth caps."""
    topo = instance.topology
    nv = list(topo.nfvi_nodes)
    vnf_map = instance.vnf_map

    for d in instance.demands:
        if d.max_latency is None:
            raise BuildError(f"demand {d.id!r}: latency variant needs max_latency")
        for f in _requested(d):
            profile = vnf_map[f].latency
            if profile is None:
                raise BuildError(f"vnf {f!r}: no latency profile")
            if profile.kind != spec.regime:
                raise BuildError(
                    f"vnf {f!r}: profile {profile.kind!r} does not match regime {spec.regime!r}"
                )

    for d in instance.demands:
        for i in nv:
            for f in _requested(d):
                b.add_var("lat", (d.id, i, f), "cont", 0.0, math.inf)

    for d in instance.demands:
        coeffs: dict[int, float] = {}
        for a in topo.arcs:
            if a.latency:
                coeffs[b.var("x", d.id, a.src, a.dst)] = a.latency
        for i in nv:
            for f in _requested(d):
                coeffs[b.var("lat", d.id, i, f)] = 1.0
        b.add("latency_budget", (d.id,), coeffs, "<=", d.max_latency)

    for d in instance.demands:
        for i in nv:
            for f in _requested(d):
                profile = vnf_map[f].latency
                if profile.kind == "fastpath":
                    b.add(
                        "latency_fixed",
                        (d.id, i, f),
                        {
                            b.var("lat", d.id, i, f): 1.0,
                            b.var("w", d.id, i, f): -profile.delay,
                        },
                        "=",
                        0.0,
                    )
                    continue
                big = d.max_latency
                for n in range(1, copies[(i, f)] + 1):
                    for jdx, (slope, icept) in enumerate(profile.components):
                        if spec.with_scaling:
                            load = {
                                b.var("vin", e.id, i, f, n): slope
                                for e in instance.demands
                                if f in _requested(e)
                            }
                        else:
                            load = {
                                b.var("z", e.id, i, f, n): slope * e.bandwidth
                                for e in instance.demands
                                if f in _requested(e)
                            }
                        coeffs = {b.var("lat", d.id, i, f): 1.0}
                        for vid, c in load.items():
                            coeffs[vid] = coeffs.get(vid, 0.0) - c
                        coeffs[b.var("z", d.id, i, f, n)] = (
                            coeffs.get(b.var("z", d.id, i, f, n), 0.0) - big
                        )
                        b.add(
                            "latency_curve",
                            (d.id, i, f, n, jdx),
                            coeffs,
                            ">=",
                            icept - big,
                        )

    if spec.regime == "fastpath" and not spec.with_scaling:
        _fastpath_caps(b, instance, copies, scaled=False)


def _fastpath_caps(
    b: _Builder,
    instance: Instance,
    copies: Mapping[tuple[str, str], int],
    scaled: bool,
) -> None:
    vnf_map = instance.vnf_map
    for i in instance.topology.nfvi_nodes:
        for f, vnf in vnf_map.items():
            profile = vnf.latency
            if not isinstance(profile, FastpathLatency):
                continue
            for n in range(1, copies[(i, f)] + 1):
                if scaled:
                    coeffs = {
                        b.var("vin", d.id, i, f, n): 1.0
                        for d in instance.demands
                        if f in _requested(d)
                    }
                else:
                    coeffs = {
                        b.var("z", d.id, i, f, n): d.bandwidth
                        for d in instance.demands
                        if f in _requested(d)
                    }
                if coeffs:
                    b.add("copy_bw_cap", (i, f, n), coeffs, "<=", profile.max_bandwidth)


def add_scaling(
    b: _Builder,
    instance: Instance,
    spec: VariantSpec,
    use_u: bool,
    copies: Mapping[tuple[str, str], int],
) -> None:
    """Flow variables, scaling balances and linearizations (extended graph)."""
    if not instance.extended:
        raise BuildError("scaling constraints need the extended graph")
    topo = instance.topology
    nv = set(topo.nfvi_nodes)
    vnf_map = instance.vnf_map
    bounds = {d.id: bandwidth_bounds(d, vnf_map) for d in instance.demands}

    for d in instance.demands:
        for a in topo.arcs:
            b.add_var("flow", (d.id, a.src, a.dst), "cont", 0.0, math.inf)
    for d in instance.demands:
        for i in topo.nfvi_nodes:
            for f in _requested(d):
                for n in range(1, copies[(i, f)] + 1):
                    b.add_var("vin", (d.id, i, f, n), "cont", 0.0, math.inf)

    access = {
        n.id
        for n in topo.nodes
        if any(d.origin == n.id or d.destination == n.id for d in instance.demands)
    }
    for d in instance.demands:
        total = d.bandwidth
        for f in _requested(d):
            total *= vnf_map[f].rate_factor
        for node in topo.nodes:
            i = node.id
            coeffs: dict[int, float] = {}
            for a in topo.out_arcs[i]:
                coeffs[b.var("flow", d.id, a.src, a.dst)] = 1.0
            for a in topo.in_arcs[i]:
                vid = b.var("flow", d.id, a.src, a.dst)
                coeffs[vid] = coeffs.get(vid, 0.0) - 1.0
            if i in access:
                rhs = d.bandwidth if i == d.origin else (-total if i == d.destination else 0.0)
                b.add("access_balance", (d.id, i), coeffs, "=", rhs)
            else:
                for f in _requested(d) if i in nv else ():
                    mu = vnf_map[f].rate_factor
                    for n in range(1, copies[(i, f)] + 1):
                        coeffs[b.var("vin", d.id, i, f, n)] = -(mu - 1.0)
                b.add("nfvi_balance", (d.id, i), coeffs, "=", 0.0)

    for d in instance.demands:
        bmin, bmax = bounds[d.id]
        for a in topo.arcs:
            b.add(
                "flow_route_ub",
                (d.id, a.src, a.dst),
                {
                    b.var("flow", d.id, a.src, a.dst): 1.0,
                    b.var("x", d.id, a.src, a.dst): -bmax,
                },
                "<=",
                0.0,
            )
            b.add(
                "flow_route_lb",
                (d.id, a.src, a.dst),
                {
                    b.var("flow", d.id, a.src, a.dst): 1.0,
                    b.var("x", d.id, a.src, a.dst): -bmin,
                },
                ">=",
                0.0,
            )

    for d in instance.demands:
        for i in topo.nfvi_nodes:
            big = incoming_capacity(topo, i)
            for f in _requested(d):
                for n in range(1, copies[(i, f)] + 1):
                    inflow = {
                        b.var("flow", d.id, a.src, a.dst): 1.0
                        for a in topo.in_arcs[i]
                    }
                    vin = b.var("vin", d.id, i, f, n)
                    z = b.var("z", d.id, i, f, n)
                    coeffs = {vin: 1.0, **{k: -v for k, v in inflow.items()}}
                    coeffs[z] = coeffs.get(z, 0.0) + big
                    b.add("inflow_ub", (d.id, i, f, n), coeffs, "<=", big)
                    lb_sign = 1.0 if spec.plus_signed_inflow_lb else -1.0
                    coeffs = {vin: 1.0, **{k: -v for k, v in inflow.items()}}
                    coeffs[z] = coeffs.get(z, 0.0) + lb_sign * big
                    b.add("inflow_lb", (d.id, i, f, n), coeffs, ">=", lb_sign * big)
                    b.add("inflow_off", (d.id, i, f, n), {vin: 1.0, z: -big}, "<=", 0.0)

    for d in instance.demands:
        for i in topo.nfvi_nodes:
            coeffs = {}
            for f in _requested(d):
                if vnf_map[f].rate_factor != 1.0:
                    for n in range(1, copies[(i, f)] + 1):
                        coeffs[b.var("z", d.id, i, f, n)] = 1.0
            if coeffs:
                b.add("one_scaler_per_node", (d.id, i), coeffs, "<=", 1.0)

    for a in topo.arcs:
        coeffs = {b.var("flow", d.id, a.src, a.dst): 1.0 for d in instance.demands}
        if use_u:
            coeffs[b.var("u")] = -a.capacity
            b.add("link_util", (a.src, a.dst), coeffs, "<=", 0.0)
        else:
            b.add("link_util", (a.src, a.dst), coeffs, "<=", a.capacity)

    if spec.regime == "fastpath":
        _fastpath_caps(b, instance, copies, scaled=True)


def add_extensions(
    b: _Builder,
    instance: Instance,
    spec: VariantSpec,
    copies: Mapping[tuple[str, str], int],
) -> None:
    """Placement rules: affinity, anti-affinity, isolation.

    Presence variables v[i, f] (1 iff any copy of f is open on i) are created
    lazily for the rules that need them.  Directly contradictory rules (a
    placement both pinned and banned) are rejected here.
    """
    ext = spec.extensions
    topo = instance.topology
    nv = list(topo.nfvi_nodes)
    vnf_map = instance.vnf_map

    def check_ref(f: str) -> None:
        if f not in vnf_map:
            raise BuildError(f"extension references unknown vnf {f!r}")

    def check_node(i: str) -> None:
        if i not in topo.node_map or not topo.node_map[i].nfvi:
            raise BuildError(f"extension references non-NFVI node {i!r}")

    pinned = set()
    for i, f in ext.pin:
        check_node(i), check_ref(f)
        pinned.add((i, f))
    for i, f in ext.forbid:
        check_node(i), check_ref(f)
        if (i, f) in pinned:
            raise BuildError(f"contradictory rules: {f!r} both pinned and banned on {i!r}")
    for f1, f2 in list(ext.colocate) + list(ext.forbid_pair):
        check_ref(f1), check_ref(f2)
    for f in ext.spread_min:
        check_ref(f)
    for subset, f in ext.pin_subset:
        check_ref(f)
        for i in subset:
            check_node(i)
    for k1, k2 in ext.isolate:
        for k in (k1, k2):
            if k not in instance.demand_map:
                raise BuildError(f"extension references unknown demand {k!r}")

    needs_presence = bool(
        ext.colocate or ext.pin or ext.pin_subset or ext.spread_min
        or ext.forbid_pair or ext.forbid
    )
    if needs_presence:
        for i in nv:
            for f in vnf_map:
                v = b.add_var("v", (i, f), "bin", 0.0, 1.0)
                coeffs = {v: -float(max(copies[(i, f)], 1))}
                for n in range(1, copies[(i, f)] + 1):
                    coeffs[b.var("y", i, f, n)] = 1.0
                b.add("presence_link", (i, f), coeffs, "<=", 0.0)

    for f1, f2 in ext.colocate:
        for i in nv:
            b.add(
                "affinity_pair",
                (i, f1, f2),
                {b.var("v", i, f1): 1.0, b.var("v", i, f2): -1.0},
                "=",
                0.0,
            )
    for i, f in ext.pin:
        b.add("affinity_pin", (i, f), {b.var("v", i, f): 1.0}, "=", 1.0)
    for subset, f in ext.pin_subset:
        b.add(
            "affinity_subset",
            (f, *subset),
            {b.var("v", i, f): 1.0 for i in subset},
            "=",
            1.0,
        )
    for f, minimum in sorted(ext.spread_min.items()):
        b.add(
            "anti_affinity_spread",
            (f,),
            {b.var("v", i, f): 1.0 for i in nv},
            ">=",
            float(minimum),
        )
    for f1, f2 in ext.forbid_pair:
        for i in nv:
            b.add(
                "anti_affinity_pair",
                (i, f1, f2),
                {b.var("v", i, f1): 1.0, b.var("v", i, f2): 1.0},
                "<=",
                1.0,
            )
    for i, f in ext.forbid:
        b.add("anti_affinity_forbid", (i, f), {b.var("v", i, f): 1.0}, "=", 0.0)

    for k1, k2 in ext.isolate:
        shared = set(_requested(instance.demand_map[k1])) & set(
            _requested(instance.demand_map[k2])
        )
        for i in nv:
            for f in sorted(shared):
                for n in range(1, copies[(i, f)] + 1):
                    b.add(
                        "isolation",
                        (k1, k2, i, f, n),
                        {
                            b.var("z", k1, i, f, n): 1.0,
                            b.var("z", k2, i, f, n): 1.0,
                        },
                        "<=",
                        1.0,
                    )


# ---------------------------------------------------------------------------
# exact completion of integral assignments


class CompletionError(ValueError):
    pass


def decode_paths(model: MilpModel, assignment: Mapping[int, float]) -> dict[str, list[str]]:
    """Per-demand node sequence from the routing binaries."""
    instance: Instance = model.meta["built_instance"]
    paths: dict[str, list[str]] = {}
    for d in instance.demands:
        nxt: dict[str, str] = {}
        for a in instance.topology.arcs:
            if assignment[model.var("x", d.id, a.src, a.dst)] > 0.5:
                if a.src in nxt:
                    raise CompletionError(f"demand {d.id!r}: branching route at {a.src!r}")
                nxt[a.src] = a.dst
        path = [d.origin]
        seen = {d.origin}
        while path[-1] != d.destination:
            cur = path[-1]
            if cur not in nxt:
                raise CompletionError(f"demand {d.id!r}: route stops at {cur!r}")
            step = nxt.pop(cur)
            if step in seen:
                raise CompletionError(f"demand {d.id!r}: route revisits {step!r}")
            path.append(step)
            seen.add(step)
        if nxt:
            raise CompletionError(f"demand {d.id!r}: detached arcs {sorted(nxt)}")
        paths[d.id] = path
    return paths


def _assigned_nodes(
    model: MilpModel, assignment: Mapping[int, float], demand: Demand
) -> dict[str, tuple[str, int]]:
    """Requested type -> (node, copy) chosen by the assignment binaries."""
    instance: Instance = model.meta["built_instance"]
    chosen: dict[str, tuple[str, int]] = {}
    for v in model.variables:
        if v.sym != "z" or assignment[v.id] <= 0.5:
            continue
        k, i, f, n = v.key
        if k != demand.id:
            continue
        if f in chosen:
            raise CompletionError(f"demand {k!r}: type {f!r} assigned twice")
        chosen[f] = (i, int(n))
    missing = set(_requested(demand)) - set(chosen)
    if missing:
        raise CompletionError(f"demand {demand.id!r}: unassigned types {sorted(missing)}")
    return chosen


def _make_completion(
    model: MilpModel, instance: Instance, spec: VariantSpec
) -> Callable[[dict[int, float]], dict[int, float]]:
    topo = instance.topology
    vnf_map = instance.vnf_map

    def complete(assignment: Mapping[int, float]) -> dict[int, float]:
        out: dict[int, float] = {}
        for v in model.variables:
            if v.kind == "bin":
                out[v.id] = float(round(assignment[v.id]))
        paths = decode_paths(model, out)
        chosen = {
            d.id: _assigned_nodes(model, out, d) for d in instance.demands
        }

        for d in instance.demands:
            pos = {node: float(p) for p, node in enumerate(paths[d.id])}
            for node in topo.nodes:
                vid = model.var("pi", d.id, node.id)
                out[vid] = pos.get(node.id, 0.0)

        arc_flow: dict[str, dict[tuple[str, str], float]] = {}
        node_inflow: dict[str, dict[str, float]] = {}
        copy_load: dict[tuple[str, str, int], float] = {}
        if spec.with_scaling:
            for d in instance.demands:
                at_node: dict[str, list[str]] = {}
                for f, (i, _n) in chosen[d.id].items():
                    at_node.setdefault(i, []).append(f)
                flows: dict[tuple[str, str], float] = {}
                inflow: dict[str, float] = {}
                cur = d.bandwidth
                path = paths[d.id]
                for u, v_ in zip(path, path[1:]):
                    flows[(u, v_)] = cur
                    inflow[v_] = cur
                    for f in sorted(at_node.get(v_, ())):
                        cur *= vnf_map[f].rate_factor
                arc_flow[d.id] = flows
                node_inflow[d.id] = inflow
            # per-demand loads accumulate in demand order so equal totals are
            # bit-equal across the solver, the validator and the oracle
            for d in instance.demands:
                for f, (i, n) in chosen[d.id].items():
                    vin_val = node_inflow[d.id].get(i, 0.0)
                    copy_load[(i, f, n)] = copy_load.get((i, f, n), 0.0) + vin_val
            for v in model.variables:
                if v.sym == "flow":
                    k, i, j = v.key
                    out[v.id] = arc_flow[k].get((i, j), 0.0)
                elif v.sym == "vin":
                    k, i, f, n = v.key
                    if out[model.var("z", k, i, f, n)] > 0.5:
                        out[v.id] = node_inflow[k].get(i, 0.0)
                    else:
                        out[v.id] = 0.0
        else:
            for d in instance.demands:
                for f, (i, n) in chosen[d.id].items():
                    copy_load[(i, f, n)] = copy_load.get((i, f, n), 0.0) + d.bandwidth

        if model.has_var("u"):
            u_val = 0.0
            for a in topo.arcs:
                load = 0.0
                for d in instance.demands:
                    if spec.with_scaling:
                        load += arc_flow[d.id].get((a.src, a.dst), 0.0)
                    elif out[model.var("x", d.id, a.src, a.dst)] > 0.5:
                        load += d.bandwidth
                u_val = max(u_val, load / a.capacity)
            out[model.var("u")] = u_val

        if spec.with_latency:
            for v in model.variables:
                if v.sym != "lat":
                    continue
                k, i, f = v.key
                profile = vnf_map[f].latency
                used = out[model.var("w", k, i, f)] > 0.5
                if isinstance(profile, FastpathLatency):
                    out[v.id] = profile.delay if used else 0.0
                    continue
                d = instance.demand_map[k]
                val = 0.0
                if used:
                    n = chosen[k][f][1]
                    val = profile.value(copy_load.get((i, f, n), 0.0))
                # unused copies of (i, f) can still force a positive bound
                # when their load pushes the curve past the budget
                for n in range(1, instance.copies(i, vnf_map[f]) + 1):
                    load = copy_load.get((i, f, n), 0.0)
                    val = max(val, profile.value(load) - d.max_latency)
                out[v.id] = val

        return out

    return complete


# ---------------------------------------------------------------------------
# LP-guided rounding heuristic


def _guided_path(
    instance: Instance, demand: Demand, weight, budget: int = 400
) -> list[str] | None:
    """Simple path from origin to destination, trying heavy arcs first."""
    topo = instance.topology
    path = [demand.origin]
    seen = {demand.origin}
    steps = 0

    def rec() -> bool:
        nonlocal steps
        steps += 1
        if steps > budget:
            return False
        cur = path[-1]
        if cur == demand.destination:
            return True
        ranked = sorted(
            (a for a in topo.out_arcs[cur] if a.dst not in seen),
            key=lambda a: -weight(a),
        )
        for a in ranked:
            path.append(a.dst)
            seen.add(a.dst)
            if rec():
                return True
            path.pop()
            seen.remove(a.dst)
        return False

    return list(path) if rec() else None


def _chain_sequence(demand: Demand) -> list[tuple[str, set[str]]]:
    """Requested types in a precedence-respecting order with predecessors."""
    preds: dict[str, set[str]] = {f: set() for f in demand.vnfs}
    for f1, f2 in chain_pairs(demand):
        preds[f2].add(f1)
    out: list[tuple[str, set[str]]] = []
    remaining = list(demand.vnfs)
    while remaining:
        ready = [f for f in remaining if preds[f] <= {f for f, _ in out}]
        if not ready:
            return []  # cyclic order, caught earlier by validation
        f = ready[0]
        out.append((f, set(preds[f])))
        remaining.remove(f)
    return out


def _make_primal_heuristic(
    model: MilpModel, instance: Instance, spec: VariantSpec
) -> Callable[[Mapping[int, float]], dict[int, float] | None]:
    """Round an LP point into a full placement, greedily but feasibly.

    Paths follow the largest routing values; each requested type then takes
    the first position (scanning the path after its predecessors) where an
    existing copy can absorb the extra load or a new copy fits the node.
    Anything the greedy pass cannot see (latency interplay, placement rules)
    is caught by the feasibility check on the completed assignment.
    """
    topo = instance.topology
    vnf_map = instance.vnf_map

    def heuristic(lp_values: Mapping[int, float]) -> dict[int, float] | None:
        opens: dict[tuple[str, str], list[float]] = {}  # (i, f) -> copy loads
        res_used: dict[tuple[str, str], float] = {}  # (i, r) -> used
        assignment: dict[tuple[str, str, str], int] = {}  # (k, i, f) -> copy
        paths: dict[str, list[str]] = {}

        def copies_at(i: str, f: str) -> int:
            return instance.copies(i, vnf_map[f])

        for demand in instance.demands:
            path = _guided_path(
                instance,
                demand,
                lambda a: lp_values[model.var("x", demand.id, a.src, a.dst)],
            )
            if path is None:
                return None
            paths[demand.id] = path
            pos = {node: idx for idx, node in enumerate(path)}

            # flow value entering each path position, given placements so far
            seq = _chain_sequence(demand)
            if len(seq) != len(demand.vnfs):
                return None
            placed_pos: dict[str, int] = {}
            scaler_nodes: set[str] = set()
            for f, preds in seq:
                lo = max((placed_pos[p] for p in preds), default=1)
                choice = None
                for idx in range(lo, len(path)):
                    i = path[idx]
                    if not topo.node_map[i].nfvi or copies_at(i, f) < 1:
                        continue
                    if (
                        spec.with_scaling
                        and vnf_map[f].rate_factor != 1.0
                        and i in scaler_nodes
                    ):
                        continue
                    inflow = demand.bandwidth
                    if spec.with_scaling:
                        inflow = _inflow_at(demand, path, idx, placed_pos, vnf_map)
                    own = inflow if spec.with_scaling else demand.bandwidth
                    profile = vnf_map[f].latency
                    cap_bw = (
                        profile.max_bandwidth
                        if spec.with_latency and isinstance(profile, FastpathLatency)
                        else math.inf
                    )
                    loads = opens.setdefault((i, f), [])
                    slot = None
                    for n, load in enumerate(loads):
                        if load + own <= cap_bw + 1e-12:
                            slot = n
                            break
                    if slot is None:
                        if len(loads) >= copies_at(i, f):
                            continue
                        fits = all(
                            res_used.get((i, r), 0.0) + req
                            <= topo.node_map[i].capacity.get(r, 0.0) + 1e-12
                            for r, req in vnf_map[f].resources.items()
                        )
                        if not fits or own > cap_bw + 1e-12:
                            continue
                        loads.append(0.0)
                        slot = len(loads) - 1
                        for r, req in vnf_map[f].resources.items():
                            res_used[(i, r)] = res_used.get((i, r), 0.0) + req
                    loads[slot] += own
                    assignment[(demand.id, i, f)] = slot + 1
                    placed_pos[f] = idx
                    if vnf_map[f].rate_factor != 1.0:
                        scaler_nodes.add(i)
                    choice = i
                    break
                if choice is None:
                    return None

        out: dict[int, float] = {}
        for v in model.variables:
            if v.kind != "bin":
                continue
            out[v.id] = 0.0
        for demand in instance.demands:
            path = paths[demand.id]
            for u, v_ in zip(path, path[1:]):
                out[model.var("x", demand.id, u, v_)] = 1.0
        open_counts: dict[tuple[str, str], int] = {
            key: len(loads) for key, loads in opens.items() if loads
        }
        for (i, f), count in open_counts.items():
            for n in range(1, count + 1):
                out[model.var("y", i, f, n)] = 1.0
        for (k, i, f), n in assignment.items():
            out[model.var("z", k, i, f, n)] = 1.0
            out[model.var("w", k, i, f)] = 1.0
        for v in model.variables:
            if v.sym == "v":
                i, f = v.key
                out[v.id] = 1.0 if open_counts.get((i, f), 0) else 0.0
        return out

    return heuristic


def _inflow_at(demand, path, idx, placed_pos, vnf_map) -> float:
    flow = demand.bandwidth
    for f, p in placed_pos.items():
        if p < idx:
            flow *= vnf_map[f].rate_factor
    return flow

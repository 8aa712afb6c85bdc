"""Problem instances for VNF placement and routing.

A topology is a directed graph whose nodes may host VNF copies (NFVI nodes)
and whose arcs carry a capacity and a latency.  Demands are point-to-point
flows that must traverse one copy of each requested VNF type, optionally in a
total or partial order.  VNF types may compress or decompress the flow
(rate_factor != 1), which is modelled on an extended graph where each access
node is split into a routing node and an NFVI twin.

Instances are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Mapping

SCHEMA_VERSION = 1

#: resource key used by the default copy rule and the NFV cost
CPU = "cpu"


class InstanceError(ValueError):
    """Raised for malformed instances or instance files."""


@dataclass(frozen=True)
class Arc:
    src: str
    dst: str
    capacity: float
    latency: float = 0.0
    virtual: bool = False  # twin link introduced by extend_graph

    @property
    def key(self) -> tuple[str, str]:
        return (self.src, self.dst)


@dataclass(frozen=True)
class Node:
    id: str
    tier: str = "edge"  # edge | aggregation | core
    nfvi: bool = False
    capacity: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class StandardLatency:
    """Convex piecewise-linear forwarding latency over aggregate load.

    Each component is a (slope, intercept) pair; the latency at load b is the
    pointwise maximum over components.  All slopes must be >= 0 so the curve
    is nondecreasing (convexity is automatic for a max of affine functions).
    """

    components: tuple[tuple[float, float], ...]

    kind = "standard"

    def value(self, load: float) -> float:
        return max(s * load + c for s, c in self.components)


@dataclass(frozen=True)
class FastpathLatency:
    """Constant forwarding latency with a hard per-copy bandwidth cap."""

    delay: float
    max_bandwidth: float

    kind = "fastpath"


@dataclass(frozen=True)
class VnfType:
    id: str
    rate_factor: float = 1.0  # outflow/inflow ratio; <1 compresses, >1 decompresses
    resources: Mapping[str, float] = field(default_factory=dict)
    latency: StandardLatency | FastpathLatency | None = None
    #: copies allowed per NFVI node: int (uniform), mapping by node id, or
    #: None for the default rule floor(node cpu / cpu request)
    max_copies: int | Mapping[str, int] | None = None


@dataclass(frozen=True)
class Demand:
    id: str
    origin: str
    destination: str
    bandwidth: float
    vnfs: tuple[str, ...] = ()
    #: total-order coefficients (smaller first); ties mean "no precedence"
    order_coeffs: Mapping[str, float] | None = None
    #: partial order as (before, after) pairs; mutually exclusive with order_coeffs
    precedence: tuple[tuple[str, str], ...] | None = None
    max_latency: float | None = None


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def arc_map(self) -> dict[tuple[str, str], Arc]:
        return {a.key: a for a in self.arcs}

    @cached_property
    def out_arcs(self) -> dict[str, tuple[Arc, ...]]:
        res: dict[str, list[Arc]] = {n.id: [] for n in self.nodes}
        for a in self.arcs:
            res[a.src].append(a)
        return {k: tuple(v) for k, v in res.items()}

    @cached_property
    def in_arcs(self) -> dict[str, tuple[Arc, ...]]:
        res: dict[str, list[Arc]] = {n.id: [] for n in self.nodes}
        for a in self.arcs:
            res[a.dst].append(a)
        return {k: tuple(v) for k, v in res.items()}

    @property
    def nfvi_nodes(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.nfvi)


@dataclass(frozen=True)
class Instance:
    topology: Topology
    vnf_types: tuple[VnfType, ...]
    demands: tuple[Demand, ...]
    options: Mapping[str, Any] = field(default_factory=dict)

    @cached_property
    def vnf_map(self) -> dict[str, VnfType]:
        return {v.id: v for v in self.vnf_types}

    @cached_property
    def demand_map(self) -> dict[str, Demand]:
        return {d.id: d for d in self.demands}

    @property
    def extended(self) -> bool:
        return bool(self.options.get("extended", False))

    def copies(self, node_id: str, vnf: VnfType) -> int:
        """Number of copies of `vnf` allowed on `node_id` (c_i^f)."""
        node = self.topology.node_map[node_id]
        if not node.nfvi:
            return 0
        mc = vnf.max_copies
        if isinstance(mc, int):
            return mc
        if isinstance(mc, Mapping):
            if node_id in mc:
                return int(mc[node_id])
            # twins inherit the limit of the node they were split from
            orig = self.options.get("twin_of", {}).get(node_id)
            return int(mc.get(orig, 0)) if orig is not None else 0
        cpu_req = vnf.resources.get(CPU, 0.0)
        if cpu_req <= 0:
            raise InstanceError(
                f"vnf {vnf.id!r}: default copy rule needs a positive {CPU} request"
            )
        return int(math.floor(node.capacity.get(CPU, 0.0) / cpu_req))


def access_nodes(instance: Instance) -> list[str]:
    """Demand endpoints, in topology node order."""
    endpoints = {d.origin for d in instance.demands} | {
        d.destination for d in instance.demands
    }
    return [n.id for n in instance.topology.nodes if n.id in endpoints]


def validate_instance(instance: Instance) -> None:
    """Raise InstanceError on any structural violation."""
    topo = instance.topology
    seen_nodes: set[str] = set()
    for n in topo.nodes:
        if n.id in seen_nodes:
            raise InstanceError(f"duplicate node id {n.id!r}")
        seen_nodes.add(n.id)
        for r, cap in n.capacity.items():
            if cap < 0:
                raise InstanceError(f"node {n.id!r}: capacity[{r!r}] must be >= 0")
    seen_arcs: set[tuple[str, str]] = set()
    for a in topo.arcs:
        for end in (a.src, a.dst):
            if end not in seen_nodes:
                raise InstanceError(f"arc ({a.src},{a.dst}): unknown node {end!r}")
        if a.key in seen_arcs:
            raise InstanceError(f"duplicate arc ({a.src},{a.dst})")
        seen_arcs.add(a.key)
        if a.capacity <= 0:
            raise InstanceError(f"arc ({a.src},{a.dst}): capacity must be > 0")
        if a.latency < 0:
            raise InstanceError(f"arc ({a.src},{a.dst}): latency must be >= 0")
    seen_vnfs: set[str] = set()
    for v in instance.vnf_types:
        if v.id in seen_vnfs:
            raise InstanceError(f"duplicate vnf id {v.id!r}")
        seen_vnfs.add(v.id)
        if v.rate_factor <= 0:
            raise InstanceError(f"vnf {v.id!r}: rate_factor must be > 0")
        for r, req in v.resources.items():
            if req < 0:
                raise InstanceError(f"vnf {v.id!r}: resources[{r!r}] must be >= 0")
        if isinstance(v.latency, StandardLatency):
            if not v.latency.components:
                raise InstanceError(f"vnf {v.id!r}: latency curve has no components")
            for s, _ in v.latency.components:
                if s < 0:
                    raise InstanceError(
                        f"vnf {v.id!r}: latency curve slope must be >= 0"
                    )
        elif isinstance(v.latency, FastpathLatency):
            if v.latency.delay < 0 or v.latency.max_bandwidth <= 0:
                raise InstanceError(f"vnf {v.id!r}: bad fastpath latency profile")
    requested: set[str] = set()
    for d in instance.demands:
        if d.origin == d.destination:
            raise InstanceError(f"demand {d.id!r}: origin equals destination")
        for end in (d.origin, d.destination):
            if end not in seen_nodes:
                raise InstanceError(f"demand {d.id!r}: unknown endpoint {end!r}")
        if d.bandwidth <= 0:
            raise InstanceError(f"demand {d.id!r}: bandwidth must be > 0")
        if len(set(d.vnfs)) != len(d.vnfs):
            raise InstanceError(f"demand {d.id!r}: repeated vnf request")
        for f in d.vnfs:
            if f not in seen_vnfs:
                raise InstanceError(f"demand {d.id!r}: unknown vnf type {f!r}")
            requested.add(f)
        if d.order_coeffs is not None and d.precedence is not None:
            raise InstanceError(
                f"demand {d.id!r}: give order_coeffs or precedence, not both"
            )
        if d.order_coeffs is not None:
            extra = set(d.order_coeffs) - set(d.vnfs)
            if extra:
                raise InstanceError(
                    f"demand {d.id!r}: order coefficient for unrequested {sorted(extra)}"
                )
        if d.precedence is not None:
            for f1, f2 in d.precedence:
                if f1 not in d.vnfs or f2 not in d.vnfs:
                    raise InstanceError(
                        f"demand {d.id!r}: precedence over unrequested vnf"
                    )
            _check_acyclic(d)
    for f in sorted(requested):
        vnf = instance.vnf_map[f]
        if not any(
            instance.copies(n.id, vnf) >= 1 for n in topo.nodes if n.nfvi
        ):
            raise InstanceError(f"vnf {f!r} is requested but no node may host it")


def _check_acyclic(demand: Demand) -> None:
    succ: dict[str, list[str]] = {}
    for f1, f2 in demand.precedence or ():
        succ.setdefault(f1, []).append(f2)
    state: dict[str, int] = {}

    def visit(f: str) -> None:
        if state.get(f) == 1:
            raise InstanceError(f"demand {demand.id!r}: precedence cycle at {f!r}")
        if state.get(f) == 2:
            return
        state[f] = 1
        for g in succ.get(f, ()):
            visit(g)
        state[f] = 2

    for f in list(succ):
        visit(f)


def chain_pairs(demand: Demand) -> list[tuple[str, str]]:
    """Ordered (before, after) type pairs the demand imposes."""
    if demand.precedence is not None:
        return [tuple(p) for p in demand.precedence]
    if demand.order_coeffs is not None:
        oc = demand.order_coeffs
        return [
            (f1, f2)
            for f1 in demand.vnfs
            for f2 in demand.vnfs
            if f1 != f2 and f1 in oc and f2 in oc and oc[f2] > oc[f1]
        ]
    return []


def total_order(demand: Demand) -> list[str] | None:
    """Requested types sorted by order coefficient, or None if not a strict
    total order over all requested types."""
    oc = demand.order_coeffs
    if oc is None or set(oc) != set(demand.vnfs):
        return None
    if len(set(oc.values())) != len(demand.vnfs):
        return None
    return sorted(demand.vnfs, key=lambda f: oc[f])


def bandwidth_bounds(demand: Demand, vnf_map: Mapping[str, VnfType]) -> tuple[float, float]:
    """(b_min, b_max) a demand's flow can reach across its chain.

    b_max = b * max(1, prod of rate factors >= 1); b_min symmetric with min
    and factors <= 1, so b_min <= b <= b_max regardless of the chain mix.
    """
    up = 1.0
    down = 1.0
    for f in demand.vnfs:
        mu = vnf_map[f].rate_factor
        if mu <= 0:
            raise InstanceError(f"vnf {f!r}: rate_factor must be > 0")
        if mu >= 1.0:
            up *= mu
        if mu <= 1.0:
            down *= mu
    return demand.bandwidth * min(1.0, down), demand.bandwidth * max(1.0, up)


def worst_case_bandwidth(demand: Demand, vnf_map: Mapping[str, VnfType]) -> float:
    """Largest bandwidth the demand can carry on any arc.

    With a known total order the running prefix product bounds the flow
    tighter than the global b_max; otherwise falls back to b_max.
    """
    order = total_order(demand)
    if order is None:
        return bandwidth_bounds(demand, vnf_map)[1]
    worst = demand.bandwidth
    flow = demand.bandwidth
    for f in order:
        flow *= vnf_map[f].rate_factor
        worst = max(worst, flow)
    return worst


def incoming_capacity(topology: Topology, node_id: str) -> float:
    """Total capacity of a node's incoming arcs (big-M for per-copy inflow)."""
    return sum(a.capacity for a in topology.in_arcs.get(node_id, ()))


def twin_id(node_id: str) -> str:
    return node_id + "'"


def extend_graph(instance: Instance) -> Instance:
    """Split each access node into a routing node and an NFVI twin.

    The twin inherits the NFVI role and capacity; all arcs leaving the access
    node are re-rooted at the twin and a zero-latency twin arc (i, i') is
    added with capacity equal to the node's total incident capacity (so the
    twin arc never becomes the binding constraint).  Demands keep their
    original endpoints.  Idempotent: an extended instance is returned as is.
    """
    if instance.extended:
        return instance
    topo = instance.topology
    access = access_nodes(instance)
    twins = {i: twin_id(i) for i in access}
    for i, t in twins.items():
        if t in topo.node_map:
            raise InstanceError(f"cannot extend: node id {t!r} already exists")

    nodes: list[Node] = []
    for n in topo.nodes:
        if n.id in twins:
            nodes.append(replace(n, nfvi=False, capacity={}))
            nodes.append(
                Node(id=twins[n.id], tier=n.tier, nfvi=n.nfvi, capacity=dict(n.capacity))
            )
        else:
            nodes.append(n)

    arcs: list[Arc] = []
    for a in topo.arcs:
        if a.src in twins:
            arcs.append(replace(a, src=twins[a.src]))
        else:
            arcs.append(a)
    for i in access:
        incident = sum(
            a.capacity for a in topo.arcs if a.src == i or a.dst == i
        )
        arcs.append(Arc(src=i, dst=twins[i], capacity=incident, latency=0.0, virtual=True))

    options = dict(instance.options)
    options["extended"] = True
    options["twins"] = dict(twins)
    options["twin_of"] = {t: i for i, t in twins.items()}
    return Instance(
        topology=Topology(nodes=tuple(nodes), arcs=tuple(arcs)),
        vnf_types=instance.vnf_types,
        demands=instance.demands,
        options=options,
    )


# ---------------------------------------------------------------------------
# plain-text (JSON) instance files


def save_instance(instance: Instance) -> str:
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "nodes": [
            {
                "id": n.id,
                "tier": n.tier,
                "nfvi": n.nfvi,
                "capacity": dict(n.capacity),
            }
            for n in instance.topology.nodes
        ],
        "arcs": [
            {
                "src": a.src,
                "dst": a.dst,
                "capacity": a.capacity,
                "latency_ms": a.latency,
                **({"virtual": True} if a.virtual else {}),
            }
            for a in instance.topology.arcs
        ],
        "vnfs": [_vnf_doc(v) for v in instance.vnf_types],
        "demands": [_demand_doc(d) for d in instance.demands],
        "options": dict(instance.options),
    }
    return json.dumps(doc, indent=2)


def _vnf_doc(v: VnfType) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "id": v.id,
        "rate_factor": v.rate_factor,
        "resources": dict(v.resources),
    }
    if isinstance(v.latency, StandardLatency):
        doc["latency"] = {
            "profile": "standard",
            "components": [list(c) for c in v.latency.components],
        }
    elif isinstance(v.latency, FastpathLatency):
        doc["latency"] = {
            "profile": "fastpath",
            "delay_ms": v.latency.delay,
            "max_bandwidth": v.latency.max_bandwidth,
        }
    if v.max_copies is not None:
        doc["max_copies_per_node"] = (
            v.max_copies if isinstance(v.max_copies, int) else dict(v.max_copies)
        )
    return doc


def _demand_doc(d: Demand) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "id": d.id,
        "origin": d.origin,
        "destination": d.destination,
        "bandwidth": d.bandwidth,
        "vnfs": list(d.vnfs),
    }
    if d.order_coeffs is not None:
        doc["order_coefficients"] = dict(d.order_coeffs)
    if d.precedence is not None:
        doc["precedence"] = [list(p) for p in d.precedence]
    if d.max_latency is not None:
        doc["max_latency_ms"] = d.max_latency
    return doc


def _req(obj: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in obj:
        raise InstanceError(f"{path}: missing field {key!r}")
    return obj[key]


def load_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InstanceError("top level must be an object")
    version = _req(doc, "schema_version", "instance")
    if version != SCHEMA_VERSION:
        raise InstanceError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    nodes = []
    for idx, nd in enumerate(doc.get("nodes", [])):
        path = f"nodes[{idx}]"
        nodes.append(
            Node(
                id=str(_req(nd, "id", path)),
                tier=str(nd.get("tier", "edge")),
                nfvi=bool(nd.get("nfvi", False)),
                capacity={str(k): float(v) for k, v in nd.get("capacity", {}).items()},
            )
        )
    arcs = []
    for idx, ad in enumerate(doc.get("arcs", [])):
        path = f"arcs[{idx}]"
        arcs.append(
            Arc(
                src=str(_req(ad, "src", path)),
                dst=str(_req(ad, "dst", path)),
                capacity=float(_req(ad, "capacity", path)),
                latency=float(ad.get("latency_ms", 0.0)),
                virtual=bool(ad.get("virtual", False)),
            )
        )
    vnfs = []
    for idx, vd in enumerate(doc.get("vnfs", [])):
        path = f"vnfs[{idx}]"
        latency: StandardLatency | FastpathLatency | None = None
        ld = vd.get("latency")
        if ld is not None:
            profile = _req(ld, "profile", f"{path}.latency")
            if profile == "standard":
                comps = _req(ld, "components", f"{path}.latency")
                latency = StandardLatency(
                    components=tuple((float(s), float(c)) for s, c in comps)
                )
            elif profile == "fastpath":
                latency = FastpathLatency(
                    delay=float(_req(ld, "delay_ms", f"{path}.latency")),
                    max_bandwidth=float(_req(ld, "max_bandwidth", f"{path}.latency")),
                )
            else:
                raise InstanceError(f"{path}.latency: unknown profile {profile!r}")
        mc = vd.get("max_copies_per_node")
        if isinstance(mc, dict):
            mc = {str(k): int(v) for k, v in mc.items()}
        elif mc is not None:
            mc = int(mc)
        vnfs.append(
            VnfType(
                id=str(_req(vd, "id", path)),
                rate_factor=float(vd.get("rate_factor", 1.0)),
                resources={str(k): float(v) for k, v in vd.get("resources", {}).items()},
                latency=latency,
                max_copies=mc,
            )
        )
    demands = []
    for idx, dd in enumerate(doc.get("demands", [])):
        path = f"demands[{idx}]"
        oc = dd.get("order_coefficients")
        prec = dd.get("precedence")
        demands.append(
            Demand(
                id=str(_req(dd, "id", path)),
                origin=str(_req(dd, "origin", path)),
                destination=str(_req(dd, "destination", path)),
                bandwidth=float(_req(dd, "bandwidth", path)),
                vnfs=tuple(str(f) for f in dd.get("vnfs", [])),
                order_coeffs={str(k): float(v) for k, v in oc.items()} if oc else None,
                precedence=tuple((str(a), str(b)) for a, b in prec) if prec else None,
                max_latency=(
                    float(dd["max_latency_ms"]) if "max_latency_ms" in dd else None
                ),
            )
        )
    options = dict(doc.get("options", {}))
    instance = Instance(
        topology=Topology(nodes=tuple(nodes), arcs=tuple(arcs)),
        vnf_types=tuple(vnfs),
        demands=tuple(demands),
        options=options,
    )
    try:
        validate_instance(instance)
    except InstanceError:
        raise
    return instance

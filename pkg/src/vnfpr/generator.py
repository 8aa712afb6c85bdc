"""Synthetic three-tier instances (edge / aggregation / core).

The topology is fixed: each edge node is dual-homed to two aggregation
nodes, each aggregation node is dual-homed to two core nodes, and the core
layer is a full mesh.  Every node hosts an NFVI cluster whose size grows
from edge to core.  Demands are drawn for one of two case studies:

* internet - traffic between edge and core nodes, both directions;
* vpn      - traffic between pairs of edge nodes.

Endpoint pairs are sampled with a fixed internal stream so that two
instances generated with different seeds differ only in their demand
bandwidths; the seed drives bandwidths alone.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .instance import (
    Arc,
    Demand,
    FastpathLatency,
    Instance,
    InstanceError,
    Node,
    StandardLatency,
    Topology,
    VnfType,
    validate_instance,
)

#: default convex piecewise-linear forwarding latency (slope, intercept) in ms
DEFAULT_CURVE: tuple[tuple[float, float], ...] = ((0.0, 1.0), (5.0, 0.0), (20.0, -7.5))

_DEMAND_RANGES = {"internet": (0.1, 0.14), "vpn": (0.13, 0.17)}
_DEMAND_COUNTS = {"internet": 36, "vpn": 30}
_PAIR_STREAM_SEED = 988211  # fixed: endpoint pairs must not vary with the seed


@dataclass(frozen=True)
class CatalogSpec:
    """VNF catalog knobs for generated instances."""

    regime: str = "standard"  # standard | fastpath
    rate_factors: Mapping[str, float] = field(
        default_factory=lambda: {"firewall": 0.8, "dpi": 1.0, "tunnel": 1.25}
    )
    order: Mapping[str, float] = field(
        default_factory=lambda: {"firewall": 1.0, "dpi": 2.0, "tunnel": 3.0}
    )
    cpu_request: float = 1.0
    ram_request: float = 16.0
    curve: tuple[tuple[float, float], ...] = DEFAULT_CURVE
    fastpath_delay: float = 1.0
    fastpath_max_bandwidth: float = 0.5
    max_copies: int | None = None  # None: floor(node cpu / cpu request)


@dataclass(frozen=True)
class ThreeTierConfig:
    case: str = "internet"  # internet | vpn
    edge_count: int = 8
    agg_count: int = 4
    core_count: int = 4
    #: link capacity by link class (edge: edge-agg, aggregation: agg-core, core: core-core)
    link_capacity: Mapping[str, float] = field(
        default_factory=lambda: {"edge": 1.0, "aggregation": 0.6, "core": 5.0}
    )
    link_latency: Mapping[str, float] = field(
        default_factory=lambda: {"edge": 1.0, "aggregation": 3.0, "core": 5.0}
    )
    node_cpu: Mapping[str, float] = field(
        default_factory=lambda: {"edge": 3.0, "aggregation": 5.0, "core": 10.0}
    )
    node_ram: Mapping[str, float] = field(
        default_factory=lambda: {"edge": 40.0, "aggregation": 80.0, "core": 160.0}
    )
    demand_count: int | None = None  # None: 36 internet / 30 vpn
    bandwidth_range: tuple[float, float] | None = None
    latency_bound: float = 15.0
    demand_pairs: Sequence[tuple[str, str]] | None = None  # overrides sampling
    catalog: CatalogSpec = field(default_factory=CatalogSpec)


def _catalog(spec: CatalogSpec) -> tuple[VnfType, ...]:
    if spec.regime == "standard":
        latency = StandardLatency(components=tuple(tuple(c) for c in spec.curve))
    elif spec.regime == "fastpath":
        latency = FastpathLatency(
            delay=spec.fastpath_delay, max_bandwidth=spec.fastpath_max_bandwidth
        )
    else:
        raise InstanceError(f"unknown latency regime {spec.regime!r}")
    return tuple(
        VnfType(
            id=name,
            rate_factor=mu,
            resources={"cpu": spec.cpu_request, "ram": spec.ram_request},
            latency=latency,
            max_copies=spec.max_copies,
        )
        for name, mu in spec.rate_factors.items()
    )


def three_tier_topology(config: ThreeTierConfig) -> Topology:
    edges = [f"e{i}" for i in range(config.edge_count)]
    aggs = [f"a{i}" for i in range(config.agg_count)]
    cores = [f"c{i}" for i in range(config.core_count)]
    nodes = (
        [Node(e, "edge", True, {"cpu": config.node_cpu["edge"], "ram": config.node_ram["edge"]}) for e in edges]
        + [Node(a, "aggregation", True, {"cpu": config.node_cpu["aggregation"], "ram": config.node_ram["aggregation"]}) for a in aggs]
        + [Node(c, "core", True, {"cpu": config.node_cpu["core"], "ram": config.node_ram["core"]}) for c in cores]
    )

    def both_ways(u: str, v: str, klass: str) -> list[Arc]:
        cap = config.link_capacity[klass]
        lat = config.link_latency[klass]
        return [Arc(u, v, cap, lat), Arc(v, u, cap, lat)]

    arcs: list[Arc] = []
    for i, e in enumerate(edges):
        arcs += both_ways(e, aggs[i % len(aggs)], "edge")
        arcs += both_ways(e, aggs[(i + 1) % len(aggs)], "edge")
    for j, a in enumerate(aggs):
        arcs += both_ways(a, cores[j % len(cores)], "aggregation")
        arcs += both_ways(a, cores[(j + 1) % len(cores)], "aggregation")
    for u in range(len(cores)):
        for v in range(len(cores)):
            if u != v:
                arcs.append(
                    Arc(cores[u], cores[v], config.link_capacity["core"], config.link_latency["core"])
                )
    return Topology(nodes=tuple(nodes), arcs=tuple(arcs))


def _candidate_pairs(config: ThreeTierConfig) -> list[tuple[str, str]]:
    edges = [f"e{i}" for i in range(config.edge_count)]
    cores = [f"c{i}" for i in range(config.core_count)]
    if config.case == "internet":
        return [(e, c) for e in edges for c in cores] + [
            (c, e) for c in cores for e in edges
        ]
    if config.case == "vpn":
        return [(u, v) for u in edges for v in edges if u != v]
    raise InstanceError(f"unknown case study {config.case!r}")


def generate_three_tier(seed: int, config: ThreeTierConfig | None = None) -> Instance:
    """Build a seeded three-tier instance; equal seeds give equal instances."""
    config = config or ThreeTierConfig()
    lo, hi = config.bandwidth_range or _DEMAND_RANGES[config.case]
    if not (0 < lo <= hi):
        raise InstanceError(f"bad bandwidth range ({lo}, {hi})")
    count = config.demand_count
    if count is None:
        count = _DEMAND_COUNTS[config.case]
    if config.demand_pairs is not None:
        pairs = [tuple(p) for p in config.demand_pairs]
    else:
        candidates = _candidate_pairs(config)
        if count > len(candidates):
            raise InstanceError(
                f"demand_count {count} exceeds the {len(candidates)} candidate pairs"
            )
        pair_rng = random.Random(_PAIR_STREAM_SEED)
        pairs = pair_rng.sample(candidates, count)

    topo = three_tier_topology(config)
    catalog = _catalog(config.catalog)
    order = dict(config.catalog.order)
    rng = random.Random(seed)
    demands = tuple(
        Demand(
            id=f"d{i}",
            origin=o,
            destination=t,
            bandwidth=rng.uniform(lo, hi),
            vnfs=tuple(v.id for v in catalog),
            order_coeffs={f: order[f] for f in order},
            max_latency=config.latency_bound,
        )
        for i, (o, t) in enumerate(pairs)
    )
    instance = Instance(
        topology=topo,
        vnf_types=catalog,
        demands=demands,
        options={
            "bandwidth_unit": "unit",
            "latency_regime": config.catalog.regime,
            "case": config.case,
            "seed": seed,
        },
    )
    validate_instance(instance)
    return instance

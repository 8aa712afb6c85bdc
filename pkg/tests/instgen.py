"""Seeded random desk-scale instances for oracle-equivalence testing.

Bandwidths and capacities are dyadic rationals (multiples of 1/64) so load
sums are exact in binary64 and distinct objective values are separated by
at least ~2^-8: exact equality between the solver and the enumeration
oracle is then decidable in floating point.  Every node hosts an NFVI
cluster with one copy per type (c == 1), one uniform latency bound per
instance, and integer CPU sizes.
"""

from __future__ import annotations

import random

from vnfpr.instance import (
    Arc,
    Demand,
    FastpathLatency,
    Instance,
    Node,
    StandardLatency,
    Topology,
    VnfType,
    validate_instance,
)

GAMMAS = [0.5, 1.0, 2.0]
BMAXES = [0.25, 0.5, 1.0]


def random_instance(
    seed: int,
    regime: str | None = None,
    max_nodes: int = 6,
    max_demands: int = 3,
    max_types: int = 2,
) -> Instance:
    rng = random.Random(seed)
    n_nodes = rng.randint(4, max_nodes)
    names = [chr(ord("A") + i) for i in range(n_nodes)]

    nodes = tuple(
        Node(
            id=name,
            tier=rng.choice(("edge", "aggregation", "core")),
            nfvi=True,
            capacity={"cpu": float(rng.randint(1, 3))},
        )
        for name in names
    )

    # connected chain plus a few random chords, all links bidirectional
    pairs: set[tuple[str, str]] = set()
    order = names[:]
    rng.shuffle(order)
    for u, v in zip(order, order[1:]):
        pairs.add((min(u, v), max(u, v)))
    extra = rng.randint(0, n_nodes - 2)
    for _ in range(extra):
        u, v = rng.sample(names, 2)
        pairs.add((min(u, v), max(u, v)))
    arcs = []
    for u, v in sorted(pairs):
        cap = rng.choice(GAMMAS)
        lat = float(rng.randint(1, 3))
        arcs.append(Arc(u, v, cap, lat))
        arcs.append(Arc(v, u, cap, lat))
    topo = Topology(nodes=nodes, arcs=tuple(arcs))

    n_types = rng.randint(1, max_types)
    latency = None
    if regime == "standard":
        slope = float(rng.choice((2, 5, 10)))
        latency = StandardLatency(components=((0.0, 1.0), (slope, 0.0)))
    elif regime == "fastpath":
        latency = FastpathLatency(
            delay=float(rng.randint(1, 2)), max_bandwidth=rng.choice(BMAXES)
        )
    vnfs = tuple(
        VnfType(
            id=f"f{t}",
            rate_factor=rng.choice((0.5, 0.8, 1.0, 1.25, 2.0)),
            resources={"cpu": 1.0},
            latency=latency,
            max_copies=1,
        )
        for t in range(n_types)
    )

    bound = float(rng.choice((12, 16, 24))) if regime else None
    n_demands = rng.randint(1, max_demands)
    demands = []
    for k in range(n_demands):
        o, t = rng.sample(names, 2)
        bw = rng.randint(4, 12) / 64.0
        requested = tuple(
            v.id for v in vnfs if rng.random() < 0.8
        )
        order_coeffs = None
        if len(requested) > 1 and rng.random() < 0.7:
            order_coeffs = {f: float(i) for i, f in enumerate(requested)}
        demands.append(
            Demand(
                id=f"d{k}",
                origin=o,
                destination=t,
                bandwidth=bw,
                vnfs=requested,
                order_coeffs=order_coeffs,
                max_latency=bound,
            )
        )
    instance = Instance(topology=topo, vnf_types=vnfs, demands=tuple(demands))
    validate_instance(instance)
    return instance

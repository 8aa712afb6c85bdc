import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vnfpr.instance import Arc, Demand, Instance, Node, Topology, VnfType


def make_t1(
    mu: float = 1.0,
    latency=None,
    bandwidth: float = 10.0,
    capacity: float = 100.0,
    max_latency: float | None = None,
    cpu: float = 4.0,
):
    """Two-hop path A-B-C (both directions), one demand A->C, one type."""
    nodes = (
        Node("A", nfvi=True, capacity={"cpu": cpu}),
        Node("B", nfvi=True, capacity={"cpu": cpu}),
        Node("C", nfvi=True, capacity={"cpu": cpu}),
    )
    arcs = (
        Arc("A", "B", capacity, 1.0),
        Arc("B", "A", capacity, 1.0),
        Arc("B", "C", capacity, 1.0),
        Arc("C", "B", capacity, 1.0),
    )
    vnfs = (
        VnfType("fw", rate_factor=mu, resources={"cpu": 1.0}, latency=latency, max_copies=1),
    )
    demands = (
        Demand("d0", "A", "C", bandwidth, vnfs=("fw",), max_latency=max_latency),
    )
    return Instance(Topology(nodes, arcs), vnfs, demands)


def make_diamond():
    """A feeds C over two parallel relays; two demands of 60 on capacity 100."""
    nodes = (
        Node("A", nfvi=True, capacity={"cpu": 4.0}),
        Node("B1", nfvi=True, capacity={"cpu": 4.0}),
        Node("B2", nfvi=True, capacity={"cpu": 4.0}),
        Node("C", nfvi=True, capacity={"cpu": 4.0}),
    )
    arcs = (
        Arc("A", "B1", 100.0, 1.0),
        Arc("B1", "C", 100.0, 1.0),
        Arc("A", "B2", 100.0, 1.0),
        Arc("B2", "C", 100.0, 1.0),
    )
    demands = (
        Demand("d0", "A", "C", 60.0),
        Demand("d1", "A", "C", 60.0),
    )
    return Instance(Topology(nodes, arcs), (), demands)


@pytest.fixture
def t1():
    return make_t1()


@pytest.fixture
def diamond():
    return make_diamond()

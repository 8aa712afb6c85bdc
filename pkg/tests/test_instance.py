import math

import pytest

from conftest import make_t1
from vnfpr.instance import (
    Arc,
    Demand,
    Instance,
    InstanceError,
    Node,
    Topology,
    VnfType,
    access_nodes,
    bandwidth_bounds,
    extend_graph,
    incoming_capacity,
    load_instance,
    save_instance,
    validate_instance,
    worst_case_bandwidth,
)
from vnfpr.generator import CatalogSpec, ThreeTierConfig, generate_three_tier


def vnf_map(*entries):
    return {v.id: v for v in entries}


class TestBandwidthBounds:
    def test_mixed_factors(self):
        vm = vnf_map(
            VnfType("a", 0.8, {"cpu": 1.0}),
            VnfType("b", 1.0, {"cpu": 1.0}),
            VnfType("c", 1.25, {"cpu": 1.0}),
        )
        d = Demand("d", "A", "B", 0.1, vnfs=("a", "b", "c"))
        bmin, bmax = bandwidth_bounds(d, vm)
        assert bmax == pytest.approx(0.125, abs=1e-15)
        assert bmin == pytest.approx(0.08, abs=1e-15)

    def test_neutral_factors(self):
        vm = vnf_map(VnfType("a", 1.0, {"cpu": 1.0}), VnfType("b", 1.0, {"cpu": 1.0}))
        d = Demand("d", "A", "B", 0.3, vnfs=("a", "b"))
        assert bandwidth_bounds(d, vm) == (0.3, 0.3)

    def test_compression_only_clamps_max(self):
        vm = vnf_map(VnfType("a", 0.5, {"cpu": 1.0}), VnfType("b", 0.5, {"cpu": 1.0}))
        d = Demand("d", "A", "B", 1.0, vnfs=("a", "b"))
        bmin, bmax = bandwidth_bounds(d, vm)
        assert bmax == 1.0
        assert bmin == 0.25

    def test_rejects_nonpositive_factor(self):
        with pytest.raises(InstanceError):
            bandwidth_bounds(
                Demand("d", "A", "B", 1.0, vnfs=("a",)),
                vnf_map(VnfType("a", 0.0, {"cpu": 1.0})),
            )

    def test_bounds_bracket_nominal(self):
        import random

        rng = random.Random(7)
        for _ in range(200):
            factors = [rng.choice((0.5, 0.8, 1.0, 1.25, 2.0)) for _ in range(rng.randint(0, 4))]
            vm = vnf_map(*(VnfType(f"f{i}", mu, {"cpu": 1.0}) for i, mu in enumerate(factors)))
            d = Demand("d", "A", "B", rng.uniform(0.1, 5.0), vnfs=tuple(vm))
            bmin, bmax = bandwidth_bounds(d, vm)
            assert bmin <= d.bandwidth <= bmax
            up = math.prod(mu for mu in factors if mu >= 1) or 1.0
            down = math.prod(mu for mu in factors if mu <= 1) or 1.0
            assert bmax / bmin == pytest.approx(max(1.0, up) / min(1.0, down))

    def test_worst_case_uses_chain_prefix(self):
        vm = vnf_map(VnfType("a", 0.5, {"cpu": 1.0}), VnfType("b", 1.25, {"cpu": 1.0}))
        # compression first: the flow never exceeds its nominal value
        d = Demand("d", "A", "B", 1.0, vnfs=("a", "b"), order_coeffs={"a": 1.0, "b": 2.0})
        assert worst_case_bandwidth(d, vm) == 1.0
        # decompression first: it does
        d2 = Demand("d", "A", "B", 1.0, vnfs=("a", "b"), order_coeffs={"a": 2.0, "b": 1.0})
        assert worst_case_bandwidth(d2, vm) == 1.25
        # unordered: fall back to the global maximum
        d3 = Demand("d", "A", "B", 1.0, vnfs=("a", "b"))
        assert worst_case_bandwidth(d3, vm) == 1.25


class TestBigM:
    def test_sum_of_incoming(self):
        topo = Topology(
            nodes=(Node("A"), Node("B"), Node("C")),
            arcs=(Arc("A", "C", 10.0), Arc("B", "C", 10.0), Arc("C", "A", 7.0)),
        )
        assert incoming_capacity(topo, "C") == 20.0

    def test_isolated_node(self):
        topo = Topology(nodes=(Node("A"), Node("B")), arcs=(Arc("A", "B", 5.0),))
        assert incoming_capacity(topo, "A") == 0.0

    def test_twin_single_arc(self):
        inst = extend_graph(make_t1())
        topo = inst.topology
        # the twin's only incoming arc is the twin link itself
        assert incoming_capacity(topo, "A'") == topo.arc_map[("A", "A'")].capacity


class TestExtendGraph:
    def test_path_duplication(self, t1):
        ext = extend_graph(t1)
        ids = [n.id for n in ext.topology.nodes]
        assert ids == ["A", "A'", "B", "C", "C'"]
        # A keeps only its twin arc; its outgoing arcs moved to A'
        out_a = [a.dst for a in ext.topology.out_arcs["A"]]
        assert out_a == ["A'"]
        assert ("A'", "B") in ext.topology.arc_map
        # routing role stays on the original: demands unchanged
        assert ext.demands == t1.demands
        # NFVI role moves to the twin
        assert not ext.topology.node_map["A"].nfvi
        assert ext.topology.node_map["A'"].nfvi
        assert ext.topology.node_map["A'"].capacity == t1.topology.node_map["A"].capacity

    def test_no_scaling_types_still_legal(self):
        inst = make_t1(mu=1.0)
        ext = extend_graph(inst)
        assert ext.extended
        assert len(ext.topology.nodes) == 5

    def test_three_tier_internet_twins(self):
        inst = generate_three_tier(0, ThreeTierConfig(case="internet"))
        ext = extend_graph(inst)
        twins = ext.options["twins"]
        # every edge and every core node is a demand endpoint
        assert len(twins) == 12
        tiers = {ext.topology.node_map[t].tier for t in twins.values()}
        assert tiers == {"edge", "core"}

    def test_idempotent(self, t1):
        once = extend_graph(t1)
        twice = extend_graph(once)
        assert twice == once

    def test_twin_arc_capacity_is_incident_sum(self, t1):
        ext = extend_graph(t1)
        arc = ext.topology.arc_map[("A", "A'")]
        assert arc.capacity == 200.0  # (A,B) + (B,A)
        assert arc.latency == 0.0
        assert arc.virtual


class TestAccessNodes:
    def test_endpoints_only(self, t1):
        assert access_nodes(t1) == ["A", "C"]


class TestValidation:
    def test_unknown_endpoint(self):
        inst = Instance(
            Topology((Node("A"), Node("B")), (Arc("A", "B", 1.0),)),
            (),
            (Demand("d", "A", "Z", 1.0),),
        )
        with pytest.raises(InstanceError, match="unknown endpoint"):
            validate_instance(inst)

    def test_negative_capacity(self):
        inst = Instance(
            Topology((Node("A"), Node("B")), (Arc("A", "B", -1.0),)), (), ()
        )
        with pytest.raises(InstanceError, match="capacity"):
            validate_instance(inst)

    def test_precedence_cycle(self):
        t1 = make_t1()
        vnfs = (
            VnfType("a", resources={"cpu": 1.0}, max_copies=1),
            VnfType("b", resources={"cpu": 1.0}, max_copies=1),
        )
        d = Demand(
            "d0", "A", "C", 1.0, vnfs=("a", "b"), precedence=(("a", "b"), ("b", "a"))
        )
        inst = Instance(t1.topology, vnfs, (d,))
        with pytest.raises(InstanceError, match="cycle"):
            validate_instance(inst)

    def test_unhostable_requested_type(self):
        t1 = make_t1()
        vnfs = (VnfType("a", resources={"cpu": 99.0}, max_copies=None),)
        d = Demand("d0", "A", "C", 1.0, vnfs=("a",))
        inst = Instance(t1.topology, vnfs, (d,))
        with pytest.raises(InstanceError, match="no node may host"):
            validate_instance(inst)


class TestInstanceIO:
    def test_round_trip_identity(self, t1):
        assert load_instance(save_instance(t1)) == t1

    def test_round_trip_three_tier(self):
        inst = generate_three_tier(3, ThreeTierConfig(case="vpn"))
        assert load_instance(save_instance(inst)) == inst

    def test_missing_arc_capacity_names_the_arc(self, t1):
        import json

        doc = json.loads(save_instance(t1))
        del doc["arcs"][2]["capacity"]
        with pytest.raises(InstanceError, match=r"arcs\[2\].*capacity"):
            load_instance(json.dumps(doc))

    def test_unknown_vnf_reference(self, t1):
        import json

        doc = json.loads(save_instance(t1))
        doc["demands"][0]["vnfs"] = ["ghost"]
        with pytest.raises(InstanceError, match="ghost"):
            load_instance(json.dumps(doc))

    def test_schema_version_mandatory(self):
        with pytest.raises(InstanceError, match="schema_version"):
            load_instance("{}")


class TestCopies:
    def test_default_rule_uses_cpu(self):
        inst = make_t1()
        vnf = VnfType("a", resources={"cpu": 1.0, "ram": 16.0})
        assert inst.copies("A", vnf) == 4  # 4 cpu / 1
        vnf2 = VnfType("b", resources={"cpu": 3.0})
        assert inst.copies("A", vnf2) == 1

    def test_mapping_override_reaches_twins(self):
        inst = make_t1()
        vnf = VnfType("a", resources={"cpu": 1.0}, max_copies={"A": 2, "B": 1, "C": 1})
        ext = extend_graph(inst)
        assert ext.copies("A'", vnf) == 2

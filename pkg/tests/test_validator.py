import pytest

from conftest import make_t1
from instgen import random_instance
from vnfpr.instance import (
    Arc,
    Demand,
    FastpathLatency,
    Instance,
    Node,
    StandardLatency,
    Topology,
    VnfType,
    extend_graph,
)
from vnfpr.model import ObjectiveSpec, VariantSpec, build
from vnfpr.solution import DemandRouting, Solution, extract_solution
from vnfpr.solver import SolverConfig, check_feasible, solve
from vnfpr.validator import (
    SolutionStructureError,
    check,
    compute_latency,
    propagate_flows,
)

TE = ObjectiveSpec(kind="te")


def shared_copy_instance(latency, n_demands=2, bandwidth=2.0):
    """A-B-C path, all demands require the single type hosted at B or C."""
    nodes = (
        Node("A", nfvi=True, capacity={"cpu": 4.0}),
        Node("B", nfvi=True, capacity={"cpu": 4.0}),
        Node("C", nfvi=True, capacity={"cpu": 4.0}),
    )
    arcs = (
        Arc("A", "B", 100.0, 1.0),
        Arc("B", "A", 100.0, 1.0),
        Arc("B", "C", 100.0, 1.0),
        Arc("C", "B", 100.0, 1.0),
    )
    vnfs = (VnfType("fw", resources={"cpu": 1.0}, latency=latency, max_copies=1),)
    demands = tuple(
        Demand(f"d{i}", "A", "C", bandwidth, vnfs=("fw",), max_latency=100.0)
        for i in range(n_demands)
    )
    return Instance(Topology(nodes, arcs), vnfs, demands)


class TestPropagateFlows:
    def test_single_compression(self):
        inst = make_t1(mu=0.5)
        ext = extend_graph(inst)
        sol = Solution(
            variant="basic-cd",
            regime=None,
            demands={
                "d0": DemandRouting(
                    arcs=(("A", "A'"), ("A'", "B"), ("B", "C")),
                    assignments={"fw": ("B", 1)},
                )
            },
            opens=(("B", "fw", 1),),
        )
        flows = propagate_flows(inst, sol)
        assert flows["d0"] == {("A", "A'"): 10.0, ("A'", "B"): 10.0, ("B", "C"): 5.0}

    def test_chain_product_restores_bandwidth(self):
        base = make_t1()
        vnfs = (
            VnfType("a", 0.8, {"cpu": 1.0}, max_copies=1),
            VnfType("b", 1.25, {"cpu": 1.0}, max_copies=1),
        )
        d = Demand("d0", "A", "C", 8.0, vnfs=("a", "b"), order_coeffs={"a": 1.0, "b": 2.0})
        inst = Instance(base.topology, vnfs, (d,))
        sol = Solution(
            variant="basic-cd",
            regime=None,
            demands={
                "d0": DemandRouting(
                    arcs=(("A", "A'"), ("A'", "B"), ("B", "C")),
                    assignments={"a": ("A'", 1), "b": ("B", 1)},
                )
            },
            opens=(("A'", "a", 1), ("B", "b", 1)),
        )
        flows = propagate_flows(inst, sol)
        assert flows["d0"][("B", "C")] == pytest.approx(8.0, abs=1e-12)

    def test_assignment_off_path_rejected(self):
        inst = make_t1()
        sol = Solution(
            variant="basic",
            regime=None,
            demands={
                "d0": DemandRouting(
                    arcs=(("A", "B"), ("B", "C")), assignments={"fw": ("A", 1)}
                )
            },
            opens=(("A", "fw", 1),),
        )
        with pytest.raises(SolutionStructureError, match="never entered"):
            propagate_flows(inst, sol)

    def test_solver_flows_match_propagation(self):
        for seed in (11, 12, 13, 14, 15, 16, 17, 18, 19, 20):
            inst = random_instance(seed)
            spec = VariantSpec(variant="basic-cd", objective=TE)
            model = build(inst, spec)
            res = solve(model, SolverConfig(time_limit=60))
            if res.status != "Optimal":
                continue
            sol = extract_solution(model, res.assignment)
            flows = propagate_flows(inst, sol)
            for k, per_arc in flows.items():
                stored = sol.demands[k].flows
                for arc, val in per_arc.items():
                    assert abs(val - stored.get(arc, 0.0)) <= 1e-9


class TestComputeLatency:
    def test_fastpath_additive(self):
        inst = make_t1(latency=FastpathLatency(1.0, 50.0), max_latency=100.0)
        sol = Solution(
            variant="basic-lat",
            regime="fastpath",
            demands={
                "d0": DemandRouting(
                    arcs=(("A", "B"), ("B", "C")), assignments={"fw": ("B", 1)}
                )
            },
            opens=(("B", "fw", 1),),
        )
        latency = compute_latency(inst, sol)
        assert latency["d0"] == (2.0, 1.0, 3.0)

    def test_shared_standard_copy_charges_aggregate(self):
        curve = StandardLatency(components=((0.0, 1.0), (5.0, 0.0)))
        inst = shared_copy_instance(curve)
        sol = Solution(
            variant="basic-lat",
            regime="standard",
            demands={
                k: DemandRouting(
                    arcs=(("A", "B"), ("B", "C")), assignments={"fw": ("B", 1)}
                )
                for k in ("d0", "d1")
            },
            opens=(("B", "fw", 1),),
        )
        latency = compute_latency(inst, sol)
        # aggregate load 4 -> 20 ms for both demands, not 10
        assert latency["d0"][1] == 20.0
        assert latency["d1"][1] == 20.0

    def test_no_vnfs_means_link_only(self, diamond):
        sol = Solution(
            variant="basic",
            regime=None,
            demands={
                "d0": DemandRouting(arcs=(("A", "B1"), ("B1", "C"))),
                "d1": DemandRouting(arcs=(("A", "B2"), ("B2", "C"))),
            },
        )
        latency = compute_latency(diamond, sol)
        assert latency["d0"] == (2.0, 0.0, 2.0)

    def test_fastpath_invariant_to_load_standard_monotone(self):
        fp = shared_copy_instance(FastpathLatency(1.0, 50.0), n_demands=3)
        std = shared_copy_instance(
            StandardLatency(components=((0.0, 1.0), (5.0, 0.0))), n_demands=3
        )
        def sol_for(inst, n):
            return Solution(
                variant="basic-lat",
                regime=inst.vnf_types[0].latency.kind,
                demands={
                    d.id: DemandRouting(
                        arcs=(("A", "B"), ("B", "C")), assignments={"fw": ("B", 1)}
                    )
                    for d in inst.demands[:n]
                },
                opens=(("B", "fw", 1),),
            )
        # fastpath: per-demand vnf latency does not move with co-load
        one = compute_latency(*_sub(fp, sol_for(fp, 1), 1))
        three = compute_latency(*_sub(fp, sol_for(fp, 3), 3))
        assert one["d0"][1] == three["d0"][1] == 1.0
        # standard: nondecreasing in added co-assigned demands
        one_s = compute_latency(*_sub(std, sol_for(std, 1), 1))
        three_s = compute_latency(*_sub(std, sol_for(std, 3), 3))
        assert three_s["d0"][1] >= one_s["d0"][1]


def _sub(inst, sol, n):
    demands = tuple(inst.demands[:n])
    sub = Instance(inst.topology, inst.vnf_types, demands, inst.options)
    return sub, sol.__class__(
        variant=sol.variant,
        regime=sol.regime,
        demands={d.id: sol.demands[d.id] for d in demands},
        opens=sol.opens,
    )


class TestCheck:
    def test_solver_solutions_all_pass(self):
        cells = [
            ("basic", None),
            ("basic-cd", None),
            ("basic-lat", "standard"),
            ("basic-lat", "fastpath"),
            ("basic-lat-cd", "standard"),
            ("basic-lat-cd", "fastpath"),
        ]
        passed = 0
        for seed in range(30):
            variant, regime = cells[seed % len(cells)]
            inst = random_instance(300 + seed, regime=regime)
            spec = VariantSpec(variant=variant, regime=regime, objective=TE)
            model = build(inst, spec)
            res = solve(model, SolverConfig(time_limit=60))
            if res.status != "Optimal":
                continue
            sol = extract_solution(model, res.assignment)
            report = check(inst, sol, spec)
            assert report.passed, (seed, variant, report.to_text())
            passed += 1
        assert passed >= 20

    def test_reordered_chain_fails_only_order(self):
        base = make_t1()
        vnfs = (
            VnfType("fw", resources={"cpu": 1.0}, max_copies=1),
            VnfType("dpi", resources={"cpu": 1.0}, max_copies=1),
        )
        d = Demand(
            "d0", "A", "C", 1.0, vnfs=("fw", "dpi"), order_coeffs={"fw": 1.0, "dpi": 2.0}
        )
        inst = Instance(base.topology, vnfs, (d,))
        sol = Solution(
            variant="basic",
            regime=None,
            demands={
                "d0": DemandRouting(
                    arcs=(("A", "B"), ("B", "C")),
                    assignments={"dpi": ("B", 1), "fw": ("C", 1)},
                )
            },
            opens=(("B", "dpi", 1), ("C", "fw", 1)),
        )
        report = check(inst, sol, VariantSpec(variant="basic", objective=TE))
        assert [c.name for c in report.failures()] == ["chain_order"]

    def test_detached_cycle_fails_cycle_check_only(self):
        nodes = (
            Node("A", nfvi=True, capacity={"cpu": 1.0}),
            Node("B", nfvi=True, capacity={"cpu": 1.0}),
            Node("C", nfvi=True, capacity={"cpu": 1.0}),
            Node("D", nfvi=True, capacity={"cpu": 1.0}),
        )
        arcs = (
            Arc("A", "B", 10.0, 1.0),
            Arc("C", "D", 10.0, 1.0),
            Arc("D", "C", 10.0, 1.0),
        )
        inst = Instance(Topology(nodes, arcs), (), (Demand("d0", "A", "B", 1.0),))
        sol = Solution(
            variant="basic",
            regime=None,
            demands={
                "d0": DemandRouting(arcs=(("A", "B"), ("C", "D"), ("D", "C")))
            },
        )
        report = check(inst, sol, VariantSpec(variant="basic", objective=TE))
        failed = [c.name for c in report.failures()]
        assert failed == ["cycle_free"]

    def test_closed_copy_detected(self, t1):
        sol = Solution(
            variant="basic",
            regime=None,
            demands={
                "d0": DemandRouting(
                    arcs=(("A", "B"), ("B", "C")), assignments={"fw": ("B", 1)}
                )
            },
            opens=(),
        )
        report = check(t1, sol, VariantSpec(variant="basic", objective=TE))
        assert any(c.name == "assignments" for c in report.failures())

    def test_objective_agreement(self):
        for seed in (40, 41, 42):
            inst = random_instance(seed)
            spec = VariantSpec(variant="basic", objective=TE)
            model = build(inst, spec)
            res = solve(model, SolverConfig(time_limit=60))
            if res.status != "Optimal":
                continue
            sol = extract_solution(model, res.assignment)
            report = check(inst, sol, spec)
            assert abs(report.max_util - res.objective) <= 1e-9
            assert report.nfv_cost == sol.nfv_cost

    def test_verdicts_agree_with_model_side_check(self):
        # independent semantics vs the MILP's own feasibility checker
        for seed in (60, 61, 62, 63):
            inst = random_instance(seed, regime="fastpath")
            spec = VariantSpec(variant="basic-lat", regime="fastpath", objective=TE)
            model = build(inst, spec)
            res = solve(model, SolverConfig(time_limit=60))
            if res.status != "Optimal":
                continue
            assert check_feasible(model, res.assignment) == []
            sol = extract_solution(model, res.assignment)
            assert check(inst, sol, spec).passed

    def test_report_serializes(self, t1):
        spec = VariantSpec(variant="basic", objective=TE)
        model = build(t1, spec)
        res = solve(model)
        sol = extract_solution(model, res.assignment)
        text = check(t1, sol, spec).to_text()
        assert "check=simple_path pass" in text
        assert "recomputed max_util" in text

import math

import pytest

from conftest import make_t1
from instgen import random_instance
from vnfpr.instance import Arc, Demand, Instance, Node, Topology
from vnfpr.model import (
    Constraint,
    MilpModel,
    Objective,
    ObjectiveSpec,
    Variable,
    VariantSpec,
    build,
)
from vnfpr.solution import DemandRouting, Solution
from vnfpr.solver import SolverConfig, SolverError, check_feasible, solve

TE = ObjectiveSpec(kind="te")


def tiny_model(constraints, objective=None, nvars=2):
    variables = [
        Variable(i, f"b__{i}", "bin", 0.0, 1.0, "b", (str(i),)) for i in range(nvars)
    ]
    return MilpModel(
        variables=variables,
        constraints=constraints,
        objective=objective or Objective(coeffs={0: 1.0, 1: 1.0}),
    )


class TestSolveBasics:
    def test_t1_optimal_utilization(self, t1):
        res = solve(build(t1, VariantSpec(variant="basic", objective=TE)))
        assert res.status == "Optimal"
        assert res.objective == 0.1  # 10 over the unique 100-capacity path
        assert res.gap == 0.0

    def test_diamond_splits_demands(self, diamond):
        res = solve(build(diamond, VariantSpec(variant="basic", objective=TE)))
        assert res.status == "Optimal"
        assert res.objective == 0.6

    def test_contradiction_is_infeasible(self):
        model = tiny_model(
            [
                Constraint("pin1", "bounds", {0: 1.0}, "=", 1.0),
                Constraint("pin0", "bounds", {0: 1.0}, "=", 0.0),
            ]
        )
        res = solve(model)
        assert res.status == "Infeasible"
        assert res.assignment is None

    def test_determinism_including_node_count(self):
        inst = random_instance(77)
        model_a = build(inst, VariantSpec(variant="basic", objective=TE))
        model_b = build(inst, VariantSpec(variant="basic", objective=TE))
        r1, r2 = solve(model_a), solve(model_b)
        assert r1.status == r2.status
        assert r1.objective == r2.objective
        assert r1.nodes == r2.nodes
        assert r1.assignment == r2.assignment

    def test_bound_sandwich_monotone(self):
        inst = random_instance(101)
        model = build(inst, VariantSpec(variant="basic", objective=ObjectiveSpec(kind="nfv")))
        res = solve(model, SolverConfig(record_history=True))
        assert res.status == "Optimal"
        duals = [d for d, _ in res.history]
        incs = [i for _, i in res.history]
        for a, b in zip(duals, duals[1:]):
            assert b >= a - 1e-9
        for a, b in zip(incs, incs[1:]):
            assert b <= a
        for d, i in res.history:
            assert d <= res.objective + 1e-9 <= i + 1e-9

    def test_warm_start_never_worsens(self):
        inst = random_instance(55)
        spec = VariantSpec(variant="basic", objective=ObjectiveSpec(kind="nfv"))
        model = build(inst, spec)
        base = solve(model)
        assert base.status == "Optimal"
        # hand the optimum back as a warm start
        model2 = build(inst, spec)
        model2.warm_start = base.assignment
        res = solve(model2)
        assert res.warm_start_used
        assert res.objective <= base.objective

    def test_malformed_warm_start_reported_and_ignored(self, t1):
        model = build(t1, VariantSpec(variant="basic", objective=TE))
        bad = {v.id: 0.0 for v in model.variables}
        model.warm_start = bad
        res = solve(model)
        assert res.status == "Optimal"
        assert not res.warm_start_used
        assert "rejected" in res.warm_start_error

    def test_time_limit_status(self, t1):
        model = build(t1, VariantSpec(variant="basic", objective=TE))
        res = solve(model, SolverConfig(time_limit=60.0, node_limit=0))
        assert res.status == "TimeLimit"

    def test_big_m_guard(self):
        model = tiny_model(
            [Constraint("huge", "bounds", {0: 1e12}, "<=", 1.0)]
        )
        with pytest.raises(SolverError, match="rescale"):
            solve(model)

    def test_fallback_bound_mode(self, t1):
        model = build(t1, VariantSpec(variant="basic", objective=TE))
        res_lp = solve(model)
        model2 = build(t1, VariantSpec(variant="basic", objective=TE))
        res_nolp = solve(model2, SolverConfig(use_lp_bounds=False, time_limit=120))
        assert res_nolp.status == "Optimal"
        assert res_nolp.objective == res_lp.objective


class TestCheckFeasible:
    def test_optimal_incumbent_clean(self, t1):
        model = build(t1, VariantSpec(variant="basic", objective=TE))
        res = solve(model)
        assert check_feasible(model, res.assignment) == []

    def test_zero_assignment_breaks_flow_balance_at_endpoints(self, t1):
        model = build(t1, VariantSpec(variant="basic", objective=TE))
        zero = {v.id: 0.0 for v in model.variables}
        broken = {v.name for v in check_feasible(model, zero) if v.family == "flow_conserve"}
        assert any("d0__A" in name for name in broken)
        assert any("d0__C" in name for name in broken)
        # only origin and destination are imbalanced
        assert len(broken) == 2

    def test_detached_cycle_triggers_position_rows(self):
        # path A->B plus the detached cycle C<->D
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
        model = build(inst, VariantSpec(variant="basic", objective=TE))
        assignment = {v.id: 0.0 for v in model.variables}
        for key in (("d0", "A", "B"), ("d0", "C", "D"), ("d0", "D", "C")):
            assignment[model.var("x", *key)] = 1.0
        assignment[model.var("pi", "d0", "B")] = 1.0
        assignment[model.var("u")] = 1.0
        violations = check_feasible(model, assignment)
        families = {v.family for v in violations}
        assert "no_cycle" in families
        assert "flow_conserve" not in families

    def test_missing_variable_raises(self, t1):
        model = build(t1, VariantSpec(variant="basic", objective=TE))
        with pytest.raises(SolverError, match="misses"):
            check_feasible(model, {0: 0.0})


class TestConfig:
    def test_bad_time_limit(self):
        with pytest.raises(ValueError):
            SolverConfig(time_limit=0.0)

    def test_bad_workers(self):
        with pytest.raises(ValueError):
            SolverConfig(workers=0)

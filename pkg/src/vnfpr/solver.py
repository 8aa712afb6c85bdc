"""Desk-scale exact MILP solving by depth-first branch and bound.

Bounds come from the LP relaxation (scipy/HiGGS dual simplex) or, when the
relaxation is disabled, from the objective restricted to fixed variables.
Branching picks the most fractional binary (ties by lowest variable id) and
dives toward the rounded LP value first, so the search is deterministic:
identical model and config give identical results including node counts.

Incumbents found with naturally-integral LP solutions are re-solved with all
binaries fixed and then passed through the model's exact completion hook (if
present), so reported objectives are computed from the semantics of the
assignment rather than from solver floating point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import MilpModel


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    time_limit: float = 600.0
    gap_tol: float = 1e-9
    node_limit: int | None = None
    #: accepted for interface compatibility; execution is sequential so node
    #: counts stay deterministic
    workers: int = 1
    use_lp_bounds: bool = True
    #: reject models whose big-M coefficients dwarf the right-hand sides
    max_coefficient_ratio: float = 1e9
    #: keep a per-node (dual bound, incumbent) trail for diagnostics
    record_history: bool = False
    #: run the model's rounding heuristic every this many nodes
    heuristic_period: int = 50

    def __post_init__(self) -> None:
        if self.time_limit <= 0:
            raise ValueError("time_limit must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class Violation:
    name: str
    family: str
    amount: float

    def __str__(self) -> str:
        return f"{self.name}: violated by {self.amount:.3e}"


@dataclass
class SolveResult:
    status: str  # Optimal | Feasible | Infeasible | TimeLimit
    assignment: dict[int, float] | None
    objective: float | None
    bound: float
    gap: float
    elapsed: float
    nodes: int
    warm_start_used: bool = False
    warm_start_error: str | None = None
    #: per-node (global dual bound, incumbent objective), when recorded
    history: list[tuple[float, float]] | None = None


def check_feasible(
    model: MilpModel, assignment: dict[int, float], tol: float | None = None
) -> list[Violation]:
    """Every violated constraint/bound/integrality with its excess amount."""
    tol = model.feas_tol if tol is None else tol
    out: list[Violation] = []
    for v in model.variables:
        if v.id not in assignment:
            raise SolverError(f"assignment misses variable {v.name}")
        val = assignment[v.id]
        if val < v.lb - tol or val > v.ub + tol:
            out.append(
                Violation(v.name, "bounds", max(v.lb - val, val - v.ub))
            )
        if v.kind == "bin" and abs(val - round(val)) > model.int_tol:
            out.append(Violation(v.name, "integrality", abs(val - round(val))))
    for c in model.constraints:
        lhs = 0.0
        for vid, coef in c.coeffs.items():
            lhs += coef * assignment[vid]
        if c.sense == "<=" and lhs > c.rhs + tol:
            out.append(Violation(c.name, c.family, lhs - c.rhs))
        elif c.sense == ">=" and lhs < c.rhs - tol:
            out.append(Violation(c.name, c.family, c.rhs - lhs))
        elif c.sense == "=" and abs(lhs - c.rhs) > tol:
            out.append(Violation(c.name, c.family, abs(lhs - c.rhs)))
    return out


class _LpData:
    """Sparse LP arrays shared by every node; only bounds vary per node."""

    def __init__(self, model: MilpModel):
        nvars = len(model.variables)
        self.c = np.zeros(nvars)
        for vid, coef in model.objective.coeffs.items():
            self.c[vid] = coef
        rows_ub, cols_ub, vals_ub, rhs_ub = [], [], [], []
        rows_eq, cols_eq, vals_eq, rhs_eq = [], [], [], []
        for con in model.constraints:
            if con.sense == "=":
                r = len(rhs_eq)
                for vid, coef in con.coeffs.items():
                    rows_eq.append(r), cols_eq.append(vid), vals_eq.append(coef)
                rhs_eq.append(con.rhs)
            else:
                sign = 1.0 if con.sense == "<=" else -1.0
                r = len(rhs_ub)
                for vid, coef in con.coeffs.items():
                    rows_ub.append(r), cols_ub.append(vid), vals_ub.append(sign * coef)
                rhs_ub.append(sign * con.rhs)
        self.a_ub = (
            sparse.csr_matrix(
                (vals_ub, (rows_ub, cols_ub)), shape=(len(rhs_ub), nvars)
            )
            if rhs_ub
            else None
        )
        self.b_ub = np.array(rhs_ub) if rhs_ub else None
        self.a_eq = (
            sparse.csr_matrix(
                (vals_eq, (rows_eq, cols_eq)), shape=(len(rhs_eq), nvars)
            )
            if rhs_eq
            else None
        )
        self.b_eq = np.array(rhs_eq) if rhs_eq else None
        self.lb = np.array([v.lb for v in model.variables])
        self.ub = np.array([v.ub for v in model.variables])
        self.constant = model.objective.constant

    def solve(self, lb: np.ndarray, ub: np.ndarray):
        res = linprog(
            self.c,
            A_ub=self.a_ub,
            b_ub=self.b_ub,
            A_eq=self.a_eq,
            b_eq=self.b_eq,
            bounds=np.column_stack((lb, ub)),
            method="highs-ds",
        )
        if res.status == 2:
            return None, None
        if res.status != 0:
            raise SolverError(f"LP relaxation failed: {res.message}")
        return float(res.fun) + self.constant, res.x


def _check_big_m(model: MilpModel, config: SolverConfig) -> None:
    max_coef = 0.0
    max_rhs = 1.0
    for c in model.constraints:
        max_rhs = max(max_rhs, abs(c.rhs))
        for coef in c.coeffs.values():
            max_coef = max(max_coef, abs(coef))
    if max_coef > config.max_coefficient_ratio * max_rhs:
        raise SolverError(
            f"coefficient {max_coef:.3e} exceeds {config.max_coefficient_ratio:.0e} "
            f"x max rhs {max_rhs:.3e}; rescale the model"
        )


def _restricted_bound(model: MilpModel, lb: np.ndarray, ub: np.ndarray) -> float:
    """Objective lower bound from variable bounds alone (no relaxation)."""
    total = model.objective.constant
    for vid, coef in model.objective.coeffs.items():
        total += coef * (lb[vid] if coef >= 0 else ub[vid])
    return total


_PRUNE_EPS = 1e-9


def solve(model: MilpModel, config: SolverConfig | None = None) -> SolveResult:
    """Depth-first branch and bound over the model's binaries.

    Returns Optimal only when the tree is exhausted or the gap closed below
    config.gap_tol; TimeLimit returns the incumbent found so far.  A warm
    start on the model is feasibility-checked first and ignored (with the
    reason recorded) if it fails.
    """
    config = config or SolverConfig()
    _check_big_m(model, config)
    start = time.monotonic()
    lp = _LpData(model)
    binaries = [v.id for v in model.variables if v.kind == "bin"]
    int_objective = _integral_objective(model)

    incumbent: dict[int, float] | None = None
    incumbent_obj = math.inf
    warm_used = False
    warm_error: str | None = None
    if model.warm_start is not None:
        violations = check_feasible(model, model.warm_start)
        if violations:
            warm_error = f"warm start rejected: {violations[0]}"
        else:
            incumbent = dict(model.warm_start)
            incumbent_obj = model.objective_value(incumbent)
            warm_used = True

    nodes = 0
    status = "Optimal"
    history: list[tuple[float, float]] | None = [] if config.record_history else None
    # stack entries: (lb array, ub array, inherited bound)
    stack: list[tuple[np.ndarray, np.ndarray, float]] = [
        (lp.lb.copy(), lp.ub.copy(), -math.inf)
    ]
    open_bounds: list[float] = [-math.inf]

    def timed_out() -> bool:
        return time.monotonic() - start > config.time_limit

    while stack:
        if timed_out():
            status = "TimeLimit"
            break
        if config.node_limit is not None and nodes >= config.node_limit:
            status = "TimeLimit"
            break
        lb, ub, inherited = stack.pop()
        open_bounds.pop()
        nodes += 1
        if history is not None:
            dual_now = min(open_bounds + [inherited]) if open_bounds else inherited
            history.append((dual_now, incumbent_obj))
        if inherited >= incumbent_obj - _PRUNE_EPS:
            continue

        if config.use_lp_bounds:
            bound, x = lp.solve(lb, ub)
            if bound is None:
                continue  # infeasible subtree
        else:
            bound = _restricted_bound(model, lb, ub)
            x = None
        if int_objective:
            bound = math.ceil(bound - 1e-6)
        if bound >= incumbent_obj - _PRUNE_EPS:
            continue

        if (
            model.primal_heuristic is not None
            and x is not None
            and nodes % config.heuristic_period == 1
        ):
            cand = _try_heuristic(model, {v.id: x[v.id] for v in model.variables})
            if cand is not None:
                cand_obj = model.objective_value(cand)
                if cand_obj < incumbent_obj - _PRUNE_EPS:
                    incumbent, incumbent_obj = cand, cand_obj
                    if bound >= incumbent_obj - _PRUNE_EPS:
                        continue

        frac_id = None
        if x is not None:
            frac_id, frac_val = _most_fractional(x, binaries, model.int_tol)
        else:
            for vid in binaries:
                if ub[vid] - lb[vid] > 0.5:
                    frac_id, frac_val = vid, 0.5
                    break

        if frac_id is None:
            # integral (or fully fixed): candidate incumbent
            cand = _candidate(model, lp, lb, ub, x, binaries)
            if cand is None:
                continue
            cand_obj = model.objective_value(cand)
            if cand_obj < incumbent_obj - _PRUNE_EPS:
                incumbent, incumbent_obj = cand, cand_obj
            continue

        first = 1.0 if frac_val >= 0.5 else 0.0
        for branch_val in (1.0 - first, first):  # dive on `first` (pushed last)
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[frac_id] = branch_val
            ub2[frac_id] = branch_val
            stack.append((lb2, ub2, bound))
            open_bounds.append(bound)

    elapsed = time.monotonic() - start
    if status == "TimeLimit":
        dual = min(open_bounds) if open_bounds else incumbent_obj
        if incumbent is None:
            return SolveResult(
                "TimeLimit", None, None, dual, math.inf, elapsed, nodes,
                warm_used, warm_error, history,
            )
        gap = abs(incumbent_obj - dual) / max(abs(incumbent_obj), 1e-12)
        st = "Optimal" if gap <= config.gap_tol else "TimeLimit"
        return SolveResult(
            st, incumbent, incumbent_obj, dual, gap, elapsed, nodes,
            warm_used, warm_error, history,
        )
    if incumbent is None:
        return SolveResult(
            "Infeasible", None, None, math.inf, math.inf, elapsed, nodes,
            warm_used, warm_error, history,
        )
    return SolveResult(
        "Optimal", incumbent, incumbent_obj, incumbent_obj, 0.0, elapsed, nodes,
        warm_used, warm_error, history,
    )


def _try_heuristic(model: MilpModel, lp_values: dict[int, float]) -> dict[int, float] | None:
    """Completed, verified assignment from the model's rounding heuristic."""
    try:
        proposal = model.primal_heuristic(lp_values)
    except Exception:
        return None
    if proposal is None or model.completion is None:
        return None
    try:
        completed = model.completion(proposal)
    except Exception:
        return None
    if check_feasible(model, completed):
        return None
    return completed


def _integral_objective(model: MilpModel) -> bool:
    if model.objective.constant != int(model.objective.constant):
        return False
    by_id = {v.id: v for v in model.variables}
    for vid, coef in model.objective.coeffs.items():
        if coef != int(coef) or by_id[vid].kind != "bin":
            return False
    return bool(model.objective.coeffs)


def _most_fractional(
    x: np.ndarray, binaries: list[int], int_tol: float
) -> tuple[int | None, float]:
    best_id = None
    best_dist = int_tol
    best_val = 0.0
    for vid in binaries:
        dist = abs(x[vid] - round(x[vid]))
        if dist > best_dist:
            best_id, best_dist, best_val = vid, dist, x[vid]
    return best_id, best_val


def _candidate(
    model: MilpModel,
    lp: _LpData,
    lb: np.ndarray,
    ub: np.ndarray,
    x: np.ndarray | None,
    binaries: list[int],
) -> dict[int, float] | None:
    """Assignment for a node whose binaries are integral.

    All binaries are pinned to their rounded values and the LP is re-solved
    so continuous variables are consistent; the model's completion hook then
    replaces them with exactly computed values when it applies cleanly.
    """
    lb2, ub2 = lb.copy(), ub.copy()
    for vid in binaries:
        val = round(x[vid]) if x is not None else round(lb[vid])
        lb2[vid] = val
        ub2[vid] = val
    _, x2 = lp.solve(lb2, ub2)
    if x2 is None:
        return None
    assignment = {v.id: float(x2[v.id]) for v in model.variables}
    for vid in binaries:
        assignment[vid] = float(lb2[vid])
    if model.completion is not None:
        try:
            completed = model.completion(assignment)
        except Exception:
            return assignment
        if not check_feasible(model, completed):
            return completed
    return assignment

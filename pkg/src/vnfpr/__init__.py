"""VNF placement and routing: MILP models, exact solver, math-heuristic, validator."""

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
    bandwidth_bounds,
    extend_graph,
    incoming_capacity,
    load_instance,
    save_instance,
    validate_instance,
    worst_case_bandwidth,
)
from .generator import CatalogSpec, ThreeTierConfig, generate_three_tier
from .model import BuildError, Extensions, MilpModel, ObjectiveSpec, VariantSpec, build
from .solution import Solution, load_solution, save_solution
from .solver import SolveResult, SolverConfig, check_feasible, solve
from .lpformat import (
    export_model,
    import_solution,
    parse_model,
    write_solution,
)
from .validator import ValidationReport, check, compute_latency, propagate_flows
from .pipeline import (
    PipelineConfig,
    PipelineError,
    PipelineTrace,
    alpha_sweep,
    bisect_vnf_count,
    cascade_solve,
    lexicographic_solve,
)
from .report import Campaign, CampaignReport, emit_cdf, emit_tier_distribution, run_campaign

__all__ = [name for name in dir() if not name.startswith("_")]

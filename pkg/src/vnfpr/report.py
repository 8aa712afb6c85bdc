"""Campaign execution and plot-ready CSV emission.

A campaign crosses seeds with (case, regime, latency bound, objective mode)
cells, runs the pipeline on each generated instance, validates every
solution and writes one directory per run plus campaign-level aggregates.
Aggregate CSVs are byte-identical across reruns of the same campaign;
wall-clock times go to a separate timings.csv because they cannot be.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .generator import CatalogSpec, ThreeTierConfig, generate_three_tier
from .instance import Instance, save_instance
from .model import Extensions, VariantSpec, ObjectiveSpec
from .pipeline import PipelineConfig, PipelineError, lexicographic_solve, _te_phase
from .solution import Solution, extract_solution, save_solution
from .validator import check


@dataclass(frozen=True)
class CampaignCell:
    case: str  # internet | vpn
    regime: str  # standard | fastpath
    latency_bound: float
    objective: str  # te | te-nfv

    def label(self) -> str:
        return f"{self.case}_{self.regime}_L{self.latency_bound:g}_{self.objective}"


@dataclass(frozen=True)
class Campaign:
    seeds: tuple[int, ...]
    cells: tuple[CampaignCell, ...]
    variant: str = "basic-lat"
    demand_count: int | None = None
    max_copies: int | None = None
    te_time_limit: float = 60.0
    nfv_time_limit: float = 60.0
    #: deterministic stopping; reruns then give byte-identical aggregates
    node_limit: int | None = None
    output_dir: str = "campaign-out"
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError("campaign needs at least one cell")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")


@dataclass
class CampaignRow:
    seed: int
    case: str
    regime: str
    latency_bound: float
    objective: str
    status: str
    u_value: float | None
    nfv_cost: float | None
    gap: float
    runtime: float
    validated: bool
    failure: str = ""


@dataclass
class CampaignReport:
    rows: list[CampaignRow] = field(default_factory=list)
    #: non-virtual arc utilizations pooled over runs
    link_utilizations: list[float] = field(default_factory=list)
    #: per-demand total latencies pooled over runs
    latencies: list[float] = field(default_factory=list)
    #: per run: tier -> open copy count
    tier_counts: list[dict[str, int]] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.failure)


def emit_cdf(values: Iterable[float]) -> str:
    """Empirical CDF as ``value,cum_frac`` rows, sorted ascending."""
    vals = sorted(values)
    lines = ["value,cum_frac"]
    n = len(vals)
    for idx, v in enumerate(vals, 1):
        lines.append(f"{v!r},{idx / n!r}")
    return "\n".join(lines) + "\n"


def emit_tier_distribution(report: CampaignReport) -> str:
    """Mean open copies per tier with a 95% normal half-width across runs."""
    lines = ["tier,mean_copies,ci_half_width"]
    tiers = ("edge", "aggregation", "core")
    counts = report.tier_counts
    for tier in tiers:
        samples = [float(c.get(tier, 0)) for c in counts]
        if not samples:
            lines.append(f"{tier},0.0,0.0")
            continue
        n = len(samples)
        mean = sum(samples) / n
        if n > 1:
            var = sum((s - mean) ** 2 for s in samples) / (n - 1)
            half = 1.96 * (var / n) ** 0.5
        else:
            half = 0.0
        lines.append(f"{tier},{mean!r},{half!r}")
    return "\n".join(lines) + "\n"


def _instance_for(cell: CampaignCell, seed: int, campaign: Campaign) -> Instance:
    config = ThreeTierConfig(
        case=cell.case,
        demand_count=campaign.demand_count,
        latency_bound=cell.latency_bound,
        catalog=CatalogSpec(regime=cell.regime, max_copies=campaign.max_copies),
    )
    return generate_three_tier(seed, config)


def _tier_of(instance: Instance, node: str) -> str:
    n = instance.topology.node_map[node]
    return n.tier


def _run_one(args: tuple[Campaign, CampaignCell, int]) -> dict:
    campaign, cell, seed = args
    import time

    t0 = time.monotonic()
    instance = _instance_for(cell, seed, campaign)
    pipeline = PipelineConfig(
        variant=campaign.variant,
        regime=cell.regime if "lat" in campaign.variant.split("-") else None,
        te_time_limit=campaign.te_time_limit,
        nfv_time_limit=campaign.nfv_time_limit,
        node_limit=campaign.node_limit,
    )
    failure = ""
    solution: Solution | None = None
    trace = None
    status = "error"
    gap = float("inf")
    try:
        if cell.objective == "te":
            res, model, trace = _te_phase(instance, pipeline)
            solution = extract_solution(model, res.assignment)
            status, gap = res.status, res.gap
        elif cell.objective == "te-nfv":
            solution, trace = lexicographic_solve(instance, pipeline)
            last = trace.stages[-1]
            status, gap = last.status, last.gap
        else:
            raise ValueError(f"unknown objective mode {cell.objective!r}")
    except PipelineError as exc:
        failure = str(exc)
        trace = exc.trace
    except Exception as exc:  # runs are isolated; the campaign reports them
        failure = f"{type(exc).__name__}: {exc}"
    runtime = time.monotonic() - t0

    out: dict = {
        "seed": seed,
        "cell": cell.__dict__,
        "status": status,
        "gap": gap,
        "runtime": runtime,
        "failure": failure,
        "validated": False,
    }
    if solution is not None:
        spec = VariantSpec(
            variant=campaign.variant,
            regime=cell.regime if "lat" in campaign.variant.split("-") else None,
            objective=ObjectiveSpec(kind="te"),
        )
        report = check(instance, solution, spec)
        out["validated"] = report.passed
        if not report.passed:
            out["failure"] = "validator: " + "; ".join(
                c.name for c in report.failures()
            )
        out["u_value"] = solution.max_util
        out["nfv_cost"] = solution.nfv_cost
        # physical (non-virtual) link utilizations for the CDFs
        from .validator import _working_instance, propagate_flows

        inst_w = _working_instance(instance, campaign.variant)
        scaled = "cd" in campaign.variant.split("-")
        flows = propagate_flows(instance, solution) if scaled else None
        utils = []
        for a in inst_w.topology.arcs:
            if a.virtual:
                continue
            load = 0.0
            for d in inst_w.demands:
                if scaled:
                    load += flows[d.id].get((a.src, a.dst), 0.0)
                elif (a.src, a.dst) in set(solution.demands[d.id].arcs):
                    load += d.bandwidth
            utils.append(load / a.capacity)
        out["link_utils"] = utils
        if "lat" in campaign.variant.split("-"):
            from .validator import compute_latency

            latency = compute_latency(instance, solution)
            out["latencies"] = [t for (_l, _v, t) in latency.values()]
        else:
            out["latencies"] = []
        tier_count: dict[str, int] = {}
        for i, _f, _n in solution.opens:
            tier = _tier_of(inst_w, i)
            tier_count[tier] = tier_count.get(tier, 0) + 1
        out["tiers"] = tier_count
        out["solution_text"] = save_solution(solution)
        out["instance_text"] = save_instance(instance)
        out["trace_text"] = trace.to_text() if trace else ""
    return out


def run_campaign(campaign: Campaign) -> CampaignReport:
    """Execute every (cell, seed) run, validate, and write artifacts."""
    outdir = Path(campaign.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (campaign, cell, seed) for cell in campaign.cells for seed in campaign.seeds
    ]
    if campaign.workers > 1:
        with ProcessPoolExecutor(max_workers=campaign.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]

    report = CampaignReport()
    for (campaign_, cell, seed), res in zip(jobs, results):
        row = CampaignRow(
            seed=seed,
            case=cell.case,
            regime=cell.regime,
            latency_bound=cell.latency_bound,
            objective=cell.objective,
            status=res["status"],
            u_value=res.get("u_value"),
            nfv_cost=res.get("nfv_cost"),
            gap=res["gap"],
            runtime=res["runtime"],
            validated=res.get("validated", False),
            failure=res.get("failure", ""),
        )
        report.rows.append(row)
        if not row.failure:
            report.link_utilizations.extend(res.get("link_utils", []))
            report.latencies.extend(res.get("latencies", []))
            report.tier_counts.append(res.get("tiers", {}))
        run_dir = outdir / f"{cell.label()}_seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        if "instance_text" in res:
            (run_dir / "instance.json").write_text(res["instance_text"])
            (run_dir / "solution.json").write_text(res["solution_text"])
            (run_dir / "trace.txt").write_text(res["trace_text"])
        (run_dir / "status.json").write_text(
            json.dumps(
                {
                    "status": res["status"],
                    "validated": res.get("validated", False),
                    "failure": res.get("failure", ""),
                },
                indent=2,
            )
        )

    _write_aggregates(campaign, report, outdir)
    return report


def _write_aggregates(campaign: Campaign, report: CampaignReport, outdir: Path) -> None:
    lines = [
        "seed,case,regime,latency_bound,objective,status,u,nfv_cost,gap,validated,failure"
    ]
    times = ["seed,case,regime,latency_bound,objective,runtime_s"]
    for r in report.rows:
        lines.append(
            f"{r.seed},{r.case},{r.regime},{r.latency_bound!r},{r.objective},"
            f"{r.status},{r.u_value!r},{r.nfv_cost!r},{r.gap!r},"
            f"{int(r.validated)},{r.failure.replace(',', ';')}"
        )
        times.append(
            f"{r.seed},{r.case},{r.regime},{r.latency_bound!r},{r.objective},{r.runtime:.3f}"
        )
    (outdir / "runs.csv").write_text("\n".join(lines) + "\n")
    (outdir / "timings.csv").write_text("\n".join(times) + "\n")
    (outdir / "link_utilization_cdf.csv").write_text(
        emit_cdf(report.link_utilizations)
    )
    (outdir / "latency_cdf.csv").write_text(emit_cdf(report.latencies))
    (outdir / "tier_distribution.csv").write_text(emit_tier_distribution(report))

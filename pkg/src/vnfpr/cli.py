"""Command-line front end: generate, solve, campaign, validate."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .generator import CatalogSpec, ThreeTierConfig, generate_three_tier
from .instance import load_instance, save_instance
from .lpformat import export_model
from .model import ObjectiveSpec, VariantSpec, build
from .pipeline import (
    PipelineConfig,
    PipelineError,
    alpha_sweep,
    bisect_vnf_count,
    lexicographic_solve,
    _te_phase,
)
from .report import Campaign, CampaignCell, run_campaign
from .solution import extract_solution, load_solution, save_solution
from .validator import check


def _cmd_generate(args: argparse.Namespace) -> int:
    config = ThreeTierConfig(
        case=args.case,
        demand_count=args.demands,
        latency_bound=args.latency_bound,
        catalog=CatalogSpec(regime=args.regime, max_copies=args.max_copies),
    )
    instance = generate_three_tier(args.seed, config)
    text = save_instance(instance)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        variant=args.variant,
        regime=args.regime if "lat" in args.variant.split("-") else None,
        te_time_limit=args.time_limit,
        nfv_time_limit=args.time_limit,
        cascade=args.cascade,
    )


def _cmd_solve(args: argparse.Namespace) -> int:
    instance = load_instance(Path(args.instance).read_text())
    config = _pipeline_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    if args.export_lp:
        spec = config.spec(ObjectiveSpec(kind="te"))
        model = build(instance, spec)
        Path(args.export_lp).write_text(export_model(model, fmt="lp"))
        print(f"wrote {args.export_lp}")

    try:
        if args.objective == "te":
            res, model, trace = _te_phase(instance, config)
            solution = extract_solution(model, res.assignment)
        else:
            solution, trace = lexicographic_solve(instance, config)
    except PipelineError as exc:
        print(f"pipeline failed: {exc}", file=sys.stderr)
        if exc.trace:
            (outdir / "trace.txt").write_text(exc.trace.to_text())
        return 1

    (outdir / "solution.json").write_text(save_solution(solution))
    (outdir / "trace.txt").write_text(trace.to_text())
    spec = config.spec(ObjectiveSpec(kind="te"))
    report = check(instance, solution, spec)
    (outdir / "validation.txt").write_text(report.to_text())
    print(
        f"status ok u={solution.max_util!r} cost={solution.nfv_cost!r} "
        f"validated={report.passed}"
    )

    if args.alpha_sweep:
        rows, sweep_trace = alpha_sweep(instance, config)
        lines = ["alpha,cost,status,gap"]
        for row in rows:
            lines.append(f"{row.alpha!r},{row.cost!r},{row.status},{row.gap!r}")
        (outdir / "alpha_sweep.csv").write_text("\n".join(lines) + "\n")
        print(f"alpha sweep: {[(r.alpha, r.cost) for r in rows]}")
    if args.bisect:
        sol_b, trace_b = bisect_vnf_count(instance, config)
        (outdir / "bisect_trace.txt").write_text(trace_b.to_text())
        print(f"minimal copy cap: {len(sol_b.opens)}")
    return 0 if report.passed else 2


def _cmd_campaign(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.campaign).read_text())
    cells = tuple(
        CampaignCell(
            case=c["case"],
            regime=c["regime"],
            latency_bound=float(c.get("latency_bound", 15.0)),
            objective=c.get("objective", "te-nfv"),
        )
        for c in doc["cells"]
    )
    campaign = Campaign(
        seeds=tuple(int(s) for s in doc["seeds"]),
        cells=cells,
        variant=doc.get("variant", "basic-lat"),
        demand_count=doc.get("demand_count"),
        max_copies=doc.get("max_copies"),
        te_time_limit=float(doc.get("te_time_limit", 60.0)),
        nfv_time_limit=float(doc.get("nfv_time_limit", 60.0)),
        node_limit=doc.get("node_limit"),
        output_dir=doc.get("output_dir", args.out or "campaign-out"),
        workers=int(doc.get("workers", 1)),
    )
    report = run_campaign(campaign)
    print(f"rows={len(report.rows)} failures={report.failures}")
    for r in report.rows:
        mark = "ok" if not r.failure else f"FAILED ({r.failure})"
        print(
            f"  seed={r.seed} {r.case}/{r.regime}/L{r.latency_bound:g}/{r.objective}: "
            f"{r.status} u={r.u_value!r} cost={r.nfv_cost!r} {mark}"
        )
    return 0 if report.failures == 0 else 2


def _cmd_validate(args: argparse.Namespace) -> int:
    instance = load_instance(Path(args.instance).read_text())
    solution = load_solution(Path(args.solution).read_text())
    spec = VariantSpec(
        variant=args.variant,
        regime=args.regime if "lat" in args.variant.split("-") else None,
        objective=ObjectiveSpec(kind="te"),
    )
    report = check(instance, solution, spec)
    print(report.to_text(), end="")
    return 0 if report.passed else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vnfpr",
        description="VNF placement and routing: generate, solve, campaign, validate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded three-tier instance")
    p.add_argument("--case", choices=("internet", "vpn"), default="internet")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--demands", type=int, default=None)
    p.add_argument("--latency-bound", type=float, default=15.0)
    p.add_argument("--regime", choices=("standard", "fastpath"), default="standard")
    p.add_argument("--max-copies", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("instance")
    p.add_argument(
        "--variant",
        choices=("basic", "basic-lat", "basic-cd", "basic-lat-cd"),
        default="basic",
    )
    p.add_argument("--regime", choices=("standard", "fastpath"), default="standard")
    p.add_argument("--objective", choices=("te", "te-nfv"), default="te-nfv")
    p.add_argument("--alpha-sweep", action="store_true")
    p.add_argument("--bisect", action="store_true")
    p.add_argument("--cascade", action="store_true")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--export-lp", default=None)
    p.add_argument("--out", default="solve-out")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("campaign", help="run a campaign file")
    p.add_argument("campaign")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("validate", help="validate a solution against an instance")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument(
        "--variant",
        choices=("basic", "basic-lat", "basic-cd", "basic-lat-cd"),
        default="basic",
    )
    p.add_argument("--regime", choices=("standard", "fastpath"), default="standard")
    p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

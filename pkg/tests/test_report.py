from pathlib import Path

import pytest

from vnfpr.report import (
    Campaign,
    CampaignCell,
    CampaignReport,
    emit_cdf,
    emit_tier_distribution,
    run_campaign,
)


class TestEmitCdf:
    def test_two_values(self):
        assert emit_cdf([0.4, 0.2]) == "value,cum_frac\n0.2,0.5\n0.4,1.0\n"

    def test_empty_header_only(self):
        assert emit_cdf([]) == "value,cum_frac\n"

    def test_monotone_and_ends_at_one(self):
        import random

        rng = random.Random(1)
        values = [rng.random() for _ in range(36)]
        rows = emit_cdf(values).splitlines()[1:]
        assert len(rows) == 36
        fracs = [float(r.split(",")[1]) for r in rows]
        vals = [float(r.split(",")[0]) for r in rows]
        assert vals == sorted(vals)
        assert all(b >= a for a, b in zip(fracs, fracs[1:]))
        assert fracs[-1] == 1.0


class TestTierDistribution:
    def test_single_run_zero_halfwidth(self):
        report = CampaignReport(tier_counts=[{"edge": 2, "core": 1}])
        text = emit_tier_distribution(report)
        lines = dict(
            (row.split(",")[0], row.split(",")[1:]) for row in text.splitlines()[1:]
        )
        assert lines["edge"] == ["2.0", "0.0"]
        assert lines["aggregation"][0] == "0.0"

    def test_mean_and_interval(self):
        report = CampaignReport(tier_counts=[{"core": 1}, {"core": 3}])
        text = emit_tier_distribution(report)
        core = [r for r in text.splitlines() if r.startswith("core")][0]
        _, mean, half = core.split(",")
        assert float(mean) == 2.0
        assert float(half) == pytest.approx(1.96 * (2.0 / 2) ** 0.5, rel=1e-9)


def small_campaign(out_dir, seeds=(1, 2)):
    cells = (
        CampaignCell("internet", "fastpath", 15.0, "te"),
        CampaignCell("internet", "fastpath", 15.0, "te-nfv"),
        CampaignCell("vpn", "fastpath", 15.0, "te"),
        CampaignCell("vpn", "fastpath", 15.0, "te-nfv"),
    )
    return Campaign(
        seeds=tuple(seeds),
        cells=cells,
        variant="basic-lat",
        demand_count=2,
        max_copies=1,
        te_time_limit=60.0,
        nfv_time_limit=60.0,
        node_limit=120,
        output_dir=str(out_dir),
    )


@pytest.fixture(scope="module")
def campaign_run(tmp_path_factory):
    campaign = small_campaign(tmp_path_factory.mktemp("campaign") / "out")
    return campaign, run_campaign(campaign)


class TestCampaign:
    def test_matrix_row_count_and_artifacts(self, campaign_run):
        campaign, report = campaign_run
        assert len(report.rows) == 8  # 2 seeds x 4 cells
        assert report.failures == 0
        assert all(r.validated for r in report.rows)
        outdir = Path(campaign.output_dir)
        assert (outdir / "runs.csv").exists()
        assert (outdir / "timings.csv").exists()
        assert (outdir / "link_utilization_cdf.csv").exists()
        assert (outdir / "latency_cdf.csv").exists()
        assert (outdir / "tier_distribution.csv").exists()
        run_dirs = [p for p in outdir.iterdir() if p.is_dir()]
        assert len(run_dirs) == 8
        for rd in run_dirs:
            assert (rd / "instance.json").exists()
            assert (rd / "solution.json").exists()

    def test_te_nfv_rows_never_cost_more(self, campaign_run):
        _campaign, report = campaign_run
        by_key = {}
        for r in report.rows:
            by_key[(r.seed, r.case, r.objective)] = r
        compared = 0
        for (seed, case, obj), row in by_key.items():
            if obj != "te-nfv":
                continue
            te_row = by_key[(seed, case, "te")]
            assert row.nfv_cost <= te_row.nfv_cost
            compared += 1
        assert compared == 4

    def test_cost_accounting_identity(self, campaign_run):
        _campaign, report = campaign_run
        # single cpu core per copy: cost equals the tier counts total
        rows = [r for r in report.rows if not r.failure]
        for row, tiers in zip(rows, report.tier_counts):
            assert row.nfv_cost == float(sum(tiers.values()))

    def test_reproducible_csv_bytes(self, tmp_path):
        camp_a = small_campaign(tmp_path / "a", seeds=(5,))
        camp_b = small_campaign(tmp_path / "b", seeds=(5,))
        run_campaign(camp_a)
        run_campaign(camp_b)
        for name in (
            "runs.csv",
            "link_utilization_cdf.csv",
            "latency_cdf.csv",
            "tier_distribution.csv",
        ):
            a = (Path(camp_a.output_dir) / name).read_bytes()
            b = (Path(camp_b.output_dir) / name).read_bytes()
            assert a == b, name

    def test_validation(self):
        with pytest.raises(ValueError, match="cell"):
            Campaign(seeds=(1,), cells=())
        with pytest.raises(ValueError, match="distinct"):
            Campaign(
                seeds=(1, 1),
                cells=(CampaignCell("vpn", "fastpath", 15.0, "te"),),
            )

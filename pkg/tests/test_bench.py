"""Sweep machinery against brute-force verdicts.

The sweep takes three shortcuts (proposed-first, ascending budget, shared
budget-0 verdict); ``test_counts_match_brute_force`` recomputes every count
with full ``analyze`` runs and no shortcuts, so any bias they introduced
would show up as a count mismatch.
"""
import random

import pytest

from rlnoc.analysis import ProtocolMode, analyze
from rlnoc.bench import (
    ImprovementReport,
    SweepConfig,
    generate_flowset,
    improvement_report,
    schedulability_sweep,
)
from rlnoc.model import Flow, ModelError, generate_rlrec

TINY = SweepConfig(
    grids=(4,),
    flows_start=6,
    flows_end=12,
    flows_step=6,
    flowsets_per_point=8,
    packet_ranges=((32, 96),),
    maxloops=(0, 1, 2),
    seed="bench-test",
)


class TestConfig:
    def test_defaults_valid(self):
        cfg = SweepConfig()
        assert cfg.flow_counts() == tuple(range(20, 281, 20))
        assert len(list(cfg.points())) == 3 * 2 * 14

    def test_from_dict_normalizes_lists(self):
        cfg = SweepConfig.from_dict({
            "grids": [4], "packet_ranges": [[16, 48]], "maxloops": [0, 1],
            "flows_start": 5, "flows_end": 5, "flowsets_per_point": 2,
        })
        assert cfg.grids == (4,)
        assert cfg.packet_ranges == ((16, 48),)

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match=r"'flow_count'"):
            SweepConfig.from_dict({"flow_count": 5})

    def test_bad_ranges_rejected(self):
        with pytest.raises(ValueError, match=r"period_us"):
            SweepConfig(period_us=(5, 2))
        with pytest.raises(ValueError, match=r"deadline_fraction"):
            SweepConfig(deadline_fraction=0.0)
        with pytest.raises(ValueError, match=r"maxloops"):
            SweepConfig(maxloops=())


class TestGeneration:
    def test_fields_within_configured_ranges(self):
        cfg = SweepConfig()
        top = generate_rlrec(4, 4)
        rng = random.Random("gen")
        fs = generate_flowset(cfg, top, 50, (16, 48), rng)
        assert len(fs) == 50
        for f in fs:
            assert 1000 <= f.period <= 100_000
            assert f.period % 1000 == 0
            assert f.deadline == f.period
            assert 16 <= f.length <= 48
            assert 0 <= f.jitter <= f.period // 2
            assert f.src != f.dst
            ring = fs.ring_of(f)
            assert fs.src_switch(f.flow_id) in ring
            assert fs.dst_switch(f.flow_id) in ring

    def test_empty_flowset_is_trivially_schedulable(self):
        cfg = SweepConfig()
        fs = generate_flowset(cfg, generate_rlrec(4, 4), 0, (16, 48),
                              random.Random("x"))
        assert analyze(fs, ProtocolMode.BASELINE).schedulable

    def test_same_seed_same_flowset(self):
        cfg = SweepConfig()
        top = generate_rlrec(4, 4)
        a = generate_flowset(cfg, top, 10, (16, 48), random.Random("s"))
        b = generate_flowset(cfg, top, 10, (16, 48), random.Random("s"))
        assert a.flows == b.flows


@pytest.fixture(scope="module")
def result():
    return schedulability_sweep(TINY)


class TestSweep:
    def test_deterministic(self, result):
        assert schedulability_sweep(TINY) == result

    def test_row_order_and_shape(self, result):
        assert len(result) == 2 * 3 * 2  # points x maxloops x modes
        expected = [
            (g, p, n, k, m)
            for g, p, n in TINY.points()
            for k in TINY.maxloops
            for m in (ProtocolMode.BASELINE, ProtocolMode.PROPOSED)
        ]
        got = [
            (r.grid, r.packet_range, r.n_flows, r.maxloop, r.mode)
            for r in result
        ]
        assert got == expected

    def test_budget_zero_modes_agree(self, result):
        zero = [r for r in result if r.maxloop == 0]
        by_mode = {}
        for r in zero:
            by_mode.setdefault((r.grid, r.packet_range, r.n_flows), {})[
                r.mode
            ] = r.schedulable_count
        for counts in by_mode.values():
            assert counts[ProtocolMode.BASELINE] == counts[
                ProtocolMode.PROPOSED
            ]

    def test_proposed_dominates_everywhere(self, result):
        pairs = {}
        for r in result:
            key = (r.grid, r.packet_range, r.n_flows, r.maxloop)
            pairs.setdefault(key, {})[r.mode] = r.schedulable_count
        for counts in pairs.values():
            assert counts[ProtocolMode.PROPOSED] >= counts[
                ProtocolMode.BASELINE
            ]

    def test_ratio_falls_as_budget_grows(self, result):
        series = {}
        for r in result:
            key = (r.grid, r.packet_range, r.n_flows, r.mode)
            series.setdefault(key, []).append((r.maxloop, r.ratio))
        for points in series.values():
            points.sort()
            ratios = [ratio for _, ratio in points]
            assert ratios == sorted(ratios, reverse=True)

    def test_counts_match_brute_force(self, result):
        cfg = TINY
        top = generate_rlrec(4, 4)
        expected = {}
        for grid, prange, n_flows in cfg.points():
            for i in range(cfg.flowsets_per_point):
                rng = random.Random(
                    f"{cfg.seed}:flowset:{grid}:{prange[0]}-{prange[1]}"
                    f":{n_flows}:{i}"
                )
                base = generate_flowset(cfg, top, n_flows, prange, rng)
                for k in cfg.maxloops:
                    fs = base.with_maxloop(k)
                    for mode in ProtocolMode:
                        key = (grid, prange, n_flows, k, mode)
                        ok = analyze(fs, mode).schedulable
                        expected[key] = expected.get(key, 0) + ok
        for r in result:
            key = (r.grid, r.packet_range, r.n_flows, r.maxloop, r.mode)
            assert r.schedulable_count == expected[key], key

    def test_parallel_merge_matches_serial(self, result):
        assert schedulability_sweep(TINY, jobs=2) == result


def _uniform_traffic(n_pairs, length=32, maxloop=None):
    flows = []
    for i in range(n_pairs):
        flows.append(Flow(
            flow_id=i, period=100_000, deadline=100_000, length=length,
            jitter=0, src=2 * i, dst=2 * i + 1, maxloop=maxloop,
        ))
    return flows


class TestImprovement:
    def test_deterministic(self):
        traffic = _uniform_traffic(4)
        top = generate_rlrec(4, 4)
        a = improvement_report(traffic, top, n_mappings=5, seed="s")
        b = improvement_report(traffic, top, n_mappings=5, seed="s")
        assert a == b

    def test_percentages_bounded(self):
        traffic = _uniform_traffic(5, length=64)
        rep = improvement_report(traffic, generate_rlrec(4, 4), n_mappings=10)
        for row in rep.rows:
            assert row.improvement_pct is not None
            assert 0.0 <= row.improvement_pct < 100.0
        assert rep.max_improvement_pct < 100.0

    def test_budget_zero_traffic_gains_nothing(self):
        traffic = _uniform_traffic(4, maxloop=0)
        rep = improvement_report(traffic, generate_rlrec(4, 4), n_mappings=5)
        assert rep.max_improvement_pct == 0.0
        assert rep.mean_improvement_pct == 0.0
        for row in rep.rows:
            assert row.r_base == row.r_prop

    def test_pooled_mean_averages_mapping_means(self):
        traffic = _uniform_traffic(5, length=64)
        rep = improvement_report(traffic, generate_rlrec(4, 4), n_mappings=7)
        by_mapping = {}
        for row in rep.rows:
            by_mapping.setdefault(row.mapping_id, []).append(
                row.improvement_pct
            )
        means = [sum(v) / len(v) for v in by_mapping.values()]
        assert rep.mean_improvement_pct == pytest.approx(
            sum(means) / len(means)
        )

    def test_unmappable_traffic_rejected(self):
        traffic = _uniform_traffic(3)  # endpoints 0..5
        with pytest.raises(ModelError, match=r"endpoints"):
            improvement_report(traffic, generate_rlrec(2, 2), n_mappings=1)

    def test_shipped_traffic_loads_and_maps(self):
        from rlnoc.files import load_traffic, sample_traffic_path

        traffic = load_traffic(sample_traffic_path())
        assert len(traffic) == 39
        assert len({f.flow_id for f in traffic}) == 39
        rep = improvement_report(traffic, generate_rlrec(4, 4), n_mappings=3)
        assert isinstance(rep, ImprovementReport)
        assert rep.max_improvement_pct > 0.0

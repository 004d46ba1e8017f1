import json
import time

import numpy as np
import pytest

from simcut.errors import AllFixingsInfeasible, TargetsRequired
from simcut.instance import PartialAssignment, cut_values, load_instance, planted_instance, random_instance
from simcut.pipeline import PipelineConfig, best_repair, enumerate_fixings, random_baseline, resolve_targets, run
from simcut.preprocess import run_preprocess

from conftest import FIXTURES, graph

FAST = dict(num_samples=20, threads=1)


def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.delta_effective == pytest.approx(0.01)
    assert cfg.r_solve == 6
    assert PipelineConfig(delta=0.2).delta_effective == 0.2


def test_four_cycle_reaches_its_optimum(four_cycle):
    report = run(four_cycle, PipelineConfig(**FAST))
    assert report.min_ratio == pytest.approx(1.0)
    assert report.source == "rounding"
    assert report.level == 2
    assert report.targets_source == "given"
    assert len(report.fixings) == 16
    statuses = [f.status for f in report.fixings]
    assert statuses.count("solved") == 2
    assert statuses.count("infeasible") == 14
    assert np.allclose(cut_values(four_cycle, report.assignment), [1.0])


def test_single_edge_with_brute_force_targets():
    report = run(graph(2, [(0, 1)]), PipelineConfig(**FAST))
    assert report.targets_source == "brute_force"
    assert report.targets == [1.0]
    assert report.min_ratio == pytest.approx(1.0)
    assert report.assignment[0] != report.assignment[1]


def test_two_instances_cut_simultaneously():
    inst = load_instance(str(FIXTURES / "k2pair.json"))
    report = run(inst, PipelineConfig(**FAST))
    assert report.min_ratio == pytest.approx(1.0)
    assert np.allclose(report.values, [1.0, 1.0])


def test_ratio_matches_the_chosen_assignment(planted_pair):
    inst, f_star = planted_pair
    report = run(inst, PipelineConfig(h_enumeration="planted", **FAST), planted=f_star)
    assert len(report.fixings) == 1
    assert report.fixings[0].h == PartialAssignment.restrict(f_star, report.prep.s_star)
    assert report.min_ratio == pytest.approx(float(np.min(cut_values(inst, report.assignment))))
    assert report.min_ratio >= report.baseline_ratio - 1e-12


def test_planted_enumeration_needs_the_assignment(planted_pair):
    inst, _ = planted_pair
    with pytest.raises(ValueError):
        run(inst, PipelineConfig(h_enumeration="planted", **FAST))


def test_thread_count_does_not_change_the_result(four_cycle):
    serial = run(four_cycle, PipelineConfig(num_samples=20, threads=1, seed=4))
    threaded = run(four_cycle, PipelineConfig(num_samples=20, threads=3, seed=4))
    assert np.array_equal(serial.assignment, threaded.assignment)
    assert serial.min_ratio == threaded.min_ratio
    assert [f.status for f in serial.fixings] == [f.status for f in threaded.fixings]
    assert [f.sample_ratios for f in serial.fixings] == [f.sample_ratios for f in threaded.fixings]


def test_every_fixing_infeasible():
    triangle = graph(3, [(0, 1), (1, 2), (0, 2)], targets=[1.0])
    with pytest.raises(AllFixingsInfeasible) as info:
        run(triangle, PipelineConfig(**FAST))
    assert all(f["status"] == "infeasible" for f in info.value.details["fixings"])


def test_report_is_serializable(four_cycle):
    payload = run(four_cycle, PipelineConfig(**FAST)).to_dict()
    assert payload["min_ratio"] == pytest.approx(1.0)
    assert payload["preprocess"]["s_star"] == [1, 2, 3, 4]
    assert payload["delta"] == pytest.approx(0.01)
    solved = [f for f in payload["fixings"] if f["status"] == "solved"]
    assert all(f["best_ratio"] == pytest.approx(1.0) for f in solved)
    assert all(f["best_ratio"] is None for f in payload["fixings"] if f["status"] == "infeasible")


def test_best_repair_breaks_ties_lexicographically(four_cycle):
    f = best_repair(four_cycle, (0, 1), np.zeros(4, dtype=np.int8))
    assert f.tolist() == [0, 1, 0, 0]
    assert best_repair(four_cycle, (), np.ones(4, dtype=np.int8)).tolist() == [1, 1, 1, 1]


def test_sampled_fixings(four_cycle):
    cfg = PipelineConfig(h_enumeration="sampled", h_samples=3)
    prep = run_preprocess(four_cycle, cfg.params(1))
    rows = enumerate_fixings(prep, cfg)
    assert 1 <= len(rows) <= 3
    assert all(h.support == prep.s_star for h in rows)
    assert rows == enumerate_fixings(prep, cfg)
    everything = enumerate_fixings(prep, PipelineConfig(h_enumeration="sampled", h_samples=16))
    assert len(everything) == 16


def test_random_baseline_is_seeded(four_cycle):
    a = random_baseline(four_cycle, 10, seed=1)
    b = random_baseline(four_cycle, 10, seed=1)
    assert np.array_equal(a, b)


def test_targets_required_beyond_the_cap(four_cycle):
    inst = four_cycle.with_targets(None)
    with pytest.raises(TargetsRequired):
        resolve_targets(inst, cap=3)
    resolved, source = resolve_targets(inst)
    assert source == "brute_force"
    assert resolved.targets.tolist() == [1.0]


def test_solver_failure_is_recorded_per_fixing(four_cycle, monkeypatch):
    import simcut.pipeline as pipeline
    from simcut.errors import MaxItersExceeded

    real_solve = pipeline.solve

    def stalls_when_first_vertex_is_zero(C, config=None):
        if C.fixing.as_dict()[0] == 0:
            raise MaxItersExceeded("iteration limit reached", {"iterations": 0})
        return real_solve(C, config=config)

    monkeypatch.setattr(pipeline, "solve", stalls_when_first_vertex_is_zero)
    report = run(four_cycle, PipelineConfig(**FAST))
    statuses = [f.status for f in report.fixings]
    assert statuses.count("solver_failed") == 8
    assert statuses.count("solved") == 1
    assert report.min_ratio == pytest.approx(1.0)
    failed = [f for f in report.fixings if f.status == "solver_failed"]
    assert all(f.sdp["error"]["type"] == "MaxItersExceeded" for f in failed)
    assert any("solver failed" in w for w in report.warnings)


def test_rounds_a_relaxation_with_free_vertices():
    inst, f_star = planted_instance(6, 1, p=0.7, seed=3)
    cfg = PipelineConfig(max_s_star=2, h_enumeration="planted", **FAST)
    report = run(inst, cfg, planted=f_star)
    free = report.prep.free_vertices(inst.n)
    assert len(free) >= 4
    assert report.level == min(cfg.r_solve, len(free))
    outcome = report.fixings[0]
    assert outcome.status == "solved"
    assert "feasibility" in outcome.sdp
    assert outcome.independence is not None
    assert outcome.sample_values.shape == (20, 1)
    assert len(outcome.concentration) == len(report.prep.low)
    assert report.min_ratio == pytest.approx(float(np.min(cut_values(inst, report.assignment))))
    assert report.min_ratio >= 0.878 - 5 * cfg.epsilon


def test_free_vertices_across_every_fixing():
    inst, _ = planted_instance(5, 2, p=0.8, seed=11)
    report = run(inst, PipelineConfig(max_s_star=1, **FAST))
    assert len(report.prep.free_vertices(inst.n)) >= 4
    assert len(report.fixings) == 1 << len(report.prep.s_star)
    assert any(f.status == "solved" for f in report.fixings)
    assert report.min_ratio >= report.baseline_ratio - 1e-12


BASELINE = FIXTURES / "pipeline_baseline.json"


@pytest.mark.slow
def test_random_instances_against_the_recorded_baseline(update_golden):
    baseline = json.loads(BASELINE.read_text(encoding="utf-8"))
    started = time.perf_counter()
    for entry in baseline["instances"]:
        inst = random_instance(entry["n"], entry["k"], p=entry["p"], seed=entry["seed"])
        cfg = PipelineConfig(epsilon=baseline["epsilon"], num_samples=baseline["num_samples"], seed=entry["seed"])
        report = run(inst, cfg)
        assert report.targets_source == "brute_force"
        assert report.min_ratio >= baseline["theorem_floor"]
        if update_golden:
            entry["min_ratio"] = report.min_ratio
        elif entry["min_ratio"] is not None:
            assert report.min_ratio >= entry["min_ratio"] - 1e-9
    assert time.perf_counter() - started <= 600.0
    if update_golden:
        BASELINE.write_text(json.dumps(baseline, indent=2) + "\n", encoding="utf-8")

import math
from itertools import product

import numpy as np
import pytest

import simcut.independence as independence
from simcut.errors import BudgetExhausted, InvariantViolation
from simcut.independence import independence_score, make_independent, potential
from simcut.instance import random_instance
from simcut.lasserre import MomentIndex, MomentSolution, embed_integral
from simcut.preprocess import Params, PreprocessResult

F1 = [0, 1, 0, 1]
F2 = [1, 0, 1, 0]


def mixture(fs, level):
    index = MomentIndex.build(range(4), level)
    Y = np.mean([embed_integral(np.array(f), index).Y for f in fs], axis=0)
    return MomentSolution(index=index, Y=Y)


@pytest.fixture
def open_prep():
    return PreprocessResult(s_star=(), causes=(), counts=(0,), low=(0,), high=(), params=Params(epsilon=0.1, k=1))


def test_point_mass_is_independent(four_cycle, open_prep):
    M = embed_integral(np.array(F1), MomentIndex.build(range(4), 3))
    assert independence_score(M, four_cycle, open_prep) == pytest.approx(0.0, abs=1e-12)
    assert potential(M, four_cycle, open_prep) == pytest.approx(0.0, abs=1e-12)
    out, report = make_independent(M, four_cycle, open_prep, delta=0.01)
    assert out is M
    assert report.steps == []


def test_product_distribution_is_independent(four_cycle, open_prep):
    M = mixture([list(bits) for bits in product((0, 1), repeat=4)], 2)
    assert independence_score(M, four_cycle, open_prep) == pytest.approx(0.0, abs=1e-9)
    assert potential(M, four_cycle, open_prep) == pytest.approx(2.0)


def test_opposite_cuts_are_fully_correlated(four_cycle, open_prep):
    M = mixture([F1, F2], 4)
    # endpoint mass 1/2 per vertex, one bit shared by each of the 12 ordered pairs
    assert independence_score(M, four_cycle, open_prep) == pytest.approx(3.0)
    assert potential(M, four_cycle, open_prep) == pytest.approx(1.0)


def test_one_conditioning_decorrelates(four_cycle, open_prep):
    M = mixture([F1, F2], 4)
    out, report = make_independent(M, four_cycle, open_prep, delta=0.1, seed=2)
    assert len(report.steps) == 1
    step = report.steps[0]
    assert step.edge == (0, 1)
    assert step.probability == pytest.approx(0.5)
    assert step.expected_drop == pytest.approx(1.0)
    assert step.realized_drop == pytest.approx(1.0)
    assert report.final_score == pytest.approx(0.0, abs=1e-9)
    assert report.phi_trace == pytest.approx([1.0, 0.0], abs=1e-9)
    assert out.level == 2
    assert out.prob(dict(zip(range(4), F1))) + out.prob(dict(zip(range(4), F2))) == pytest.approx(1.0)


def test_enumerated_branches_are_deterministic(four_cycle, open_prep):
    M = mixture([F1, F2], 4)
    _, report = make_independent(M, four_cycle, open_prep, delta=0.1, enumerate_branches=True)
    assert report.conditioned_events == [((0, 1), (0, 1))]


def test_sampled_branches_follow_the_seed(four_cycle, open_prep):
    M = mixture([F1, F2], 4)
    a, _ = make_independent(M, four_cycle, open_prep, delta=0.1, seed=9)
    b, _ = make_independent(M, four_cycle, open_prep, delta=0.1, seed=9)
    assert np.array_equal(a.Y, b.Y)


@pytest.mark.parametrize("level", [2, 3])
def test_budget_exhaustion_keeps_the_partial_solution(four_cycle, open_prep, level):
    M = mixture([F1, F2], level)
    with pytest.raises(BudgetExhausted) as info:
        make_independent(M, four_cycle, open_prep, delta=0.1)
    err = info.value
    assert err.solution is M
    assert err.report.exhausted
    assert err.report.final_score == pytest.approx(3.0)
    assert err.details["solution_level"] == level


def test_report_is_one_based(four_cycle, open_prep):
    _, report = make_independent(mixture([F1, F2], 4), four_cycle, open_prep, delta=0.1, seed=2)
    payload = report.to_dict()
    assert payload["steps"][0]["edge"] == [1, 2]
    assert payload["exhausted"] is False


def test_step_records_a_small_identity_gap(four_cycle, open_prep):
    _, report = make_independent(mixture([F1, F2], 4), four_cycle, open_prep, delta=0.1, seed=2)
    assert report.steps[0].identity_gap <= 1e-9


def test_inflated_drop_prediction_is_caught(four_cycle, open_prep, monkeypatch):
    real = independence._evaluate_candidates

    def inflated(tables, inst, prep):
        table = real(tables, inst, prep)
        table.drops = table.drops + 0.25
        return table

    monkeypatch.setattr(independence, "_evaluate_candidates", inflated)
    with pytest.raises(InvariantViolation) as info:
        make_independent(mixture([F1, F2], 4), four_cycle, open_prep, delta=0.1, seed=2)
    assert info.value.details["gap"] == pytest.approx(0.25)


def test_drop_below_a_quarter_of_the_score_is_caught():
    with pytest.raises(InvariantViolation):
        independence._check_step(phi=1.0, score=3.0, expected=0.5, law=np.array([1.0]),
                                 branches=[independence._Branch(0, None, None, 0.0, 0.5)], k=1)


def open_prep_for(k):
    return PreprocessResult(s_star=(), causes=(), counts=(0,) * k, low=tuple(range(k)), high=(),
                            params=Params(epsilon=0.1, k=k))


@pytest.mark.parametrize("seed", range(12))
def test_conditioning_steps_on_random_mixtures(seed):
    rng = np.random.default_rng(seed)
    k = 1 + seed % 3
    inst = random_instance(6, k, p=0.6, seed=seed)
    prep = open_prep_for(k)
    index = MomentIndex.build(range(6), 6)
    fs = rng.integers(0, 2, size=(int(rng.integers(2, 6)), 6))
    M = MomentSolution(index=index, Y=np.mean([embed_integral(f, index).Y for f in fs], axis=0))
    delta = 0.5
    try:
        _, report = make_independent(M, inst, prep, delta=delta, seed=seed)
    except BudgetExhausted as e:
        report = e.report
    assert all(phi <= 2 * k + 1e-9 for phi in report.phi_trace)
    assert len(report.steps) <= math.ceil(2 * k / delta)
    before = [report.initial_score] + [s.score_after for s in report.steps[:-1]]
    for i, (step, score) in enumerate(zip(report.steps, before)):
        assert step.identity_gap <= 1e-6
        assert step.expected_drop >= score / 4.0 - 1e-7
        assert step.realized_drop == pytest.approx(report.phi_trace[i] - report.phi_trace[i + 1])
    if not report.exhausted:
        assert report.final_score <= delta / 2.0

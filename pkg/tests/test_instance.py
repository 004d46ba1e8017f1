import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simcut.errors import EmptyInstance, InstanceFormatError, NoActiveMass, TooLarge, WeightBelowFloor
from simcut.instance import (
    PartialAssignment,
    SimInstance,
    active_degree_total,
    active_dist,
    active_edges,
    brute_force_opt,
    cut_matrix,
    cut_report,
    cut_value,
    cut_values,
    dump_instance,
    load_instance,
    min_ratio,
    normalize,
    parse_instance,
    planted_instance,
    random_instance,
)

from conftest import FIXTURES, graph


def test_normalize_scales_each_instance_to_one():
    raw = SimInstance.from_edge_lists(3, [[(0, 1, 2.0), (1, 2, 6.0)], [(0, 2, 5.0)]])
    inst = normalize(raw)
    assert inst.is_normalized()
    assert inst.weights[0].tolist() == pytest.approx([0.25, 0.0, 0.75])


def test_duplicate_edges_are_summed_and_canonicalized():
    inst = normalize(SimInstance.from_edge_lists(3, [[(1, 0, 1.0), (0, 1, 1.0), (2, 1, 2.0)]]))
    assert inst.edges.tolist() == [[0, 1], [1, 2]]
    assert inst.weights[0].tolist() == pytest.approx([0.5, 0.5])


def test_empty_instance_rejected():
    with pytest.raises(EmptyInstance):
        normalize(SimInstance.from_edge_lists(3, [[(0, 1, 1.0)], []]))


def test_weight_floor():
    raw = SimInstance.from_edge_lists(3, [[(0, 1, 1.0), (1, 2, 1e-15)]], min_weight_floor=1e-12)
    with pytest.raises(WeightBelowFloor):
        normalize(raw)


def test_parse_rejects_bad_files():
    with pytest.raises(InstanceFormatError):
        parse_instance({"n": 2, "instances": [{"edges": [[1, 3, 1.0]]}]})
    with pytest.raises(InstanceFormatError):
        parse_instance({"n": 2, "instances": [{"edges": [[1, 1, 1.0]]}]})
    with pytest.raises(InstanceFormatError):
        parse_instance({"n": 2, "instances": [{"edges": [[1, 2, 1.0]]}], "targets": [1.5]})


def test_load_and_dump(tmp_path):
    inst = load_instance(str(FIXTURES / "k2pair.json"))
    assert (inst.n, inst.k) == (4, 2)
    out = tmp_path / "copy.json"
    dump_instance(inst, str(out))
    again = load_instance(str(out))
    assert np.allclose(again.weights, inst.weights)
    assert json.loads(out.read_text())["n"] == 4


def test_path_cut_values(path3):
    assert cut_value(path3, 0, np.array([0, 1, 0])) == pytest.approx(1.0)
    assert cut_value(path3, 0, np.array([0, 0, 1])) == pytest.approx(0.5)


def test_single_edge_cut():
    inst = graph(2, [(0, 1)])
    assert cut_values(inst, np.array([0, 1]))[0] == 1.0
    assert cut_values(inst, np.array([1, 1]))[0] == 0.0


@given(st.lists(st.integers(0, 1), min_size=5, max_size=5))
def test_complement_symmetry(bits):
    inst = random_instance(5, 2, p=0.6, seed=11, weighted=True)
    f = np.array(bits, dtype=np.int8)
    assert np.allclose(cut_values(inst, f), cut_values(inst, 1 - f))


@given(st.lists(st.integers(0, 1), min_size=6, max_size=6), st.integers(0, 5))
def test_single_flip_changes_only_incident_edges(bits, v):
    inst = random_instance(6, 1, p=0.7, seed=5, weighted=True)
    f = np.array(bits, dtype=np.int8)
    g = f.copy()
    g[v] = 1 - g[v]
    incident = (inst.edges[:, 0] == v) | (inst.edges[:, 1] == v)
    delta = cut_values(inst, g)[0] - cut_values(inst, f)[0]
    cut_f = f[inst.edges[:, 0]] != f[inst.edges[:, 1]]
    expected = float(inst.weights[0][incident] @ np.where(cut_f[incident], -1.0, 1.0))
    assert delta == pytest.approx(expected)


def test_cut_matrix_matches_cut_values():
    inst = random_instance(5, 3, seed=2)
    X = np.array([[0, 1, 0, 1, 1], [1, 1, 0, 0, 0]], dtype=np.int8)
    M = cut_matrix(inst, X)
    assert M.shape == (2, 3)
    for row, f in zip(M, X):
        assert np.allclose(row, cut_values(inst, f))


def test_active_edges_on_path(path3):
    assert active_edges(path3, []).tolist() == [0, 1]
    assert active_degree_total(path3, 0, [1]) == pytest.approx(1.0)
    assert active_degree_total(path3, 0, [0, 1, 2]) == 0.0
    with pytest.raises(NoActiveMass):
        active_dist(path3, 0, [0, 1, 2])


def test_active_degree_total_without_s_star_in_range():
    inst = random_instance(6, 2, seed=7, weighted=True)
    for ell in range(inst.k):
        assert active_degree_total(inst, ell, []) == pytest.approx(2.0)


def test_min_ratio_handles_zero_targets():
    assert min_ratio(np.array([0.5, 0.2]), np.array([1.0, 0.0])) == pytest.approx(0.5)
    assert min_ratio(np.array([0.5]), np.array([0.0])) == 1.0


def test_brute_force_four_cycle(four_cycle):
    f, report = brute_force_opt(four_cycle)
    assert f.tolist() == [0, 1, 0, 1]
    assert report.min_ratio == pytest.approx(1.0)


def test_brute_force_triangle(triangle):
    _, report = brute_force_opt(triangle)
    assert report.per_instance[0] == pytest.approx(2.0 / 3.0)


def test_brute_force_k2_pair():
    inst = load_instance(str(FIXTURES / "k2pair.json"))
    f, report = brute_force_opt(inst)
    assert report.per_instance.tolist() == pytest.approx([1.0, 1.0])
    assert cut_report(inst, f).min_value == pytest.approx(1.0)


def test_brute_force_cap():
    with pytest.raises(TooLarge):
        brute_force_opt(random_instance(8, 1, seed=0), cap=6)


def test_planted_instance_fully_cut():
    inst, f_star = planted_instance(7, 3, seed=9)
    assert np.allclose(cut_values(inst, f_star), 1.0)
    assert inst.targets.tolist() == [1.0, 1.0, 1.0]


def test_partial_assignment_combine():
    h = PartialAssignment((3, 0), (1, 0))
    f = h.combine(5, (1, 2, 4), [1, 1, 0])
    assert f.tolist() == [0, 1, 1, 1, 0]
    assert h.replace(3, 0).values == (0, 0)
    with pytest.raises(ValueError):
        PartialAssignment((0, 0), (1, 1))

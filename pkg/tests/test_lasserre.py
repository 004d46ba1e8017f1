import numpy as np
import pytest

from simcut.errors import LevelExhausted, LevelTooSmall, TargetsRequired, ZeroProbabilityEvent
from simcut.instance import PartialAssignment, planted_instance
from simcut.lasserre import (
    MomentIndex,
    MomentSolution,
    atom_terms,
    build_constraints,
    check_feasible,
    condition,
    consistency_residual,
    embed_integral,
    local_distribution,
)
from simcut.preprocess import Params, PreprocessResult, run_preprocess

from conftest import graph

F1 = [0, 1, 0, 1]
F2 = [1, 0, 1, 0]


def mixture(fs, index):
    """Uniform mixture of point-mass solutions."""
    Y = np.mean([embed_integral(np.array(f), index).Y for f in fs], axis=0)
    return MomentSolution(index=index, Y=Y)


def empty_prep(k=1, epsilon=0.1):
    return PreprocessResult(s_star=(), causes=(), counts=(0,) * k, low=tuple(range(k)), high=(),
                            params=Params(epsilon=epsilon, k=k))


def test_index_layout():
    index = MomentIndex.build((2, 5, 7), 2)
    assert index.size == 7
    assert index.pos(0) == 0
    assert index.vertices_of(index.mask_of([7, 2])) == (2, 7)
    i, j = index.split(0b111)
    assert index.subsets[i] | index.subsets[j] == 0b111
    assert index.with_level(1).size == 4
    with pytest.raises(LevelExhausted):
        MomentIndex.build(range(5), 2).split(0b11111)


def test_atom_terms_inclusion_exclusion():
    index = MomentIndex.build((0, 1), 2)
    # [X0 = 1, X1 = 0] = y({0}) - y({0, 1})
    assert atom_terms(index, {0: 1, 1: 0}) == {0b01: 1.0, 0b11: -1.0}


def test_embed_integral_is_a_point_mass():
    index = MomentIndex.build(range(4), 2)
    M = embed_integral(np.array(F1), index)
    assert M.prob({1: 1, 3: 1}) == pytest.approx(1.0)
    assert M.prob({0: 1}) == pytest.approx(0.0)
    assert M.bias(1) == 1.0 and M.bias(0) == -1.0
    assert M.min_eigenvalue() >= -1e-12
    assert consistency_residual(index, M.Y) == 0.0


def test_fixing_is_substituted():
    index = MomentIndex.build((1, 2), 2)
    M = embed_integral(np.array([1, 0, 1]), index, fixing=PartialAssignment((0,), (1,)))
    assert M.prob({0: 1, 2: 1}) == pytest.approx(1.0)
    assert M.prob({0: 0}) == 0.0


@pytest.mark.parametrize("level", [2, 3])
def test_constraints_accept_the_optimum(four_cycle, level):
    C = build_constraints(four_cycle, empty_prep(), PartialAssignment.empty(), 0.1, level)
    good = check_feasible(embed_integral(np.array(F1), C.index), C)
    bad = check_feasible(embed_integral(np.zeros(4, dtype=np.int8), C.index), C)
    assert good.feasible
    assert not bad.feasible
    assert bad.residuals["objective"] == pytest.approx(0.7)


def test_constraint_families(four_cycle):
    C = build_constraints(four_cycle, empty_prep(), PartialAssignment.empty(), 0.1, 3)
    # one objective and one active row per prefix of size ≤ 1
    assert C.family_rows("objective").size == 1 + 2 * 4
    assert C.family_rows("active").size == 1 + 2 * 4
    assert C.summary()["level"] == 3


def test_constraint_preconditions(four_cycle):
    with pytest.raises(LevelTooSmall):
        build_constraints(four_cycle, empty_prep(), PartialAssignment.empty(), 0.1, 1)
    with pytest.raises(TargetsRequired):
        build_constraints(graph(3, [(0, 1), (1, 2)]), empty_prep(), PartialAssignment.empty(), 0.1, 2)
    with pytest.raises(ValueError):
        build_constraints(four_cycle, empty_prep(), PartialAssignment((0,), (1,)), 0.1, 2)


def test_conditioning_a_mixture():
    index = MomentIndex.build(range(4), 3)
    M = mixture([F1, F2], index)
    assert M.prob({0: 0}) == pytest.approx(0.5)
    C = condition(M, [0], [0])
    assert C.level == 2
    assert C.prob({1: 1, 3: 1}) == pytest.approx(1.0)
    assert C.prob({2: 1}) == pytest.approx(0.0, abs=1e-12)
    assert C.conditioned_on == (((0,), (0,)),)


def test_conditioning_errors():
    index = MomentIndex.build(range(4), 2)
    M = embed_integral(np.array(F1), index)
    with pytest.raises(ZeroProbabilityEvent):
        condition(M, [0], [1])
    with pytest.raises(LevelExhausted):
        condition(M, [0, 1, 2], [0, 1, 0])


def test_local_distribution():
    M = mixture([F1, F2], MomentIndex.build(range(4), 2))
    d = local_distribution(M, (0, 1))
    assert d.probs[0, 1] == pytest.approx(0.5)
    assert d.probs[1, 0] == pytest.approx(0.5)
    assert d.probs[0, 0] == pytest.approx(0.0)
    with pytest.raises(LevelExhausted):
        local_distribution(M, (0, 1, 2))


def test_atom_gram_of_mixture_is_psd():
    M = mixture([F1, F2, [0, 0, 1, 1]], MomentIndex.build(range(4), 2))
    atoms, gram = M.atom_matrix()
    assert gram.shape == (len(atoms), len(atoms))
    assert np.linalg.eigvalsh(gram).min() >= -1e-9


def test_serialized_solution_restores_moments():
    M = condition(mixture([F1, F2], MomentIndex.build(range(4), 3)), [2], [1])
    again = MomentSolution.from_dict(M.to_dict())
    assert np.allclose(again.Y, M.Y)
    assert again.conditioned_on == M.conditioned_on


@pytest.mark.parametrize("seed", range(20))
def test_planted_optimum_satisfies_its_constraint_system(seed):
    n, k = 5 + seed % 4, 1 + seed % 3
    inst, f_star = planted_instance(n, k, p=0.6, seed=seed)
    prep = run_preprocess(inst, Params(epsilon=0.1, k=k, max_s_star=3))
    h = PartialAssignment.restrict(f_star, prep.s_star)
    level = min(4, max(2, len(prep.free_vertices(n))))
    C = build_constraints(inst, prep, h, 0.1, level)
    report = check_feasible(embed_integral(f_star, C.index, fixing=h), C)
    assert report.feasible
    assert max(report.residuals.values()) <= 1e-9


def feasible_points(C, n):
    """Every assignment whose point mass satisfies C."""
    out = []
    for code in range(1 << n):
        f = np.array([(code >> (n - 1 - i)) & 1 for i in range(n)], dtype=np.int8)
        if check_feasible(embed_integral(f, C.index), C).feasible:
            out.append(f)
    return out


@pytest.mark.parametrize("seed", range(20))
def test_conditioning_keeps_the_constraint_families(seed):
    rng = np.random.default_rng(100 + seed)
    n, k = 6, 1 + seed % 2
    inst, f_star = planted_instance(n, k, p=0.6, seed=seed)
    prep = empty_prep(k)
    C = build_constraints(inst, prep, PartialAssignment.empty(), 0.1, 4)
    points = feasible_points(C, n)
    assert any(np.array_equal(f, f_star) for f in points)
    chosen = [points[i] for i in rng.choice(len(points), size=min(len(points), 5), replace=False)]
    weights = rng.dirichlet(np.ones(len(chosen)))
    Y = sum(w * embed_integral(f, C.index).Y for w, f in zip(weights, chosen))
    M = MomentSolution(index=C.index, Y=Y)

    for _ in range(5):
        U = tuple(int(v) for v in rng.choice(n, size=int(rng.integers(1, 3)), replace=False))
        witness = chosen[int(rng.integers(len(chosen)))]
        beta = tuple(int(witness[v]) for v in U)
        out = condition(M, U, beta)
        assert out.min_eigenvalue() >= -1e-7
        assert consistency_residual(out.index, out.Y) <= 4 * out.eq_tol
        report = check_feasible(out, build_constraints(inst, prep, PartialAssignment.empty(), 0.1, out.level))
        assert report.residuals["objective"] <= 1e-9
        assert report.residuals["active"] <= 1e-9
        assert out.prob(dict(zip(U, beta))) == pytest.approx(1.0)

"""Greedy conditioning towards a δ/2-independent Lasserre solution.

The potential φ = Σ_{ℓ∈L} E_a H(X_{a1}, X_{a2}) (a drawn from the active-edge
distribution of ℓ) drops in expectation by Σ_ℓ E_a I(X_a; X_b) when the
solution is conditioned on the endpoints of an edge b. Each step conditions
on the edge with the largest expected drop.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, FrozenSet, List, Sequence, Tuple

import numpy as np

from simcut.errors import BudgetExhausted, InvariantViolation, NoActiveMass, ZeroProbabilityEvent
from simcut.infotheory import pair_mutual_information, table_entropy
from simcut.instance import SimInstance, active_dist
from simcut.lasserre import DEFAULT_COND_FLOOR, MomentSolution, condition
from simcut.preprocess import PreprocessResult

logger = logging.getLogger("simcut.independence")

IDENTITY_TOL = 1e-6
DROP_TOL = 1e-7
MIN_USEFUL_DROP = 1e-12


@dataclass
class IndependenceStep:
    edge: Tuple[int, int]
    event: Tuple[Tuple[int, ...], Tuple[int, ...]]
    probability: float
    expected_drop: float
    realized_drop: float
    score_after: float
    identity_gap: float = 0.0

    def to_dict(self) -> dict:
        U, beta = self.event
        return {
            "edge": [v + 1 for v in self.edge],
            "event": {"vertices": [v + 1 for v in U], "values": list(beta)},
            "probability": self.probability,
            "expected_drop": self.expected_drop,
            "realized_drop": self.realized_drop,
            "score_after": self.score_after,
            "identity_gap": self.identity_gap,
        }


@dataclass
class IndependenceReport:
    delta: float
    steps: List[IndependenceStep] = field(default_factory=list)
    phi_trace: List[float] = field(default_factory=list)
    initial_score: float = 0.0
    final_score: float = 0.0
    exhausted: bool = False

    @property
    def conditioned_events(self) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
        return [s.event for s in self.steps]

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "initial_score": self.initial_score,
            "final_score": self.final_score,
            "phi_trace": list(self.phi_trace),
            "steps": [s.to_dict() for s in self.steps],
            "exhausted": self.exhausted,
        }


# --- local tables ---

class _LocalTables:
    """Cached moments and joint tables of small vertex sets of one solution."""

    def __init__(self, M: MomentSolution):
        self.M = M
        self.fixing = M.fixing.as_dict()
        self._moments: Dict[int, float] = {}
        self._entropy: Dict[FrozenSet[int], float] = {}

    def moment(self, vertices: Sequence[int]) -> float:
        mask = 0
        for v in vertices:
            if v in self.fixing:
                if self.fixing[v] == 0:
                    return 0.0
                continue
            mask |= 1 << self.M.index._bit[v]
        if mask not in self._moments:
            self._moments[mask] = self.M.moment_mask(mask)
        return self._moments[mask]

    def table(self, vertices: Tuple[int, ...]) -> np.ndarray:
        s = len(vertices)
        m = np.empty((2,) * s)
        for bits in product((0, 1), repeat=s):
            m[bits] = self.moment([v for v, b in zip(vertices, bits) if b])
        for axis in range(s):
            m0, m1 = np.take(m, 0, axis=axis), np.take(m, 1, axis=axis)
            m = np.stack([m0 - m1, m1], axis=axis)
        m = np.clip(m, 0.0, None)
        total = m.sum()
        return m / total if total > 0 else m

    def entropy(self, vertices) -> float:
        key = frozenset(vertices)
        if key not in self._entropy:
            verts = tuple(sorted(key))
            self._entropy[key] = float(table_entropy(self.table(verts), len(verts))) if verts else 0.0
        return self._entropy[key]

    def pair_mi_matrix(self, n: int) -> np.ndarray:
        """I(X_x; X_y) for all vertex pairs, zero on the diagonal."""
        p1 = np.array([self.moment([v]) for v in range(n)])
        p12 = np.zeros((n, n))
        for x in range(n):
            for y in range(x + 1, n):
                p12[x, y] = p12[y, x] = self.moment([x, y])
        mi = pair_mutual_information(p1[:, None], p1[None, :], p12)
        np.fill_diagonal(mi, 0.0)
        return mi


def _active_laws(inst: SimInstance, prep: PreprocessResult) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    laws = {}
    for ell in prep.low:
        try:
            laws[ell] = active_dist(inst, ell, prep.s_star)
        except NoActiveMass:
            continue
    return laws


def _endpoint_mass(inst: SimInstance, edges: np.ndarray, probs: np.ndarray) -> np.ndarray:
    u = np.zeros(inst.n)
    np.add.at(u, inst.edges[edges, 0], probs)
    np.add.at(u, inst.edges[edges, 1], probs)
    return u


# --- scores ---

def independence_score(M: MomentSolution, inst: SimInstance, prep: PreprocessResult) -> float:
    """max over ℓ∈L of E_{a,b} Σ_{i,j} I(X_{a_i}; X_{b_j}); pairs of the same vertex count 0."""
    return _score(_LocalTables(M), inst, prep)


def _score(tables: _LocalTables, inst: SimInstance, prep: PreprocessResult) -> float:
    laws = _active_laws(inst, prep)
    if not laws:
        return 0.0
    mi = tables.pair_mi_matrix(inst.n)
    best = 0.0
    for edges, probs in laws.values():
        u = _endpoint_mass(inst, edges, probs)
        best = max(best, float(u @ mi @ u))
    return best


def potential(M: MomentSolution, inst: SimInstance, prep: PreprocessResult) -> float:
    return _potential(_LocalTables(M), inst, prep)


def _potential(tables: _LocalTables, inst: SimInstance, prep: PreprocessResult) -> float:
    phi = 0.0
    for edges, probs in _active_laws(inst, prep).values():
        phi += sum(p * tables.entropy(inst.edges[e]) for e, p in zip(edges, probs))
    return phi


@dataclass
class _CandidateTable:
    candidates: np.ndarray
    drops: np.ndarray


def _evaluate_candidates(tables: _LocalTables, inst: SimInstance, prep: PreprocessResult) -> _CandidateTable:
    laws = _active_laws(inst, prep)
    candidates = np.unique(np.concatenate([edges for edges, _ in laws.values()])) if laws else np.zeros(0, dtype=np.int64)
    drops = np.zeros(candidates.size)
    H = lambda verts: tables.entropy(tuple(int(v) for v in verts))
    for edges, probs in laws.values():
        h_a = np.array([H(inst.edges[a]) for a in edges])
        h_b = np.array([H(inst.edges[b]) for b in candidates])
        h_ab = np.array([[H(np.concatenate([inst.edges[a], inst.edges[b]])) for b in candidates] for a in edges])
        I = h_a[:, None] + h_b[None, :] - h_ab
        drops += probs @ I
    return _CandidateTable(candidates=candidates, drops=drops)


# --- main loop ---

def _exhausted(message: str, M: MomentSolution, report: IndependenceReport, score: float) -> BudgetExhausted:
    """BudgetExhausted carrying the last solution reached, for callers that round it anyway."""
    report.exhausted = True
    report.final_score = score
    err = BudgetExhausted(message, {"report": report.to_dict(), "solution_level": M.level})
    err.solution = M
    err.report = report
    return err


def _branch_law(tables: _LocalTables, U: Tuple[int, ...]) -> Tuple[List[Tuple[int, ...]], np.ndarray]:
    table = tables.table(U)
    betas = list(product((0, 1), repeat=len(U)))
    return betas, np.array([table[b] for b in betas])


@dataclass
class _Branch:
    pos: int
    solution: MomentSolution
    tables: _LocalTables
    score: float
    phi: float


def _condition_branches(M: MomentSolution, U: Tuple[int, ...], betas, law: np.ndarray,
                        inst: SimInstance, prep: PreprocessResult, cond_floor: float) -> List[_Branch]:
    out = []
    for i, p in enumerate(law):
        if p < cond_floor:
            continue
        try:
            sol = condition(M, U, betas[i], cond_floor)
        except ZeroProbabilityEvent:
            continue
        t = _LocalTables(sol)
        out.append(_Branch(pos=i, solution=sol, tables=t, score=_score(t, inst, prep), phi=_potential(t, inst, prep)))
    return out


def _check_step(phi: float, score: float, expected: float, law: np.ndarray, branches: List[_Branch], k: int) -> float:
    """Branch-averaged potential against φ - E[drop]; the expected drop is at least score/4."""
    averaged = float(sum(law[b.pos] * b.phi for b in branches))
    missing = max(0.0, 1.0 - float(sum(law[b.pos] for b in branches)))
    gap = abs(averaged - (phi - expected))
    if gap > IDENTITY_TOL + 2.0 * k * missing:
        raise InvariantViolation(
            f"E_β φ(M | X_U = β) = {averaged:.6g} but φ - E[drop] = {phi - expected:.6g}",
            {"phi": phi, "expected_drop": expected, "branch_average": averaged, "gap": gap},
        )
    if expected < score / 4.0 - DROP_TOL:
        raise InvariantViolation(f"best expected drop {expected:.4g} is below score/4 = {score / 4.0:.4g}",
                                 {"expected_drop": expected, "score": score})
    return gap


def make_independent(
    M: MomentSolution,
    inst: SimInstance,
    prep: PreprocessResult,
    delta: float,
    seed: int = 0,
    enumerate_branches: bool = False,
    cond_floor: float = DEFAULT_COND_FLOOR,
) -> Tuple[MomentSolution, IndependenceReport]:
    """Condition greedily until the score is at most δ/2.

    Every step conditions the solution on each branch of the chosen edge,
    checks that the branch-averaged potential equals φ minus the predicted
    drop, and then keeps one branch (sampled, or the best-scoring one with
    ``enumerate_branches``). Raises BudgetExhausted (with the partial report
    in ``details``) when fewer than two levels would remain after the next
    conditioning.
    """
    rng = np.random.default_rng(seed)
    tables = _LocalTables(M)
    score = _score(tables, inst, prep)
    phi = _potential(tables, inst, prep)
    report = IndependenceReport(delta=delta, phi_trace=[phi], initial_score=score, final_score=score)
    if phi > 2 * inst.k + 1e-9:
        raise InvariantViolation(f"potential {phi:.4f} exceeds 2k", {"phi": phi})

    while score > delta / 2.0:
        if M.level < 3:
            raise _exhausted(f"level {M.level} leaves no room to condition (score {score:.4g} > δ/2 = {delta / 2:.4g})",
                             M, report, score)
        evaluation = _evaluate_candidates(tables, inst, prep)
        order = np.argsort(-evaluation.drops, kind="stable")
        chosen = None
        for j in order:
            if evaluation.drops[j] <= MIN_USEFUL_DROP:
                break
            e = int(evaluation.candidates[j])
            U = tuple(int(v) for v in inst.edges[e] if M.index.is_free(int(v)))
            if U:
                chosen = (e, U, float(evaluation.drops[j]))
                break
        if chosen is None:
            raise _exhausted(f"no informative conditioning left at score {score:.4g}", M, report, score)
        e, U, expected = chosen
        if M.level - len(U) < 2:
            raise _exhausted(f"level {M.level} cannot absorb another conditioning (score {score:.4g} > δ/2 = {delta / 2:.4g})",
                             M, report, score)

        betas, law = _branch_law(tables, U)
        branches = _condition_branches(M, U, betas, law, inst, prep, cond_floor)
        if not branches:
            raise _exhausted("every branch of the chosen edge has negligible probability", M, report, score)
        gap = _check_step(phi, score, expected, law, branches, inst.k)

        if enumerate_branches:
            kept = min(branches, key=lambda b: b.score)
        else:
            probs = np.array([law[b.pos] for b in branches])
            kept = branches[int(rng.choice(len(branches), p=probs / probs.sum()))]
        M, tables, score = kept.solution, kept.tables, kept.score

        report.steps.append(IndependenceStep(
            edge=(int(inst.edges[e, 0]), int(inst.edges[e, 1])),
            event=(U, tuple(betas[kept.pos])),
            probability=float(law[kept.pos]),
            expected_drop=expected,
            realized_drop=phi - kept.phi,
            score_after=score,
            identity_gap=gap,
        ))
        logger.debug(f"conditioned on {U}={betas[kept.pos]}: expected drop {expected:.4g}, realized {phi - kept.phi:.4g}, score {score:.4g}")
        phi = kept.phi
        report.phi_trace.append(phi)

    report.final_score = score
    bound = math.ceil(2 * inst.k / delta)
    if len(report.steps) > bound:
        logger.warning(f"{len(report.steps)} conditionings exceed the 2k/δ = {bound} bound")
    return M, report

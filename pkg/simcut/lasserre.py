"""Lasserre pseudo-moment solutions for the partially fixed simultaneous Max-Cut SDP.

A level-r solution is stored as its monomial moment matrix Y, indexed by the
subsets S of the free vertices F = V \\ S★ with |S| ≤ r, where
Y[S, T] = y(S ∪ T) is the pseudo-probability that every vertex of S ∪ T is 1.
The atom vectors v_{S,α} are inclusion–exclusion combinations of monomials,
so probabilities of assignments are linear functionals of the moments and the
atom Gram matrix is A·Y·Aᵀ. Vertices of S★ never appear in the index: their
values are substituted from the fixing h.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from simcut.errors import (
    InvariantViolation,
    LevelExhausted,
    LevelTooSmall,
    TargetsRequired,
    ZeroProbabilityEvent,
)
from simcut.infotheory import JointDist
from simcut.instance import Assignment, PartialAssignment, SimInstance, active_degrees, active_mask
from simcut.preprocess import PreprocessResult

logger = logging.getLogger("simcut.lasserre")

DEFAULT_EQ_TOL = 1e-7
DEFAULT_PSD_TOL = 1e-8
DEFAULT_COND_FLOOR = 1e-9
MAX_LOCAL_SUPPORT = 4

Event = Tuple[Tuple[int, ...], Tuple[int, ...]]


# ================================================================
# INDEX
# ================================================================

@dataclass(frozen=True)
class MomentIndex:
    """Subsets of the free vertices with at most ``level`` elements, as bitmasks.

    Bit i of a mask refers to ``free[i]``. Subsets are ordered by size, then
    lexicographically; position 0 is the empty set.
    """

    free: Tuple[int, ...]
    level: int
    subsets: Tuple[int, ...]
    _pos: Dict[int, int] = field(repr=False, compare=False, default_factory=dict)
    _bit: Dict[int, int] = field(repr=False, compare=False, default_factory=dict)

    @classmethod
    def build(cls, free: Sequence[int], level: int) -> "MomentIndex":
        free = tuple(int(v) for v in free)
        m = len(free)
        subsets = []
        for size in range(min(level, m) + 1):
            for combo in combinations(range(m), size):
                subsets.append(sum(1 << i for i in combo))
        index = cls(free=free, level=level, subsets=tuple(subsets))
        index._pos.update({mask: i for i, mask in enumerate(subsets)})
        index._bit.update({v: i for i, v in enumerate(free)})
        return index

    @property
    def size(self) -> int:
        return len(self.subsets)

    def is_free(self, v: int) -> bool:
        return v in self._bit

    def pos(self, mask: int) -> int:
        return self._pos[mask]

    def mask_of(self, vertices: Iterable[int]) -> int:
        mask = 0
        for v in vertices:
            mask |= 1 << self._bit[v]
        return mask

    def vertices_of(self, mask: int) -> Tuple[int, ...]:
        return tuple(self.free[i] for i in range(len(self.free)) if mask >> i & 1)

    def split(self, mask: int) -> Tuple[int, int]:
        """Matrix coordinates (S, T) with S ∪ T = mask, |S|, |T| ≤ level."""
        bits = [1 << i for i in range(len(self.free)) if mask >> i & 1]
        if len(bits) > 2 * self.level:
            raise LevelExhausted(f"moment of {len(bits)} variables exceeds level {self.level}")
        head = sum(bits[: self.level])
        tail = sum(bits[self.level:])
        return self._pos[head], self._pos[tail]

    def with_level(self, level: int) -> "MomentIndex":
        return MomentIndex.build(self.free, level)


def atom_terms(index: MomentIndex, assignment: Dict[int, int]) -> Dict[int, float]:
    """Monomial expansion of the indicator [X_A = α] over free vertices."""
    ones = 0
    zeros = []
    for v, b in assignment.items():
        bit = 1 << index._bit[v]
        if b:
            ones |= bit
        else:
            zeros.append(bit)
    terms: Dict[int, float] = {}
    for size in range(len(zeros) + 1):
        sign = -1.0 if size % 2 else 1.0
        for combo in combinations(zeros, size):
            mask = ones | sum(combo)
            terms[mask] = terms.get(mask, 0.0) + sign
    return terms


def merge_events(a: Dict[int, int], b: Dict[int, int]) -> Optional[Dict[int, int]]:
    """a ∘ b, or None when the two assignments disagree."""
    out = dict(a)
    for v, val in b.items():
        if out.setdefault(v, val) != val:
            return None
    return out


def atom_row(index: MomentIndex, assignment: Optional[Dict[int, int]]) -> np.ndarray:
    """Coefficients over y(S), S in the index, of Pr[X_A = α]; needs |A| ≤ level."""
    row = np.zeros(index.size)
    if assignment is None:
        return row
    for mask, coef in atom_terms(index, assignment).items():
        row[index.pos(mask)] += coef
    return row


def _substitute(fixing: Dict[int, int], assignment: Dict[int, int]) -> Optional[Dict[int, int]]:
    """Drop S★ vertices from an event; None if the event contradicts the fixing."""
    out = {}
    for v, b in assignment.items():
        if v in fixing:
            if fixing[v] != b:
                return None
        else:
            out[v] = b
    return out


# ================================================================
# MOMENT SOLUTION
# ================================================================

@dataclass(frozen=True)
class MomentSolution:
    index: MomentIndex
    Y: np.ndarray
    fixing: PartialAssignment = field(default_factory=PartialAssignment.empty)
    psd_tol: float = DEFAULT_PSD_TOL
    eq_tol: float = DEFAULT_EQ_TOL
    conditioned_on: Tuple[Event, ...] = ()

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64)
        if Y.shape != (self.index.size, self.index.size):
            raise ValueError(f"moment matrix shape {Y.shape} does not match index size {self.index.size}")
        Y = Y.copy()
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)

    @property
    def level(self) -> int:
        return self.index.level

    @property
    def moments(self) -> np.ndarray:
        """y(S) for S in index order."""
        return self.Y[:, 0]

    def moment_mask(self, mask: int) -> float:
        i, j = self.index.split(mask)
        return float(self.Y[i, j])

    def prob(self, assignment: Dict[int, int]) -> float:
        """Pseudo-probability of an event; S★ vertices are read from the fixing."""
        event = _substitute(self.fixing.as_dict(), assignment)
        if event is None:
            return 0.0
        return float(sum(c * self.moment_mask(m) for m, c in atom_terms(self.index, event).items()))

    def bias(self, i: int) -> float:
        return float(np.clip(2.0 * self.prob({i: 1}) - 1.0, -1.0, 1.0))

    def atoms(self) -> List[Event]:
        out: List[Event] = []
        for mask in self.index.subsets:
            verts = self.index.vertices_of(mask)
            for alpha in product((0, 1), repeat=len(verts)):
                out.append((verts, alpha))
        return out

    def atom_matrix(self) -> Tuple[List[Event], np.ndarray]:
        """The Gram matrix of the v_{S,α} vectors, M = A·Y·Aᵀ."""
        atoms = self.atoms()
        A = np.stack([atom_row(self.index, dict(zip(S, a))) for S, a in atoms])
        return atoms, A @ self.Y @ A.T

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.Y + self.Y.T) / 2.0)[0])

    def to_dict(self) -> dict:
        rows, cols = np.tril_indices(self.index.size)
        return {
            "free": [v + 1 for v in self.index.free],
            "level": self.level,
            "fixing": {str(v + 1): b for v, b in self.fixing.as_dict().items()},
            "atoms": [[v + 1 for v in self.index.vertices_of(m)] for m in self.index.subsets],
            "lower_triangle": self.Y[rows, cols].tolist(),
            "conditioned_on": [[[v + 1 for v in U], list(b)] for U, b in self.conditioned_on],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MomentSolution":
        index = MomentIndex.build([v - 1 for v in payload["free"]], int(payload["level"]))
        Y = np.zeros((index.size, index.size))
        rows, cols = np.tril_indices(index.size)
        Y[rows, cols] = payload["lower_triangle"]
        Y[cols, rows] = payload["lower_triangle"]
        fixing = {int(v) - 1: int(b) for v, b in payload.get("fixing", {}).items()}
        h = PartialAssignment(tuple(fixing), tuple(fixing.values()))
        events = tuple((tuple(v - 1 for v in U), tuple(b)) for U, b in payload.get("conditioned_on", []))
        return cls(index=index, Y=Y, fixing=h, conditioned_on=events)


# ================================================================
# CONSTRAINTS
# ================================================================

@dataclass(frozen=True)
class ConstraintRow:
    family: str
    instance: int
    prefix: Event


@dataclass
class ConstraintSet:
    """Rows G with the meaning G @ y ≥ 0, y the moment vector over the index.

    Unit and consistency constraints are structural: y(∅) = 1 and
    Y[S, T] = y(S ∪ T) are enforced on the matrix itself.
    """

    index: MomentIndex
    fixing: PartialAssignment
    G: np.ndarray
    rows: List[ConstraintRow]
    epsilon: float

    def family_rows(self, family: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.rows) if r.family == family], dtype=np.int64)

    def constant_rows(self) -> np.ndarray:
        """Rows that only involve y(∅), i.e. fixed-value checks."""
        if self.G.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(np.all(self.G[:, 1:] == 0.0, axis=1))

    def summary(self) -> dict:
        fams: Dict[str, int] = {}
        for r in self.rows:
            fams[r.family] = fams.get(r.family, 0) + 1
        n = self.index.size
        return {"level": self.index.level, "index_size": n, "rows": fams, "consistency_pairs": n * (n + 1) // 2}


def _prefixes(index: MomentIndex, max_size: int) -> Iterable[Dict[int, int]]:
    for mask in index.subsets:
        verts = index.vertices_of(mask)
        if len(verts) > max_size:
            break
        for alpha in product((0, 1), repeat=len(verts)):
            yield dict(zip(verts, alpha))


def _cut_row(index: MomentIndex, fixing: Dict[int, int], u: int, v: int, prefix: Dict[int, int]) -> np.ndarray:
    """Coefficients of Pr[prefix ∧ edge (u, v) cut] with S★ values substituted."""
    u_fixed, v_fixed = u in fixing, v in fixing
    if u_fixed and v_fixed:
        return float(fixing[u] != fixing[v]) * atom_row(index, prefix)
    if u_fixed or v_fixed:
        fixed, other = (u, v) if u_fixed else (v, u)
        return atom_row(index, merge_events(prefix, {other: 1 - fixing[fixed]}))
    return atom_row(index, merge_events(prefix, {u: 0, v: 1})) + atom_row(index, merge_events(prefix, {u: 1, v: 0}))


def build_constraints(
    inst: SimInstance,
    prep: PreprocessResult,
    h: PartialAssignment,
    epsilon: float,
    r: int,
) -> ConstraintSet:
    """Objective and active-edge families of the r-round lift, one per prefix (S, α), |S| ≤ r-2."""
    if r < 2:
        raise LevelTooSmall(f"Lasserre level must be at least 2, got {r}", {"level": r})
    if set(h.support) != set(prep.s_star):
        raise ValueError("fixing must be total on S★")
    if inst.targets is None:
        raise TargetsRequired("objective constraints need targets c_ℓ")

    fixing = h.as_dict()
    index = MomentIndex.build(prep.free_vertices(inst.n), r)
    active = active_mask(inst, prep.s_star)
    actdeg = []
    for ell in range(inst.k):
        deg = active_degrees(inst, ell, prep.s_star)
        actdeg.append(float(sum(deg[v] for v in index.free)))

    edge_ids = np.flatnonzero(inst.weights.sum(axis=0) > 0)
    rows: List[ConstraintRow] = []
    G: List[np.ndarray] = []
    for prefix in _prefixes(index, r - 2):
        base = atom_row(index, prefix)
        if not base.any():
            continue
        cut = np.stack([_cut_row(index, fixing, int(inst.edges[e, 0]), int(inst.edges[e, 1]), prefix) for e in edge_ids]) \
            if edge_ids.size else np.zeros((0, index.size))
        tag = (tuple(prefix), tuple(prefix.values()))
        for ell in range(inst.k):
            w = inst.weights[ell, edge_ids]
            G.append(w @ cut - (1.0 - 3.0 * epsilon) * float(inst.targets[ell]) * base)
            rows.append(ConstraintRow("objective", ell, tag))
        for ell in prep.low:
            w = np.where(active[edge_ids], inst.weights[ell, edge_ids], 0.0)
            G.append(w @ cut - (epsilon / 3.0) * actdeg[ell] * base)
            rows.append(ConstraintRow("active", ell, tag))

    matrix = np.stack(G) if G else np.zeros((0, index.size))
    cs = ConstraintSet(index=index, fixing=h, G=matrix, rows=rows, epsilon=epsilon)
    logger.debug(f"Built constraints: {cs.summary()}")
    return cs


# ================================================================
# FEASIBILITY
# ================================================================

@lru_cache(maxsize=64)
def canonical_entries(index: MomentIndex) -> Tuple[np.ndarray, np.ndarray]:
    """For every matrix entry, the coordinates of the canonical entry of its union."""
    masks = np.array(index.subsets, dtype=np.int64)
    union = masks[:, None] | masks[None, :]
    labels, inverse = np.unique(union, return_inverse=True)
    reps = np.array([index.split(int(u)) for u in labels], dtype=np.int64)
    inverse = inverse.reshape(union.shape)
    rows, cols = reps[inverse, 0], reps[inverse, 1]
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def consistency_residual(index: MomentIndex, Y: np.ndarray) -> float:
    """max |Y[S, T] - y(S ∪ T)| with y read from a canonical entry."""
    rows, cols = canonical_entries(index)
    return float(np.max(np.abs(Y - Y[rows, cols])))


@dataclass
class FeasibilityReport:
    residuals: Dict[str, float]
    row_violations: np.ndarray
    eq_tol: float
    psd_tol: float

    def within(self, factor: float = 1.0) -> bool:
        linear = [v for k, v in self.residuals.items() if k != "psd"]
        return max(linear, default=0.0) <= factor * self.eq_tol and self.residuals.get("psd", 0.0) <= factor * self.psd_tol

    @property
    def feasible(self) -> bool:
        return self.within(1.0)

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "residuals": dict(self.residuals), "eq_tol": self.eq_tol, "psd_tol": self.psd_tol}


def check_feasible(M: MomentSolution, C: ConstraintSet) -> FeasibilityReport:
    Y = M.Y
    y = M.moments
    residuals: Dict[str, float] = {}
    viol = np.maximum(0.0, -(C.G @ y)) if C.G.size else np.zeros(0)
    for fam in ("objective", "active"):
        idx = C.family_rows(fam)
        residuals[fam] = float(viol[idx].max()) if idx.size else 0.0
    residuals["unit"] = abs(float(Y[0, 0]) - 1.0)
    residuals["consistency"] = consistency_residual(M.index, Y)
    residuals["range"] = float(max(0.0, -Y.min(), Y.max() - 1.0))
    residuals["psd"] = max(0.0, -M.min_eigenvalue())
    return FeasibilityReport(residuals=residuals, row_violations=viol, eq_tol=M.eq_tol, psd_tol=M.psd_tol)


# ================================================================
# CONSTRUCTION & CONDITIONING
# ================================================================

def embed_integral(f: Assignment, index: MomentIndex, fixing: Optional[PartialAssignment] = None) -> MomentSolution:
    """Point-mass solution of a total assignment: Y = z zᵀ with z_S = Π_{v∈S} f(v)."""
    f = np.asarray(f)
    z = np.array([float(all(f[v] == 1 for v in index.vertices_of(mask))) for mask in index.subsets])
    h = fixing if fixing is not None else PartialAssignment.empty()
    return MomentSolution(index=index, Y=np.outer(z, z), fixing=h)


def condition(
    M: MomentSolution,
    U: Sequence[int],
    beta: Sequence[int],
    cond_floor: float = DEFAULT_COND_FLOOR,
) -> MomentSolution:
    """Condition on X_U = β; the level drops by |U|."""
    U = tuple(int(v) for v in U)
    beta = tuple(int(b) for b in beta)
    if len(U) > M.level:
        raise LevelExhausted(f"cannot condition on {len(U)} variables at level {M.level}",
                             {"level": M.level, "event_size": len(U)})
    event = dict(zip(U, beta))
    c = atom_row(M.index, event)
    P = float(c @ M.Y @ c)
    if P < cond_floor:
        raise ZeroProbabilityEvent(f"Pr[X_U = β] = {P:.3e} below floor {cond_floor:.1e}",
                                   {"event": [[v + 1 for v in U], list(beta)], "probability": P})

    new_index = M.index.with_level(M.level - len(U))
    C = np.stack([atom_row(M.index, merge_events({v: 1 for v in new_index.vertices_of(mask)}, event))
                  for mask in new_index.subsets])
    Y = C @ M.Y @ C.T / P
    Y = (Y + Y.T) / 2.0
    out = MomentSolution(index=new_index, Y=Y, fixing=M.fixing, psd_tol=M.psd_tol, eq_tol=M.eq_tol,
                         conditioned_on=M.conditioned_on + ((U, beta),))
    _assert_conditioned(out, P)
    return out


def _assert_conditioned(M: MomentSolution, P: float) -> None:
    scale = 10.0 / P
    lam = M.min_eigenvalue()
    if lam < -scale * max(M.psd_tol, M.eq_tol):
        raise InvariantViolation(f"conditioned solution lost PSD (min eig {lam:.3e})", {"min_eig": lam})
    resid = consistency_residual(M.index, M.Y)
    if resid > scale * M.eq_tol:
        raise InvariantViolation(f"conditioned solution inconsistent (residual {resid:.3e})", {"residual": resid})


# ================================================================
# LOCAL DISTRIBUTIONS
# ================================================================

def local_distribution(M: MomentSolution, T: Sequence[int]) -> JointDist:
    """Joint law of X_T read off the moments, clamped and renormalized."""
    T = tuple(int(v) for v in T)
    if len(T) > min(M.level, MAX_LOCAL_SUPPORT):
        raise LevelExhausted(f"local distribution on {len(T)} variables needs level ≥ {len(T)}",
                             {"level": M.level, "support": len(T)})
    probs = np.zeros((2,) * len(T))
    for alpha in product((0, 1), repeat=len(T)):
        probs[alpha] = M.prob(dict(zip(T, alpha)))
    probs = np.clip(probs, 0.0, None)
    total = probs.sum()
    if total <= 0.0:
        raise InvariantViolation("local distribution has no mass")
    return JointDist(T, probs / total)


def bias(M: MomentSolution, i: int) -> float:
    """μ_i = 2·Pr[X_i = 1] - 1."""
    return M.bias(i)

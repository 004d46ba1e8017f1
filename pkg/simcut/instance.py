"""Simultaneous weighted Max-Cut instances.

Vertices are 0-based internally and 1-based in instance files. Edges are
stored once, canonicalized to ``u < v``, in a shared edge list; each of the k
instances is a row of the ``(k, E)`` weight matrix.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from simcut.errors import (
    EmptyInstance,
    InstanceFormatError,
    NoActiveMass,
    TooLarge,
    WeightBelowFloor,
)

logger = logging.getLogger("simcut.instance")

DEFAULT_WEIGHT_FLOOR = 1e-12
DEFAULT_BRUTE_FORCE_CAP = 20
NORMALIZATION_TOL = 1e-12
_BRUTE_FORCE_CHUNK = 1 << 15

Assignment = np.ndarray
"""Total assignment: int8 array of length n with entries in {0, 1}."""


# --- Pydantic Models for the instance file ---

class InstanceEntry(BaseModel):
    name: str = Field("", description="Human readable label of the instance.")
    edges: List[Tuple[int, int, float]] = Field(
        default_factory=list, description="Edges as [u, v, w] with 1-based vertices."
    )


class InstanceFile(BaseModel):
    n: int = Field(..., ge=1, description="Number of vertices.")
    instances: List[InstanceEntry] = Field(..., min_length=1, description="The k edge-weighted graphs.")
    targets: Optional[List[float]] = Field(None, description="Optional per-instance targets c_1..c_k.")

    @field_validator("targets")
    @classmethod
    def _targets_in_unit_interval(cls, v):
        if v is not None and any(not 0.0 <= c <= 1.0 for c in v):
            raise ValueError("targets must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _check_edges(self):
        for idx, entry in enumerate(self.instances):
            for u, v, w in entry.edges:
                if not (1 <= u <= self.n and 1 <= v <= self.n):
                    raise ValueError(f"instance {idx}: vertex out of range in edge ({u}, {v})")
                if u == v:
                    raise ValueError(f"instance {idx}: self-loop on vertex {u}")
                if w < 0 or not np.isfinite(w):
                    raise ValueError(f"instance {idx}: invalid weight {w} on edge ({u}, {v})")
        if self.targets is not None and len(self.targets) != len(self.instances):
            raise ValueError("targets must have one entry per instance")
        return self


# --- Core data types ---

@dataclass(frozen=True)
class SimInstance:
    """k weighted graphs on the vertex set {0, ..., n-1}."""

    n: int
    edges: np.ndarray
    weights: np.ndarray
    targets: Optional[np.ndarray] = None
    names: Tuple[str, ...] = ()
    min_weight_floor: float = DEFAULT_WEIGHT_FLOOR

    def __post_init__(self):
        self.edges.setflags(write=False)
        self.weights.setflags(write=False)
        if self.targets is not None:
            self.targets.setflags(write=False)

    @property
    def k(self) -> int:
        return int(self.weights.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @classmethod
    def from_edge_lists(
        cls,
        n: int,
        edge_lists: Sequence[Iterable[Tuple[int, int, float]]],
        targets: Optional[Sequence[float]] = None,
        names: Optional[Sequence[str]] = None,
        min_weight_floor: float = DEFAULT_WEIGHT_FLOOR,
    ) -> "SimInstance":
        """Build an instance from 0-based edge lists; duplicate pairs are summed."""
        per_instance: List[Dict[Tuple[int, int], float]] = []
        all_pairs = set()
        for edges in edge_lists:
            acc: Dict[Tuple[int, int], float] = {}
            for u, v, w in edges:
                u, v = int(u), int(v)
                if u == v:
                    raise InstanceFormatError(f"self-loop on vertex {u}")
                if not (0 <= u < n and 0 <= v < n):
                    raise InstanceFormatError(f"edge ({u}, {v}) out of range for n={n}")
                key = (min(u, v), max(u, v))
                acc[key] = acc.get(key, 0.0) + float(w)
            per_instance.append(acc)
            all_pairs.update(p for p, w in acc.items() if w != 0.0)

        pairs = sorted(all_pairs)
        edge_arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        col = {p: i for i, p in enumerate(pairs)}
        weights = np.zeros((len(per_instance), len(pairs)), dtype=np.float64)
        for ell, acc in enumerate(per_instance):
            for p, w in acc.items():
                if w != 0.0:
                    weights[ell, col[p]] = w

        tgt = None if targets is None else np.asarray(targets, dtype=np.float64)
        labels = tuple(names) if names is not None else tuple(f"E{ell + 1}" for ell in range(len(per_instance)))
        return cls(n=n, edges=edge_arr, weights=weights, targets=tgt, names=labels, min_weight_floor=min_weight_floor)

    def with_targets(self, targets: Optional[Sequence[float]]) -> "SimInstance":
        tgt = None if targets is None else np.asarray(targets, dtype=np.float64)
        return SimInstance(self.n, self.edges.copy(), self.weights.copy(), tgt, self.names, self.min_weight_floor)

    def is_normalized(self) -> bool:
        return bool(np.all(np.abs(self.weights.sum(axis=1) - 1.0) <= NORMALIZATION_TOL))

    def to_file_model(self) -> InstanceFile:
        entries = []
        for ell in range(self.k):
            nz = np.flatnonzero(self.weights[ell])
            entries.append(InstanceEntry(
                name=self.names[ell] if ell < len(self.names) else "",
                edges=[(int(self.edges[e, 0]) + 1, int(self.edges[e, 1]) + 1, float(self.weights[ell, e])) for e in nz],
            ))
        targets = None if self.targets is None else [float(c) for c in self.targets]
        return InstanceFile(n=self.n, instances=entries, targets=targets)


@dataclass(frozen=True)
class PartialAssignment:
    """Assignment h: S -> {0,1}; ``support`` is S in a fixed order."""

    support: Tuple[int, ...]
    values: Tuple[int, ...]

    def __post_init__(self):
        if len(self.support) != len(self.values):
            raise ValueError("support and values must have equal length")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support contains repeated vertices")
        if any(b not in (0, 1) for b in self.values):
            raise ValueError("assignment values must be 0 or 1")

    @classmethod
    def empty(cls) -> "PartialAssignment":
        return cls((), ())

    @classmethod
    def restrict(cls, f: Assignment, support: Sequence[int]) -> "PartialAssignment":
        return cls(tuple(int(v) for v in support), tuple(int(f[v]) for v in support))

    def as_dict(self) -> Dict[int, int]:
        return dict(zip(self.support, self.values))

    def __len__(self) -> int:
        return len(self.support)

    def replace(self, vertex: int, value: int) -> "PartialAssignment":
        vals = list(self.values)
        vals[self.support.index(vertex)] = int(value)
        return PartialAssignment(self.support, tuple(vals))

    def combine(self, n: int, free: Sequence[int], g: Sequence[int]) -> Assignment:
        """Total assignment h ∪ g on n vertices."""
        f = np.zeros(n, dtype=np.int8)
        if self.support:
            f[list(self.support)] = self.values
        if len(free):
            f[np.asarray(free, dtype=np.int64)] = np.asarray(g, dtype=np.int8)
        return f


@dataclass
class CutReport:
    per_instance: np.ndarray
    min_ratio: Optional[float] = None
    min_value: float = field(init=False)

    def __post_init__(self):
        self.min_value = float(np.min(self.per_instance)) if len(self.per_instance) else 0.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "per_instance": [float(x) for x in self.per_instance],
            "min_value": self.min_value,
            "min_ratio": self.min_ratio,
        }


# --- Normalization & I/O ---

def normalize(raw: SimInstance) -> SimInstance:
    totals = raw.weights.sum(axis=1)
    empty = np.flatnonzero(totals <= 0.0)
    if empty.size:
        raise EmptyInstance(
            f"instance(s) {[int(i) + 1 for i in empty]} have zero total weight",
            {"instances": [int(i) + 1 for i in empty]},
        )
    weights = raw.weights / totals[:, None]
    nonzero = weights[weights > 0.0]
    if nonzero.size and nonzero.min() < raw.min_weight_floor:
        raise WeightBelowFloor(
            f"normalized weight {nonzero.min():.3e} below floor {raw.min_weight_floor:.1e}",
            {"min_weight": float(nonzero.min()), "floor": raw.min_weight_floor},
        )
    return SimInstance(raw.n, raw.edges.copy(), weights, raw.targets, raw.names, raw.min_weight_floor)


def parse_instance(payload: dict, min_weight_floor: float = DEFAULT_WEIGHT_FLOOR) -> SimInstance:
    try:
        model = InstanceFile.model_validate(payload)
    except ValidationError as e:
        raise InstanceFormatError(f"invalid instance file: {e}", {"errors": e.errors(include_url=False)}) from e
    edge_lists = [[(u - 1, v - 1, w) for u, v, w in entry.edges] for entry in model.instances]
    names = [entry.name or f"E{ell + 1}" for ell, entry in enumerate(model.instances)]
    return SimInstance.from_edge_lists(model.n, edge_lists, model.targets, names, min_weight_floor)


def load_instance(path: str, min_weight_floor: float = DEFAULT_WEIGHT_FLOOR) -> SimInstance:
    """Read, validate and normalize an instance file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise InstanceFormatError(f"cannot read instance file {path}: {e}") from e
    inst = normalize(parse_instance(payload, min_weight_floor))
    logger.info(f"Loaded instance {path}: n={inst.n}, k={inst.k}, |E|={inst.num_edges}")
    return inst


def dump_instance(inst: SimInstance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(inst.to_file_model().model_dump(), fh, indent=2)


# --- Cut evaluation ---

def cut_value(inst: SimInstance, ell: int, f: Assignment) -> float:
    f = np.asarray(f)
    cut = f[inst.edges[:, 0]] != f[inst.edges[:, 1]]
    return float(inst.weights[ell] @ cut)


def cut_values(inst: SimInstance, f: Assignment) -> np.ndarray:
    f = np.asarray(f)
    cut = (f[inst.edges[:, 0]] != f[inst.edges[:, 1]]).astype(np.float64)
    return inst.weights @ cut


def cut_matrix(inst: SimInstance, assignments: np.ndarray) -> np.ndarray:
    """Per-instance cut values for a batch of assignments, shape (m, k)."""
    X = np.atleast_2d(assignments)
    cut = (X[:, inst.edges[:, 0]] != X[:, inst.edges[:, 1]]).astype(np.float64)
    return cut @ inst.weights.T


def ratios(values: np.ndarray, targets: Optional[np.ndarray]) -> np.ndarray:
    """val / c per instance; instances with c = 0 count as fully satisfied."""
    values = np.asarray(values, dtype=np.float64)
    if targets is None:
        return values
    safe = np.where(targets > 0, targets, 1.0)
    return np.where(targets > 0, values / safe, np.inf)


def min_ratio(values: np.ndarray, targets: Optional[np.ndarray]) -> float:
    r = ratios(values, targets)
    m = float(np.min(r, axis=-1)) if r.size else 1.0
    return 1.0 if np.isinf(m) else m


def row_min_ratios(values: np.ndarray, targets: Optional[np.ndarray]) -> np.ndarray:
    """min_ell ratio for each row of a (m, k) value matrix; rows with every c = 0 score 1."""
    values = np.atleast_2d(values)
    if targets is None:
        return values.min(axis=1)
    r = ratios(values, targets)
    return np.where(np.isinf(r).all(axis=1), 1.0, r.min(axis=1))


def cut_report(inst: SimInstance, f: Assignment) -> CutReport:
    vals = cut_values(inst, f)
    mr = None if inst.targets is None else min_ratio(vals, inst.targets)
    return CutReport(per_instance=vals, min_ratio=mr)


# --- Active-edge bookkeeping ---

def _membership(n: int, S: Iterable[int]) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    idx = np.fromiter((int(v) for v in S), dtype=np.int64)
    mask[idx] = True
    return mask


def active_mask(inst: SimInstance, S: Iterable[int]) -> np.ndarray:
    inside = _membership(inst.n, S)
    return ~(inside[inst.edges[:, 0]] & inside[inst.edges[:, 1]])


def active_edges(inst: SimInstance, S: Iterable[int]) -> np.ndarray:
    """Indices of edges with at least one endpoint outside S."""
    return np.flatnonzero(active_mask(inst, S))


def active_degrees(inst: SimInstance, ell: int, S: Iterable[int]) -> np.ndarray:
    """actdeg_S(v, ell) for every vertex v, shape (n,)."""
    S = list(S)
    w = np.where(active_mask(inst, S), inst.weights[ell], 0.0)
    deg = np.zeros(inst.n, dtype=np.float64)
    np.add.at(deg, inst.edges[:, 0], w)
    np.add.at(deg, inst.edges[:, 1], w)
    return deg


def active_degree(inst: SimInstance, ell: int, v: int, S: Iterable[int]) -> float:
    return float(active_degrees(inst, ell, S)[v])


def active_degree_total(inst: SimInstance, ell: int, S: Iterable[int]) -> float:
    S = list(S)
    outside = ~_membership(inst.n, S)
    return float(active_degrees(inst, ell, S)[outside].sum())


def active_weight(inst: SimInstance, ell: int, S: Iterable[int]) -> float:
    return float(inst.weights[ell][active_mask(inst, S)].sum())


def active_dist(inst: SimInstance, ell: int, S: Iterable[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Active edges of instance ell with their weights renormalized to 1."""
    idx = active_edges(inst, S)
    w = inst.weights[ell][idx]
    keep = w > 0
    idx, w = idx[keep], w[keep]
    total = w.sum()
    if total <= 0.0:
        raise NoActiveMass(f"instance {ell + 1} has no active weight", {"instance": ell + 1})
    return idx, w / total


# --- Exact oracle ---

def brute_force_opt(inst: SimInstance, cap: int = DEFAULT_BRUTE_FORCE_CAP) -> Tuple[Assignment, CutReport]:
    """Exhaustive search over the 2^(n-1) bipartitions with vertex 0 on side 0.

    Maximizes min_ell val/c_ell when targets are set, else min_ell val. Ties
    resolve to the lexicographically smallest assignment.
    """
    n = inst.n
    if n > cap:
        raise TooLarge(f"brute force limited to n <= {cap}, got n={n}", {"n": n, "cap": cap})
    total = 1 << (n - 1)
    shifts = np.arange(n - 2, -1, -1, dtype=np.int64)
    best_score, best_code = -np.inf, 0
    for start in range(0, total, _BRUTE_FORCE_CHUNK):
        codes = np.arange(start, min(total, start + _BRUTE_FORCE_CHUNK), dtype=np.int64)
        X = np.zeros((codes.size, n), dtype=np.int8)
        if n > 1:
            X[:, 1:] = (codes[:, None] >> shifts[None, :]) & 1
        scores = row_min_ratios(cut_matrix(inst, X), inst.targets)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score, best_code = float(scores[i]), int(codes[i])
    f = np.zeros(n, dtype=np.int8)
    if n > 1:
        f[1:] = (best_code >> shifts) & 1
    logger.debug(f"Brute force optimum {best_score:.6f} over {total} bipartitions")
    return f, cut_report(inst, f)


# --- Generators ---

def _seed_stream(seed: int, k: int) -> List[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(k)]


def random_instance(n: int, k: int, p: float = 0.5, seed: int = 0, weighted: bool = False) -> SimInstance:
    """k independent G(n, p) graphs; empty draws get one random edge."""
    rng = np.random.default_rng(seed)
    edge_lists = []
    for sub in _seed_stream(seed, k):
        G = nx.gnp_random_graph(n, p, seed=sub)
        if G.number_of_edges() == 0:
            u, v = rng.choice(n, size=2, replace=False)
            G.add_edge(int(u), int(v))
        edge_lists.append([(u, v, float(rng.integers(1, 10)) if weighted else 1.0) for u, v in G.edges()])
    return normalize(SimInstance.from_edge_lists(n, edge_lists))


def planted_instance(n: int, k: int, p: float = 0.6, seed: int = 0) -> Tuple[SimInstance, Assignment]:
    """k random graphs whose edges all cross a hidden bipartition f★.

    Every instance is fully cut by f★, so the targets are all 1.
    """
    rng = np.random.default_rng(seed)
    f_star = rng.integers(0, 2, size=n).astype(np.int8)
    f_star[0] = 0
    if np.all(f_star == 0):
        f_star[n - 1] = 1
    left = np.flatnonzero(f_star == 0)
    right = np.flatnonzero(f_star == 1)
    edge_lists = []
    for sub in _seed_stream(seed, k):
        G = nx.gnp_random_graph(n, p, seed=sub)
        edges = [(u, v, 1.0) for u, v in G.edges() if f_star[u] != f_star[v]]
        if not edges:
            edges = [(int(rng.choice(left)), int(rng.choice(right)), 1.0)]
        edge_lists.append(edges)
    inst = normalize(SimInstance.from_edge_lists(n, edge_lists, targets=[1.0] * k))
    return inst, f_star

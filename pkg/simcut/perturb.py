"""Re-assign one special S★ vertex per high-variance instance.

For each ℓ ∈ H in index order the heavy set B is recomputed against the
current assignment, the earliest vertex brought in because of ℓ outside
B and earlier specials is chosen, and it is moved to the side cutting at
least half of its ℓ-weight inside S★.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from simcut.errors import InvariantViolation, NoEligibleSpecial
from simcut.instance import PartialAssignment, SimInstance, active_degree_total, cut_values
from simcut.preprocess import PreprocessResult

logger = logging.getLogger("simcut.perturb")

VALUE_TOL = 1e-12


@dataclass
class PerturbResult:
    h: PartialAssignment
    specials: Dict[int, int] = field(default_factory=dict)
    B: List[int] = field(default_factory=list)
    bound: float = 0.0
    bound_violated: bool = False
    values_before: np.ndarray = None
    values_after: np.ndarray = None

    def to_dict(self) -> dict:
        return {
            "h": {str(v + 1): b for v, b in self.h.as_dict().items()},
            "specials": {str(ell + 1): v + 1 for ell, v in self.specials.items()},
            "B": [v + 1 for v in self.B],
            "B_bound": self.bound,
            "B_bound_violated": self.bound_violated,
            "values_before": None if self.values_before is None else [float(x) for x in self.values_before],
            "values_after": None if self.values_after is None else [float(x) for x in self.values_after],
        }


def incident_cut_weight(inst: SimInstance, f: np.ndarray) -> np.ndarray:
    """(k, n) weight of cut edges incident on each vertex under f."""
    cut = (f[inst.edges[:, 0]] != f[inst.edges[:, 1]]).astype(np.float64)
    W = inst.weights * cut[None, :]
    out = np.zeros((inst.k, inst.n))
    np.add.at(out.T, inst.edges[:, 0], W.T)
    np.add.at(out.T, inst.edges[:, 1], W.T)
    return out


def heavy_set(inst: SimInstance, f: np.ndarray, epsilon: float) -> List[int]:
    """Vertices carrying ≥ ε/2k of val(f, E_ℓ) in some instance with positive value."""
    values = cut_values(inst, f)
    incident = incident_cut_weight(inst, f)
    live = values > VALUE_TOL
    if not live.any():
        return []
    threshold = (epsilon / (2.0 * inst.k)) * values[live]
    heavy = (incident[live] >= threshold[:, None] - VALUE_TOL).any(axis=0)
    return [int(v) for v in np.flatnonzero(heavy)]


def _majority_value(inst: SimInstance, ell: int, v: int, f: np.ndarray, inside: np.ndarray) -> int:
    """Value for v cutting at least half of its ℓ-weight to other S★ vertices; ties go to 0."""
    u, w = inst.edges[:, 0], inst.edges[:, 1]
    mask = ((u == v) & inside[w]) | ((w == v) & inside[u])
    others = np.where(u[mask] == v, w[mask], u[mask])
    weights = inst.weights[ell, mask]
    to_zero = float(weights[f[others] == 0].sum())
    to_one = float(weights[f[others] == 1].sum())
    return 1 if to_zero > to_one else 0


def perturb(
    inst: SimInstance,
    prep: PreprocessResult,
    h_in: PartialAssignment,
    g: Sequence[int],
    epsilon: float,
    free: Sequence[int] = None,
) -> PerturbResult:
    free = prep.free_vertices(inst.n) if free is None else tuple(free)
    if set(h_in.support) != set(prep.s_star):
        raise ValueError("h_in must be defined exactly on S★")
    if not prep.params.compliant:
        logger.debug("perturb running at a capped or overridden t; guarantees are not implied")
    f = h_in.combine(inst.n, free, g)
    before = cut_values(inst, f)
    inside = np.zeros(inst.n, dtype=bool)
    inside[list(prep.s_star)] = True
    bound = 4.0 * inst.k ** 2 / epsilon

    h = h_in
    result = PerturbResult(h=h_in, bound=bound, values_before=before)
    for ell in prep.high:
        B = heavy_set(inst, f, epsilon)
        result.B = B
        if len(B) > bound:
            result.bound_violated = True
            logger.warning(f"|B| = {len(B)} exceeds 4k²/ε = {bound:.1f}")
        blocked = set(B) | set(result.specials.values())
        U = prep.early_vertices(ell)
        eligible = [v for v in U if v not in blocked]
        if not eligible:
            raise NoEligibleSpecial(
                f"no eligible special vertex for instance {ell + 1}",
                {"instance": ell + 1, "U": [v + 1 for v in U], "B": [v + 1 for v in B]},
            )
        v = eligible[0]
        value = _majority_value(inst, ell, v, f, inside)
        result.specials[ell] = v
        if value != f[v]:
            f[v] = value
            h = h.replace(v, value)
        logger.debug(f"instance {ell + 1}: special vertex {v + 1} set to {value}")

    after = cut_values(inst, f)
    floor = (1.0 - epsilon / 2.0) * before
    if np.any(after < floor - 1e-9):
        bad = [int(l) + 1 for l in np.flatnonzero(after < floor - 1e-9)]
        raise InvariantViolation("perturbation lost more than an ε/2 fraction", {"instances": bad})
    result.h = h
    result.values_after = after
    return result


def high_variance_floor(inst: SimInstance, prep: PreprocessResult, f: np.ndarray) -> List[dict]:
    """val(f, E_ℓ) against 8·actdeg_{S★}(ℓ) for each high-variance instance."""
    values = cut_values(inst, np.asarray(f))
    rows = []
    for ell in prep.high:
        floor = 8.0 * active_degree_total(inst, ell, prep.s_star)
        rows.append({"instance": ell + 1, "value": float(values[ell]), "floor": floor,
                     "holds": bool(values[ell] >= floor - 1e-12)})
    return rows

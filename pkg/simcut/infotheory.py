"""Entropy and mutual information (in bits) on small joint distributions of bits."""

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.special import entr

from simcut.errors import OverlappingSets

PROB_SUM_TOL = 1e-9
CLAMP_FLOOR = 1e-12
MAX_SUPPORT = 4
_LN2 = np.log(2.0)


@dataclass(frozen=True)
class JointDist:
    """Distribution of the bits X_v, v in ``support``; ``probs`` has shape (2,)*m."""

    support: Tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        m = len(self.support)
        if m > MAX_SUPPORT:
            raise ValueError(f"joint distributions are limited to {MAX_SUPPORT} variables")
        if len(set(self.support)) != m:
            raise ValueError("support contains repeated variables")
        p = np.asarray(self.probs, dtype=np.float64).reshape((2,) * m)
        if np.any(p < -CLAMP_FLOOR):
            raise ValueError(f"negative probability {p.min():.3e}")
        p = np.where(p < CLAMP_FLOOR, 0.0, p)
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum():.12f}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_table(cls, support: Sequence[int], table: dict) -> "JointDist":
        """Build from a mapping {(b_1, ..., b_m): probability}."""
        m = len(support)
        p = np.zeros((2,) * m)
        for key, val in table.items():
            p[tuple(key)] = val
        return cls(tuple(support), p)

    def axes(self, variables: Iterable[int]) -> Tuple[int, ...]:
        pos = {v: i for i, v in enumerate(self.support)}
        return tuple(pos[v] for v in variables)

    def marginal(self, variables: Sequence[int]) -> np.ndarray:
        keep = set(self.axes(variables))
        drop = tuple(i for i in range(len(self.support)) if i not in keep)
        return self.probs.sum(axis=drop) if drop else self.probs


def _entropy_bits(p: np.ndarray, axis=None) -> np.ndarray:
    p = np.where(p < CLAMP_FLOOR, 0.0, p)
    return entr(p).sum(axis=axis) / _LN2


def entropy(d: JointDist, variables: Sequence[int] = None) -> float:
    """H(X_A) in bits; A defaults to the whole support."""
    p = d.probs if variables is None else d.marginal(variables)
    return float(max(_entropy_bits(p), 0.0))


def conditional_entropy(d: JointDist, A: Sequence[int], B: Sequence[int]) -> float:
    """H(X_A | X_B) = H(X_A, X_B) - H(X_B)."""
    return entropy(d, tuple(A) + tuple(v for v in B if v not in A)) - entropy(d, B)


def mutual_information(d: JointDist, A: Sequence[int], B: Sequence[int]) -> float:
    """I(X_A; X_B) = H(A) + H(B) - H(A ∪ B), clamped at 0."""
    A, B = tuple(A), tuple(B)
    overlap = set(A) & set(B)
    if overlap:
        raise OverlappingSets(f"index sets overlap on {sorted(overlap)}", {"overlap": sorted(overlap)})
    value = entropy(d, A) + entropy(d, B) - entropy(d, A + B)
    return max(value, 0.0)


# --- batched kernels used by the independence search ---

def pair_mutual_information(p1: np.ndarray, p2: np.ndarray, p12: np.ndarray) -> np.ndarray:
    """I(X;Y) for many bit pairs given Pr[X=1], Pr[Y=1], Pr[X=1,Y=1]."""
    p1, p2, p12 = np.broadcast_arrays(np.asarray(p1, float), np.asarray(p2, float), np.asarray(p12, float))
    table = np.stack([1.0 - p1 - p2 + p12, p2 - p12, p1 - p12, p12], axis=-1)
    table = np.clip(table, 0.0, None)
    table = table / table.sum(axis=-1, keepdims=True)
    px = np.stack([table[..., 0] + table[..., 1], table[..., 2] + table[..., 3]], axis=-1)
    py = np.stack([table[..., 0] + table[..., 2], table[..., 1] + table[..., 3]], axis=-1)
    mi = _entropy_bits(px, axis=-1) + _entropy_bits(py, axis=-1) - _entropy_bits(table, axis=-1)
    return np.clip(mi, 0.0, None)


def table_entropy(tables: np.ndarray, ndim: int) -> np.ndarray:
    """Entropy of a batch of joint tables whose last ``ndim`` axes are the bits."""
    axes = tuple(range(tables.ndim - ndim, tables.ndim))
    return np.clip(_entropy_bits(tables, axis=axes), 0.0, None)

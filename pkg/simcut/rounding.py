"""Biased hyperplane rounding of a level-2 moment solution.

Vertex i gets bias μ_i = 2·Pr[X_i = 1] - 1 and a unit direction w̄_i (the
normalized component of v_i orthogonal to v_∅). A correlated Gaussian ξ with
Cov[ξ_i, ξ_j] = ⟨w̄_i, w̄_j⟩ is drawn and y_i = +1 iff ξ_i ≤ Φ⁻¹(f_R(μ_i)/2 + 1/2),
so Pr[y_i = +1] = f_R(μ_i)/2 + 1/2. The {0,1} label is 1 iff y_i = +1.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from simcut.errors import GramNotPSD
from simcut.gaussian import phi_inv, quadrant_probabilities
from simcut.lasserre import MomentSolution

logger = logging.getLogger("simcut.rounding")

DEFAULT_DEGENERATE_FLOOR = 1e-12
DEFAULT_GRAM_TOL = 1e-7
MARGINAL_SIGMAS = 4.0


# ================================================================
# ROUNDING FUNCTION
# ================================================================

@dataclass(frozen=True)
class RoundingFunction:
    """Odd polynomial Σ c_p x^p with nonnegative coefficients on odd powers."""

    terms: Tuple[Tuple[int, float], ...]
    name: str = "custom"

    def __post_init__(self):
        if not self.terms:
            raise ValueError("rounding function needs at least one term")
        for power, coef in self.terms:
            if power < 1 or power % 2 == 0:
                raise ValueError(f"power {power} is not a positive odd integer")
            if coef < 0:
                raise ValueError(f"coefficient {coef} is negative")
        if sum(c for _, c in self.terms) > 1.0 + 1e-12:
            raise ValueError("coefficients must sum to at most 1")

    @classmethod
    def default(cls) -> "RoundingFunction":
        return cls(((1, 0.79), (3, 0.07), (7, 0.14)), name="paper")

    @classmethod
    def identity(cls) -> "RoundingFunction":
        return cls(((1, 1.0),), name="identity")

    @classmethod
    def parse(cls, text: str) -> "RoundingFunction":
        """``paper``, ``identity`` or ``"1:0.79,3:0.07,7:0.14"``."""
        text = text.strip()
        if text == "paper":
            return cls.default()
        if text == "identity":
            return cls.identity()
        terms = []
        for chunk in text.split(","):
            power, coef = chunk.split(":")
            terms.append((int(power), float(coef)))
        return cls(tuple(sorted(terms)), name=text)

    @property
    def total(self) -> float:
        """f_R(1), snapped to 1 when the coefficients sum to 1 up to rounding."""
        s = sum(c for _, c in self.terms)
        return 1.0 if abs(s - 1.0) <= 1e-12 else s

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        val = sum(c * x ** p for p, c in self.terms)
        return np.where(np.abs(x) == 1.0, np.sign(x) * self.total, val)

    def derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        return sum(c * p * x ** (p - 1) for p, c in self.terms)

    def to_dict(self) -> dict:
        return {"name": self.name, "terms": [[p, c] for p, c in self.terms]}


DEFAULT_FR = RoundingFunction.default()


def f_R(x, fr: RoundingFunction = DEFAULT_FR):
    return fr(x)


def threshold(mu, fr: RoundingFunction = DEFAULT_FR):
    """t = Φ⁻¹(f_R(μ)/2 + 1/2); ±inf at μ = ±1 when f_R(±1) = ±1."""
    u = np.clip(fr(np.clip(mu, -1.0, 1.0)) / 2.0 + 0.5, 0.0, 1.0)
    return phi_inv(u)


# ================================================================
# INPUTS / OUTCOMES
# ================================================================

@dataclass
class RoundingInputs:
    vertices: Tuple[int, ...]
    mu: np.ndarray
    gram: np.ndarray
    seed: int = 0
    degenerate_floor: float = DEFAULT_DEGENERATE_FLOOR
    gram_tol: float = DEFAULT_GRAM_TOL
    degenerate: np.ndarray = field(init=False)
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mu = np.clip(np.asarray(self.mu, dtype=np.float64), -1.0, 1.0)
        G = np.asarray(self.gram, dtype=np.float64)
        m = len(self.vertices)
        if self.mu.shape != (m,) or G.shape != (m, m):
            raise ValueError("mu and gram must match the vertex list")
        self.degenerate = (1.0 - self.mu ** 2) < self.degenerate_floor
        G = (G + G.T) / 2.0
        G[self.degenerate, :] = 0.0
        G[:, self.degenerate] = 0.0
        self.gram = G
        if m == 0:
            self.factor = np.zeros((0, 0))
            return
        w, V = np.linalg.eigh(G)
        if w[0] < -self.gram_tol:
            raise GramNotPSD(f"direction Gram has eigenvalue {w[0]:.3e}", {"min_eig": float(w[0])})
        self.factor = V * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class RoundingOutcome:
    vertices: Tuple[int, ...]
    y: np.ndarray
    sample_seed: Tuple[int, int]

    @property
    def g01(self) -> np.ndarray:
        return (self.y == 1).astype(np.int8)


def inputs_from_moments(
    M: MomentSolution,
    seed: int = 0,
    degenerate_floor: float = DEFAULT_DEGENERATE_FLOOR,
    gram_tol: float = DEFAULT_GRAM_TOL,
) -> RoundingInputs:
    """Biases and normalized directions of every free vertex of a level ≥ 1 solution."""
    index = M.index
    vertices = index.free
    m = len(vertices)
    rows = [0] + [index.pos(1 << i) for i in range(m)]
    Z = M.Y[np.ix_(rows, rows)]
    # Basis change u_∅, u_i -> u_∅, v_i = 2u_i - u_∅.
    A = np.zeros((m + 1, m + 1))
    A[0, 0] = 1.0
    A[1:, 0] = -1.0
    A[1:, 1:] = 2.0 * np.eye(m)
    T = A @ Z @ A.T
    mu = T[1:, 0] / T[0, 0]
    W = T[1:, 1:] - np.outer(T[1:, 0], T[0, 1:]) / T[0, 0]
    d = np.clip(np.diag(W), 0.0, None)
    live = d >= degenerate_floor
    scale = np.where(live, 1.0 / np.sqrt(np.where(live, d, 1.0)), 0.0)
    G = np.clip(W * scale[:, None] * scale[None, :], -1.0, 1.0)
    np.fill_diagonal(G, np.where(live, 1.0, 0.0))
    return RoundingInputs(vertices=vertices, mu=mu, gram=G, seed=seed,
                          degenerate_floor=degenerate_floor, gram_tol=gram_tol)


# ================================================================
# SAMPLING
# ================================================================

def _sample_rng(seed: int, sample_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, sample_index]))


def round_once(inputs: RoundingInputs, fr: RoundingFunction = DEFAULT_FR, sample_index: int = 0) -> RoundingOutcome:
    m = len(inputs.vertices)
    rng = _sample_rng(inputs.seed, sample_index)
    xi = inputs.factor @ rng.standard_normal(m) if m else np.zeros(0)
    xi[inputs.degenerate] = 0.0
    t = threshold(inputs.mu, fr)
    y = np.where(xi <= t, 1, -1).astype(np.int8)
    return RoundingOutcome(vertices=inputs.vertices, y=y, sample_seed=(inputs.seed, sample_index))


def draw_samples(inputs: RoundingInputs, num_samples: int, fr: RoundingFunction = DEFAULT_FR) -> np.ndarray:
    """{0,1} labels of ``num_samples`` independent roundings, shape (num_samples, m)."""
    out = np.zeros((num_samples, len(inputs.vertices)), dtype=np.int8)
    for s in range(num_samples):
        out[s] = round_once(inputs, fr, s).g01
    return out


# ================================================================
# CLOSED FORMS
# ================================================================

def edge_cut_probability(mu_i, mu_j, rho_bar, fr: RoundingFunction = DEFAULT_FR):
    """Pr[y_i ≠ y_j] = Φ(t_i) + Φ(t_j) - 2Φ₂(t_i, t_j; ρ̄), as two off-diagonal quadrants."""
    p1, p2 = quadrant_probabilities(threshold(mu_i, fr), threshold(mu_j, fr), rho_bar)
    return p1 + p2


def sdp_edge_value(mu_i, mu_j, rho_bar):
    """q = (1 - σ)/2 with σ = μ_iμ_j + ρ̄·√(1-μ_i²)·√(1-μ_j²)."""
    mu_i, mu_j, rho_bar = (np.asarray(x, dtype=np.float64) for x in (mu_i, mu_j, rho_bar))
    sigma = mu_i * mu_j + rho_bar * np.sqrt(np.clip(1 - mu_i ** 2, 0, None)) * np.sqrt(np.clip(1 - mu_j ** 2, 0, None))
    return (1.0 - sigma) / 2.0


@dataclass
class MarginalCheck:
    mu: np.ndarray
    expected: np.ndarray
    empirical: np.ndarray
    z_scores: np.ndarray
    samples: int
    failures: int

    def to_dict(self) -> dict:
        return {
            "samples": self.samples,
            "failures": self.failures,
            "points": [
                {"mu": float(m), "expected": float(e), "empirical": float(o), "z": float(z)}
                for m, e, o, z in zip(self.mu, self.expected, self.empirical, self.z_scores)
            ],
        }


def marginal_check(
    mu_values: Sequence[float],
    samples: int = 100_000,
    seed: int = 0,
    fr: RoundingFunction = DEFAULT_FR,
    sigmas: float = MARGINAL_SIGMAS,
) -> MarginalCheck:
    """Compare empirical E[y_i] with f_R(μ_i) using independent directions."""
    mu = np.asarray(mu_values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((samples, mu.size))
    y = np.where(xi <= threshold(mu, fr)[None, :], 1.0, -1.0)
    empirical = y.mean(axis=0)
    expected = fr(mu)
    sd = np.sqrt(np.clip(1.0 - expected ** 2, 1e-300, None) / samples)
    z = np.where(1.0 - expected ** 2 > 0, (empirical - expected) / sd, 0.0)
    failures = int(np.sum(np.abs(z) > sigmas))
    return MarginalCheck(mu=mu, expected=expected, empirical=empirical, z_scores=z, samples=samples, failures=failures)

"""Variance-based preprocessing: grow S★ and split instances into low/high variance."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from simcut.errors import InvariantViolation, NoHighDegreeVertex
from simcut.instance import (
    PartialAssignment,
    SimInstance,
    active_degrees,
    active_mask,
    active_weight,
)

logger = logging.getLogger("simcut.preprocess")

EARLY_VARIABLE_FACTOR = 20.0


# --- Pydantic Models ---

class Params(BaseModel):
    """Loop parameters; the derived constants follow the published formulas."""

    epsilon: float = Field(..., gt=0.0, le=0.2, description="Approximation slack ε ∈ (0, 1/5].")
    k: int = Field(..., ge=1, description="Number of instances.")
    max_t: int = Field(6, ge=1, description="Engineering cap on t.")
    max_s_star: int = Field(16, ge=0, description="Engineering cap on |S★|.")
    gamma_override: Optional[float] = Field(None, gt=0.0, lt=1.0, description="Replace the derived γ.")
    t_override: Optional[int] = Field(None, ge=1, description="Replace the derived t.")

    @property
    def delta0(self) -> float:
        return 1.0 / (10 * self.k)

    @property
    def eps0(self) -> float:
        return self.epsilon / 2.0

    @property
    def tau(self) -> float:
        return self.epsilon

    @property
    def witness_gamma(self) -> float:
        return self.tau ** 2 * self.eps0 ** 2 * self.delta0 / 4.0

    @property
    def gamma(self) -> float:
        return self.gamma_override if self.gamma_override is not None else self.witness_gamma

    @property
    def t(self) -> int:
        if self.t_override is not None:
            return self.t_override
        g = self.gamma
        return max(1, math.ceil((2 * self.k / g) * math.log(21.0 / g)))

    @property
    def t_effective(self) -> int:
        return min(self.t, self.max_t)

    @property
    def capped(self) -> bool:
        return self.t_effective < self.t

    @property
    def early_variable_premise(self) -> bool:
        """γ(1-γ)^(-t/2) ≥ 21, the condition behind the 20× internal-weight claim."""
        g, half = self.gamma, self.t_effective // 2
        return g * (1.0 - g) ** (-half) >= EARLY_VARIABLE_FACTOR + 1.0

    @property
    def compliant(self) -> bool:
        return not self.capped and self.early_variable_premise

    def summary(self) -> Dict[str, float]:
        return {
            "epsilon": self.epsilon, "k": self.k, "delta0": self.delta0, "eps0": self.eps0,
            "tau": self.tau, "gamma": self.gamma, "t": self.t, "t_effective": self.t_effective,
            "max_s_star": self.max_s_star, "capped": self.capped, "compliant": self.compliant,
        }


@dataclass
class PreprocessResult:
    s_star: Tuple[int, ...]
    causes: Tuple[int, ...]
    counts: Tuple[int, ...]
    low: Tuple[int, ...]
    high: Tuple[int, ...]
    params: Params
    trace: List[dict] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def t_effective(self) -> int:
        return self.params.t_effective

    def brought_in_by(self, ell: int) -> List[int]:
        return [v for v, c in zip(self.s_star, self.causes) if c == ell]

    def early_vertices(self, ell: int) -> List[int]:
        """The first t/2 vertices brought into S★ because of ell."""
        return self.brought_in_by(ell)[: max(1, self.t_effective // 2)]

    def free_vertices(self, n: int) -> Tuple[int, ...]:
        inside = set(self.s_star)
        return tuple(v for v in range(n) if v not in inside)

    def to_dict(self) -> dict:
        return {
            "params": self.params.summary(),
            "s_star": [v + 1 for v in self.s_star],
            "causes": [c + 1 for c in self.causes],
            "counts": list(self.counts),
            "low": [l + 1 for l in self.low],
            "high": [h + 1 for h in self.high],
            "trace": self.trace,
            "warnings": self.warnings,
        }


# --- Loop quantities ---

def uvar(inst: SimInstance, ell: int, S: Sequence[int]) -> float:
    """Σ over ordered pairs of active edges sharing a vertex outside S (e = e' included)."""
    S = list(S)
    inside = np.zeros(inst.n, dtype=bool)
    inside[S] = True
    deg = active_degrees(inst, ell, S)
    u, v = inst.edges[:, 0], inst.edges[:, 1]
    both_out = ~inside[u] & ~inside[v]
    w = inst.weights[ell]
    return float((deg[~inside] ** 2).sum() - (w[both_out] ** 2).sum())


def lmean(inst: SimInstance, ell: int, S: Sequence[int], tau: float) -> float:
    return tau * active_weight(inst, ell, S)


def _flag(u: float, lm: float, params: Params) -> bool:
    if lm <= 0.0:
        return False
    return u >= params.delta0 * params.eps0 ** 2 * lm ** 2


def run_preprocess(inst: SimInstance, params: Params) -> PreprocessResult:
    k, t_eff = inst.k, params.t_effective
    S: List[int] = []
    causes: List[int] = []
    counts = [0] * k
    flags = [True] * k
    trace: List[dict] = []
    warnings: List[str] = []
    if params.capped:
        warnings.append(f"t capped: {params.t} -> {t_eff}")
        logger.warning(f"t capped from {params.t} to {t_eff}; guarantees are heuristic")

    for iteration in range(t_eff * k + 1):
        uv = [uvar(inst, ell, S) for ell in range(k)]
        lm = [lmean(inst, ell, S, params.tau) for ell in range(k)]
        flags = [_flag(uv[ell], lm[ell], params) for ell in range(k)]
        eligible = [ell for ell in range(k) if flags[ell] and counts[ell] < t_eff]
        step = {"iteration": iteration, "uvar": uv, "lmean": lm, "flags": list(flags), "s_size": len(S)}

        for ell in range(k):
            if flags[ell]:
                _check_witness(inst, ell, S, params)

        if not eligible:
            trace.append(step)
            break
        if len(S) >= params.max_s_star:
            warnings.append(f"|S★| reached max_s_star={params.max_s_star} with instances {[e + 1 for e in eligible]} still flagged")
            logger.warning(f"S★ cap {params.max_s_star} reached; instances {[e + 1 for e in eligible]} forced high-variance")
            trace.append(step)
            break

        ell = eligible[0]
        v, deg_v, total = _pick_vertex(inst, ell, S, params)
        S.append(v)
        causes.append(ell)
        counts[ell] += 1
        step.update({"instance": ell + 1, "vertex": v + 1, "actdeg_v": deg_v, "actdeg_total": total})
        trace.append(step)
        logger.debug(f"iter {iteration}: vertex {v + 1} enters S★ for instance {ell + 1} ({deg_v:.4g}/{total:.4g})")
    else:
        raise InvariantViolation(f"preprocess did not terminate within {t_eff * k} iterations")

    low = tuple(ell for ell in range(k) if not flags[ell])
    # flag false with count = t lands in L only
    high = tuple(ell for ell in range(k) if flags[ell])
    result = PreprocessResult(
        s_star=tuple(S), causes=tuple(causes), counts=tuple(counts),
        low=low, high=high, params=params, trace=trace, warnings=warnings,
    )
    if params.compliant:
        assert_early_variables(inst, result)
    logger.info(f"Preprocess done: |S★|={len(S)}, L={[l + 1 for l in low]}, H={[h + 1 for h in high]}")
    return result


def _pick_vertex(inst: SimInstance, ell: int, S: List[int], params: Params) -> Tuple[int, float, float]:
    deg = active_degrees(inst, ell, S)
    outside = np.ones(inst.n, dtype=bool)
    outside[S] = False
    total = float(deg[outside].sum())
    candidates = np.where(outside, deg, -np.inf)
    v = int(np.argmax(candidates))
    if deg[v] < params.gamma * total:
        raise NoHighDegreeVertex(
            f"instance {ell + 1}: best active degree {deg[v]:.3e} < γ·{total:.3e}",
            {"instance": ell + 1, "best": float(deg[v]), "total": total, "gamma": params.gamma},
        )
    return v, float(deg[v]), total


def _check_witness(inst: SimInstance, ell: int, S: List[int], params: Params) -> None:
    deg = active_degrees(inst, ell, S)
    outside = np.ones(inst.n, dtype=bool)
    outside[S] = False
    if not outside.any():
        return
    total = float(deg[outside].sum())
    if deg[outside].max() < params.witness_gamma * total:
        raise NoHighDegreeVertex(
            f"instance {ell + 1}: no vertex with active degree ≥ ¼τ²ε0²δ0·actdeg",
            {"instance": ell + 1, "best": float(deg[outside].max()), "total": total},
        )


# --- Diagnostics ---

def internal_weight(inst: SimInstance, ell: int, v: int, S: Sequence[int]) -> float:
    """Weight of ell-edges at v whose endpoints both lie in S."""
    inside = np.zeros(inst.n, dtype=bool)
    inside[list(S)] = True
    u, w = inst.edges[:, 0], inst.edges[:, 1]
    mask = ((u == v) | (w == v)) & inside[u] & inside[w]
    return float(inst.weights[ell][mask].sum())


def early_variable_report(inst: SimInstance, prep: PreprocessResult) -> List[dict]:
    """Per high-variance instance: the actdeg bound and the 20× internal weight of early vertices."""
    report = []
    g, t = prep.params.gamma, prep.t_effective
    for ell in prep.high:
        if prep.counts[ell] < t:
            continue
        deg = active_degrees(inst, ell, prep.s_star)
        outside = np.ones(inst.n, dtype=bool)
        outside[list(prep.s_star)] = False
        actdeg = float(deg[outside].sum())
        bound = 2.0 * (1.0 - g) ** t
        early = []
        for v in prep.early_vertices(ell):
            iw = internal_weight(inst, ell, v, prep.s_star)
            early.append({"vertex": v + 1, "internal_weight": iw, "ok": iw >= EARLY_VARIABLE_FACTOR * actdeg})
        report.append({
            "instance": ell + 1,
            "actdeg": actdeg,
            "bound": bound,
            "actdeg_ok": actdeg <= bound,
            "early": early,
        })
    return report


def assert_early_variables(inst: SimInstance, prep: PreprocessResult) -> List[dict]:
    report = early_variable_report(inst, prep)
    for entry in report:
        bad = [e["vertex"] for e in entry["early"] if not e["ok"]]
        if not entry["actdeg_ok"] or bad:
            raise InvariantViolation(
                f"early-variable property fails for instance {entry['instance']}",
                {"entry": entry, "vertices": bad},
            )
    return report


@dataclass
class TailEstimate:
    tail_probability: float
    expected: float
    threshold: float
    chebyshev_bound: float
    stderr: float
    samples: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def smooth_completion_tail(
    inst: SimInstance,
    ell: int,
    S: Sequence[int],
    h: PartialAssignment,
    tau: float,
    eps0: float,
    samples: int = 10_000,
    seed: int = 0,
    marginals: Optional[np.ndarray] = None,
) -> TailEstimate:
    """Monte Carlo estimate of Pr[Y < (1-ε0)E[Y]] for a τ-smooth independent completion g.

    Y is the active weight cut by h ∪ g. ``marginals`` gives Pr[g(v) = 1] per
    vertex outside S (default 1/2), each required to lie in [τ, 1-τ].
    """
    S = list(S)
    free = np.array([v for v in range(inst.n) if v not in set(S)], dtype=np.int64)
    p = np.full(free.size, 0.5) if marginals is None else np.asarray(marginals, dtype=np.float64)
    if np.any(p < tau) or np.any(p > 1.0 - tau):
        raise ValueError(f"marginals must be {tau}-smooth")

    prob1 = np.zeros(inst.n)
    fixed = h.as_dict()
    for v, b in fixed.items():
        prob1[v] = float(b)
    prob1[free] = p

    mask = active_mask(inst, S)
    u, w = inst.edges[mask, 0], inst.edges[mask, 1]
    weights = inst.weights[ell][mask]
    p_cut = prob1[u] * (1 - prob1[w]) + prob1[w] * (1 - prob1[u])
    expected = float(weights @ p_cut)

    rng = np.random.default_rng(np.random.SeedSequence([seed, ell]))
    G = np.zeros((samples, inst.n), dtype=np.int8)
    for v, b in fixed.items():
        G[:, v] = b
    G[:, free] = (rng.random((samples, free.size)) < p).astype(np.int8)
    Y = (G[:, u] != G[:, w]).astype(np.float64) @ weights

    threshold = (1.0 - eps0) * expected
    tail = float(np.mean(Y < threshold))
    var_bound = uvar(inst, ell, S)
    cheb = var_bound / (eps0 ** 2 * expected ** 2) if expected > 0 else float("inf")
    return TailEstimate(
        tail_probability=tail,
        expected=expected,
        threshold=threshold,
        chebyshev_bound=cheb,
        stderr=math.sqrt(max(tail * (1 - tail), 1e-12) / samples),
        samples=samples,
    )

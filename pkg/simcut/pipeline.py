"""End-to-end simultaneous Max-Cut: preprocess, solve per fixing, condition, round, repair.

Each partial fixing h of S★ is handled independently (and possibly on a
thread pool); results are merged in fixing order, so the report does not
depend on the thread count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from simcut.errors import (
    AllFixingsInfeasible,
    BudgetExhausted,
    GramNotPSD,
    Infeasible,
    InvariantViolation,
    MaxItersExceeded,
    NoEligibleSpecial,
    TargetsRequired,
)
from simcut.independence import IndependenceReport, make_independent
from simcut.instance import (
    DEFAULT_BRUTE_FORCE_CAP,
    Assignment,
    PartialAssignment,
    SimInstance,
    brute_force_opt,
    cut_matrix,
    cut_report,
    row_min_ratios,
)
from simcut.lasserre import build_constraints, check_feasible
from simcut.perturb import perturb
from simcut.preprocess import Params, PreprocessResult, run_preprocess
from simcut.rounding import DEFAULT_FR, RoundingFunction, draw_samples, inputs_from_moments
from simcut.sdpsolver import SolveConfig, solve

logger = logging.getLogger("simcut.pipeline")

ROUNDING_RATIO = 0.878001
BASELINE_STREAM = 0xB45E


class PipelineConfig(BaseModel):
    epsilon: float = Field(0.1, gt=0.0, le=0.2, description="Approximation slack ε ∈ (0, 1/5].")
    r_base: int = Field(2, ge=2, description="Lasserre level left after conditioning.")
    cond_edges_cap: int = Field(2, ge=0, description="Edges the conditioning step may fix.")
    num_samples: int = Field(200, ge=1, description="Rounding samples per fixing.")
    seed: int = Field(0, ge=0, description="Root of every random stream.")
    max_t: int = Field(6, ge=1, description="Engineering cap on t.")
    max_s_star: int = Field(16, ge=0, description="Engineering cap on |S★| and on exhaustive enumeration.")
    gamma_override: Optional[float] = Field(None, gt=0.0, lt=1.0, description="Replace the derived γ.")
    t_override: Optional[int] = Field(None, ge=1, description="Replace the derived t.")
    h_enumeration: Literal["exhaustive", "planted", "sampled"] = Field("exhaustive", description="Fixings of S★ to try.")
    h_samples: int = Field(64, ge=1, description="Number of fixings for sampled enumeration.")
    postprocess: Literal["exhaustive", "perturb"] = Field("exhaustive", description="Repair of h after rounding.")
    delta: Optional[float] = Field(None, gt=0.0, description="Independence target; defaults to ε².")
    enumerate_branches: bool = Field(False, description="Pick the best conditioning branch instead of sampling.")
    threads: int = Field(1, ge=1, description="Worker threads over fixings.")
    brute_force_cap: int = Field(DEFAULT_BRUTE_FORCE_CAP, ge=1, description="Largest n for default targets.")
    solver: SolveConfig = Field(default_factory=SolveConfig, description="SDP solver settings.")

    @property
    def delta_effective(self) -> float:
        return self.delta if self.delta is not None else self.epsilon ** 2

    @property
    def r_solve(self) -> int:
        return self.r_base + 2 * self.cond_edges_cap

    def params(self, k: int) -> Params:
        return Params(epsilon=self.epsilon, k=k, max_t=self.max_t, max_s_star=self.max_s_star,
                      gamma_override=self.gamma_override, t_override=self.t_override)


@dataclass
class FixingOutcome:
    index: int
    h: PartialAssignment
    status: str
    sdp: dict = field(default_factory=dict)
    independence: Optional[IndependenceReport] = None
    sample_ratios: List[float] = field(default_factory=list)
    sample_values: Optional[np.ndarray] = None
    concentration: dict = field(default_factory=dict)
    best_ratio: float = -np.inf
    best_assignment: Optional[Assignment] = None
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "h": {str(v + 1): b for v, b in self.h.as_dict().items()},
            "status": self.status,
            "sdp": self.sdp,
            "independence": None if self.independence is None else self.independence.to_dict(),
            "sample_ratios": self.sample_ratios,
            "sample_values": None if self.sample_values is None else self.sample_values.tolist(),
            "concentration": self.concentration,
            "best_ratio": None if self.best_assignment is None else self.best_ratio,
            "warnings": self.warnings,
        }


@dataclass
class RunReport:
    config: PipelineConfig
    prep: PreprocessResult
    level: int
    targets: List[float]
    targets_source: str
    fixings: List[FixingOutcome]
    assignment: Assignment
    values: np.ndarray
    min_ratio: float
    source: str
    baseline_ratio: float
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.model_dump(),
            "preprocess": self.prep.to_dict(),
            "level": self.level,
            "delta": self.config.delta_effective,
            "targets": self.targets,
            "targets_source": self.targets_source,
            "fixings": [f.to_dict() for f in self.fixings],
            "assignment": [int(b) for b in self.assignment],
            "values": [float(v) for v in self.values],
            "min_ratio": self.min_ratio,
            "source": self.source,
            "baseline_ratio": self.baseline_ratio,
            "warnings": self.warnings,
        }


# --- helpers ---

def _stream_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _all_bits(s: int) -> np.ndarray:
    """Every {0,1}^s row in lexicographic order."""
    codes = np.arange(1 << s, dtype=np.int64)
    shifts = np.arange(s - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def enumerate_fixings(
    prep: PreprocessResult,
    cfg: PipelineConfig,
    planted: Optional[Assignment] = None,
    warnings: Optional[List[str]] = None,
) -> List[PartialAssignment]:
    support = prep.s_star
    s = len(support)
    mode = cfg.h_enumeration
    warnings = warnings if warnings is not None else []
    if mode == "planted":
        if planted is None:
            raise ValueError("planted enumeration needs the planted assignment")
        return [PartialAssignment.restrict(np.asarray(planted), support)]
    m = cfg.h_samples
    if mode == "exhaustive":
        if s <= cfg.max_s_star:
            return [PartialAssignment(support, tuple(int(b) for b in row)) for row in _all_bits(s)]
        m = 1 << cfg.max_s_star
        msg = f"|S★|={s} exceeds max_s_star={cfg.max_s_star}; sampling {m} fixings instead"
        warnings.append(msg)
        logger.warning(msg)
    if s < 63 and m >= (1 << s):
        return [PartialAssignment(support, tuple(int(b) for b in row)) for row in _all_bits(s)]
    rng = np.random.default_rng(_stream_seed(cfg.seed, 0xF1))
    rows = np.unique(rng.integers(0, 2, size=(m, s), dtype=np.int8), axis=0)
    return [PartialAssignment(support, tuple(int(b) for b in row)) for row in rows]


def _assemble(inst: SimInstance, h: PartialAssignment, free: Sequence[int], G: np.ndarray) -> np.ndarray:
    X = np.zeros((G.shape[0], inst.n), dtype=np.int8)
    if h.support:
        X[:, list(h.support)] = np.asarray(h.values, dtype=np.int8)
    if len(free):
        X[:, list(free)] = G
    return X


def best_repair(inst: SimInstance, support: Sequence[int], f: Assignment) -> Assignment:
    """argmax over h′: S★ → {0,1} of min_ℓ val(h′ ∪ g)/c_ℓ; ties go to the first h′ in lexicographic order."""
    support = list(support)
    if not support:
        return f.copy()
    H = _all_bits(len(support))
    X = np.repeat(f[None, :], H.shape[0], axis=0)
    X[:, support] = H
    scores = row_min_ratios(cut_matrix(inst, X), inst.targets)
    return X[int(np.argmax(scores))].copy()


def _repair(inst: SimInstance, prep: PreprocessResult, h: PartialAssignment, free: Sequence[int],
            g: np.ndarray, f: Assignment, cfg: PipelineConfig, outcome: FixingOutcome) -> Assignment:
    s = len(prep.s_star)
    if cfg.postprocess == "exhaustive" and s <= cfg.max_s_star:
        return best_repair(inst, prep.s_star, f)
    try:
        return perturb(inst, prep, h, g, cfg.epsilon, free).h.combine(inst.n, free, g)
    except NoEligibleSpecial as e:
        if prep.params.compliant:
            raise
        msg = f"perturb skipped: {e}"
        if msg not in outcome.warnings:
            outcome.warnings.append(msg)
            logger.warning(msg)
        return f


# --- per fixing ---

def run_fixing(
    inst: SimInstance,
    prep: PreprocessResult,
    h: PartialAssignment,
    index: int,
    cfg: PipelineConfig,
    level: int,
    fr: RoundingFunction = DEFAULT_FR,
) -> FixingOutcome:
    outcome = FixingOutcome(index=index, h=h, status="solved")
    free = prep.free_vertices(inst.n)
    seed = _stream_seed(cfg.seed, index)

    C = build_constraints(inst, prep, h, cfg.epsilon, level)
    try:
        M = solve(C, config=cfg.solver)
    except Infeasible as e:
        outcome.status = "infeasible"
        outcome.sdp = {"constraints": C.summary(), "error": e.to_dict()}
        logger.warning(f"fixing {index}: infeasible ({e})")
        return outcome
    except MaxItersExceeded as e:
        outcome.status = "solver_failed"
        outcome.sdp = {"constraints": C.summary(), "error": e.to_dict()}
        outcome.warnings.append(f"solver failed: {e}")
        logger.warning(f"fixing {index}: solver failed ({e})")
        return outcome
    outcome.sdp = {"constraints": C.summary(), "feasibility": check_feasible(M, C).to_dict()}

    try:
        M, report = make_independent(M, inst, prep, cfg.delta_effective, seed=seed,
                                     enumerate_branches=cfg.enumerate_branches)
    except BudgetExhausted as e:
        M, report = e.solution, e.report
        outcome.warnings.append(f"conditioning stopped early: {e}")
        logger.warning(f"fixing {index}: {e}")
    outcome.independence = report

    try:
        inputs = inputs_from_moments(M, seed=seed)
    except GramNotPSD as e:
        outcome.status = "gram_not_psd"
        outcome.warnings.append(str(e))
        logger.warning(f"fixing {index}: {e}")
        return outcome

    G = draw_samples(inputs, cfg.num_samples, fr)
    X = _assemble(inst, h, free, G)
    raw_values = cut_matrix(inst, X)
    outcome.concentration = _concentration(inst, prep, raw_values, cfg.epsilon)

    repaired = np.stack([_repair(inst, prep, h, free, G[s], X[s], cfg, outcome) for s in range(X.shape[0])])
    values = cut_matrix(inst, repaired)
    scores = row_min_ratios(values, inst.targets)
    best = int(np.argmax(scores))
    outcome.sample_values = values
    outcome.sample_ratios = [float(x) for x in scores]
    outcome.best_ratio = float(scores[best])
    outcome.best_assignment = repaired[best]
    logger.info(f"fixing {index}: best ratio {outcome.best_ratio:.4f} over {cfg.num_samples} samples")
    return outcome


def _concentration(inst: SimInstance, prep: PreprocessResult, values: np.ndarray, epsilon: float) -> dict:
    """Fraction of samples with val(h ∪ g, E_ℓ) ≥ (0.878001 - 4ε)·c_ℓ for each low-variance ℓ."""
    out = {}
    for ell in prep.low:
        floor = (ROUNDING_RATIO - 4.0 * epsilon) * float(inst.targets[ell])
        out[str(ell + 1)] = float(np.mean(values[:, ell] >= floor - 1e-12))
    return out


def random_baseline(inst: SimInstance, num_samples: int, seed: int) -> Assignment:
    rng = np.random.default_rng(_stream_seed(seed, BASELINE_STREAM))
    X = rng.integers(0, 2, size=(num_samples, inst.n), dtype=np.int8)
    scores = row_min_ratios(cut_matrix(inst, X), inst.targets)
    return X[int(np.argmax(scores))]


# --- main entry ---

def resolve_targets(inst: SimInstance, cap: int = DEFAULT_BRUTE_FORCE_CAP):
    if inst.targets is not None:
        return inst, "given"
    if inst.n > cap:
        raise TargetsRequired(f"targets are required when n={inst.n} exceeds the brute-force cap {cap}",
                              {"n": inst.n, "cap": cap})
    _, report = brute_force_opt(inst, cap)
    logger.info(f"Targets from brute force: {report.per_instance.tolist()}")
    return inst.with_targets(report.per_instance), "brute_force"


def run(
    inst: SimInstance,
    cfg: Optional[PipelineConfig] = None,
    planted: Optional[Assignment] = None,
    fr: RoundingFunction = DEFAULT_FR,
) -> RunReport:
    """Best simultaneous cut found over every enumerated fixing; deterministic given cfg.seed."""
    cfg = cfg or PipelineConfig()
    inst, targets_source = resolve_targets(inst, cfg.brute_force_cap)
    prep = run_preprocess(inst, cfg.params(inst.k))
    warnings = list(prep.warnings)

    free = prep.free_vertices(inst.n)
    level = min(cfg.r_solve, max(2, len(free)))
    fixings = enumerate_fixings(prep, cfg, planted, warnings)
    logger.info(f"Solving {len(fixings)} fixing(s) at level {level} (|F|={len(free)})")

    if cfg.threads > 1 and len(fixings) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = list(pool.map(lambda ih: run_fixing(inst, prep, ih[1], ih[0], cfg, level, fr), enumerate(fixings)))
    else:
        outcomes = [run_fixing(inst, prep, h, i, cfg, level, fr) for i, h in enumerate(fixings)]
    for o in outcomes:
        warnings.extend(f"fixing {o.index}: {w}" for w in o.warnings)

    solved = [o for o in outcomes if o.best_assignment is not None]
    if not solved:
        raise AllFixingsInfeasible(
            f"none of the {len(outcomes)} fixings produced a rounded solution",
            {"fixings": [o.to_dict() for o in outcomes]},
        )
    winner = max(solved, key=lambda o: (o.best_ratio, -o.index))
    chosen, source = winner.best_assignment, "rounding"

    baseline = random_baseline(inst, cfg.num_samples, cfg.seed)
    baseline_ratio = float(row_min_ratios(cut_matrix(inst, baseline), inst.targets)[0])
    if baseline_ratio > winner.best_ratio:
        chosen, source = baseline, "baseline"
        warnings.append(f"random baseline ({baseline_ratio:.4f}) beat the rounded solutions ({winner.best_ratio:.4f})")

    final = cut_report(inst, chosen)
    if abs(final.min_ratio - max(winner.best_ratio, baseline_ratio)) > 1e-9:
        raise InvariantViolation("reported ratio does not match the chosen assignment",
                                 {"recomputed": final.min_ratio})
    logger.info(f"Best min ratio {final.min_ratio:.4f} from {source}")
    return RunReport(
        config=cfg, prep=prep, level=level, targets=[float(c) for c in inst.targets],
        targets_source=targets_source, fixings=outcomes, assignment=chosen, values=final.per_instance,
        min_ratio=final.min_ratio, source=source, baseline_ratio=baseline_ratio, warnings=warnings,
    )

"""Interval branch-and-bound certificate for the per-edge rounding ratio.

A configuration is (μ_i, μ_j, ρ̄): the two biases and the correlation of the
normalized directions. The rounding cuts the edge with probability
p = Pr[ξ_i ≤ t_i, ξ_j > t_j] + Pr[ξ_i > t_i, ξ_j ≤ t_j] and the SDP counts
q = (1 - σ)/2 with σ = μ_iμ_j + ρ̄·√(1-μ_i²)·√(1-μ_j²). ``certify`` splits the
configuration cube until every box is either invalid, has p ≥ α·q on all of
it, or has q below ``q_floor``. A box is proved when either the corner
enclosure or the mean-value form of p - α·q stays nonnegative on it; both rest
on the certified Φ and Φ₂ enclosures of simcut.gaussian.
"""

import heapq
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import ndtri

from simcut.errors import DomainError, ProverBudgetExhausted
from simcut.gaussian import PHI_PAD, certified_binormal, interval_phi
from simcut.interval import Interval, down, up
from simcut.rounding import DEFAULT_FR, RoundingFunction

logger = logging.getLogger("simcut.prover")

PROVED = "proved"
EXCLUDED_INVALID = "excluded_invalid"
EXCLUDED_CORNER = "excluded_corner"
VERDICTS = (PROVED, EXCLUDED_INVALID, EXCLUDED_CORNER)
QUADRANTS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
FRONTIER_DUMP = 1000


class ProverConfig(BaseModel):
    alpha: float = Field(0.8780, gt=0.0, lt=1.0, description="Target ratio α.")
    q_floor: float = Field(1e-4, ge=0.0, description="Boxes with upper(q) below this are excluded.")
    max_boxes: int = Field(5_000_000, ge=1, description="Budget on processed boxes.")
    max_depth: int = Field(60, ge=1, description="Maximum subdivision depth.")
    batch_size: int = Field(4096, ge=1, description="Boxes evaluated per vectorized batch.")
    use_symmetry: bool = Field(True, description="Restrict μ_i to [0, 1] using (μ_i, μ_j) -> (-μ_i, -μ_j).")
    phi_pad: float = Field(PHI_PAD, gt=0.0, description="Absolute error budget of Φ and Φ⁻¹ evaluations.")
    mean_value: bool = Field(True, description="Intersect the corner enclosure with the mean-value form.")
    refute_tol: float = Field(1e-9, ge=0.0, description="A certified centre margin below -tol counts as a counterexample.")
    threads: int = Field(1, ge=1, description="Thread pool size over batch chunks.")


# ================================================================
# ENCLOSURES
# ================================================================

def interval_phi_inv(u: Interval, pad: float = PHI_PAD) -> Interval:
    """Φ⁻¹ over u ⊆ [0, 1]; 0 and 1 map to ∓inf."""
    if np.any(u.lo < 0.0) or np.any(u.hi > 1.0) or np.any(np.isnan(u.lo)) or np.any(np.isnan(u.hi)):
        raise DomainError("Φ⁻¹ needs arguments in [0, 1]", {"lo": np.min(u.lo).item(), "hi": np.max(u.hi).item()})
    lo = ndtri(np.clip(u.lo - pad, 0.0, 1.0))
    hi = ndtri(np.clip(u.hi + pad, 0.0, 1.0))
    return Interval(down(lo), up(hi))


def interval_binormal(h: Interval, k: Interval, rho: Interval, pad: float = PHI_PAD) -> Interval:
    """Φ₂ is nondecreasing in h, k and ρ, so certified values at the extreme corners bound it."""
    lo = certified_binormal(h.lo, k.lo, rho.lo, pad).lo
    hi = certified_binormal(h.hi, k.hi, rho.hi, pad).hi
    return Interval(lo, hi)


def interval_f_r(mu: Interval, fr: RoundingFunction, pad: float = PHI_PAD) -> Interval:
    lo, hi = fr(mu.lo), fr(mu.hi)
    return Interval(down(lo - pad), up(hi + pad))


def interval_f_r_prime(mu: Interval, fr: RoundingFunction) -> Interval:
    """f_R'(μ) = Σ p·c_p·μ^(p-1)."""
    out = Interval.point(np.zeros_like(mu.lo))
    for power, coef in fr.terms:
        c = Interval.point(coef) * power
        out = out + (c if power == 1 else c * mu.power(power - 1))
    return out


def interval_threshold(mu: Interval, fr: RoundingFunction, pad: float = PHI_PAD) -> Interval:
    f = interval_f_r(mu, fr, pad)
    u = (f * 0.5 + 0.5).clip(0.0, 1.0)
    return interval_phi_inv(u, pad)


def interval_sigma(mu_i: Interval, mu_j: Interval, rho: Interval) -> Interval:
    s_i = (1.0 - mu_i.square()).sqrt()
    s_j = (1.0 - mu_j.square()).sqrt()
    return (mu_i * mu_j + rho * s_i * s_j).clip(-1.0, 1.0)


@dataclass
class BoxEnclosure:
    p: Interval
    q: Interval
    invalid: np.ndarray
    valid: np.ndarray


def enclose_pq(mu_i: Interval, mu_j: Interval, rho: Interval,
               fr: RoundingFunction = DEFAULT_FR, config: Optional[ProverConfig] = None) -> BoxEnclosure:
    """Enclosures of p and q on a batch of boxes.

    ``invalid`` marks boxes with no valid point; ``valid`` marks boxes whose
    every point is valid.
    """
    config = config or ProverConfig()
    t_i = interval_threshold(mu_i, fr, config.phi_pad)
    t_j = interval_threshold(mu_j, fr, config.phi_pad)
    neg_rho = -rho
    # Pr[ξ_i ≤ t_i, ξ_j > t_j] = Φ₂(t_i, -t_j; -ρ̄): up in t_i, down in t_j and ρ̄.
    p1 = interval_binormal(t_i, -t_j, neg_rho, config.phi_pad)
    # Pr[ξ_i > t_i, ξ_j ≤ t_j] = Φ₂(-t_i, t_j; -ρ̄).
    p2 = interval_binormal(-t_i, t_j, neg_rho, config.phi_pad)
    p = (p1 + p2).clip(0.0, 1.0)

    sigma = interval_sigma(mu_i, mu_j, rho)
    q = ((1.0 - sigma) * 0.5).clip(0.0, 1.0)

    invalid = np.zeros(np.shape(mu_i.lo), dtype=bool)
    valid = np.ones(np.shape(mu_i.lo), dtype=bool)
    for a, b in QUADRANTS:
        quad = 1.0 + a * mu_i + b * mu_j + (a * b) * sigma
        invalid |= quad.hi < 0.0
        valid &= quad.lo >= 0.0
    return BoxEnclosure(p=p, q=q, invalid=invalid, valid=valid)


# --- mean-value form ---

def _reciprocal(x: Interval) -> Interval:
    """1/x for x ≥ 0, unbounded where x reaches 0."""
    with np.errstate(divide="ignore"):
        return Interval(np.clip(down(1.0 / x.hi), 0.0, None), up(1.0 / x.lo))


def _total_phi(z: Interval, pad: float) -> Interval:
    """Φ over z, widened to [0, 1] where z is undefined."""
    return interval_phi(Interval(np.where(np.isnan(z.lo), -np.inf, z.lo), np.where(np.isnan(z.hi), np.inf, z.hi)), pad)


def _density(t_i: Interval, t_j: Interval, rho: Interval, inv_sigma: Interval) -> Interval:
    """φ₂(t_i, t_j; ρ̄) = exp(-(t_i² - 2ρ̄t_it_j + t_j²)/(2σ²))/(2πσ) with σ² = 1 - ρ̄²."""
    quad = (t_i.square() - rho * t_i * t_j * 2.0 + t_j.square()) * inv_sigma.square() * 0.5
    e_lo = np.clip(np.where(np.isnan(quad.lo), 0.0, quad.lo), 0.0, None)
    e_hi = np.maximum(np.where(np.isnan(quad.hi), np.inf, quad.hi), e_lo)
    return (-Interval(e_lo, e_hi)).exp() * inv_sigma / Interval(down(2.0 * np.pi, 1), up(2.0 * np.pi, 1))


def mean_value_margin(mu_i: Interval, mu_j: Interval, rho: Interval, centre: np.ndarray,
                      centre_margin: Interval, fr: RoundingFunction, config: ProverConfig) -> np.ndarray:
    """Lower bound of m = p - α·q from m(box) ⊆ m(c) + Σ_x ∂m/∂x(box)·(box_x - c_x).

    ∂p/∂μ_i = f_R'(μ_i)·(1/2 - Φ((t_j - ρ̄t_i)/σ)), ∂p/∂ρ̄ = -2φ₂(t_i, t_j; ρ̄),
    ∂q/∂μ_i = (ρ̄μ_i·s_j/s_i - μ_j)/2 and ∂q/∂ρ̄ = -s_is_j/2. Derivatives that
    blow up at μ = ±1 or ρ̄ = ±1 make the bound -inf there.
    """
    alpha = config.alpha
    with np.errstate(invalid="ignore", over="ignore"):
        t_i = interval_threshold(mu_i, fr, config.phi_pad)
        t_j = interval_threshold(mu_j, fr, config.phi_pad)
        inv_sigma = _reciprocal(((1.0 - rho) * (1.0 + rho)).sqrt())
        s_i = (1.0 - mu_i.square()).sqrt()
        s_j = (1.0 - mu_j.square()).sqrt()

        cond_ij = _total_phi((t_j - rho * t_i) * inv_sigma, config.phi_pad)
        cond_ji = _total_phi((t_i - rho * t_j) * inv_sigma, config.phi_pad)
        d_mu_i = interval_f_r_prime(mu_i, fr) * (0.5 - cond_ij) - (rho * mu_i * s_j * _reciprocal(s_i) - mu_j) * (0.5 * alpha)
        d_mu_j = interval_f_r_prime(mu_j, fr) * (0.5 - cond_ji) - (rho * mu_j * s_i * _reciprocal(s_j) - mu_i) * (0.5 * alpha)
        d_rho = s_i * s_j * (0.5 * alpha) - _density(t_i, t_j, rho, inv_sigma) * 2.0

        bound = (centre_margin
                 + d_mu_i * (mu_i - centre[:, 0])
                 + d_mu_j * (mu_j - centre[:, 1])
                 + d_rho * (rho - centre[:, 2]))
    return np.where(np.isnan(bound.lo), -np.inf, bound.lo)


@dataclass
class MarginEnclosure:
    corner: np.ndarray
    mean_value: np.ndarray
    box: BoxEnclosure
    centre: BoxEnclosure
    centre_margin: Interval

    @property
    def lower(self) -> np.ndarray:
        return np.fmax(self.corner, self.mean_value)


def enclose_margin(lo: np.ndarray, hi: np.ndarray, fr: RoundingFunction = DEFAULT_FR,
                   config: Optional[ProverConfig] = None) -> MarginEnclosure:
    """Corner and mean-value lower bounds of p - α·q on boxes given as (n, 3) corner arrays."""
    config = config or ProverConfig()
    mu_i, mu_j, rho = (Interval(lo[:, d], hi[:, d]) for d in range(3))
    box = enclose_pq(mu_i, mu_j, rho, fr, config)
    corner = (box.p - config.alpha * box.q).lo

    c = 0.5 * (lo + hi)
    centre = enclose_pq(Interval.point(c[:, 0]), Interval.point(c[:, 1]), Interval.point(c[:, 2]), fr, config)
    centre_margin = centre.p - config.alpha * centre.q
    if config.mean_value:
        mean_value = mean_value_margin(mu_i, mu_j, rho, c, centre_margin, fr, config)
    else:
        mean_value = np.full(lo.shape[0], -np.inf)
    return MarginEnclosure(corner=corner, mean_value=mean_value, box=box, centre=centre, centre_margin=centre_margin)


# ================================================================
# CERTIFICATE
# ================================================================

@dataclass
class Certificate:
    target_alpha: float
    q_floor: float
    status: str
    domain: Tuple[Tuple[float, float], ...]
    rounding: dict
    symmetry: Optional[str]
    leaves_lo: np.ndarray
    leaves_hi: np.ndarray
    leaves_verdict: np.ndarray
    leaves_depth: np.ndarray
    counterexamples: List[dict] = field(default_factory=list)
    stats: Dict[str, float] = field(default_factory=dict)

    @property
    def proved(self) -> bool:
        return self.status == "proved"

    def count(self, verdict: str) -> int:
        return int(np.sum(self.leaves_verdict == VERDICTS.index(verdict)))

    def covered_volume(self) -> float:
        return float(np.prod(self.leaves_hi - self.leaves_lo, axis=1).sum())

    def domain_volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.domain]))

    def leaves(self, verdict: Optional[str] = None) -> List[dict]:
        rows = []
        for lo, hi, v, d in zip(self.leaves_lo, self.leaves_hi, self.leaves_verdict, self.leaves_depth):
            if verdict is not None and VERDICTS[v] != verdict:
                continue
            rows.append({"mu_i": [lo[0], hi[0]], "mu_j": [lo[1], hi[1]], "rho": [lo[2], hi[2]],
                         "verdict": VERDICTS[v], "depth": int(d)})
        return rows

    def to_dict(self, include_leaves: bool = False) -> dict:
        out = {
            "status": self.status,
            "target_alpha": self.target_alpha,
            "q_floor": self.q_floor,
            "domain": [list(d) for d in self.domain],
            "symmetry": self.symmetry,
            "rounding": self.rounding,
            "verdicts": {v: self.count(v) for v in VERDICTS},
            "excluded_corner": self.leaves(EXCLUDED_CORNER),
            "counterexamples": self.counterexamples,
            "stats": self.stats,
        }
        if include_leaves:
            out["leaves"] = self.leaves()
        return out


def _split(lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Halve every box along its widest dimension."""
    axis = np.argmax(hi - lo, axis=1)
    rows = np.arange(lo.shape[0])
    mid = 0.5 * (lo[rows, axis] + hi[rows, axis])
    lo_a, hi_a = lo.copy(), hi.copy()
    hi_a[rows, axis] = mid
    lo_b, hi_b = lo.copy(), hi.copy()
    lo_b[rows, axis] = mid
    return lo_a, hi_a, lo_b, hi_b


def _evaluate(lo: np.ndarray, hi: np.ndarray, fr: RoundingFunction, config: ProverConfig):
    enc = enclose_margin(lo, hi, fr, config)
    centre = enc.centre

    verdict = np.full(lo.shape[0], -1, dtype=np.int8)
    verdict[enc.box.invalid] = VERDICTS.index(EXCLUDED_INVALID)
    open_ = verdict < 0
    verdict[open_ & (enc.lower >= 0.0)] = VERDICTS.index(PROVED)
    open_ = verdict < 0
    verdict[open_ & (enc.box.q.hi < config.q_floor)] = VERDICTS.index(EXCLUDED_CORNER)
    # Refutation needs a certified valid centre with certified q ≥ q_floor and margin < -tol.
    counter = ((verdict < 0) & centre.valid & (centre.q.lo >= config.q_floor)
               & (enc.centre_margin.hi < -config.refute_tol))
    key = np.where(centre.invalid, np.inf, enc.centre_margin.mid)
    return verdict, counter, key, centre.p.mid, centre.q.mid, enc.centre_margin.hi


def certify(config: Optional[ProverConfig] = None, fr: RoundingFunction = DEFAULT_FR) -> Certificate:
    """Prove p ≥ α·q on every valid configuration with q ≥ q_floor, or find a counterexample.

    Raises ProverBudgetExhausted with the unresolved frontier when the box or
    depth budget runs out first.
    """
    config = config or ProverConfig()
    mu_i_range = (0.0, 1.0) if config.use_symmetry else (-1.0, 1.0)
    domain = (mu_i_range, (-1.0, 1.0), (-1.0, 1.0))
    logger.info(f"Certifying α={config.alpha} (q_floor={config.q_floor}, f_R={fr.name}) on {list(domain)}")

    heap: List[Tuple[float, int, int, Tuple[float, ...]]] = []
    seq = 0
    heapq.heappush(heap, (0.0, seq, 0, tuple(d[0] for d in domain) + tuple(d[1] for d in domain)))
    done_lo, done_hi, done_v, done_d = [], [], [], []
    undecided: List[dict] = []
    counterexamples: List[dict] = []
    processed = 0
    max_depth_seen = 0
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None

    try:
        while heap and not counterexamples:
            if processed >= config.max_boxes:
                break
            take = min(config.batch_size, len(heap), config.max_boxes - processed)
            items = [heapq.heappop(heap) for _ in range(take)]
            boxes = np.array([it[3] for it in items])
            depths = np.array([it[2] for it in items])
            lo, hi = boxes[:, :3], boxes[:, 3:]
            if pool is None:
                verdict, counter, key, p_c, q_c, m_hi = _evaluate(lo, hi, fr, config)
            else:
                chunks = np.array_split(np.arange(take), config.threads)
                parts = list(pool.map(lambda ix: _evaluate(lo[ix], hi[ix], fr, config), chunks))
                verdict, counter, key, p_c, q_c, m_hi = (np.concatenate([part[i] for part in parts]) for i in range(6))
            processed += take
            max_depth_seen = max(max_depth_seen, int(depths.max()))

            for i in np.flatnonzero(counter):
                c = 0.5 * (lo[i] + hi[i])
                counterexamples.append({
                    "mu_i": float(c[0]), "mu_j": float(c[1]), "rho": float(c[2]),
                    "p": float(p_c[i]), "q": float(q_c[i]), "ratio": float(p_c[i] / q_c[i]),
                    "margin_upper": float(m_hi[i]),
                    "box": {"mu_i": [lo[i, 0], hi[i, 0]], "mu_j": [lo[i, 1], hi[i, 1]], "rho": [lo[i, 2], hi[i, 2]]},
                })

            closed = verdict >= 0
            done_lo.append(lo[closed])
            done_hi.append(hi[closed])
            done_v.append(verdict[closed])
            done_d.append(depths[closed])

            open_ = ~closed & ~counter
            too_deep = open_ & (depths >= config.max_depth)
            for i in np.flatnonzero(too_deep):
                undecided.append({"box": boxes[i].tolist(), "depth": int(depths[i])})
            grow = np.flatnonzero(open_ & ~too_deep)
            if grow.size:
                lo_a, hi_a, lo_b, hi_b = _split(lo[grow], hi[grow])
                for r, i in enumerate(grow):
                    for clo, chi in ((lo_a[r], hi_a[r]), (lo_b[r], hi_b[r])):
                        seq += 1
                        heapq.heappush(heap, (float(key[i]), seq, int(depths[i]) + 1, tuple(clo) + tuple(chi)))
            logger.debug(f"processed {processed} boxes, frontier {len(heap)}, depth {max_depth_seen}")
    finally:
        if pool is not None:
            pool.shutdown()

    stats = {
        "boxes": processed,
        "max_depth": max_depth_seen,
        "frontier": len(heap),
        "undecided": len(undecided),
    }
    leaves = dict(
        leaves_lo=np.concatenate(done_lo) if done_lo else np.zeros((0, 3)),
        leaves_hi=np.concatenate(done_hi) if done_hi else np.zeros((0, 3)),
        leaves_verdict=np.concatenate(done_v) if done_v else np.zeros(0, dtype=np.int8),
        leaves_depth=np.concatenate(done_d) if done_d else np.zeros(0, dtype=np.int64),
    )
    common = dict(
        target_alpha=config.alpha, q_floor=config.q_floor, domain=domain, rounding=fr.to_dict(),
        symmetry="(mu_i, mu_j) -> (-mu_i, -mu_j)" if config.use_symmetry else None, stats=stats, **leaves,
    )

    if counterexamples:
        logger.info(f"Refuted α={config.alpha}: {len(counterexamples)} counterexample(s) after {processed} boxes")
        return Certificate(status="refuted", counterexamples=counterexamples, **common)
    if heap or undecided:
        frontier = [{"box": list(it[3]), "depth": it[2]} for it in heapq.nsmallest(FRONTIER_DUMP, heap)]
        raise ProverBudgetExhausted(
            f"prover stopped with {len(heap)} open and {len(undecided)} undecided boxes after {processed} boxes",
            {"stats": stats, "frontier": frontier, "undecided": undecided[:FRONTIER_DUMP]},
        )
    logger.info(f"Proved α={config.alpha} with {processed} boxes (max depth {max_depth_seen})")
    return Certificate(status="proved", **common)

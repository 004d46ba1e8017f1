"""Standard normal CDF, quantile and bivariate orthant probability (vectorized).

The floating-point kernels serve the sampler and the oracles. The certified
section encloses Φ and Φ₂ for the prover: Φ₂ goes through Owen's T, which is
summed from its Poisson-tail series in interval arithmetic with an explicit
truncation bound.
"""

import numpy as np
from scipy.special import ndtr, ndtri, owens_t

from simcut.interval import Interval, down, up

RHO_EDGE = 1e-9

# ndtr is trusted to this absolute error.
PHI_PAD = 1e-15
# Beyond this |h|, T(h, a) ≤ exp(-h²/2)/4 is below 1e-16.
OWEN_H_CUT = 8.5
OWEN_MAX_TERMS = 160
OWEN_TAIL = 1e-18


def phi(x) -> np.ndarray:
    """Φ(x); ±inf map to 1 and 0."""
    return ndtr(np.asarray(x, dtype=np.float64))


def phi_inv(u) -> np.ndarray:
    """Φ⁻¹(u) on [0, 1]; 0 and 1 map to ∓inf."""
    return ndtri(np.asarray(u, dtype=np.float64))


def binormal_cdf(h, k, rho) -> np.ndarray:
    """Φ₂(h, k; ρ) = Pr[X ≤ h, Y ≤ k] for a standard bivariate normal with correlation ρ.

    Uses Owen's T decomposition, with the comonotone / antimonotone limits for
    |ρ| ≥ 1 - RHO_EDGE and exact branches for zero or infinite arguments.
    """
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, dtype=np.float64), np.asarray(k, dtype=np.float64), np.asarray(rho, dtype=np.float64)
    )
    out = np.empty(h.shape, dtype=np.float64)
    ph, pk = ndtr(h), ndtr(k)

    upper = rho >= 1.0 - RHO_EDGE
    lower = rho <= -1.0 + RHO_EDGE
    infinite = ~np.isfinite(h) | ~np.isfinite(k)
    out[upper] = np.minimum(ph, pk)[upper]
    out[lower] = np.maximum(0.0, ph + pk - 1.0)[lower]
    # Φ₂ with an infinite argument reduces to a marginal (or 0).
    inf_mask = infinite & ~upper & ~lower
    out[inf_mask] = np.where((h == -np.inf) | (k == -np.inf), 0.0, np.where(h == np.inf, pk, ph))[inf_mask]

    regular = ~(upper | lower | infinite)
    if not regular.any():
        return out
    hr, kr, rr = h[regular], k[regular], rho[regular]
    den = np.sqrt((1.0 - rr) * (1.0 + rr))
    both_zero = (hr == 0.0) & (kr == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a_h = (kr - rr * hr) / (hr * den)
        a_k = (hr - rr * kr) / (kr * den)
        t_h = np.where(hr == 0.0, np.arctan(a_h) / (2.0 * np.pi), owens_t(hr, a_h))
        t_k = np.where(kr == 0.0, np.arctan(a_k) / (2.0 * np.pi), owens_t(kr, a_k))
    beta = np.where((hr * kr > 0.0) | ((hr * kr == 0.0) & (hr + kr >= 0.0)), 0.0, 0.5)
    val = 0.5 * (ndtr(hr) + ndtr(kr)) - t_h - t_k - beta
    val = np.where(both_zero, 0.25 + np.arcsin(rr) / (2.0 * np.pi), val)
    out[regular] = np.clip(val, 0.0, np.minimum(ndtr(hr), ndtr(kr)))
    return out


def quadrant_probabilities(t_i, t_j, rho):
    """(Pr[ξ_i ≤ t_i, ξ_j > t_j], Pr[ξ_i > t_i, ξ_j ≤ t_j]) for correlation ρ."""
    t_i, t_j, rho = (np.asarray(x, dtype=np.float64) for x in (t_i, t_j, rho))
    return binormal_cdf(t_i, -t_j, -rho), binormal_cdf(-t_i, t_j, -rho)


# ================================================================
# CERTIFIED ENCLOSURES
# ================================================================

def interval_phi(t: Interval, pad: float = PHI_PAD) -> Interval:
    """Φ over an interval; exact at 0 and ±inf, padded elsewhere."""
    lo_val, hi_val = ndtr(t.lo), ndtr(t.hi)
    exact_lo = np.isinf(t.lo) | (t.lo == 0.0)
    exact_hi = np.isinf(t.hi) | (t.hi == 0.0)
    lo = np.where(exact_lo, lo_val, down(lo_val - pad))
    hi = np.where(exact_hi, hi_val, up(hi_val + pad))
    return Interval(np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0))


def _two_pi() -> Interval:
    return Interval(down(2.0 * np.pi, 1), up(2.0 * np.pi, 1))


def _owens_tail(lam: Interval, weight: Interval, partial: Interval, n: int) -> np.ndarray:
    """Bound on Σ_{j≥n} Q_j/(2j+1), with Q_j = Pr[Poisson(λ) > j] and Q_{j+1} ≤ Q_j·λ/(n+2)."""
    q = (1.0 - weight * partial).clip(0.0, 1.0).hi
    r = up(lam.hi / (n + 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = up(q / down((2 * n + 1) * down(1.0 - r)))
    return np.where(r < 1.0, bound, np.inf)


def _owens_t_series(h: np.ndarray, a: np.ndarray) -> Interval:
    """T(h, a) for 0 ≤ a ≤ 1 and 0 ≤ h ≤ OWEN_H_CUT.

    T = (arctan a - Σ_j (-1)^j Q_j a^(2j+1)/(2j+1)) / 2π, where Q_j is the
    Poisson(h²/2) upper tail beyond j. Entries leave the loop once their
    truncation bound drops below OWEN_TAIL.
    """
    out_lo = np.empty(h.shape)
    out_hi = np.empty(h.shape)
    rows = np.arange(h.shape[0])
    lam = Interval.point(h).square() * 0.5
    weight = (-lam).exp()
    a_int = Interval.point(a)
    a2 = a_int.square()
    power = a_int
    term = Interval.point(np.ones_like(h))
    partial = term
    total = Interval.point(np.zeros_like(h))
    for j in range(OWEN_MAX_TERMS):
        q = (1.0 - weight * partial).clip(0.0, 1.0)
        piece = q * power / (2 * j + 1)
        total = total - piece if j % 2 else total + piece
        term = term * lam / (j + 1)
        partial = partial + term
        power = power * a2
        last = j == OWEN_MAX_TERMS - 1
        if (j + 1) % 8 and not last:
            continue
        tail = _owens_tail(lam, weight, partial, j + 1)
        done = (tail <= OWEN_TAIL) | last
        if not done.any():
            continue
        value = (a_int[done].arctan() - total[done]).pad(tail[done]) / _two_pi()
        out_lo[rows[done]], out_hi[rows[done]] = value.lo, value.hi
        keep = ~done
        if not keep.any():
            break
        rows = rows[keep]
        lam, weight, a_int, a2, power, term, partial, total = (
            x[keep] for x in (lam, weight, a_int, a2, power, term, partial, total)
        )
    return Interval(out_lo, out_hi)


def _owens_t_nonneg(h: np.ndarray, a: np.ndarray) -> Interval:
    """T(h, a) for points h ≥ 0 and a ≥ 0 (a may be +inf)."""
    lo = np.zeros(h.shape)
    hi = np.zeros(h.shape)

    far = h > OWEN_H_CUT
    if far.any():
        hi[far] = ((Interval.point(h[far]).square() * -0.5).exp() * 0.25).hi

    near = ~far & (a <= 1.0)
    if near.any():
        t = _owens_t_series(h[near], a[near])
        lo[near], hi[near] = t.lo, t.hi

    wide = ~far & (a > 1.0)
    if wide.any():
        # T(h, a) = Φ(h)/2 + Φ(ah)/2 - Φ(h)Φ(ah) - T(ah, 1/a) for h ≥ 0, a > 1
        hw, aw = h[wide], a[wide]
        ah = (Interval.point(hw) * aw).clip(0.0, np.inf)
        inv = (Interval.point(np.ones_like(aw)) / Interval.point(aw)).clip(0.0, 1.0)
        reflected = Interval(_owens_t_nonneg(ah.hi, inv.lo).lo, _owens_t_nonneg(ah.lo, inv.hi).hi)
        ph, pah = interval_phi(Interval.point(hw)), interval_phi(ah)
        t = ph * 0.5 + pah * 0.5 - ph * pah - reflected
        lo[wide], hi[wide] = t.lo, t.hi

    return Interval(np.clip(lo, 0.0, None), np.minimum(hi, 0.25))


def _owens_t_signed(h: np.ndarray, a: np.ndarray) -> Interval:
    t = _owens_t_nonneg(h, np.abs(a))
    negative = a < 0.0
    return Interval(np.where(negative, -t.hi, t.lo), np.where(negative, -t.lo, t.hi))


def owens_t_enclosure(h, a: Interval) -> Interval:
    """Certified T(h, a) for points h and a over an interval; T is even in h and rises in a."""
    h = np.abs(np.asarray(h, dtype=np.float64))
    h, a_lo, a_hi = np.broadcast_arrays(h, a.lo, a.hi)
    return Interval(_owens_t_signed(h, a_lo).lo, _owens_t_signed(h, a_hi).hi)


def _owens_term(h: np.ndarray, k: np.ndarray, rho: Interval, den: Interval) -> Interval:
    """T(h, (k - ρh)/(h√(1-ρ²))), which is sign(k)/4 at h = 0."""
    lo = np.where(k > 0.0, 0.25, -0.25)
    hi = lo.copy()
    nz = h != 0.0
    if nz.any():
        a = (Interval.point(k[nz]) - rho[nz] * h[nz]) / (Interval.point(h[nz]) * den[nz])
        t = owens_t_enclosure(h[nz], a)
        lo[nz], hi[nz] = t.lo, t.hi
    return Interval(lo, hi)


def certified_binormal(h, k, rho, pad: float = PHI_PAD) -> Interval:
    """Enclosure of Φ₂(h, k; ρ) at points, ρ ∈ [-1, 1].

    Infinite arguments and ρ = ±1 use the exact marginal and limit formulas;
    everything else goes through the Owen's T decomposition.
    """
    h, k, rho = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (h, k, rho)))
    shape = h.shape
    h, k = h.ravel(), k.ravel()
    rho = np.clip(rho.ravel(), -1.0, 1.0)
    ph, pk = interval_phi(Interval.point(h), pad), interval_phi(Interval.point(k), pad)
    lo = np.zeros(h.shape)
    hi = np.zeros(h.shape)

    def put(mask, value: Interval):
        lo[mask], hi[mask] = value.lo, value.hi

    vanishes = (h == -np.inf) | (k == -np.inf)
    h_top = (h == np.inf) & ~vanishes
    k_top = (k == np.inf) & ~vanishes & ~h_top
    put(h_top, pk[h_top])
    put(k_top, ph[k_top])

    finite = np.isfinite(h) & np.isfinite(k)
    upper = finite & (rho == 1.0)
    lower = finite & (rho == -1.0)
    if upper.any():
        put(upper, interval_phi(Interval.point(np.minimum(h, k)[upper]), pad))
    if lower.any():
        both = ph[lower] + pk[lower] - 1.0
        put(lower, Interval(np.clip(both.lo, 0.0, None), np.clip(both.hi, 0.0, None)))

    inner = finite & ~upper & ~lower
    origin = inner & (h == 0.0) & (k == 0.0)
    if origin.any():
        put(origin, Interval.point(rho[origin]).arcsin() / _two_pi() + 0.25)

    regular = inner & ~origin
    if regular.any():
        hr, kr = h[regular], k[regular]
        r = Interval.point(rho[regular])
        den = ((1.0 - r) * (1.0 + r)).sqrt()
        beta = np.where((hr * kr > 0.0) | ((hr * kr == 0.0) & (hr + kr >= 0.0)), 0.0, 0.5)
        val = (ph[regular] + pk[regular]) * 0.5 - _owens_term(hr, kr, r, den) - _owens_term(kr, hr, r, den) - beta
        cap = np.minimum(ph.hi[regular], pk.hi[regular])
        put(regular, Interval(np.clip(val.lo, 0.0, cap), np.clip(val.hi, 0.0, cap)))

    return Interval(np.clip(lo, 0.0, 1.0).reshape(shape), np.clip(hi, 0.0, 1.0).reshape(shape))

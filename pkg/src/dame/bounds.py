"""Minimax risk bounds for mean estimation under user-level local DP.

Everything here depends on (n, alpha) only through n * alpha**2, so each
public function taking ``(dist, n, alpha)`` has a twin taking ``n_alpha_sq``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import SizeDistribution

C1 = math.exp(-9.0) / 16.0
C2 = 24.0
C3 = 1570.0
C4 = 8.0
C5 = 579.0 * 1.5  # 868.5

# Risk of any estimator with values in [-1, 1].
TRIVIAL_RISK = 4.0
# Largest m_tilde the solver will consider.
SEARCH_CAP = 2**31
# Tail mass beyond which lower-bound terms are no longer scanned.
LOWER_TAIL_CUTOFF = 1e-8


class NumericError(ArithmeticError):
    """A bound or solver produced an inconsistent or non-finite result."""


@dataclass(frozen=True)
class BoundConstants:
    c1: float = C1
    c2: float = C2
    c3: float = C3
    c4: float = C4
    c5: float = C5


@dataclass(frozen=True)
class RiskBounds:
    lower: float
    lower_argmax_a: int
    upper: float
    m_tilde: int
    n_alpha_sq: float


def _nas(n: int, alpha: float) -> float:
    alpha = float(alpha)
    if n < 1 or not alpha > 0:
        raise ValueError("need n >= 1 and alpha > 0")
    return n * alpha * alpha


def phi(a, n_alpha_sq: float):
    """c5 / (n alpha^2) * ln[g / ln g] with g = c4 * (a * n alpha^2 v 1).

    Non-decreasing in ``a``; accepts scalars or arrays.
    """
    if not np.all(np.asarray(n_alpha_sq) > 0):
        raise ValueError("n_alpha_sq must be positive")
    g = C4 * np.maximum(np.asarray(a, dtype=float) * n_alpha_sq, 1.0)
    out = C5 / n_alpha_sq * np.log(g / np.log(g))
    return float(out) if np.ndim(out) == 0 else out


def psi(dist: SizeDistribution, a, n_alpha_sq: float):
    """P(m >= a)^2 - (phi(a) ^ 1); m_tilde is the last a where this is >= 0."""
    a_arr = np.asarray(a, dtype=np.int64)
    surv = dist.survival_array(np.atleast_1d(a_arr))
    out = surv * surv - np.minimum(phi(np.atleast_1d(a_arr), n_alpha_sq), 1.0)
    return float(out[0]) if a_arr.ndim == 0 else out


@dataclass(frozen=True)
class MTildeSearch:
    """Result of the m_tilde search, with the evidence that it brackets."""

    m_tilde: int
    iterations: int
    search_hi: int
    psi_at: float
    psi_next: float
    fallback: bool

    @staticmethod
    def iteration_budget(n_alpha_sq: float) -> int:
        return 2 * math.ceil(n_alpha_sq)


def _initial_hi(n_alpha_sq: float) -> int:
    if n_alpha_sq >= math.log(SEARCH_CAP):
        return SEARCH_CAP
    return max(2, min(math.ceil(math.exp(n_alpha_sq)), SEARCH_CAP))


def m_tilde_linear_scan(dist: SizeDistribution, n_alpha_sq: float, limit: int) -> int:
    """Largest a in [1, limit] with psi(a) >= 0, by evaluating every a."""
    a = np.arange(1, int(limit) + 1)
    ok = np.flatnonzero(psi(dist, a, n_alpha_sq) >= 0)
    return int(a[ok[-1]]) if ok.size else 1


def m_tilde_search(dist: SizeDistribution, n_alpha_sq: float) -> MTildeSearch:
    """Binary search for m_tilde on [1, ceil(exp(n alpha^2)) ^ 2^31].

    psi(1) >= 0 always. If psi is not negative at the upper end, or the
    result fails the bracketing check, a linear scan over the whole support
    is used instead and ``fallback`` is set.
    """
    lo, hi = 1, _initial_hi(n_alpha_sq)
    search_hi = hi
    iterations = 0
    fallback = False
    if psi(dist, hi, n_alpha_sq) >= 0:
        fallback = True
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            iterations += 1
            if psi(dist, mid, n_alpha_sq) >= 0:
                lo = mid
            else:
                hi = mid
        if psi(dist, lo, n_alpha_sq) < 0 or psi(dist, lo + 1, n_alpha_sq) >= 0:
            fallback = True
    if fallback:
        limit = min(dist.support_max + 1, SEARCH_CAP)
        lo = m_tilde_linear_scan(dist, n_alpha_sq, limit)
    at, nxt = psi(dist, lo, n_alpha_sq), psi(dist, lo + 1, n_alpha_sq)
    if not (at >= 0 > nxt):
        raise NumericError(f"m_tilde={lo} does not bracket psi: psi={at}, psi(+1)={nxt}")
    return MTildeSearch(lo, iterations, search_hi, at, nxt, fallback)


def solve_m_tilde(dist: SizeDistribution, n: int, alpha: float) -> int:
    """Effective maximum dataset size used by DAME for this (M, n, alpha)."""
    return m_tilde_search(dist, _nas(n, alpha)).m_tilde


# ---------------------------------------------------------------------------
# lower bound


def lower_bound_terms(dist: SizeDistribution, n_alpha_sq: float, a) -> np.ndarray:
    """c1 exp(-c2 x P(m > a)^2) / (x E[sqrt(m) 1{m <= a}]^2 v 1) for each a."""
    a = np.atleast_1d(np.asarray(a, dtype=np.int64))
    tail = dist.survival_array(a, strict=True)
    partial = np.concatenate(([0.0], np.cumsum(np.sqrt(dist.values) * dist.probs)))
    below = partial[np.searchsorted(dist.values, a, side="right")]
    return C1 * np.exp(-C2 * n_alpha_sq * tail * tail) / np.maximum(n_alpha_sq * below * below, 1.0)


def default_a_max(dist: SizeDistribution) -> int:
    """Smallest a with P(m > a) < 1e-8."""
    tails = dist.survival_array(dist.values, strict=True)
    idx = np.flatnonzero(tails < LOWER_TAIL_CUTOFF)
    return int(dist.values[idx[0]]) if idx.size else dist.support_max


def lower_bound_at(dist: SizeDistribution, n_alpha_sq: float, a_max: int | None = None) -> tuple[float, int]:
    """Max of the lower-bound terms over a in {0, ..., a_max}.

    Terms are constant between consecutive support points, so scanning a = 0,
    each support point <= a_max, and a_max itself covers every value.
    """
    if a_max is None:
        a_max = default_a_max(dist)
    if a_max < 0:
        raise ValueError("a_max must be >= 0")
    atoms = dist.values[dist.values <= a_max]
    cand = np.unique(np.concatenate(([0], atoms, [a_max])))
    terms = lower_bound_terms(dist, n_alpha_sq, cand)
    best = int(np.argmax(terms))
    return float(terms[best]), int(cand[best])


def lower_bound(dist: SizeDistribution, n: int, alpha: float, a_max: int | None = None) -> tuple[float, int]:
    return lower_bound_at(dist, _nas(n, alpha), a_max)


# ---------------------------------------------------------------------------
# upper bound


def upper_bound_expression(dist: SizeDistribution, n_alpha_sq: float, m_tilde: int) -> float:
    """c3 ln(c4 (sqrt(m_tilde x) v 1)) / (x E[sqrt(m ^ m_tilde)]^2), uncapped."""
    e = dist.sqrt_moment_capped(m_tilde)
    inner = max(math.sqrt(m_tilde * n_alpha_sq), 1.0)
    return C3 * math.log(C4 * inner) / (n_alpha_sq * e * e)


def upper_bound_at(dist: SizeDistribution, n_alpha_sq: float) -> tuple[float, int]:
    m_tilde = m_tilde_search(dist, n_alpha_sq).m_tilde
    value = min(upper_bound_expression(dist, n_alpha_sq, m_tilde), TRIVIAL_RISK)
    if not math.isfinite(value):
        raise NumericError("upper bound is not finite")
    return value, m_tilde


def upper_bound(dist: SizeDistribution, n: int, alpha: float) -> tuple[float, int]:
    """Upper bound on the worst-case risk achieved by DAME, and its m_tilde."""
    return upper_bound_at(dist, _nas(n, alpha))


def risk_bounds(dist: SizeDistribution, n_alpha_sq: float, a_max: int | None = None) -> RiskBounds:
    low, arg = lower_bound_at(dist, n_alpha_sq, a_max)
    up, mt = upper_bound_at(dist, n_alpha_sq)
    return RiskBounds(low, arg, up, mt, float(n_alpha_sq))


# ---------------------------------------------------------------------------
# two-spike toy model


@dataclass(frozen=True)
class ToyRegime:
    label: str  # "item_level", "intermediate" or "full"
    a: int
    value: float


def toy_regimes(rho: float, m: int, n: int, alpha: float) -> ToyRegime:
    """Classify M(1) = 1 - rho, M(m) = rho into its upper-bound regime.

    ``a`` is the effective dataset size of the regime, and ``value`` the
    displayed rate with explicit constants:

    * full, rho^2 >= phi(m) ^ 1: c3 ln(c4 sqrt(m x)) / (x ((1-rho) + rho sqrt(m))^2)
    * item_level, rho^2 < phi(2) ^ 1: c3 ln(c4 sqrt(x)) / x
    * intermediate, phi(a) <= rho^2 < phi(a+1): the same with m replaced by
      a, or exp(-rho^2 x / c5) / rho^2 if smaller.

    ``a`` always equals the m_tilde solved for this law.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if m < 2:
        raise ValueError("m must be >= 2")
    x = _nas(n, alpha)
    if x < 1:
        raise ValueError("the two-spike regimes assume n * alpha^2 >= 1")
    r2 = rho * rho

    def rate(a: int) -> float:
        e = (1.0 - rho) + rho * math.sqrt(a)
        return C3 * math.log(C4 * math.sqrt(a * x)) / (x * e * e)

    if r2 >= min(phi(m, x), 1.0):
        return ToyRegime("full", int(m), rate(m))
    if r2 < min(phi(2, x), 1.0):
        return ToyRegime("item_level", 1, C3 * math.log(C4 * math.sqrt(x)) / x)
    a_grid = np.arange(2, m)
    a = int(a_grid[np.flatnonzero(phi(a_grid, x) <= r2)[-1]])
    return ToyRegime("intermediate", a, min(rate(a), math.exp(-r2 * x / C5) / r2))


# ---------------------------------------------------------------------------
# two-point divergences used by the lower-bound construction


def two_point_divergences(delta: float) -> tuple[float, float]:
    """TV and KL between the laws on {-1, 1} with P(1) = (1 -/+ delta) / 2."""
    if not 0.0 <= delta <= 0.5:
        raise ValueError("delta must lie in [0, 1/2]")
    kl = delta * math.log((1.0 + delta) / (1.0 - delta))
    return float(delta), kl

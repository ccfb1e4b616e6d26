"""Local privacy primitives: k-hot randomized response and Laplace noise.

Both mechanisms come with an analytic audit giving the exact worst-case
log-likelihood ratio between two inputs, plus an empirical audit used to
sanity-check the samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

# alpha <= 22/35 is the high-privacy regime the risk bounds assume
STRICT_ALPHA_MAX = 22.0 / 35.0

# A vote vector may carry at most this many ones (3-hot).
MAX_ONES = 3


@dataclass(frozen=True)
class PrivacyBudget:
    """Per-user local DP budget.

    Budgets above 22/35 are accepted; :attr:`strict_regime` records whether
    the bounds' high-privacy assumption holds.
    """

    alpha: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be a positive finite number")

    @property
    def strict_regime(self) -> bool:
        return self.alpha <= STRICT_ALPHA_MAX

    def __float__(self) -> float:
        return float(self.alpha)


def keep_probability(alpha: float) -> float:
    """e^{alpha/6} / (1 + e^{alpha/6}), the per-coordinate keep probability."""
    return float(expit(float(alpha) / 6.0))


def _check_pi(pi: float) -> float:
    pi = float(pi)
    if not 0.5 <= pi <= 1.0:
        raise ValueError(f"keep probability must lie in [1/2, 1], got {pi}")
    return pi


def randomized_response(bits, pi: float, rng: np.random.Generator) -> np.ndarray:
    """Keep each coordinate with probability ``pi``, flip it otherwise.

    Accepts a single vector or a 2-D array of vectors (one per row). Any
    vector with more than three ones is rejected: the privacy accounting
    covers at most six coordinates differing between two inputs.
    """
    bits = np.asarray(bits)
    pi = _check_pi(pi)
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError("randomized_response expects a binary vector")
    ones = bits.sum(axis=-1)
    if np.any(ones > MAX_ONES):
        raise ValueError(f"vote vectors may have at most {MAX_ONES} ones")
    flip = rng.random(bits.shape) >= pi
    return np.where(flip, 1 - bits, bits).astype(np.int8)


def laplace_noise(scale: float, rng: np.random.Generator, size=None):
    """Laplace(0, scale) draws by inverse CDF, one uniform per draw."""
    if not scale > 0:
        raise ValueError("Laplace scale must be positive")
    u = rng.random(size) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def audit_rr_privacy(pi: float) -> float:
    """Worst-case privacy loss of 3-hot randomized response.

    Two 3-hot (or sparser) inputs differ in at most six coordinates and each
    contributes at most ln(pi / (1 - pi)).
    """
    pi = _check_pi(pi)
    if pi == 1.0:
        return math.inf
    return 2 * MAX_ONES * math.log(pi / (1.0 - pi))


def audit_laplace_privacy(scale: float, sensitivity: float) -> float:
    """sup of the Laplace log-density ratio for inputs at most ``sensitivity`` apart."""
    if not (scale > 0 and sensitivity > 0):
        raise ValueError("scale and sensitivity must be positive")
    return sensitivity / scale


@dataclass(frozen=True)
class EmpiricalRRAudit:
    per_coordinate_max: float
    composed: float
    trials: int


def empirical_rr_audit(alpha: float, bin_count: int, trials: int, rng: np.random.Generator) -> EmpiricalRRAudit:
    """Estimate the RR privacy loss from simulated outputs.

    Uses two 3-hot inputs with disjoint supports, the pair that maximises the
    number of differing coordinates. ``composed`` sums, over coordinates, the
    larger of the two output log-ratios; because coordinates are flipped
    independently this estimates the worst-case loss of the whole vector.
    """
    if bin_count < 6:
        raise ValueError("need at least 6 bins for two disjoint 3-hot inputs")
    pi = keep_probability(alpha)
    x = np.zeros(bin_count, dtype=np.int8)
    y = np.zeros(bin_count, dtype=np.int8)
    x[:3] = 1
    y[3:6] = 1
    freq_x = np.zeros(bin_count)
    freq_y = np.zeros(bin_count)
    chunk = 100_000
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        freq_x += randomized_response(np.broadcast_to(x, (k, bin_count)), pi, rng).sum(axis=0)
        freq_y += randomized_response(np.broadcast_to(y, (k, bin_count)), pi, rng).sum(axis=0)
        done += k
    p1x, p1y = freq_x / trials, freq_y / trials
    with np.errstate(divide="ignore"):
        lr1 = np.abs(np.log(p1x / p1y))
        lr0 = np.abs(np.log((1 - p1x) / (1 - p1y)))
    return EmpiricalRRAudit(float(lr1.max()), float(np.maximum(lr0, lr1).sum()), trials)


def empirical_laplace_audit(scale: float, sensitivity: float, trials: int, rng: np.random.Generator,
                            bins: int = 40) -> float:
    """Max |log ratio| of histogram frequencies for releases at 0 and ``sensitivity``.

    Only bins with at least 1000 hits in both histograms are compared, so the
    estimate is dominated by the bulk of the distribution.
    """
    a = laplace_noise(scale, rng, trials)
    b = sensitivity + laplace_noise(scale, rng, trials)
    edges = np.linspace(-3 * scale, sensitivity + 3 * scale, bins + 1)
    ha, _ = np.histogram(a, edges)
    hb, _ = np.histogram(b, edges)
    ok = (ha >= 1000) & (hb >= 1000)
    return float(np.abs(np.log(ha[ok] / hb[ok])).max())

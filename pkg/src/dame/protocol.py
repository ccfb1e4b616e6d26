"""Distribution-aware mean estimation (DAME) as a two-round local protocol.

Round one: the first half of the users vote, through randomized response,
for the bin of width 2*tau holding their empirical mean (and its two
neighbours). Users with fewer than ``m_tilde`` samples abstain with an
all-zero vote. The statistician elects the most voted bin.

Round two: the other half shrink their empirical mean toward the elected
bin's midpoint, project onto the bin enlarged by 6*tau on each side and add
Laplace noise scaled to that width. The statistician averages the releases
and removes the shrinkage bias using the known size law.

Functions prefixed ``user_`` run on the user side and see raw data; the rest
only ever receive privatized messages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .distributions import SizeDistribution, UserBatch, UserDataset
from .mechanisms import keep_probability, laplace_noise, randomized_response

# Half-widths added on each side of the elected bin before projecting.
ENLARGE = 6
# Width of the enlarged interval in units of tau; sets the Laplace scale.
SENSITIVITY_FACTOR = 14


def compute_tau(m_tilde: int, n: int, alpha: float) -> float:
    """Bin half-width sqrt(2 ln(8 (sqrt(m_tilde n alpha^2) v 1)) / m_tilde)."""
    if m_tilde < 1:
        raise ValueError("m_tilde must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    alpha = float(alpha)
    inner = max(math.sqrt(m_tilde * n * alpha * alpha), 1.0)
    return math.sqrt(2.0 * math.log(8.0 * inner) / m_tilde)


@dataclass(frozen=True)
class BinPartition:
    """Partition of [-1, 1] into ceil(1/tau) bins [l_j, u_j) of width 2*tau.

    Bins are indexed from 0. The last bin is closed at +1 and may be
    narrower than 2*tau.
    """

    tau: float
    bin_count: int = field(init=False)
    lowers: np.ndarray = field(init=False, repr=False, compare=False)
    uppers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        count = max(1, math.ceil(1.0 / self.tau))
        lowers = -1.0 + 2.0 * self.tau * np.arange(count)
        uppers = np.append(lowers[1:], 1.0)
        object.__setattr__(self, "bin_count", count)
        object.__setattr__(self, "lowers", lowers)
        object.__setattr__(self, "uppers", uppers)

    def index_of(self, x):
        """Bin index for each value in [-1, 1]."""
        idx = np.searchsorted(self.lowers, x, side="right") - 1
        return np.clip(idx, 0, self.bin_count - 1)

    def contains(self, j: int, x: float) -> bool:
        if j == self.bin_count - 1:
            return bool(self.lowers[j] <= x <= 1.0)
        return bool(self.lowers[j] <= x < self.uppers[j])


@dataclass(frozen=True)
class CandidateBin:
    """Elected bin ``index`` with its enlarged interval [lower, upper] and midpoint."""

    index: int
    lower: float
    upper: float
    midpoint: float

    def project(self, x):
        return np.clip(x, self.lower, self.upper)


def candidate_for_bin(part: BinPartition, j: int) -> CandidateBin:
    if not 0 <= j < part.bin_count:
        raise IndexError(f"bin {j} outside partition of {part.bin_count} bins")
    lo, hi = float(part.lowers[j]), float(part.uppers[j])
    reach = ENLARGE * part.tau
    return CandidateBin(
        index=int(j),
        lower=max(lo - reach, -1.0),
        upper=min(hi + reach, 1.0),
        midpoint=0.5 * (lo + hi),
    )


# ---------------------------------------------------------------------------
# user side


def user_votes(sizes: np.ndarray, means: np.ndarray, part: BinPartition, m_tilde: int) -> np.ndarray:
    """Raw vote matrix, one row per user; rows of users with m < m_tilde are zero."""
    sizes = np.asarray(sizes)
    means = np.asarray(means, dtype=float)
    votes = np.zeros((sizes.size, part.bin_count), dtype=np.int8)
    eligible = np.flatnonzero(sizes >= m_tilde)
    if eligible.size:
        home = part.index_of(means[eligible])
        for offset in (-1, 0, 1):
            j = home + offset
            ok = (j >= 0) & (j < part.bin_count)
            votes[eligible[ok], j[ok]] = 1
    return votes


def localisation_vote(user: UserDataset, part: BinPartition, m_tilde: int) -> np.ndarray:
    """Vote vector for a single user."""
    return user_votes(np.asarray([user.m]), np.asarray([user.empirical_mean]), part, m_tilde)[0]


def user_shrink(sizes, means, midpoint: float, m_tilde: int) -> np.ndarray:
    """Pull empirical means toward ``midpoint`` by sqrt(m ^ m_tilde) / sqrt(m_tilde)."""
    sizes = np.asarray(sizes)
    factor = np.sqrt(np.minimum(sizes, m_tilde) / m_tilde)
    return factor * np.asarray(means, dtype=float) + (1.0 - factor) * midpoint


def shrink_estimate(user: UserDataset, cand: CandidateBin, m_tilde: int) -> float:
    return float(user_shrink(np.asarray([user.m]), np.asarray([user.empirical_mean]),
                             cand.midpoint, m_tilde)[0])


def noisy_release(shrunk, cand: CandidateBin, tau: float, alpha: float,
                  rng: np.random.Generator, *, add_noise: bool = True):
    """Project onto [L, U] and add Laplace(14 tau / alpha) noise.

    ``add_noise=False`` is a non-private test mode.
    """
    projected = cand.project(np.asarray(shrunk, dtype=float))
    if not add_noise:
        return projected
    scale = SENSITIVITY_FACTOR * tau / float(alpha)
    return projected + laplace_noise(scale, rng, np.shape(projected))


# ---------------------------------------------------------------------------
# statistician side


def elect_candidate(privatized_votes, part: BinPartition) -> CandidateBin:
    """Most voted bin; ties go to the lowest index."""
    votes = np.asarray(privatized_votes)
    if votes.ndim == 1:
        votes = votes[None, :]
    if votes.shape[0] == 0:
        raise ValueError("cannot elect a candidate from an empty vote list")
    if votes.shape[1] != part.bin_count:
        raise ValueError(f"vote vectors have length {votes.shape[1]}, expected {part.bin_count}")
    totals = votes.sum(axis=0, dtype=np.int64)
    return candidate_for_bin(part, int(np.argmax(totals)))


def debias(mean_of_releases: float, cand: CandidateBin, dist: SizeDistribution, m_tilde: int) -> float:
    """Invert the expected shrinkage toward the candidate midpoint."""
    denom = dist.sqrt_moment_capped(m_tilde)
    gap = dist.debias_gap_sum(m_tilde)
    return (mean_of_releases * math.sqrt(m_tilde) - gap * cand.midpoint) / denom


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class ProtocolTranscript:
    """Everything the statistician sees, plus the public parameters."""

    privatized_votes: np.ndarray
    noisy_estimates: np.ndarray
    candidate: CandidateBin
    final_estimate: float
    tau: float
    m_tilde: int
    alpha: float
    n: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "m_tilde": self.m_tilde,
            "tau": self.tau,
            "bin_count": int(self.privatized_votes.shape[1]) if self.privatized_votes.ndim == 2 else 0,
            "candidate": {
                "index": self.candidate.index,
                "lower": self.candidate.lower,
                "upper": self.candidate.upper,
                "midpoint": self.candidate.midpoint,
            },
            "privatized_votes": self.privatized_votes.tolist(),
            "noisy_estimates": self.noisy_estimates.tolist(),
            "final_estimate": self.final_estimate,
        }


def localisation_phase(voters: UserBatch, part: BinPartition, m_tilde: int, alpha: float,
                       rng: np.random.Generator, *, non_private: bool = False) -> np.ndarray:
    """Privatized vote matrix from the first-round users."""
    raw = user_votes(voters.sizes, voters.means, part, m_tilde)
    if non_private:
        return raw
    return randomized_response(raw, keep_probability(alpha), rng)


def estimation_phase(releasers: UserBatch, cand: CandidateBin, m_tilde: int, tau: float,
                     alpha: float, rng: np.random.Generator, *, non_private: bool = False) -> np.ndarray:
    """Noisy projected releases from the second-round users."""
    shrunk = user_shrink(releasers.sizes, releasers.means, cand.midpoint, m_tilde)
    return noisy_release(shrunk, cand, tau, alpha, rng, add_noise=not non_private)


def run_dame(users: UserBatch | Iterable[UserDataset], dist: SizeDistribution, alpha: float,
             m_tilde: int | None, rng: np.random.Generator, *,
             non_private: bool = False, forced_bin: int | None = None) -> ProtocolTranscript:
    """Run both rounds and return the transcript with the debiased estimate.

    With an odd number of users the last one is dropped. ``m_tilde=None``
    solves for it from ``dist``. ``non_private`` disables both randomizers
    and ``forced_bin`` overrides the election; both exist for tests only.
    """
    batch = UserBatch.from_users(users)
    n = len(batch)
    if n < 2:
        raise ValueError("DAME needs at least 2 users")
    alpha = float(alpha)
    half = n // 2
    n_used = 2 * half
    if m_tilde is None:
        from .bounds import solve_m_tilde

        m_tilde = solve_m_tilde(dist, n_used, alpha)
    m_tilde = int(m_tilde)

    tau = compute_tau(m_tilde, n_used, alpha)
    part = BinPartition(tau)
    votes = localisation_phase(batch[:half], part, m_tilde, alpha, rng, non_private=non_private)
    cand = elect_candidate(votes, part) if forced_bin is None else candidate_for_bin(part, forced_bin)
    releases = estimation_phase(batch[half:n_used], cand, m_tilde, tau, alpha, rng,
                                non_private=non_private)
    estimate = debias(float(np.mean(releases)), cand, dist, m_tilde)
    return ProtocolTranscript(votes, releases, cand, estimate, tau, m_tilde, alpha, n_used)

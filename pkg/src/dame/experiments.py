"""Monte Carlo risk harness, item-level and homogeneous baselines, and the
benchmark grids for the bound curves and the two-spike comparison.

Randomness: trial ``t`` of a scenario with seed ``s`` draws everything from
a generator seeded by ``SeedSequence([s, t])``. Trials run on a thread pool
and are reduced in trial order, so results do not depend on scheduling.
"""

from __future__ import annotations

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .bounds import lower_bound_at, m_tilde_search, upper_bound_at
from .distributions import (
    DataDistribution,
    PointMass,
    SizeDistribution,
    TruncatedBinomial,
    TwoPoint,
    TwoSpike,
    UniformOdd,
    UserBatch,
    UserDataset,
    ZeroTruncatedPoisson,
    data_distribution_from_dict,
    draw_users,
    size_distribution_from_dict,
)
from .mechanisms import laplace_noise
from .protocol import run_dame

ALGORITHMS = ("dame", "duchi_item", "kent_homogeneous")
Z99 = float(norm.ppf(0.995))
SEED_MAX = 2**64 - 1

Progress = Callable[[str], None]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def _check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed <= SEED_MAX:
        raise ValueError("seed must be an integer in [0, 2^64 - 1]")
    return int(seed)


@dataclass(frozen=True)
class Scenario:
    size_dist: SizeDistribution
    data_dist: DataDistribution
    n: int
    alpha: float
    trials: int
    seed: int = 0
    algorithm: str = "dame"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        min_n = 1 if self.algorithm == "duchi_item" else 2
        if self.n < min_n:
            raise ValueError(f"{self.algorithm} needs n >= {min_n}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be a positive finite number")
        _check_seed(self.seed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "size_dist": self.size_dist.to_dict(),
            "data_dist": self.data_dist.to_dict(),
            "n": int(self.n),
            "alpha": float(self.alpha),
            "trials": int(self.trials),
            "seed": int(self.seed),
            "algorithm": self.algorithm,
        }

    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> "Scenario":
        if not isinstance(spec, dict):
            raise ValueError("scenario must be a JSON object")
        required = {"size_dist", "data_dist", "n", "alpha", "trials"}
        allowed = required | {"seed", "algorithm"}
        extra = set(spec) - allowed
        if extra:
            raise ValueError(f"scenario: unknown keys {sorted(extra)}")
        missing = required - set(spec)
        if missing:
            raise ValueError(f"scenario: missing keys {sorted(missing)}")
        for key in ("n", "trials"):
            if isinstance(spec[key], bool) or not isinstance(spec[key], int):
                raise ValueError(f"scenario: {key} must be an integer")
        if isinstance(spec["alpha"], bool) or not isinstance(spec["alpha"], (int, float)):
            raise ValueError("scenario: alpha must be a number")
        return cls(
            size_dist=size_distribution_from_dict(spec["size_dist"]),
            data_dist=data_distribution_from_dict(spec["data_dist"]),
            n=spec["n"],
            alpha=float(spec["alpha"]),
            trials=spec["trials"],
            seed=_check_seed(spec.get("seed", 0)),
            algorithm=spec.get("algorithm", "dame"),
        )


@dataclass(frozen=True)
class RiskEstimate:
    """Mean squared error with a two-sided 99% normal-approximation half width."""

    mean_sq_error: float
    ci_half_width_99: float
    trials: int

    @classmethod
    def from_squared_errors(cls, sq: np.ndarray) -> "RiskEstimate":
        sq = np.asarray(sq, dtype=float)
        half = Z99 * float(np.std(sq, ddof=1)) / math.sqrt(sq.size) if sq.size > 1 else math.inf
        return cls(float(np.mean(sq)), half, int(sq.size))


# ---------------------------------------------------------------------------
# baselines


def baseline_duchi(users: UserBatch | Iterable[UserDataset], alpha: float, rng: np.random.Generator,
                   *, non_private: bool = False) -> float:
    """Average of X-bar + Laplace(2 / alpha) over all users."""
    batch = UserBatch.from_users(users)
    if len(batch) < 1:
        raise ValueError("need at least one user")
    releases = batch.means
    if not non_private:
        releases = releases + laplace_noise(2.0 / float(alpha), rng, len(batch))
    return float(np.mean(releases))


_KENT_CACHE: dict[tuple[int, int, float], int] = {}
_KENT_LOCK = threading.Lock()


def _homogeneous_m_tilde(m: int, n_used: int, alpha: float) -> int:
    key = (m, n_used, alpha)
    with _KENT_LOCK:
        if key not in _KENT_CACHE:
            _KENT_CACHE[key] = m_tilde_search(PointMass(m), n_used * alpha * alpha).m_tilde
        return _KENT_CACHE[key]


def baseline_kent(users: UserBatch | Iterable[UserDataset], alpha: float, rng: np.random.Generator,
                  data_dist: DataDistribution, *, non_private: bool = False) -> float:
    """Truncate every user to the smallest dataset size and run homogeneous DAME.

    Each user's statistic is replaced by a fresh empirical mean of ``m_min``
    draws from ``data_dist``, which has the law of a mean over a subset of
    ``m_min`` of their samples.
    """
    batch = UserBatch.from_users(users)
    n = len(batch)
    if n < 2:
        raise ValueError("need at least two users")
    m_min = int(batch.sizes.min())
    sizes = np.full(n, m_min, dtype=np.int64)
    truncated = UserBatch(sizes, data_dist.sample_means(sizes, rng))
    dist = PointMass(m_min)
    m_tilde = _homogeneous_m_tilde(m_min, 2 * (n // 2), float(alpha))
    return run_dame(truncated, dist, alpha, m_tilde, rng, non_private=non_private).final_estimate


# ---------------------------------------------------------------------------
# risk estimation


def _default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def run_trial(s: Scenario, trial: int, *, m_tilde: int | None = None, non_private: bool = False) -> float:
    """Estimate returned by one protocol execution of trial ``trial``."""
    rng = trial_rng(s.seed, trial)
    users = draw_users(s.size_dist, s.data_dist, s.n, rng)
    if s.algorithm == "dame":
        return run_dame(users, s.size_dist, s.alpha, m_tilde, rng, non_private=non_private).final_estimate
    if s.algorithm == "duchi_item":
        return baseline_duchi(users, s.alpha, rng, non_private=non_private)
    return baseline_kent(users, s.alpha, rng, s.data_dist, non_private=non_private)


def scenario_estimates(s: Scenario, *, threads: int | None = None, non_private: bool = False) -> np.ndarray:
    """Per-trial estimates, in trial order."""
    m_tilde = None
    if s.algorithm == "dame":
        m_tilde = m_tilde_search(s.size_dist, 2 * (s.n // 2) * s.alpha * s.alpha).m_tilde
    threads = threads or _default_threads()

    def one(t: int) -> float:
        return run_trial(s, t, m_tilde=m_tilde, non_private=non_private)

    if threads == 1 or s.trials == 1:
        return np.array([one(t) for t in range(s.trials)])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(one, range(s.trials))))


def estimate_risk(s: Scenario, *, threads: int | None = None, non_private: bool = False) -> RiskEstimate:
    """Monte Carlo estimate of E[(theta_hat - theta)^2] at the scenario's mu."""
    est = scenario_estimates(s, threads=threads, non_private=non_private)
    return RiskEstimate.from_squared_errors((est - s.data_dist.true_mean) ** 2)


# ---------------------------------------------------------------------------
# bound curves


FAMILIES = ("poisson", "uniform", "binomial")
FIGURE_S1_NAS = 500.0
FIGURE_S1_LAMBDA = (5.0, 500.0)
FIGURE_S1_POINTS = 100
SWEEP_LAMBDA = 5.0
SWEEP_NAS = (1e1, 1e6)


def family_distribution(family: str, lam: float) -> SizeDistribution:
    if family == "poisson":
        return ZeroTruncatedPoisson(float(lam))
    if family == "uniform":
        return UniformOdd(float(lam))
    if family == "binomial":
        return TruncatedBinomial(float(lam), 1000)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def bound_row(family: str, param_name: str, param_value: float, dist: SizeDistribution,
              n_alpha_sq: float) -> dict[str, Any]:
    n_alpha_sq = float(n_alpha_sq)
    lower, arg = lower_bound_at(dist, n_alpha_sq)
    upper, mt = upper_bound_at(dist, n_alpha_sq)
    return {
        "family": family,
        "param_name": param_name,
        "param_value": float(param_value),
        "n_alpha_sq": n_alpha_sq,
        "lower": lower,
        "lower_a": arg,
        "upper": float(upper),
        "m_tilde": mt,
    }


def run_figure_s1(family: str, n_alpha_sq: float = FIGURE_S1_NAS, points: int = FIGURE_S1_POINTS,
                  lam_range: tuple[float, float] = FIGURE_S1_LAMBDA) -> list[dict[str, Any]]:
    """Lower and upper bounds along a log-spaced grid of the family parameter."""
    grid = np.geomspace(lam_range[0], lam_range[1], points)
    return [bound_row(family, "lambda", lam, family_distribution(family, lam), n_alpha_sq) for lam in grid]


def run_figure_s1_sweep(lam: float = SWEEP_LAMBDA, nas_range: tuple[float, float] = SWEEP_NAS,
                        points: int = FIGURE_S1_POINTS) -> list[dict[str, Any]]:
    """Bounds for a fixed Poisson law as n * alpha^2 varies."""
    dist = ZeroTruncatedPoisson(float(lam))
    grid = np.geomspace(nas_range[0], nas_range[1], points)
    return [bound_row("poisson", "n_alpha_sq", x, dist, x) for x in grid]


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# two-spike comparison


@dataclass(frozen=True)
class FigureS2Preset:
    m1: int
    m2: int
    n: int = 10_000
    alpha: float = 22.0 / 35.0
    trials: int = 200
    rho_points: int = 10
    theta: float = 0.0


FIGURE_S2_DESK = FigureS2Preset(m1=1_000, m2=10_000)
FIGURE_S2_PAPER = FigureS2Preset(m1=100_000, m2=1_000_000)


def risk_row(s: Scenario, param_name: str, param_value: float, r: RiskEstimate) -> dict[str, Any]:
    return {
        "algorithm": s.algorithm,
        "param_name": param_name,
        "param_value": float(param_value),
        "n": int(s.n),
        "alpha": float(s.alpha),
        "trials": r.trials,
        "mse": r.mean_sq_error,
        "ci99": r.ci_half_width_99,
    }


def run_figure_s2(preset: FigureS2Preset = FIGURE_S2_PAPER, *, seed: int = 0, threads: int | None = None,
                  algorithms: Sequence[str] = ALGORITHMS, progress: Progress | None = None) -> list[dict[str, Any]]:
    """Risks of each algorithm under TwoSpike(m1, m2, rho) on a uniform rho grid."""
    rows = []
    data = TwoPoint(preset.theta)
    for rho in np.linspace(0.0, 1.0, preset.rho_points):
        size = TwoSpike(preset.m1, preset.m2, float(rho))
        for alg in algorithms:
            s = Scenario(size, data, preset.n, preset.alpha, preset.trials, seed, alg)
            r = estimate_risk(s, threads=threads)
            rows.append(risk_row(s, "rho", rho, r))
            if progress:
                progress(f"rho={rho:.3f} {alg}: mse={r.mean_sq_error:.4g} +/- {r.ci_half_width_99:.2g}")
    return rows

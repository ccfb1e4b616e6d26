"""Dataset-size laws over the positive integers and bounded data laws.

A size distribution is stored as a finite probability table. Families with
unbounded or very wide support are cut where the discarded mass falls below
``tail_tolerance`` and the table is renormalised, so every moment below is a
finite sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

DEFAULT_TAIL_TOLERANCE = 1e-12

# Above this many draws per call the uniform sampler works in chunks.
_UNIFORM_CHUNK = 1 << 22


class SizeDistribution:
    """Base class for a known dataset-size law ``M`` on {1, 2, ...}.

    Subclasses provide :meth:`_table`, returning sorted support points and
    their probabilities. Everything else is derived from that table.
    """

    kind: str = ""
    tail_tolerance: float

    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _build(self) -> None:
        values, probs = self._table()
        values = np.asarray(values, dtype=np.int64)
        probs = np.asarray(probs, dtype=float)
        keep = probs > 0
        values, probs = values[keep], probs[keep]
        if values.size == 0 or values[0] < 1:
            raise ValueError(f"{self.kind}: support must be a non-empty subset of N*")
        probs = probs / math.fsum(probs)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        tail = np.cumsum(probs[::-1])[::-1]
        tail[0] = 1.0
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "_probs", probs)
        object.__setattr__(self, "_cdf", cdf)
        object.__setattr__(self, "_tail", tail)

    # -- table access -----------------------------------------------------

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def support_min(self) -> int:
        return int(self._values[0])

    @property
    def support_max(self) -> int:
        return int(self._values[-1])

    # -- point queries ----------------------------------------------------

    def pmf(self, i: int) -> float:
        """P(m = i); zero outside the stored support."""
        idx = np.searchsorted(self._values, i)
        if idx < self._values.size and self._values[idx] == i:
            return float(self._probs[idx])
        return 0.0

    def survival(self, a: int, strict: bool = False) -> float:
        """P(m >= a), or P(m > a) when ``strict`` is set."""
        return float(self.survival_array(np.asarray([a]), strict=strict)[0])

    def survival_array(self, a: np.ndarray, strict: bool = False) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        if strict:
            a = a + 1
        idx = np.searchsorted(self._values, a, side="left")
        padded = np.append(self._tail, 0.0)
        return padded[idx]

    def sqrt_moment_capped(self, cap: int) -> float:
        """E[sqrt(min(m, cap))]."""
        if cap < 1:
            raise ValueError("cap must be >= 1")
        return float(np.dot(np.sqrt(np.minimum(self._values, cap)), self._probs))

    def sqrt_moment_below(self, a: int) -> float:
        """E[sqrt(m) * 1{m <= a}]; zero for a = 0."""
        mask = self._values <= a
        return float(np.dot(np.sqrt(self._values[mask]), self._probs[mask]))

    def debias_gap_sum(self, m_tilde: int) -> float:
        """sum_{i=1}^{m_tilde} (sqrt(m_tilde) - sqrt(i)) * M(i)."""
        if m_tilde < 1:
            raise ValueError("m_tilde must be >= 1")
        mask = self._values <= m_tilde
        v = self._values[mask]
        return float(np.dot(math.sqrt(m_tilde) - np.sqrt(v), self._probs[mask]))

    def mean(self) -> float:
        return float(np.dot(self._values, self._probs))

    def sqrt_mean(self) -> float:
        return float(np.dot(np.sqrt(self._values), self._probs))

    # -- sampling ---------------------------------------------------------

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` dataset sizes by inverse-CDF lookup on the table."""
        if self._values.size == 1:
            return np.full(size, self._values[0], dtype=np.int64)
        idx = np.searchsorted(self._cdf, rng.random(size), side="right")
        return self._values[np.minimum(idx, self._values.size - 1)]

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


def _cut_table(dist: Any, lo_hint: int, hi_hint: int, zero_mass: float, tol: float):
    """Support of a scipy discrete law on N*, trimmed to drop < tol mass.

    Mass is measured relative to the zero-truncated law, split evenly between
    the two tails.
    """
    if not tol > 0:
        raise ValueError("tail_tolerance must be positive for unbounded families")
    q = 0.5 * tol * (1.0 - zero_mass)
    lo = max(1, int(dist.ppf(q)))
    hi = int(dist.isf(q))
    lo = max(lo, lo_hint)
    hi = max(min(hi, hi_hint), lo)
    values = np.arange(lo, hi + 1, dtype=np.int64)
    return values, dist.pmf(values)


@dataclass(frozen=True)
class PointMass(SizeDistribution):
    """Every user holds exactly ``m`` samples."""

    m: int
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
    kind: str = field(default="point_mass", init=False, repr=False)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("point_mass: m must be a positive integer")
        self._build()

    def _table(self):
        return [int(self.m)], [1.0]

    def to_dict(self):
        return {"kind": self.kind, "m": int(self.m)}


@dataclass(frozen=True)
class TwoSpike(SizeDistribution):
    """M(m1) = 1 - rho, M(m2) = rho."""

    m1: int
    m2: int
    rho: float
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
    kind: str = field(default="two_spike", init=False, repr=False)

    def __post_init__(self):
        for name in ("m1", "m2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"two_spike: {name} must be a positive integer")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("two_spike: rho must lie in [0, 1]")
        self._build()

    def _table(self):
        mass: dict[int, float] = {}
        mass[int(self.m1)] = mass.get(int(self.m1), 0.0) + 1.0 - self.rho
        mass[int(self.m2)] = mass.get(int(self.m2), 0.0) + self.rho
        keys = sorted(mass)
        return keys, [mass[k] for k in keys]

    def to_dict(self):
        return {"kind": self.kind, "m1": int(self.m1), "m2": int(self.m2), "rho": float(self.rho)}


@dataclass(frozen=True)
class ZeroTruncatedPoisson(SizeDistribution):
    """Poisson(lam) conditioned on m >= 1."""

    lam: float
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
    kind: str = field(default="poisson", init=False, repr=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("poisson: lambda must be positive")
        self._build()

    def _table(self):
        law = stats.poisson(self.lam)
        return _cut_table(law, 1, 2**62, math.exp(-self.lam), self.tail_tolerance)

    def to_dict(self):
        return {"kind": self.kind, "lambda": float(self.lam)}


@dataclass(frozen=True)
class UniformOdd(SizeDistribution):
    """Uniform on {1, ..., 2*lam - 1}; non-integer upper ends are floored."""

    lam: float
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
    kind: str = field(default="uniform", init=False, repr=False)

    def __post_init__(self):
        if not self.lam >= 1:
            raise ValueError("uniform: lambda must be >= 1")
        self._build()

    @property
    def top(self) -> int:
        return max(1, int(math.floor(2 * self.lam - 1 + 1e-9)))

    def _table(self):
        k = self.top
        return np.arange(1, k + 1), np.full(k, 1.0 / k)

    def to_dict(self):
        return {"kind": self.kind, "lambda": float(self.lam)}


@dataclass(frozen=True)
class TruncatedBinomial(SizeDistribution):
    """Binomial(trials, lam / trials) conditioned on m >= 1."""

    lam: float
    trials: int = 1000
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
    kind: str = field(default="binomial", init=False, repr=False)

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("binomial: trials must be a positive integer")
        if not 0 < self.lam <= self.trials:
            raise ValueError("binomial: lambda must lie in (0, trials]")
        self._build()

    def _table(self):
        p = self.lam / self.trials
        law = stats.binom(int(self.trials), p)
        zero = (1.0 - p) ** self.trials
        return _cut_table(law, 1, int(self.trials), zero, self.tail_tolerance)

    def to_dict(self):
        return {"kind": self.kind, "lambda": float(self.lam), "trials": int(self.trials)}


_SIZE_KINDS: dict[str, tuple[type, dict[str, str], set[str]]] = {
    # kind -> (class, json key -> attribute, required keys)
    "point_mass": (PointMass, {"m": "m"}, {"m"}),
    "two_spike": (TwoSpike, {"m1": "m1", "m2": "m2", "rho": "rho"}, {"m1", "m2", "rho"}),
    "poisson": (ZeroTruncatedPoisson, {"lambda": "lam"}, {"lambda"}),
    "uniform": (UniformOdd, {"lambda": "lam"}, {"lambda"}),
    "binomial": (TruncatedBinomial, {"lambda": "lam", "trials": "trials"}, {"lambda"}),
}


def _from_dict(spec: dict[str, Any], table, what: str):
    if not isinstance(spec, dict):
        raise ValueError(f"{what} must be a JSON object")
    kind = spec.get("kind")
    if kind not in table:
        raise ValueError(f"unknown {what} kind {kind!r}; expected one of {sorted(table)}")
    cls, keymap, required = table[kind]
    extra = set(spec) - set(keymap) - {"kind", "tail_tolerance"}
    if extra:
        raise ValueError(f"{what} {kind}: unknown keys {sorted(extra)}")
    missing = required - set(spec)
    if missing:
        raise ValueError(f"{what} {kind}: missing keys {sorted(missing)}")
    kwargs = {keymap[k]: v for k, v in spec.items() if k in keymap}
    if "tail_tolerance" in spec:
        kwargs["tail_tolerance"] = float(spec["tail_tolerance"])
    return cls(**kwargs)


def size_distribution_from_dict(spec: dict[str, Any]) -> SizeDistribution:
    """Build a size law from e.g. ``{"kind": "two_spike", "m1": 1, "m2": 100, "rho": 0.5}``."""
    return _from_dict(spec, _SIZE_KINDS, "size distribution")


# ---------------------------------------------------------------------------
# Data laws on [-1, 1]


class DataDistribution:
    kind: str = ""

    @property
    def true_mean(self) -> float:
        raise NotImplementedError

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_means(self, ms: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Empirical means of ``ms[u]`` i.i.d. draws, one per entry of ``ms``."""
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class TwoPoint(DataDistribution):
    """Law on {-1, 1} with P(1) = (1 + theta) / 2."""

    theta: float
    kind: str = field(default="two_point", init=False, repr=False)

    def __post_init__(self):
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError("two_point: theta must lie in [-1, 1]")

    @property
    def true_mean(self):
        return float(self.theta)

    def sample(self, size, rng):
        return np.where(rng.random(size) < 0.5 * (1 + self.theta), 1.0, -1.0)

    def sample_means(self, ms, rng):
        # sum of m signs is 2B - m with B ~ Binomial(m, P(1)): O(1) per user
        ms = np.asarray(ms, dtype=np.int64)
        b = rng.binomial(ms, 0.5 * (1 + self.theta))
        return (2.0 * b - ms) / ms

    def to_dict(self):
        return {"kind": self.kind, "theta": float(self.theta)}


@dataclass(frozen=True)
class UniformInterval(DataDistribution):
    """Uniform on [lo, hi] within [-1, 1].

    Empirical means are exact sums of draws, so cost is linear in sum(ms).
    """

    lo: float
    hi: float
    kind: str = field(default="uniform", init=False, repr=False)

    def __post_init__(self):
        if not -1.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError("uniform: need -1 <= lo <= hi <= 1")

    @property
    def true_mean(self):
        return 0.5 * (self.lo + self.hi)

    def sample(self, size, rng):
        return rng.uniform(self.lo, self.hi, size)

    def sample_means(self, ms, rng):
        ms = np.asarray(ms, dtype=np.int64)
        out = np.empty(ms.size)
        start = 0
        while start < ms.size:
            # group users so that each draw stays below the chunk size
            csum = np.cumsum(ms[start:])
            stop = start + max(1, int(np.searchsorted(csum, _UNIFORM_CHUNK, side="right")))
            block = ms[start:stop]
            draws = rng.uniform(self.lo, self.hi, int(block.sum()))
            offsets = np.concatenate(([0], np.cumsum(block)[:-1]))
            out[start:stop] = np.add.reduceat(draws, offsets) / block
            start = stop
        return np.clip(out, -1.0, 1.0)

    def to_dict(self):
        return {"kind": self.kind, "lo": float(self.lo), "hi": float(self.hi)}


@dataclass(frozen=True)
class DataPointMass(DataDistribution):
    """Deterministic data: every sample equals ``x``."""

    x: float
    kind: str = field(default="point_mass", init=False, repr=False)

    def __post_init__(self):
        if not -1.0 <= self.x <= 1.0:
            raise ValueError("point_mass: x must lie in [-1, 1]")

    @property
    def true_mean(self):
        return float(self.x)

    def sample(self, size, rng):
        return np.full(size, float(self.x))

    def sample_means(self, ms, rng):
        return np.full(np.shape(ms), float(self.x))

    def to_dict(self):
        return {"kind": self.kind, "x": float(self.x)}


_DATA_KINDS = {
    "two_point": (TwoPoint, {"theta": "theta"}, {"theta"}),
    "uniform": (UniformInterval, {"lo": "lo", "hi": "hi"}, {"lo", "hi"}),
    "point_mass": (DataPointMass, {"x": "x"}, {"x"}),
}


def data_distribution_from_dict(spec: dict[str, Any]) -> DataDistribution:
    """Build a data law from e.g. ``{"kind": "two_point", "theta": 0}``."""
    return _from_dict(spec, _DATA_KINDS, "data distribution")


def sample_empirical_mean(mu: DataDistribution, m: int, rng: np.random.Generator) -> float:
    """Mean of ``m`` i.i.d. draws from ``mu``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return float(mu.sample_means(np.asarray([m]), rng)[0])


# ---------------------------------------------------------------------------
# Users


@dataclass(frozen=True)
class UserDataset:
    """A user's data in sufficient-statistic form: size and empirical mean."""

    m: int
    empirical_mean: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not -1.0 <= self.empirical_mean <= 1.0:
            raise ValueError("empirical_mean must lie in [-1, 1]")


@dataclass(frozen=True)
class UserBatch:
    """Column-wise storage for many users, used by the simulators."""

    sizes: np.ndarray
    means: np.ndarray

    def __len__(self) -> int:
        return int(self.sizes.size)

    def __getitem__(self, key) -> "UserBatch":
        return UserBatch(self.sizes[key], self.means[key])

    @classmethod
    def from_users(cls, users) -> "UserBatch":
        if isinstance(users, UserBatch):
            return users
        users = list(users)
        return cls(
            np.asarray([u.m for u in users], dtype=np.int64),
            np.asarray([u.empirical_mean for u in users], dtype=float),
        )

    def users(self) -> list[UserDataset]:
        return [UserDataset(int(m), float(x)) for m, x in zip(self.sizes, self.means)]


def draw_users(
    size_dist: SizeDistribution, data_dist: DataDistribution, n: int, rng: np.random.Generator
) -> UserBatch:
    """n users from the generative model: m_u ~ M, then X^(u) | m_u ~ mu^m_u."""
    sizes = size_dist.sample(n, rng)
    return UserBatch(sizes, data_dist.sample_means(sizes, rng))

"""Distribution-aware mean estimation under user-level local differential privacy."""

from .bounds import (
    BoundConstants,
    NumericError,
    lower_bound,
    phi,
    psi,
    solve_m_tilde,
    toy_regimes,
    two_point_divergences,
    upper_bound,
)
from .distributions import (
    DataPointMass,
    PointMass,
    TruncatedBinomial,
    TwoPoint,
    TwoSpike,
    UniformInterval,
    UniformOdd,
    UserBatch,
    UserDataset,
    ZeroTruncatedPoisson,
    draw_users,
    sample_empirical_mean,
)
from .experiments import RiskEstimate, Scenario, baseline_duchi, baseline_kent, estimate_risk
from .mechanisms import (
    PrivacyBudget,
    audit_laplace_privacy,
    audit_rr_privacy,
    keep_probability,
    laplace_noise,
    randomized_response,
)
from .protocol import BinPartition, CandidateBin, ProtocolTranscript, compute_tau, run_dame

__version__ = "0.1.0"

__all__ = [
    "BinPartition", "BoundConstants", "CandidateBin", "DataPointMass", "NumericError", "PointMass",
    "PrivacyBudget", "ProtocolTranscript", "RiskEstimate", "Scenario", "TruncatedBinomial", "TwoPoint",
    "TwoSpike", "UniformInterval", "UniformOdd", "UserBatch", "UserDataset", "ZeroTruncatedPoisson",
    "audit_laplace_privacy", "audit_rr_privacy", "baseline_duchi", "baseline_kent", "compute_tau",
    "draw_users", "estimate_risk", "keep_probability", "laplace_noise", "lower_bound", "phi", "psi",
    "randomized_response", "run_dame", "sample_empirical_mean", "solve_m_tilde", "toy_regimes",
    "two_point_divergences", "upper_bound",
]

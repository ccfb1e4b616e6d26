import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dame.distributions import (
    PointMass,
    TwoPoint,
    TwoSpike,
    UserBatch,
    UserDataset,
    ZeroTruncatedPoisson,
    draw_users,
)
from dame.mechanisms import audit_laplace_privacy
from dame.protocol import (
    ENLARGE,
    SENSITIVITY_FACTOR,
    BinPartition,
    CandidateBin,
    candidate_for_bin,
    compute_tau,
    debias,
    elect_candidate,
    localisation_vote,
    noisy_release,
    run_dame,
    shrink_estimate,
    user_shrink,
    user_votes,
)


def test_tau_examples():
    assert compute_tau(1, 1, 1.0) == pytest.approx(2.0393339803376179, rel=1e-14)
    assert BinPartition(compute_tau(1, 1, 1.0)).bin_count == 1
    tau = compute_tau(100, 500, 1.0)
    assert tau == pytest.approx(float(oracles.tau(100, 500, 1.0)), rel=1e-14)
    assert tau == pytest.approx(0.3870, abs=1e-4)
    assert BinPartition(tau).bin_count == 3


@given(m=st.integers(1, 10**7), n=st.integers(2, 10**6), alpha=st.floats(1e-3, 5.0))
def test_tau_keeps_failure_probability_small(m, n, alpha):
    tau = compute_tau(m, n, alpha)
    assert math.exp(-m * tau * tau / 2) <= 1 / 8 + 1e-15


def test_tau_rejects_bad_inputs():
    with pytest.raises(ValueError):
        compute_tau(0, 10, 1.0)
    with pytest.raises(ValueError):
        compute_tau(1, 0, 1.0)


@pytest.mark.parametrize("tau", [2.0, 0.5, 0.3, 0.25, 0.0371, 0.01])
def test_bins_cover_interval_exactly_once(tau):
    part = BinPartition(tau)
    assert part.bin_count == math.ceil(1 / tau)
    assert part.lowers[0] == -1.0 and part.uppers[-1] == 1.0
    rng = np.random.default_rng(0)
    xs = np.concatenate([rng.uniform(-1, 1, 1000), [-1.0, 1.0], part.lowers])
    for x in xs:
        hits = [j for j in range(part.bin_count) if part.contains(j, x)]
        assert hits == [int(part.index_of(x))]


def test_vote_examples():
    part = BinPartition(0.25)
    assert part.bin_count == 4
    np.testing.assert_array_equal(localisation_vote(UserDataset(10, 0.1), part, 10), [0, 1, 1, 1])
    np.testing.assert_array_equal(localisation_vote(UserDataset(10, -0.9), part, 10), [1, 1, 0, 0])
    np.testing.assert_array_equal(localisation_vote(UserDataset(9, 0.1), part, 10), [0, 0, 0, 0])
    np.testing.assert_array_equal(localisation_vote(UserDataset(10, 1.0), part, 10), [0, 0, 1, 1])


@settings(max_examples=200, deadline=None)
@given(tau=st.floats(0.01, 1.5), theta=st.floats(-1, 1), offset=st.floats(-1, 1))
def test_edge_vote_safety(tau, theta, offset):
    part = BinPartition(tau)
    x = float(np.clip(theta + offset * tau, -1, 1))
    votes = user_votes(np.array([5]), np.array([x]), part, 5)[0]
    assert votes[part.index_of(theta)] == 1
    assert votes.sum() <= 3


def test_election_examples():
    part = BinPartition(0.25)
    votes = np.zeros((19, 4), dtype=np.int8)
    counts = (3, 7, 7, 2)
    row = 0
    for j, c in enumerate(counts):
        votes[row:row + c, j] = 1
        row += c
    assert elect_candidate(votes, part).index == 1

    single = BinPartition(3.0)
    cand = elect_candidate(np.zeros((5, 1), dtype=np.int8), single)
    assert (cand.index, cand.lower, cand.upper) == (0, -1.0, 1.0)

    cand = candidate_for_bin(part, 2)
    assert (cand.midpoint, cand.lower, cand.upper) == (0.25, -1.0, 1.0)
    with pytest.raises(ValueError):
        elect_candidate(np.zeros((0, 4)), part)
    with pytest.raises(ValueError):
        elect_candidate(np.zeros((3, 5)), part)


@pytest.mark.parametrize("tau", [1.2, 0.3, 0.05, 0.0123])
def test_candidate_sensitivity_invariant(tau):
    part = BinPartition(tau)
    for j in range(part.bin_count):
        c = candidate_for_bin(part, j)
        assert -1 <= c.lower <= c.midpoint <= c.upper <= 1
        assert c.upper - c.lower <= SENSITIVITY_FACTOR * tau + 1e-12
        assert audit_laplace_privacy(SENSITIVITY_FACTOR * tau / 0.6, SENSITIVITY_FACTOR * tau) == pytest.approx(0.6)


def test_shrink_examples():
    cand = CandidateBin(0, -1.0, 1.0, 0.5)
    assert shrink_estimate(UserDataset(1, -1.0), cand, 4) == pytest.approx(-0.25)
    assert shrink_estimate(UserDataset(9, 0.37), cand, 4) == 0.37
    assert shrink_estimate(UserDataset(1, 0.5), cand, 100) == 0.5


@settings(max_examples=200, deadline=None)
@given(m_tilde=st.integers(1, 10**5), frac=st.floats(0, 1), n=st.integers(2, 10**5),
       u=st.floats(-1, 1), s=st.floats(-0.9, 0.9))
def test_shrinkage_containment(m_tilde, frac, n, u, s):
    m = max(1, int(frac * m_tilde))
    alpha = 0.6
    tau = compute_tau(m_tilde, n, alpha)
    radius = math.sqrt(2 * math.log(8 * max(math.sqrt(m_tilde * n * alpha**2), 1))) / math.sqrt(m) \
        + 5 * tau * math.sqrt(m / m_tilde)
    x = float(np.clip(s + u * radius, -1, 1))
    shrunk = user_shrink(np.array([m]), np.array([x]), s, m_tilde)[0]
    assert abs(shrunk - s) <= 6 * tau * (1 + 1e-12)


def test_noisy_release_suppressed_and_clamped():
    cand = CandidateBin(1, -0.5, 1.0, 0.25)
    rng = np.random.default_rng(0)
    assert noisy_release(0.3, cand, 0.1, 0.6, rng, add_noise=False) == 0.3
    assert noisy_release(2.0, cand, 0.1, 0.6, rng, add_noise=False) == 1.0
    assert noisy_release(-0.9, cand, 0.1, 0.6, rng, add_noise=False) == -0.5


def test_noisy_release_variance():
    tau, alpha = 0.387, 0.6
    cand = CandidateBin(1, -1.0, 1.0, 0.0)
    rng = np.random.default_rng(1)
    out = noisy_release(np.full(100_000, 0.2), cand, tau, alpha, rng)
    target = 2 * (14 * tau / alpha) ** 2
    assert target == pytest.approx(163.1, abs=0.1)
    assert abs((out - 0.2).var() / target - 1) <= 0.02


def test_debias_examples():
    cand = CandidateBin(2, -1.0, 1.0, 0.25)
    assert debias(0.3, cand, PointMass(4), 4) == pytest.approx(0.3)
    dist = TwoSpike(1, 100, 0.5)
    theta_bar = (5.5 * 0.2 + 4.5 * 0.25) / 10
    assert debias(theta_bar, cand, dist, 100) == pytest.approx(0.2, abs=1e-15)
    assert debias(0.123, cand, ZeroTruncatedPoisson(5.0), 1) == 0.123


def test_run_dame_degenerate_pipeline():
    users = [UserDataset(7, 0.3), UserDataset(7, 0.3)]
    t = run_dame(users, PointMass(7), 1.0, 1, np.random.default_rng(0), non_private=True)
    assert t.final_estimate == pytest.approx(0.3)
    assert t.candidate.lower == -1.0 and t.candidate.upper == 1.0


def test_run_dame_noise_free_recovers_constant_data():
    # releasers hold the size law's exact proportions, so the debias step is exact
    dist = TwoSpike(1, 100, 0.5)
    sizes = np.tile([1, 100], 200)
    users = UserBatch(sizes, np.full(400, -0.3))
    t = run_dame(users, dist, 0.6, 100, np.random.default_rng(1), non_private=True)
    assert t.final_estimate == pytest.approx(-0.3, abs=1e-12)


def test_transcript_split_and_contents():
    rng = np.random.default_rng(2)
    batch = draw_users(TwoSpike(5, 50, 0.5), TwoPoint(0.1), 1000, rng)
    t = run_dame(batch, TwoSpike(5, 50, 0.5), 0.6, None, rng)
    assert t.privatized_votes.shape[0] == 500
    assert t.noisy_estimates.shape == (500,)
    d = t.to_dict()
    assert set(d) >= {"privatized_votes", "noisy_estimates", "candidate", "final_estimate"}
    # the estimate is a function of the released messages and public parameters only
    again = debias(float(np.mean(t.noisy_estimates)), t.candidate, TwoSpike(5, 50, 0.5), t.m_tilde)
    assert again == t.final_estimate


def test_odd_n_drops_last_user():
    rng = np.random.default_rng(3)
    batch = draw_users(PointMass(10), TwoPoint(0.0), 1001, rng)
    t = run_dame(batch, PointMass(10), 0.6, 10, rng)
    assert t.privatized_votes.shape[0] == 500
    assert t.noisy_estimates.size == 500
    assert t.n == 1000


def test_run_dame_needs_two_users():
    with pytest.raises(ValueError):
        run_dame([UserDataset(1, 0.0)], PointMass(1), 0.6, 1, np.random.default_rng(0))


def test_abstaining_users_send_zero_vectors_before_noise():
    part = BinPartition(0.1)
    votes = user_votes(np.array([1, 2, 3, 10]), np.array([0.0, 0.5, -0.5, 0.2]), part, 3)
    assert votes[0].sum() == 0 and votes[1].sum() == 0
    assert votes[2].sum() == 3 and votes[3].sum() == 3


def test_forced_success_debias_is_unbiased():
    theta = 0.3
    dist = TwoSpike(1, 100, 0.5)
    n, alpha, m_tilde = 2000, 0.6, 100
    part = BinPartition(compute_tau(m_tilde, n, alpha))
    j = int(part.index_of(theta))
    est = []
    for t in range(2000):
        rng = np.random.default_rng([11, t])
        users = UserBatch(dist.sample(n, rng), np.full(n, theta))
        est.append(run_dame(users, dist, alpha, m_tilde, rng, forced_bin=j).final_estimate)
    est = np.array(est)
    assert abs(est.mean() - theta) <= 5 * est.std(ddof=1) / math.sqrt(est.size)


def test_projection_enlargement_constant():
    part = BinPartition(0.05)
    c = candidate_for_bin(part, 10)
    assert c.lower == pytest.approx(part.lowers[10] - ENLARGE * 0.05)
    assert c.upper == pytest.approx(part.uppers[10] + ENLARGE * 0.05)

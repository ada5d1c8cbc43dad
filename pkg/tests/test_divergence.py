import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from caml.divergence import (
    DistanceMatrix, EmptySupportError, Kde, MIN_BANDWIDTH, fit_kde, js_divergence, kde_density,
    kde_sample, pairwise_divergence, pooled_kde, scott_bandwidth,
)
from caml.env import make_population
from caml.policy import Trajectory, collect_trajectory, forward, init_params

LN2 = math.log(2.0)


def random_setup(seed, n=3, T=19, layout=(2, 8, 4)):
    rng = np.random.default_rng(seed)
    policies = [init_params(int(rng.integers(1 << 30)), layout) for _ in range(n)]
    trajs = [Trajectory(rng.normal(scale=1.5, size=(T + 1, 2)), rng.integers(0, 4, T), -np.ones(T), i)
             for i in range(n)]
    return policies, trajs


def naive_density(points, h, s):
    total = 0.0
    for px, py in points:
        d2 = (s[0] - px) ** 2 + (s[1] - py) ** 2
        total += math.exp(-d2 / (2 * h * h)) / (2 * math.pi * h * h)
    return total / len(points)


def naive_js(p, q):
    sp, sq = sum(p), sum(q)
    p = [x / sp for x in p]
    q = [x / sq for x in q]
    out = 0.0
    for a, b in zip(p, q):
        m = (a + b) / 2
        if a > 0:
            out += a * (math.log(a) - math.log(m))
        if b > 0:
            out += b * (math.log(b) - math.log(m))
    return out


def naive_bandwidth(points):
    n = len(points)
    var = 0.0
    for axis in (0, 1):
        mu = sum(p[axis] for p in points) / n
        var += sum((p[axis] - mu) ** 2 for p in points) / (n - 1)
    return max(n ** (-1 / 6) * math.sqrt(var / 2), 1e-3)


def naive_pairwise(policies, trajs, states):
    """Direct loops over policies, states, kernels and actions."""
    own = [(t.states.tolist(), naive_bandwidth(t.states.tolist())) for t in trajs]
    pooled = [p for t in trajs for p in t.states.tolist()]
    h_pool = naive_bandwidth(pooled)
    n = len(policies)
    D = [[0.0] * n for _ in range(n)]
    for s in states:
        w = naive_density(pooled, h_pool, s)
        rho = []
        for pol, (pts, h) in zip(policies, own):
            dens = max(naive_density(pts, h, s), 1e-300)
            rho.append([pa * dens for pa in forward(pol, s)])
        for i in range(n):
            for j in range(n):
                if i != j:
                    D[i][j] += naive_js(rho[i], rho[j]) * w
    return np.array(D)


# -- KDE ----------------------------------------------------------------------

def test_single_point_peak():
    kde = Kde(np.zeros((1, 2)), 1.0)
    assert kde_density(kde, [0.0, 0.0]) == pytest.approx(1 / (2 * math.pi), rel=1e-15)


def test_empty_support():
    with pytest.raises(EmptySupportError):
        fit_kde(np.zeros((0, 2)))


def test_scott_rule():
    pts = np.random.default_rng(0).normal(size=(50, 2))
    assert scott_bandwidth(pts) == pytest.approx(naive_bandwidth(pts.tolist()), rel=1e-12)
    assert fit_kde(pts).bandwidth == scott_bandwidth(pts)
    assert fit_kde(np.ones((4, 2))).bandwidth == MIN_BANDWIDTH


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_density_integrates_to_one(seed):
    pts = np.random.default_rng(seed).normal(size=(7, 2))
    kde = fit_kde(pts)
    h = kde.bandwidth
    lo, hi = pts.min(axis=0) - 5 * h, pts.max(axis=0) + 5 * h
    xs = np.linspace(lo[0], hi[0], 400)
    ys = np.linspace(lo[1], hi[1], 400)
    grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    dens = kde_density(kde, grid).reshape(len(ys), len(xs))
    mass = np.trapezoid(np.trapezoid(dens, xs, axis=1), ys)
    assert abs(mass - 1) < 1e-2


def test_duplicated_points_same_density():
    pts = np.random.default_rng(1).normal(size=(5, 2))
    a, b = Kde(pts, 0.4), Kde(np.concatenate([pts, pts]), 0.4)
    q = np.random.default_rng(2).normal(size=(20, 2))
    np.testing.assert_allclose(kde_density(a, q), kde_density(b, q), rtol=1e-13)


def test_far_query():
    kde = Kde(np.zeros((3, 2)), 0.5)
    d = kde_density(kde, [50.0, 0.0])
    assert 0 <= d < 1e-30


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_density_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(int(rng.integers(1, 12)), 2))
    kde = fit_kde(pts)
    for s in rng.normal(size=(5, 2)):
        ref = naive_density(pts.tolist(), kde.bandwidth, s)
        assert abs(kde_density(kde, s) - ref) <= 1e-12 * max(1.0, ref)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_density_decreases_away_from_support(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(4, 2))
    kde = fit_kde(pts)
    p = pts[0]
    q = rng.normal(scale=3, size=2)
    assume(all(np.linalg.norm(q - x) >= np.linalg.norm(p - x) for x in pts))
    assert kde_density(kde, q) <= kde_density(kde, p)


def test_sample_concentrates_with_small_bandwidth():
    pts = np.random.default_rng(3).normal(size=(10, 2))
    kde = Kde(pts, MIN_BANDWIDTH)
    s = kde_sample(kde, 5000, np.random.default_rng(0))
    nearest = np.min(np.linalg.norm(s[:, None] - pts[None], axis=2), axis=1)
    assert np.mean(nearest < 0.01) > 0.99


def test_sample_mean_clt():
    pts = np.random.default_rng(4).normal(size=(6, 2))
    kde = fit_kde(pts)
    N = 100_000
    s = kde_sample(kde, N, np.random.default_rng(1))
    se = np.sqrt((pts.var(axis=0) + kde.bandwidth ** 2) / N)
    assert np.all(np.abs(s.mean(axis=0) - pts.mean(axis=0)) < 3 * se)


def test_sample_seeded():
    kde = fit_kde(np.random.default_rng(5).normal(size=(6, 2)))
    a = kde_sample(kde, 50, np.random.default_rng(7))
    b = kde_sample(kde, 50, np.random.default_rng(7))
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        kde_sample(kde, 0, np.random.default_rng(7))


# -- Jensen-Shannon -------------------------------------------------------------

probs = st.lists(st.floats(0, 10, allow_nan=False), min_size=4, max_size=4).filter(lambda v: sum(v) > 1e-6)


def test_js_constants():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert js_divergence(p, p) == 0.0
    assert abs(js_divergence([1, 0, 0, 0], [0, 1, 0, 0]) - 2 * LN2) <= 1e-12


@given(probs, probs)
def test_js_symmetric_and_bounded(p, q):
    a, b = js_divergence(p, q), js_divergence(q, p)
    assert a == b
    assert -1e-15 <= a <= 2 * LN2 + 1e-12
    assert a == pytest.approx(naive_js(p, q), abs=1e-12)


@given(probs, probs)
def test_js_unnormalized_nonnegative(p, q):
    assert js_divergence(p, q, normalize=False) >= -1e-12


def test_js_rejects_negative():
    with pytest.raises(ValueError):
        js_divergence([0.5, -0.1, 0.3, 0.3], [0.25] * 4)


def test_js_vectorised():
    rng = np.random.default_rng(0)
    P, Q = rng.random((5, 4)), rng.random((5, 4))
    np.testing.assert_allclose(js_divergence(P, Q), [js_divergence(p, q) for p, q in zip(P, Q)])


# -- pairwise divergence -------------------------------------------------------------

def check_matrix(D):
    E = D.entries
    assert np.array_equal(E, E.T)
    assert np.all(np.diag(E) == 0)
    assert np.all(E >= 0)


def test_identical_policy_pair_zero():
    pols, trajs = random_setup(0, n=2)
    pols[1], trajs[1] = pols[0], Trajectory(trajs[0].states, trajs[0].actions, trajs[0].rewards, 1)
    D = pairwise_divergence(pols, trajs, 50, np.random.default_rng(0))
    assert D.entries[0, 1] == 0.0


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("normalize", [True, False])
def test_matches_naive_reference(seed, normalize):
    pols, trajs = random_setup(seed)
    states = np.random.default_rng(seed + 100).normal(scale=1.5, size=(30, 2))
    D = pairwise_divergence(pols, trajs, states=states)
    ref = naive_pairwise(pols, trajs, states)
    np.testing.assert_allclose(D.entries, ref, rtol=1e-10, atol=1e-12)
    check_matrix(D)


def test_sampled_states_come_from_pooled_kde():
    pols, trajs = random_setup(3)
    rng_a, rng_b = np.random.default_rng(11), np.random.default_rng(11)
    D = pairwise_divergence(pols, trajs, 40, rng_a)
    states = kde_sample(pooled_kde(trajs), 40, rng_b)
    np.testing.assert_allclose(D.entries, naive_pairwise(pols, trajs, states), rtol=1e-10)


def test_permutation_equivariance():
    pols, trajs = random_setup(5, n=4)
    perm = [2, 0, 3, 1]
    D = pairwise_divergence(pols, trajs, 60, np.random.default_rng(3)).entries
    Dp = pairwise_divergence([pols[i] for i in perm], [trajs[i] for i in perm], 60,
                             np.random.default_rng(3)).entries
    assert np.array_equal(Dp, D[np.ix_(perm, perm)])


def test_deterministic_and_valid():
    pols, trajs = random_setup(6, n=5)
    a = pairwise_divergence(pols, trajs, 80, np.random.default_rng(1))
    b = pairwise_divergence(pols, trajs, 80, np.random.default_rng(1))
    assert np.array_equal(a.entries, b.entries)
    check_matrix(a)
    check_matrix(pairwise_divergence(pols, trajs, 80, np.random.default_rng(1), normalize=False))
    check_matrix(pairwise_divergence(pols, trajs, 80, np.random.default_rng(1), weighting="uniform"))


def test_input_errors():
    pols, trajs = random_setup(0)
    with pytest.raises(ValueError):
        pairwise_divergence(pols, trajs[:2])
    with pytest.raises(ValueError):
        pairwise_divergence(pols, trajs, 0)
    with pytest.raises(ValueError):
        pairwise_divergence(pols, trajs, 5, weighting="bogus")


def test_per_state_terms_bounded():
    pols, trajs = random_setup(7)
    states = kde_sample(pooled_kde(trajs), 200, np.random.default_rng(0))
    D = pairwise_divergence(pols, trajs, states=states, weighting="uniform")
    assert np.all(D.entries <= 2 * LN2 + 1e-12)


def test_distance_matrix_csv_roundtrip():
    E = np.array([[0, 1.5, 2.25], [1.5, 0, 0.1], [2.25, 0.1, 0]])
    D = DistanceMatrix((7, 3, 5), E)
    text = D.to_csv()
    assert text.splitlines()[0] == "id,3,5,7"
    back = DistanceMatrix.from_csv(text)
    assert back.ids == (3, 5, 7)
    assert back.entries[0, 1] == 0.1 and back.entries[1, 2] == 2.25 and back.entries[0, 2] == 1.5


def test_distance_matrix_validation():
    with pytest.raises(ValueError):
        DistanceMatrix((0, 1), np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValueError):
        DistanceMatrix((0, 1), np.array([[1, 1], [1, 0]]))


def test_monte_carlo_stability_on_population():
    """Doubling the comparison sample barely moves the max-normalized distances."""
    from caml.config import ExperimentConfig
    from caml.policy import TrainConfig, train_vpg
    pop = make_population(6, 4, 0.5, seed=0)
    cfg = TrainConfig()
    theta = init_params(0)
    pols, trajs = [], []
    for e in pop:
        rng = np.random.default_rng([0, e.id])
        p = train_vpg(theta, e, cfg, 40, rng)
        pols.append(p)
        trajs.append(collect_trajectory(p, e, rng, cfg.env))
    a = pairwise_divergence(pols, trajs, 100, np.random.default_rng(1)).entries
    b = pairwise_divergence(pols, trajs, 200, np.random.default_rng(2)).entries
    iu = np.triu_indices(len(pop), 1)
    change = np.abs(a[iu] / a.max() - b[iu] / b.max())
    assert np.median(change) < 0.1

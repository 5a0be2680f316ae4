import itertools
import math
import warnings

import numpy as np
import pytest

from ineq_uq.errors import ValidationError
from ineq_uq.microdata import MicrodataSet, synthetic_implicates
from ineq_uq.topshare import ShareQuery
from ineq_uq.uncertainty import (
    Z95,
    ClusterAssignment,
    ReplicateSet,
    StratumProfile,
    bootstrap_share,
    combined_error,
    confidence_interval,
    default_assignment,
    gower_distance,
    gower_matrix,
    imputation_error,
    make_replicates,
    pam_cluster,
    percentile_interval,
    replicate_top_shares,
    sampling_error,
    sampling_ratio,
    select_cluster_count,
    silhouette_widths,
)
from ineq_uq.uncertainty.clustering import pam


def P(i, rank, flag=0, code=0, size=10):
    return StratumProfile(i, size, rank, flag, code)


# -- Gower / PAM / silhouette --------------------------------------------------


def test_gower_examples():
    assert gower_distance(P(1, 3, 1, 0), P(2, 3, 1, 0), 5) == 0.0
    assert gower_distance(P(1, 1, 0, 0), P(2, 5, 1, 1), 5) == pytest.approx(1.0)
    assert gower_distance(P(1, 2), P(2, 4), 5) == pytest.approx(1 / 6)


def test_gower_rank_out_of_range():
    with pytest.raises(ValidationError):
        gower_distance(P(1, 6), P(2, 1), 5)


def test_gower_matrix_is_semimetric(rng):
    strata = [P(i, int(rng.integers(1, 9)), int(rng.integers(0, 2)), int(rng.integers(0, 3))) for i in range(30)]
    D = gower_matrix(strata, 8)
    np.testing.assert_allclose(D, D.T)
    assert np.all(np.diag(D) == 0)
    assert D.min() >= 0 and D.max() <= 1
    for i, j in [(0, 1), (5, 17), (29, 3)]:
        assert D[i, j] == pytest.approx(gower_distance(strata[i], strata[j], 8))


def test_pam_one_cluster_per_stratum():
    strata = [P(i, i) for i in range(1, 6)]
    a = pam_cluster(strata, 5)
    assert a.cost == 0.0
    assert len(set(a.cluster_of.values())) == 5


def _brute_force_cost(D, k):
    n = len(D)
    return min(D[:, list(m)].min(axis=1).sum() for m in itertools.combinations(range(n), k))


def test_pam_recovers_separated_groups():
    strata = [P(i, 1 + i % 2, 0, 0) for i in range(1, 6)] + [P(i, 7 + i % 2, 1, 2) for i in range(6, 11)]
    a = pam_cluster(strata, 2)
    left = {a.cluster_of[i] for i in range(1, 6)}
    right = {a.cluster_of[i] for i in range(6, 11)}
    assert len(left) == 1 and len(right) == 1 and left != right
    # exhaustive search over all 2-medoid choices
    D = gower_matrix(strata, 8)
    assert a.cost == pytest.approx(_brute_force_cost(D, 2))


def test_pam_cost_non_increasing_and_near_optimal(rng):
    strata = [P(i, int(rng.integers(1, 6)), int(rng.integers(0, 2)), int(rng.integers(0, 2))) for i in range(12)]
    D = gower_matrix(strata, 5)
    for k in (2, 3, 4):
        medoids, labels, cost, trace = pam(D, k)
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
        assert cost <= _brute_force_cost(D, k) * 1.15 + 1e-12


def test_pam_seed_has_no_effect(rng):
    strata = [P(i, int(rng.integers(1, 6)), int(rng.integers(0, 2)), 0) for i in range(15)]
    a, b = pam_cluster(strata, 3, seed=1), pam_cluster(strata, 3, seed=99)
    assert a.cluster_of == b.cluster_of and a.medoids == b.medoids


def test_silhouette_picks_three_groups():
    groups = [(1, 0, 0), (7, 1, 1), (13, 0, 1)]
    strata = [P(4 * g + j + 1, r + j, f, c) for g, (r, f, c) in enumerate(groups) for j in range(4)]
    a = select_cluster_count(strata, rank_range=16)
    assert a.n_clusters == 3
    assert max(a.silhouette_by_j, key=a.silhouette_by_j.get) == 3


def test_identical_strata_warn():
    with pytest.warns(UserWarning):
        a = select_cluster_count([P(i, 2, 1, 1) for i in range(1, 6)])
    assert a.n_clusters == 2


def test_silhouette_singletons_zero():
    D = np.array([[0, 1, 1], [1, 0, 0.2], [1, 0.2, 0]])
    s = silhouette_widths(D, np.array([0, 1, 1]))
    assert s[0] == 0.0
    assert s[1] == pytest.approx((1 - 0.2) / 1)


def test_assignment_json_roundtrip(tmp_path):
    a = pam_cluster([P(i, i % 4 + 1, i % 2) for i in range(1, 9)], 3)
    p = tmp_path / "a.json"
    a.save(p)
    import json

    b = ClusterAssignment.from_json(json.loads(p.read_text()))
    assert b.cluster_of == a.cluster_of and b.medoids == a.medoids


# -- replicates ---------------------------------------------------------------


def _toy(sizes):
    n = sum(sizes)
    strata = np.concatenate([np.full(s, j + 1) for j, s in enumerate(sizes)])
    return MicrodataSet(np.arange(n), np.ones(n), {"g": np.arange(1.0, n + 1)}, strata=strata)


def test_single_cluster_bounds():
    d = _toy([5])
    a = ClusterAssignment({1: 1}, 1, [1], 0.0)
    with pytest.warns(UserWarning):
        r = make_replicates(d, a, L=1, seed=0)
    assert r.indices.shape == (1, 5)
    assert r.indices.min() >= 0 and r.indices.max() <= 4


def test_cluster_sizes_respected():
    d = _toy([3, 7])
    a = ClusterAssignment({1: 1, 2: 2}, 2, [1, 2], 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = make_replicates(d, a, L=999, seed=3)
    assert np.all(np.isin(r.indices[:, :3], [0, 1, 2]))
    assert np.all(np.isin(r.indices[:, 3:], np.arange(3, 10)))
    counts = r.counts()
    assert np.all(counts.sum(axis=1) == 10)
    # multiplicity ~ Binomial(n_j, 1/n_j): mean 1, variance 1 - 1/n_j
    for i, nj in ((0, 3), (5, 7)):
        sd = math.sqrt((1 - 1 / nj) / 999)
        assert abs(counts[:, i].mean() - 1.0) < 3 * sd


def test_replicates_independent_of_threads(small_sample):
    a = default_assignment(small_sample)
    r1 = make_replicates(small_sample, a, L=40, seed=9, threads=1)
    r4 = make_replicates(small_sample, a, L=40, seed=9, threads=4)
    np.testing.assert_array_equal(r1.indices, r4.indices)
    # prefix stability: replicate l does not depend on L
    r2 = make_replicates(small_sample, a, L=10, seed=9)
    np.testing.assert_array_equal(r2.indices, r1.indices[:10])


def test_replicate_set_cache_roundtrip(tmp_path, small_sample):
    a = default_assignment(small_sample)
    r = make_replicates(small_sample, a, L=5, seed=2)
    r.save(tmp_path / "r.npz")
    back = ReplicateSet.load(tmp_path / "r.npz")
    np.testing.assert_array_equal(back.indices, r.indices)
    assert back.seed == 2
    assert [list(x) for x in back.cluster_rows] == [list(x) for x in r.cluster_rows]


def test_uncovered_stratum_rejected():
    d = _toy([40, 40])
    with pytest.raises(ValidationError):
        make_replicates(d, ClusterAssignment({1: 1}, 1, [1], 0.0), L=2)


def test_replicate_estimates_match_materialized(small_sample):
    a = default_assignment(small_sample)
    r = make_replicates(small_sample, a, L=6, seed=1)
    got = replicate_top_shares(small_sample, r, "income", 0.99)
    from ineq_uq.topshare import top_share

    for l in range(6):
        idx = r.indices[l]
        ref = top_share(small_sample.column("income")[idx], small_sample.weights[idx], 0.99, small_sample.ids[idx])
        assert got[l] == pytest.approx(ref, rel=1e-10)


def test_replicate_mean_near_point(small_sample):
    est = bootstrap_share(small_sample, ShareQuery("income", 0.9), L=999, seed=5)
    reps = est.replicate_estimates
    assert abs(reps.mean() - est.point) < 3 * est.sigma1 / math.sqrt(999)


# -- error formulas ------------------------------------------------------------


def test_sampling_error_examples(rng):
    assert sampling_error([0.3] * 10) == 0.0
    assert sampling_error([1.0, 3.0]) == pytest.approx(math.sqrt(2))
    s = sampling_error(rng.standard_normal(999))
    assert 0.9 <= s <= 1.1


def test_imputation_error_examples():
    assert imputation_error([0.4] * 5, 0.4) == 0.0
    assert imputation_error([0.38, 0.40, 0.42, 0.40, 0.40], 0.40) == pytest.approx(0.0141421356, abs=1e-9)
    with pytest.warns(UserWarning):
        assert imputation_error([0.4]) == 0.0
    with pytest.raises(ValidationError):
        imputation_error([0.38, 0.42], 0.5)


def test_combined_error():
    assert combined_error(0.03, 0.01, 5) == pytest.approx(0.0319374388, abs=1e-9)
    assert combined_error(0.0123, 0.0, 5) == 0.0123


@pytest.mark.parametrize("s1,s2,M", [(0.01, 0.02, 1), (0.0, 0.03, 5), (0.2, 0.001, 10)])
def test_combined_dominates_parts(s1, s2, M):
    s = combined_error(s1, s2, M)
    assert s >= s1 and s >= s2
    assert 0 < sampling_ratio(s1, s) <= 1 or s1 == 0


def test_intervals():
    assert confidence_interval(0.4, 0.0) == (0.4, 0.4)
    lo, hi = confidence_interval(0.39, 0.023)
    assert lo == pytest.approx(0.39 - Z95 * 0.023) and hi == pytest.approx(0.39 + Z95 * 0.023)
    assert (round(lo, 3), round(hi, 3)) == (0.345, 0.435)
    lo, hi = confidence_interval(0.39, 0.001)
    assert (round(lo, 3), round(hi, 3)) == (0.388, 0.392)
    lo, hi = percentile_interval(np.arange(1001) / 1000)
    assert lo == pytest.approx(0.025) and hi == pytest.approx(0.975)


# -- pipeline ------------------------------------------------------------------


def test_bootstrap_deterministic(small_sample):
    q = ShareQuery("income", 0.99)
    a = bootstrap_share(small_sample, q, L=50, seed=7)
    b = bootstrap_share(small_sample, q, L=50, seed=7, threads=3)
    assert a.to_json() == b.to_json()
    c = bootstrap_share(small_sample, q, L=50, seed=8)
    assert c.sigma1 != a.sigma1


def test_bootstrap_with_implicates(small_sample):
    mi = synthetic_implicates(small_sample, ["income"], 0.2, M=5, seed=3)
    est = bootstrap_share(mi, ShareQuery("income", 0.9), L=100, seed=1)
    assert est.M == 5 and len(est.per_implicate) == 5
    assert est.sigma2 == pytest.approx(imputation_error(est.per_implicate))
    assert est.sigma == pytest.approx(combined_error(est.sigma1, est.sigma2, 5))
    assert est.sigma >= est.sigma1
    j = est.to_json()
    for key in ("variable", "k", "point", "per_implicate", "sigma1", "sigma2", "sigma", "n", "N", "ci"):
        assert key in j


def test_profiles_drive_default_assignment(small_sample):
    a = default_assignment(small_sample)
    assert 2 <= a.n_clusters <= 31
    assert set(a.cluster_of) == set(np.unique(small_sample.strata).tolist())

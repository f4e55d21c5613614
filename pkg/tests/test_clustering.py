import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiermerge.clustering import (
    MergeMap,
    affinity_propagation,
    cluster_and_merge,
    compute_profiles,
    davies_bouldin,
    merge_within_type,
    net_similarity,
    silhouette_score,
    similarity_matrix,
)

from .oracles import best_exemplar_set, silhouette_by_definition


def test_profile_single_sample():
    (p,) = compute_profiles(np.array([[1.0, 2.0]]), [0])
    assert p.f.tolist() == [1.0, 2.0, 0.0, 0.0]


def test_profile_population_variance():
    (p,) = compute_profiles(np.array([[0.0, 0.0], [2.0, 0.0]]), [4, 4])
    assert p.item_label == 4 and p.sample_count == 2
    assert p.m.tolist() == [1.0, 0.0] and p.v.tolist() == [1.0, 0.0]


def test_profile_identical_samples_zero_variance():
    (p,) = compute_profiles(np.tile([3.0, -1.0, 2.0], (5, 1)), [0] * 5)
    assert np.array_equal(p.v, np.zeros(3))


def test_profile_label_count_mismatch():
    with pytest.raises(ValueError):
        compute_profiles(np.zeros((2, 2)), [0])


def test_profile_for_missing_item_fails():
    with pytest.raises(ValueError):
        compute_profiles(np.zeros((2, 2)), [0, 0], items=[0, 1])


def test_similarity_values():
    S = similarity_matrix(np.array([[0.0, 0, 0, 0], [3.0, 4, 0, 0], [0.0, 0, 0, 0]]), preference=-1.5)
    assert S[0, 1] == -5.0 and S[0, 2] == 0.0
    assert np.all(np.diag(S) == -1.5)
    S1 = similarity_matrix(np.array([[1.0, 2.0]]), preference=-3.0)
    assert S1.shape == (1, 1) and S1[0, 0] == -3.0


def test_median_preference_and_squared_option():
    F = np.array([[0.0], [1.0], [3.0]])
    S = similarity_matrix(F)
    assert np.diag(S).tolist() == [-2.0] * 3  # off-diagonal -1,-3,-2 (each twice)
    assert similarity_matrix(F, squared=True)[0, 2] == -9.0


def test_similarity_rejects_nonfinite():
    with pytest.raises(ValueError):
        similarity_matrix(np.array([[np.nan, 0.0], [1.0, 1.0]]))


def test_ap_single_point():
    res = affinity_propagation(np.array([[-1.0]]))
    assert res.exemplars == [0] and res.assignment.tolist() == [0]


def test_ap_two_tight_pairs():
    X = np.array([[0.0, 0.0], [0.5, 0.0], [20.0, 0.0], [20.0, 0.5]])
    S = similarity_matrix(X)
    res = affinity_propagation(S)
    groups = {tuple(np.flatnonzero(res.assignment == e)) for e in res.exemplars}
    assert groups == {(0, 1), (2, 3)}
    assert net_similarity(S, res.assignment) == pytest.approx(best_exemplar_set(S)[0], abs=1e-9)


def test_ap_identical_points_single_cluster():
    S = similarity_matrix(np.zeros((5, 2)), preference=-1.0)
    res = affinity_propagation(S)
    assert len(res.exemplars) == 1
    assert best_exemplar_set(S)[0] == pytest.approx(-1.0)
    assert net_similarity(S, res.assignment) == pytest.approx(-1.0)


def test_ap_validates_input():
    with pytest.raises(ValueError):
        affinity_propagation(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        affinity_propagation(np.zeros((2, 2)), damping=1.0)


def test_ap_deterministic():
    S = similarity_matrix(np.random.default_rng(0).standard_normal((12, 3)))
    a, b = affinity_propagation(S), affinity_propagation(S)
    assert a.exemplars == b.exemplars and np.array_equal(a.assignment, b.assignment) and a.sweeps == b.sweeps


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 9), st.integers(0, 10_000))
def test_ap_permutation_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    perm = rng.permutation(n)
    # a fixed preference: the median can equal an off-diagonal entry exactly,
    # and index-based tie breaking is not permutation invariant
    a = affinity_propagation(similarity_matrix(X, preference=-1.0))
    b = affinity_propagation(similarity_matrix(X[perm], preference=-1.0))
    assert sorted(perm[b.exemplars].tolist()) == a.exemplars
    assert np.array_equal(perm[b.assignment], a.assignment[perm])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(0, 10_000))
def test_ap_assignment_is_valid(n, seed):
    X = np.random.default_rng(seed).standard_normal((n, 3))
    res = affinity_propagation(similarity_matrix(X))
    ex = set(res.exemplars)
    assert ex and all(res.assignment[e] == e for e in ex)
    assert set(res.assignment.tolist()) <= ex


def test_merge_same_type_pair():
    mm = merge_within_type([0, 0, 2], [0, 0, 1])
    assert mm.K == 2 and mm.assignment == [0, 0, 1]
    mm.check([0, 0, 1])


def test_merge_never_crosses_types():
    mm = merge_within_type([0, 0], [0, 1])
    assert mm.K == 2 and mm.parent_of_merged == [0, 1]


def test_merge_all_singletons_is_identity():
    parent = [1, 0, 1, 0]
    mm = merge_within_type([0, 1, 2, 3], parent)
    assert mm.K == 4
    assert sorted(mm.assignment) == [0, 1, 2, 3]
    # numbered in (type, exemplar) order
    assert mm.assignment == [2, 0, 3, 1]
    assert MergeMap.identity(parent).assignment == [0, 1, 2, 3]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5)), min_size=1, max_size=20))
def test_merge_properties(pairs):
    parent = [p for p, _ in pairs]
    clusters = [c for _, c in pairs]
    mm = merge_within_type(clusters, parent)
    mm.check(parent)
    assert mm.K == len(set(pairs))
    for i in range(len(pairs)):
        for j in range(len(pairs)):
            same = mm.assignment[i] == mm.assignment[j]
            assert same == (parent[i] == parent[j] and clusters[i] == clusters[j])


def test_cluster_and_merge_pairs_by_type():
    F = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]])
    mm, ap = cluster_and_merge(F, [0, 0, 0, 1])
    assert mm.assignment == [0, 0, 1, 2]
    assert len(ap.exemplars) == 2


def test_silhouette_perfect_separation():
    X = np.array([[0.0], [0.0], [10.0], [10.0]])
    assert silhouette_score(X, [0, 0, 1, 1]) == 1.0


def test_silhouette_line_layout():
    # a = 1 for every point; b = 10.5 for the outer points, 9.5 for the inner ones
    expected = (9.5 / 10.5 + 8.5 / 9.5) / 2
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert abs(silhouette_score(X, [0, 0, 1, 1]) - expected) <= 1e-9
    assert abs(silhouette_by_definition(X, [0, 0, 1, 1]) - expected) <= 1e-12


def test_silhouette_identical_points():
    assert silhouette_score(np.zeros((4, 2)), [0, 0, 1, 1]) == 0.0


def test_silhouette_singletons_score_zero():
    X = np.array([[0.0], [1.0], [5.0]])
    assert silhouette_score(X, [0, 0, 1]) == pytest.approx(silhouette_by_definition(X, [0, 0, 1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(2, 4), st.integers(0, 10_000))
def test_silhouette_matches_definition(n, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    labels = np.arange(n) % k
    s = silhouette_score(X, labels)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(silhouette_by_definition(X, labels.tolist()), abs=1e-12)


def test_metrics_need_two_clusters():
    with pytest.raises(ValueError):
        silhouette_score(np.zeros((3, 1)), [0, 0, 0])
    with pytest.raises(ValueError):
        davies_bouldin(np.zeros((3, 1)), [0, 0, 0])


def test_davies_bouldin_values():
    assert davies_bouldin(np.array([[0.0], [0.0], [7.0], [7.0]]), [0, 0, 1, 1]) == 0.0
    # sigma = 0.5 per cluster, centroid gap 10
    assert abs(davies_bouldin(np.array([[0.0], [1.0], [10.0], [11.0]]), [0, 0, 1, 1]) - 0.1) <= 1e-9


def test_davies_bouldin_coincident_centroids():
    X = np.array([[-1.0], [1.0], [-2.0], [2.0]])
    assert davies_bouldin(X, [0, 0, 1, 1]) == np.inf


def test_metrics_agree_with_sklearn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(5)
    X = rng.standard_normal((40, 3))
    labels = rng.integers(0, 4, 40)
    assert silhouette_score(X, labels) == pytest.approx(metrics.silhouette_score(X, labels), abs=1e-12)
    assert davies_bouldin(X, labels) == pytest.approx(metrics.davies_bouldin_score(X, labels), abs=1e-12)

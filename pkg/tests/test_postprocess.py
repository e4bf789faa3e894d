import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import silhouette_samples as sk_silhouette_samples

from bprm.errors import DegenerateMatrix, EmptySample, LengthMismatch
from bprm.postprocess import (canonicalize, expected_vi, frobenius_distances, heatmap_code, linkage_candidates,
                              match_clusters, mean_similarity, pam, profile_code, read_matrix_csv, select_partition,
                              select_partition_binder, select_partition_pam, select_partition_vi, silhouette_samples,
                              similarity, summarize_clusters, summary_rows, unique_partitions, vi_distance,
                              write_matrix_csv, write_summary)
from bprm.sample import PosteriorSample

BELL3 = np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1], [0, 1, 2]])


def partitions(n_min=1, n_max=12):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.lists(st.integers(0, n - 1), min_size=n, max_size=n).map(np.array))


def same_n_partitions(count, n_min=1, n_max=12):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.lists(st.lists(st.integers(0, n - 1), min_size=n, max_size=n).map(np.array),
                           min_size=count, max_size=count))


def samples(n_max=8, t_max=15):
    return st.tuples(st.integers(2, n_max), st.integers(1, t_max)).flatmap(
        lambda nt: st.lists(st.lists(st.integers(0, 3), min_size=nt[0], max_size=nt[0]),
                            min_size=nt[1], max_size=nt[1]).map(np.array))


def vi_reference(a, b):
    """Entropies in bits from an explicit contingency table."""
    n = len(a)
    table = {}
    for x, y in zip(a, b):
        table[(x, y)] = table.get((x, y), 0) + 1
    ra, rb = {}, {}
    for (x, y), c in table.items():
        ra[x] = ra.get(x, 0) + c
        rb[y] = rb.get(y, 0) + c
    h = lambda counts: -sum(c / n * math.log2(c / n) for c in counts)
    mi = sum(c / n * math.log2(c * n / (ra[x] * rb[y])) for (x, y), c in table.items())
    return h(ra.values()) + h(rb.values()) - 2 * mi


BELL3_MULTIPLICITIES = st.lists(st.integers(1, 20), min_size=4, max_size=4)


def check_binder_brute_force(P):
    S_hat = np.mean([similarity(p) for p in P], axis=0)
    brute = [float(np.sum((S_hat - similarity(p)) ** 2)) for p in P]
    t = int(np.flatnonzero(np.isclose(brute, min(brute), rtol=0, atol=1e-9))[0])
    np.testing.assert_allclose(frobenius_distances(P), brute, atol=1e-9)
    chosen = select_partition_binder(P)
    # equal up to ties in the distance: the earliest minimiser is returned
    np.testing.assert_array_equal(chosen, canonicalize(P[t]))
    assert any(np.array_equal(chosen, canonicalize(p)) for p in P)


def check_vi_axioms(triple):
    a, b, c = triple
    n = len(a)
    ab, ba = vi_distance(a, b), vi_distance(b, a)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab >= 0
    same = np.array_equal(canonicalize(a), canonicalize(b))
    assert (ab < 1e-12) == same
    assert vi_distance(a, c) <= ab + vi_distance(b, c) + 1e-9
    assert ab <= math.log2(n) + 1e-9
    assert ab == pytest.approx(vi_reference(a, b), abs=1e-9)


def check_bell3_selection(order, mult):
    # four distinct partitions of three individuals with given multiplicities
    chosen = BELL3[list(order[:4])]
    sample = np.repeat(chosen, mult, axis=0)
    ev = expected_vi(BELL3, sample)
    k = BELL3.max(axis=1) + 1
    best = min(range(5), key=lambda i: (round(ev[i], 12), k[i]))
    part, info = select_partition_vi(sample, return_details=True)
    assert info["expected_vi"] == pytest.approx(ev[best], abs=1e-12)
    assert part.max() + 1 == k[best]


class TestPartitions:
    def test_canonicalize_first_appearance(self):
        np.testing.assert_array_equal(canonicalize([5, 5, 2, 9, 2]), [0, 0, 1, 2, 1])

    @given(partitions())
    def test_canonicalize_idempotent(self, p):
        c = canonicalize(p)
        np.testing.assert_array_equal(canonicalize(c), c)
        assert set(c) == set(range(c.max() + 1))

    def test_unique_partitions_multiplicity(self):
        uniq, counts, first = unique_partitions([[1, 1, 0], [0, 0, 1], [0, 1, 1]])
        np.testing.assert_array_equal(uniq, [[0, 0, 1], [0, 1, 1]])
        np.testing.assert_array_equal(counts, [2, 1])
        np.testing.assert_array_equal(first, [0, 2])


class TestSimilarity:
    def test_single_partition(self):
        np.testing.assert_array_equal(mean_similarity([[0, 0, 1]]), [[1, 1, 0], [1, 1, 0], [0, 0, 1]])

    def test_two_partitions_average(self):
        S = mean_similarity([[0, 0], [0, 1]])
        assert S[0, 1] == S[1, 0] == 0.5

    def test_identical_samples(self):
        np.testing.assert_array_equal(mean_similarity([[0, 1, 1]] * 4), similarity([0, 1, 1]))

    def test_empty_sample(self):
        with pytest.raises(EmptySample):
            mean_similarity(np.zeros((0, 3), int))

    @given(samples(), st.randoms(use_true_random=False))
    def test_properties_and_permutation_equivariance(self, P, rnd):
        S = mean_similarity(P)
        assert np.allclose(S, S.T) and np.all(np.diag(S) == 1.0)
        assert np.all((S >= 0) & (S <= 1))
        perm = list(range(P.shape[1]))
        rnd.shuffle(perm)
        np.testing.assert_allclose(mean_similarity(P[:, perm]), S[np.ix_(perm, perm)])


class TestBinder:
    def test_single_sample(self):
        np.testing.assert_array_equal(select_partition_binder([[2, 2, 0]]), [0, 0, 1])

    def test_majority_example(self):
        P = [[0, 0, 1]] * 9 + [[0, 1, 1]]
        np.testing.assert_array_equal(select_partition_binder(P), [0, 0, 1])

    @given(samples())
    def test_matches_brute_force(self, P):
        check_binder_brute_force(P)


class TestPAM:
    @staticmethod
    def blocks(sizes):
        labels = np.repeat(np.arange(len(sizes)), sizes)
        return similarity(labels), labels

    def test_two_perfect_blocks(self):
        S, labels = self.blocks([4, 3])
        part, info = select_partition_pam(S, k_max=5, return_details=True)
        assert info["k"] == 2
        assert info["silhouette"][2] == pytest.approx(1.0)
        np.testing.assert_array_equal(part, labels)

    def test_constant_dissimilarity(self):
        S = np.full((6, 6), 0.5)
        np.fill_diagonal(S, 1.0)
        part, info = select_partition_pam(S, k_max=5, return_details=True)
        assert all(abs(s) < 1e-12 for s in info["silhouette"].values())
        assert info["k"] == 2 and part.max() == 1

    def test_degenerate(self):
        with pytest.raises(DegenerateMatrix) as exc:
            select_partition_pam(np.ones((4, 4)))
        np.testing.assert_array_equal(exc.value.partition, np.zeros(4))
        P, info = select_partition(np.zeros((3, 4), int), "pam")
        assert info["degenerate"] and np.all(P == 0)

    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(0)
        P = rng.integers(0, 4, (200, 30))
        S = mean_similarity(P)
        runs = [select_partition_pam(S, 8, return_details=True) for _ in range(5)]
        for part, info in runs[1:]:
            assert part.tobytes() == runs[0][0].tobytes()
            assert info == runs[0][1]

    @given(samples(n_max=9, t_max=6))
    def test_silhouette_matches_sklearn(self, P):
        D = 1.0 - mean_similarity(P)
        np.fill_diagonal(D, 0.0)
        labels = canonicalize(P[0])
        if not 2 <= labels.max() + 1 <= len(labels) - 1:
            return
        np.testing.assert_allclose(silhouette_samples(D, labels),
                                   sk_silhouette_samples(D, labels, metric="precomputed"), atol=1e-12)

    @settings(max_examples=50)
    @given(samples(n_max=8, t_max=5), st.integers(1, 3))
    def test_swap_is_locally_optimal(self, P, k):
        D = 1.0 - mean_similarity(P)
        np.fill_diagonal(D, 0.0)
        n = len(D)
        k = min(k, n)
        medoids, labels = pam(D, k)
        cost = D[:, medoids].min(axis=1).sum()
        np.testing.assert_array_equal(labels, np.argmin(D[:, medoids], axis=1))
        # no single medoid swap improves the cost
        for i in range(k):
            for h in set(range(n)) - set(medoids):
                trial = medoids.copy()
                trial[i] = h
                assert D[:, trial].min(axis=1).sum() >= cost - 1e-9

    def test_well_separated_global_optimum(self):
        rng = np.random.default_rng(3)
        pts = np.concatenate([rng.normal(c, 0.1, 4) for c in (0.0, 3.0, 6.0)])
        D = np.abs(pts[:, None] - pts[None, :])
        medoids, _ = pam(D, 3)
        brute = min(D[:, list(m)].min(axis=1).sum() for m in itertools.combinations(range(12), 3))
        assert D[:, medoids].min(axis=1).sum() == pytest.approx(brute)


class TestVI:
    def test_identity(self):
        assert vi_distance([0, 1, 1, 2], [3, 0, 0, 1]) == 0.0

    def test_crossed_halves(self):
        assert vi_distance([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(2.0)

    def test_halves_vs_one_cluster(self):
        assert vi_distance([0, 0, 1, 1], [0, 0, 0, 0]) == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            vi_distance([0, 1], [0, 1, 1])

    @settings(max_examples=1000)
    @given(same_n_partitions(3))
    def test_metric_axioms(self, triple):
        check_vi_axioms(triple)

    @given(samples(n_max=7, t_max=8), samples(n_max=7, t_max=3))
    def test_expected_vi_is_mean(self, Q, C):
        if Q.shape[1] != C.shape[1]:
            return
        w = np.arange(1, len(Q) + 1, dtype=float)
        ev = expected_vi(C, Q, w)
        ref = [np.average([vi_distance(c, q) for q in Q], weights=w) for c in C]
        np.testing.assert_allclose(ev, ref, atol=1e-9)

    @given(samples(n_max=7, t_max=8), samples(n_max=7, t_max=6))
    def test_pruning_keeps_minimum(self, Q, C):
        if Q.shape[1] != C.shape[1]:
            return
        full = expected_vi(C, Q)
        pruned = expected_vi(C, Q, prune_above=True)
        assert pruned.min() == pytest.approx(full.min(), abs=1e-12)
        assert np.all(pruned >= full - 1e-12)

    def test_identical_sample(self):
        part, info = select_partition_vi([[0, 1, 1]] * 5, return_details=True)
        np.testing.assert_array_equal(part, [0, 1, 1])
        assert info["expected_vi"] == 0.0

    @settings(max_examples=200)
    @given(st.permutations(range(5)), BELL3_MULTIPLICITIES)
    def test_bell3_brute_force(self, order, mult):
        check_bell3_selection(order, mult)

    @given(samples(n_max=7, t_max=10))
    def test_not_worse_than_binder(self, P):
        vi_part = select_partition_vi(P)
        bl_part = select_partition_binder(P)
        ev = expected_vi(np.vstack([vi_part, bl_part]), P)
        assert ev[0] <= ev[1] + 1e-12

    def test_rounding_tie_prefers_fewer_clusters(self):
        # {0,2}{1} and singletons have equal expected VI up to float rounding here
        sample = np.repeat(BELL3[:4], [1, 16, 20, 5], axis=0)
        part = select_partition_vi(sample)
        np.testing.assert_array_equal(part, [0, 1, 0])

    def test_ties_prefer_fewer_clusters(self):
        # the one-cluster and split partitions have equal expected VI here
        P = [[0, 0], [0, 1]]
        np.testing.assert_array_equal(select_partition_vi(P), [0, 0])

    def test_linkage_cuts_cover_all_levels(self):
        S = mean_similarity([[0, 0, 1, 1, 2], [0, 0, 1, 1, 1]])
        cuts = linkage_candidates(S)
        assert sorted(c.max() + 1 for c in cuts) == [1, 2, 3, 4, 5]

    def test_stride(self):
        P = np.tile([[0, 0, 1]], (12_000, 1))
        _, info = select_partition_vi(P, return_details=True)
        assert info["stride"] == 3


class TestDispatch:
    def test_methods_agree_on_clear_sample(self):
        P = [[0, 0, 1, 1, 2, 2]] * 30 + [[0, 0, 1, 1, 1, 1]] * 2
        for method in ("binder", "pam", "vi"):
            part, _ = select_partition(P, method)
            np.testing.assert_array_equal(part, [0, 0, 1, 1, 2, 2])

    def test_unknown(self):
        with pytest.raises(ValueError):
            select_partition([[0, 1]], "kmeans")


def _sample(parts, beta, mu, sigma=None, p=None):
    s = PosteriorSample()
    for t, (P, b, m) in enumerate(zip(parts, beta, mu)):
        m = np.asarray(m, float)
        s.append(t, P, 1.0, 1.0, 2.0, 0.0, b, m, np.ones_like(m) if sigma is None else sigma[t],
                 [] if p is None else p[t], None)
    return s


class TestSummaries:
    def test_matching_by_overlap(self):
        np.testing.assert_array_equal(match_clusters([0, 0, 1, 1], [3, 3, 3, 0]), [3, 0])

    def test_point_mass_has_zero_width(self):
        parts = [[0, 0, 1]] * 4
        s = _sample(parts, [[0.5, 2.0]] * 4, [[[0.0], [1.0]]] * 4)
        rep = summarize_clusters(s, [0, 0, 1])
        for c, b in zip(rep["clusters"], (0.5, 2.0)):
            assert c["beta_ci95"] == [b, b]
            assert c["beta"]["median"] == b

    def test_labels_follow_members(self):
        # the same clusters under swapped labels give the same summaries
        parts = [[0, 0, 1], [1, 1, 0]]
        s = _sample(parts, [[0.5, 2.0], [2.0, 0.5]], [[[0.0], [1.0]], [[1.0], [0.0]]])
        rep = summarize_clusters(s, [0, 0, 1])
        assert rep["clusters"][0]["beta"]["mean"] == 0.5
        assert rep["clusters"][1]["exp_mu"]["median"] == [pytest.approx(math.e)]

    def test_heatmap_codes(self):
        assert heatmap_code(0.1, 1, 2, 3) == "--"
        assert heatmap_code(1.5, 1, 2, 3) == "-"
        assert heatmap_code(2.5, 1, 2, 3) == "+"
        assert heatmap_code(3.5, 1, 2, 3) == "++"

    def test_profile_codes_need_clear_interval(self):
        assert profile_code(1.2, 1.5, 1.9, 1.0) == "++"
        assert profile_code(0.8, 1.5, 1.9, 1.0) == "+"
        assert profile_code(0.1, 0.3, 0.9, 1.0) == "--"
        assert profile_code(0.1, 0.3, 1.1, 1.0) == "-"

    def test_report_with_data_and_io(self, tmp_path):
        from conftest import make_dataset
        data = make_dataset(n=8, K=1)
        P = [0, 0, 0, 0, 1, 1, 1, 1]
        rng = np.random.default_rng(0)
        s = _sample([P] * 50, rng.normal(0, 1, (50, 2)), rng.normal(0, 1, (50, 2, 1)),
                    p=[[np.array([[0.2, 0.8], [0.6, 0.4]])]] * 50)
        rep = summarize_clusters(s, P, data)
        assert rep["sizes"] == [4, 4]
        assert {"heatmap_codes", "covariate_means", "profile_codes"} <= set(rep["clusters"][0])
        x = np.asarray(data.x_cont)[:, 0]
        assert rep["clusters"][0]["covariate_means"][0] == pytest.approx(x[:4].mean())
        assert rep["clusters"][1]["p"][0]["median"] == [pytest.approx(0.6), pytest.approx(0.4)]
        write_summary(rep, tmp_path / "s.json", tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "cluster,parameter,index,statistic,value"
        assert len(lines) == 1 + len(summary_rows(rep))

    def test_empty_sample(self):
        with pytest.raises(EmptySample):
            summarize_clusters(PosteriorSample(), [0, 1])

    def test_matrix_roundtrip(self, tmp_path):
        S = mean_similarity([[0, 0, 1], [0, 1, 1], [0, 0, 0]])
        write_matrix_csv(S, tmp_path / "S.csv")
        np.testing.assert_allclose(read_matrix_csv(tmp_path / "S.csv"), S)

import numpy as np
import pytest

from ear.errors import ArgumentError, DimensionError, GrowthError
from ear.zsnas import (
    CandidateArchitecture,
    SearchSpace,
    TapChoice,
    ami,
    combine_scores,
    combined_score,
    decompose_adjacency,
    expressivity_score,
    gp_ucb_search,
    knn_adjacency,
    redundancy_score,
    soft_component_count,
    spectral_labels,
    cluster_count,
)


def union_find_components(adj):
    n = adj.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    return len({find(i) for i in range(n)})


def triangle_clusters(num_clusters=5, spacing=100.0, seed=0):
    rng = np.random.default_rng(seed)
    pts = []
    for c in range(num_clusters):
        center = np.array([c * spacing, 0.0, 0.0])
        tri = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
        pts.append(center + tri + rng.normal(scale=1e-3, size=(3, 3)))
    return np.concatenate(pts)


class TestExpressivity:
    def test_five_triangle_clusters_score_exactly_five(self):
        score, decomp = expressivity_score(triangle_clusters(), gamma=3.0)
        assert score == pytest.approx(5.0, abs=1e-6)
        # each triangle contributes spectrum {0, 1.5, 1.5}
        lam = np.sort(decomp.eigenvalues)
        assert np.allclose(lam[:5], 0.0, atol=1e-9)
        assert np.allclose(lam[5:], 1.5, atol=1e-9)

    def test_single_eigenvalue_contribution(self):
        assert soft_component_count(np.array([0.5]), gamma=3.0) == pytest.approx(0.125)

    def test_complete_graph_scores_one(self):
        for n in (4, 8, 13):
            adj = np.ones((n, n), dtype=np.uint8) - np.eye(n, dtype=np.uint8)
            decomp = decompose_adjacency(adj)
            assert soft_component_count(decomp.eigenvalues, 3.0) == pytest.approx(1.0, abs=1e-9)
            expected = np.r_[0.0, np.full(n - 1, n / (n - 1))]
            assert np.allclose(np.sort(decomp.eigenvalues), expected, atol=1e-9)

    def test_zero_eigenvalues_match_union_find(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(8, 40))
            pts = rng.normal(size=(n, 3)) * rng.uniform(0.5, 4)
            adj = knn_adjacency(pts, 2)
            decomp = decompose_adjacency(adj)
            zeros = int(np.sum(decomp.eigenvalues < 1e-8))
            assert zeros == union_find_components(adj)

    def test_eigenvector_orthonormality_and_range(self):
        pts = np.random.default_rng(1).normal(size=(30, 4))
        _, decomp = expressivity_score(pts)
        lam = decomp.eigenvalues
        assert lam.min() >= -1e-9 and lam.max() <= 2.0 + 1e-9
        gram = decomp.eigenvectors.T @ decomp.eigenvectors
        assert np.abs(gram - np.eye(len(lam))).max() < 1e-6

    def test_translation_rotation_invariance(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(24, 5))
        q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
        moved = pts @ q + rng.normal(size=5)
        s1, _ = expressivity_score(pts)
        s2, _ = expressivity_score(moved)
        assert s1 == pytest.approx(s2, abs=1e-8)

    def test_small_batch_rejected(self):
        with pytest.raises(ArgumentError):
            expressivity_score(np.zeros((5, 3)))

    def test_duplicate_points_deterministic(self):
        pts = np.zeros((10, 2))
        a = knn_adjacency(pts, 2)
        b = knn_adjacency(pts, 2)
        assert np.array_equal(a, b)
        # ties resolve toward lower indices
        assert a[9, 0] == 1 and a[9, 1] == 1


class TestAmi:
    def test_identical_partitions_exactly_one(self):
        labels = np.array([0, 0, 1, 2, 1, 0])
        assert ami(labels, labels) == 1.0

    def test_label_renaming_invariance(self):
        a = np.array([0, 0, 1, 1, 2, 2])
        b = np.array([5, 5, 9, 9, 7, 7])
        assert ami(a, b) == 1.0
        rng = np.random.default_rng(0)
        x = rng.integers(0, 4, 60)
        y = rng.integers(0, 4, 60)
        relabel = {0: 13, 1: 2, 2: 77, 3: 5}
        y2 = np.array([relabel[v] for v in y])
        assert ami(x, y) == pytest.approx(ami(x, y2), abs=1e-12)

    def test_independent_partitions_near_zero(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            a = rng.integers(0, 4, 1000)
            b = rng.integers(0, 4, 1000)
            assert abs(ami(a, b)) <= 0.05

    def test_both_single_cluster_convention(self):
        assert ami(np.zeros(10), np.zeros(10)) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            ami([0, 1], [0, 1, 2])

    def test_matches_reference_implementation(self):
        from sklearn.metrics import adjusted_mutual_info_score

        rng = np.random.default_rng(13)
        for _ in range(60):
            n = int(rng.integers(5, 300))
            a = rng.integers(0, int(rng.integers(1, 7)), n)
            b = rng.integers(0, int(rng.integers(1, 7)), n)
            assert ami(a, b) == pytest.approx(
                adjusted_mutual_info_score(a, b), abs=1e-10
            )


class TestRedundancy:
    def test_identical_geometry_scores_one(self):
        pts = np.random.default_rng(0).normal(size=(32, 4))
        _, d1 = expressivity_score(pts)
        _, d2 = expressivity_score(pts.copy())
        assert redundancy_score(d1, d2, seed=1) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        _, d1 = expressivity_score(rng.normal(size=(32, 4)))
        _, d2 = expressivity_score(rng.normal(size=(32, 4)))
        assert redundancy_score(d1, d2, seed=3) == pytest.approx(
            redundancy_score(d2, d1, seed=3), abs=1e-9
        )

    def test_orthogonal_groupings_score_low(self):
        # adjacency i: two 32-cliques split by index halves
        # adjacency j: two 32-cliques interleaving the halves equally
        n = 64
        half = np.arange(n) < n // 2
        inter = (np.arange(n) % 32) < 16
        adj_i = np.zeros((n, n), dtype=np.uint8)
        adj_j = np.zeros((n, n), dtype=np.uint8)
        for mask, adj in ((half, adj_i), (inter, adj_j)):
            for grp in (mask, ~mask):
                idx = np.where(grp)[0]
                adj[np.ix_(idx, idx)] = 1
            np.fill_diagonal(adj, 0)
        d_i, d_j = decompose_adjacency(adj_i), decompose_adjacency(adj_j)
        assert cluster_count(d_i, n) == 2 and cluster_count(d_j, n) == 2
        assert abs(redundancy_score(d_i, d_j, seed=0)) < 0.2

    def test_batch_mismatch(self):
        _, d1 = expressivity_score(np.random.default_rng(0).normal(size=(16, 3)))
        _, d2 = expressivity_score(np.random.default_rng(1).normal(size=(20, 3)))
        with pytest.raises(DimensionError):
            redundancy_score(d1, d2)


class TestCombinedScore:
    def test_arithmetic(self):
        # 10 + 12 - 3e-6*1000 - 5*0.2 = 20.997
        assert combine_scores([10.0, 12.0], 1000, [0.2]) == pytest.approx(20.997)

    def test_more_parameters_strictly_lower(self):
        assert combine_scores([5.0], 10_000, []) < combine_scores([5.0], 100, [])

    def test_single_adaptor_has_no_redundancy_term(self):
        taps = [np.random.default_rng(0).normal(size=(32, 6)).astype(np.float32)]
        cand = CandidateArchitecture((TapChoice(0, 1, 8),))
        bd = combined_score(cand, taps, num_classes=3, seed=5)
        assert bd.redundancy == {}
        assert bd.param_count == cand.specs(3)[0].param_count(6)
        assert bd.score == pytest.approx(
            sum(bd.expressivity.values()) - 3e-6 * bd.param_count
        )

    def test_pure_function_of_inputs(self):
        rng = np.random.default_rng(4)
        taps = [rng.normal(size=(32, 5)).astype(np.float32) for _ in range(3)]
        cand = CandidateArchitecture((TapChoice(0, 1, 8), TapChoice(2, 2, 12)))
        a = combined_score(cand, taps, num_classes=4, seed=9)
        b = combined_score(cand, taps, num_classes=4, seed=9)
        assert a.score == b.score
        assert a.expressivity == b.expressivity
        assert a.redundancy == b.redundancy


class TestSearchSpace:
    def test_decode_rounding(self):
        space = SearchSpace(num_taps=3, width_min=8, width_max=64)
        vec = np.array([
            0.6, 1.4, 20.2,   # tap 0: included, depth 1, width 20
            0.49, 2.6, 9.9,   # tap 1: excluded
            0.5, 0.2, 63.7,   # tap 2: included (0.5 rounds up), depth 0
        ])
        cand = space.decode(vec)
        assert [c.tap_id for c in cand.choices] == [0, 2]
        assert cand.choices[0] == TapChoice(0, 1, 20)
        assert cand.choices[1] == TapChoice(2, 0, 64)

    def test_all_excluded_keeps_strongest_flag(self):
        space = SearchSpace(num_taps=2, width_min=8, width_max=16)
        cand = space.decode(np.array([0.1, 1, 10, 0.3, 1, 10]))
        assert [c.tap_id for c in cand.choices] == [1]

    def test_wrong_length(self):
        with pytest.raises(DimensionError):
            SearchSpace(num_taps=2).decode(np.zeros(5))

    def test_empty_candidate_rejected(self):
        with pytest.raises(ArgumentError):
            CandidateArchitecture(())


class TestGpUcb:
    def test_finds_quadratic_optimum(self):
        for seed in range(3):
            res = gp_ucb_search(lambda x: -((x[0] - 0.3) ** 2),
                                (np.array([0.0]), np.array([1.0])),
                                budget=30, warmup=10, seed=seed)
            assert abs(res.best_x[0] - 0.3) <= 0.05

    def test_proposals_respect_bounds(self):
        lo, hi = np.array([-2.0, 5.0]), np.array([3.0, 9.0])
        res = gp_ucb_search(lambda x: -np.sum(x**2),
                            (lo, hi), budget=25, warmup=8, seed=1)
        for ev in res.trace:
            assert (ev.x >= ev.bounds_lo - 1e-12).all()
            assert (ev.x <= ev.bounds_hi + 1e-12).all()
            assert (ev.bounds_lo >= lo - 1e-12).all()
            assert (ev.bounds_hi <= hi + 1e-12).all()

    def test_returned_value_is_trace_max(self):
        res = gp_ucb_search(lambda x: float(np.sin(4 * x[0])),
                            (np.array([0.0]), np.array([2.0])),
                            budget=20, warmup=6, seed=3)
        assert res.best_y == max(ev.y for ev in res.trace)

    def test_deterministic(self):
        f = lambda x: -((x[0] - 0.7) ** 2)
        r1 = gp_ucb_search(f, (np.array([0.0]), np.array([1.0])), budget=15, seed=11, warmup=5)
        r2 = gp_ucb_search(f, (np.array([0.0]), np.array([1.0])), budget=15, seed=11, warmup=5)
        assert np.array_equal(r1.best_x, r2.best_x)
        assert [ev.y for ev in r1.trace] == [ev.y for ev in r2.trace]

    def test_non_finite_discarded(self):
        calls = {"n": 0}

        def f(x):
            calls["n"] += 1
            return np.nan if calls["n"] % 3 == 0 else -((x[0] - 0.5) ** 2)

        res = gp_ucb_search(f, (np.array([0.0]), np.array([1.0])),
                            budget=12, warmup=4, seed=0)
        assert len(res.discarded) == 4
        assert len(res.trace) == 8
        assert np.isfinite(res.best_y)

    def test_all_non_finite_raises(self):
        with pytest.raises(GrowthError):
            gp_ucb_search(lambda x: np.nan, (np.array([0.0]), np.array([1.0])),
                          budget=5, warmup=2, seed=0)

    def test_budget_must_cover_warmup(self):
        with pytest.raises(ArgumentError):
            gp_ucb_search(lambda x: 0.0, (np.array([0.0]), np.array([1.0])),
                          budget=5, warmup=10)

"""Graph-layer contracts: k-NN, edge features, edge convolution, T-net."""

import numpy as np
import pytest

from radargest import graphnet as gn
from radargest.engine import ParamStore, Tensor, finite_diff_check, mse_loss, reduce_sum


def brute_force_knn(points, k):
    """Full-sort oracle: k nearest by squared distance, ties by index."""
    n = len(points)
    table = []
    for i in range(n):
        d2 = ((points - points[i]) ** 2).sum(axis=1)
        order = sorted((float(d2[j]), j) for j in range(n) if j != i)
        table.append([i] + [j for _, j in order[:k]])
    return np.array(table)


class TestKnnGraph:
    def test_collinear_hand_example(self):
        pts = np.array([[0.0], [1.0], [2.0], [4.0]])
        g = gn.knn_graph(pts, k=2)
        assert set(g.indices[0, 1:]) == {1, 2}

    def test_self_loop_slot_zero(self):
        rng = np.random.default_rng(0)
        g = gn.knn_graph(rng.standard_normal((10, 4)), k=3)
        np.testing.assert_array_equal(g.indices[:, 0], np.arange(10))

    def test_matches_brute_force_oracle(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            pts = rng.standard_normal((20, 5))
            g = gn.knn_graph(pts, k=4)
            np.testing.assert_array_equal(g.indices, brute_force_knn(pts, 4), err_msg=f"seed {seed}")

    def test_neighbors_ascend_by_distance(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((15, 3))
        g = gn.knn_graph(pts, k=5)
        diffs = np.diff(g.sq_distances[:, 1:], axis=1)
        assert (diffs >= -1e-15).all()

    def test_duplicate_points_tie_by_index(self):
        pts = np.zeros((6, 2))
        pts[5] = [10.0, 0.0]
        g = gn.knn_graph(pts, k=3)
        np.testing.assert_array_equal(g.indices[0], [0, 1, 2, 3])

    def test_k_out_of_range(self):
        with pytest.raises(ValueError, match="1 <= k < n"):
            gn.knn_graph(np.zeros((3, 2)), k=3)

    def test_per_vertex_edge_count(self):
        rng = np.random.default_rng(4)
        g = gn.knn_graph(rng.standard_normal((9, 2)), k=3)
        assert g.indices.shape == (9, 4)

    def test_mask_padded_excludes_zero_rows(self):
        pts = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        idx = gn.knn_indices(pts[None], 2, mask_padded=True)[0]
        assert 1 not in idx[0, 1:] and 2 not in idx[0, 1:]
        # padded vertices still pick among valid vertices only
        np.testing.assert_array_equal(idx[1], [1, 0, 3])
        # without the flag the zero rows are ordinary points
        idx_plain = gn.knn_indices(pts[None], 2, mask_padded=False)[0]
        np.testing.assert_array_equal(idx_plain[0], [0, 1, 2])


class TestEdgeFeatures:
    def _spec(self, rng, in_dim=4, widths=(6,)):
        store = ParamStore()
        spec = gn.EdgeConvSpec.create(store, "ec", in_dim, widths, rng)
        return store, spec

    def test_self_loop_edge_input_is_center(self):
        # identity on first half, zeros on second, zero bias, no activation:
        # every edge feature reduces to r_i
        store = ParamStore()
        spec = gn.EdgeConvSpec(in_dim=3, widths=(3,))
        w = np.zeros((6, 3))
        w[:3] = np.eye(3)
        spec.weights = [Tensor(w, requires_grad=True)]
        spec.biases = [Tensor(np.zeros(3), requires_grad=True)]
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((8, 3))
        g = gn.knn_graph(pts, k=3)
        feats = gn.edge_features(pts, g, spec, activate=False)
        for slot in range(4):
            np.testing.assert_array_equal(feats.data[:, slot, :], pts)

    def test_translation_leaves_difference_half_unchanged(self):
        # weights that read only (r_j - r_i): output invariant to translation
        store = ParamStore()
        spec = gn.EdgeConvSpec(in_dim=3, widths=(3,))
        w = np.zeros((6, 3))
        w[3:] = np.eye(3)
        spec.weights = [Tensor(w)]
        spec.biases = [Tensor(np.zeros(3))]
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((10, 3))
        g = gn.knn_graph(pts, k=3)
        a = gn.edge_features(pts, g, spec, activate=False)
        b = gn.edge_features(pts + np.array([5.0, -2.0, 1.0]), g, spec, activate=False)
        np.testing.assert_allclose(a.data, b.data, atol=1e-12)

    def test_output_shape(self):
        rng = np.random.default_rng(3)
        store, spec = self._spec(rng, in_dim=5, widths=(7, 6))
        pts = rng.standard_normal((12, 5))
        g = gn.knn_graph(pts, k=3)
        feats = gn.edge_features(pts, g, spec)
        assert feats.shape == (12, 4, 6)

    def test_dim_mismatch_rejected(self):
        rng = np.random.default_rng(4)
        store, spec = self._spec(rng, in_dim=5)
        pts = rng.standard_normal((12, 3))
        g = gn.knn_graph(pts, k=3)
        with pytest.raises(ValueError, match="features"):
            gn.edge_features(pts, g, spec)


class TestEdgeConv:
    def test_identical_edge_features_max_is_that_feature(self):
        # all points identical: every edge input is (r, 0), so the max over
        # k+1 identical edge features equals that feature
        rng = np.random.default_rng(5)
        store = ParamStore()
        spec = gn.EdgeConvSpec.create(store, "ec", 3, (6,), rng)
        pts = np.tile(rng.standard_normal(3), (5, 1))
        out = gn.edge_conv(pts, spec, k=2)
        feats = gn.edge_features(pts, gn.knn_graph(pts, k=2), spec)
        for i in range(5):
            np.testing.assert_allclose(out.data[i], feats.data[i, 0], atol=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        store = ParamStore()
        spec = gn.EdgeConvSpec.create(store, "ec", 5, (8,), rng)
        pts = rng.standard_normal((16, 5))
        out = gn.edge_conv(pts, spec, k=3)
        perm = rng.permutation(16)
        out_p = gn.edge_conv(pts[perm], spec, k=3)
        np.testing.assert_allclose(out_p.data, out.data[perm], atol=1e-9)

    def test_output_shape_matches_spec_width(self):
        rng = np.random.default_rng(7)
        store = ParamStore()
        spec = gn.EdgeConvSpec.create(store, "ec", 5, (64,), rng)
        pts = rng.standard_normal((64, 5))
        out = gn.edge_conv(pts, spec, k=3)
        assert out.shape == (64, 64)

    def test_self_loop_lower_bound(self):
        # r'_i >= h(r_i, 0) element-wise: the self-edge participates in the max
        rng = np.random.default_rng(8)
        store = ParamStore()
        spec = gn.EdgeConvSpec.create(store, "ec", 4, (9,), rng)
        pts = rng.standard_normal((12, 4))
        out = gn.edge_conv(pts, spec, k=3)
        feats = gn.edge_features(pts, gn.knn_graph(pts, k=3), spec)
        self_edge = feats.data[:, 0, :]
        assert (out.data >= self_edge - 1e-12).all()

    def test_fast_path_equals_reference(self):
        rng = np.random.default_rng(9)
        store = ParamStore()
        spec = gn.EdgeConvSpec.create(store, "ec", 6, (11,), rng)
        pts = rng.standard_normal((3, 14, 6))
        fast = gn.edge_conv(pts, spec, k=4)
        ref = gn.edge_conv(pts, spec, k=4, reference=True)
        np.testing.assert_allclose(fast.data, ref.data, atol=1e-12)

    def test_gradients_finite_difference(self):
        rng = np.random.default_rng(10)
        store = ParamStore()
        spec = gn.EdgeConvSpec.create(store, "ec", 4, (6,), rng)
        pts = rng.standard_normal((2, 10, 4))
        target = np.zeros((2, 10, 6))
        with gn.record_graphs() as tape:
            gn.edge_conv(Tensor(pts), spec, 3)

        def build():
            with gn.replay_graphs(tape):
                return mse_loss(gn.edge_conv(Tensor(pts), spec, 3), Tensor(target))

        err = finite_diff_check(build, store, rng=np.random.default_rng(0))
        assert err < 1e-6


class TestInputTransform:
    def _tnet(self, rng, zero_weights=False):
        store = ParamStore()
        tnet = gn.TNetSpec.create(store, "tnet", 5, 8, rng, k=3)
        if zero_weights:
            for name, p in store.items():
                if name != "tnet.fc.b":
                    p.data[...] = 0.0
        return store, tnet

    def test_identity_at_zero_weights(self):
        rng = np.random.default_rng(11)
        store, tnet = self._tnet(rng, zero_weights=True)
        pts = rng.standard_normal((10, 5))
        out = gn.input_transform(pts, tnet)
        np.testing.assert_array_equal(out.data, pts)

    def test_nonspatial_features_pass_through(self):
        rng = np.random.default_rng(12)
        store, tnet = self._tnet(rng)
        pts = rng.standard_normal((10, 5))
        out = gn.input_transform(pts, tnet)
        np.testing.assert_array_equal(out.data[:, 3:], pts[:, 3:])

    def test_gradients_finite_difference(self):
        rng = np.random.default_rng(13)
        store, tnet = self._tnet(rng)
        pts = rng.standard_normal((2, 9, 5))
        target = rng.standard_normal((2, 9, 5))
        with gn.record_graphs() as tape:
            gn.input_transform(Tensor(pts), tnet)

        def build():
            with gn.replay_graphs(tape):
                return mse_loss(gn.input_transform(Tensor(pts), tnet), Tensor(target))

        err = finite_diff_check(build, store, rng=np.random.default_rng(1))
        assert err < 1e-4


class TestFusedKernelOps:
    def test_neighbor_max_ties_to_lowest_slot(self):
        vals = Tensor(np.array([[[1.0, 5.0], [1.0, 5.0], [0.0, 0.0]]]), requires_grad=True)
        idx = np.array([[[0, 1, 2], [1, 0, 2], [2, 0, 1]]], dtype=np.int64)
        out = gn.neighbor_max(vals, idx)
        reduce_sum(out).backward()
        # vertex 0: ties between slots 0 (vertex 0) and 1 (vertex 1) -> slot 0
        assert vals.grad[0, 0, 0] >= 1.0

    def test_column_max_matches_numpy(self):
        rng = np.random.default_rng(14)
        x = rng.standard_normal((5, 20, 7))
        out = gn.column_max(Tensor(x))
        np.testing.assert_array_equal(out.data, x.max(axis=1))

    def test_column_max_gradient(self):
        rng = np.random.default_rng(15)
        x = Tensor(rng.standard_normal((3, 8, 4)), requires_grad=True)
        m = rng.standard_normal((3, 4))

        def build():
            return reduce_sum(gn.column_max(x) * Tensor(m))

        err = finite_diff_check(build, [x], rng=np.random.default_rng(2))
        assert err < 1e-6

    def test_gather_neighbors_gradient(self):
        rng = np.random.default_rng(16)
        x = Tensor(rng.standard_normal((2, 7, 3)), requires_grad=True)
        idx = rng.integers(0, 7, size=(2, 7, 4)).astype(np.int64)
        m = rng.standard_normal((2, 7, 4, 3))

        def build():
            return reduce_sum(gn.gather_neighbors(x, idx) * Tensor(m))

        err = finite_diff_check(build, [x], rng=np.random.default_rng(3))
        assert err < 1e-6

    def test_fused_edge_gradient(self):
        rng = np.random.default_rng(17)
        a = Tensor(rng.standard_normal((2, 6, 5)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 6, 5)), requires_grad=True)
        idx = rng.integers(0, 6, size=(2, 6, 4)).astype(np.int64)
        m = rng.standard_normal((2, 6, 5))

        def build():
            return reduce_sum(gn.fused_edge_max_leaky(a, b, idx, 0.2) * Tensor(m))

        err = finite_diff_check(build, [a, b], rng=np.random.default_rng(4))
        assert err < 1e-6

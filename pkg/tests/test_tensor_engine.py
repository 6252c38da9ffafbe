"""Tensor-engine contract tests: primitives, losses, optimizer, gradients."""

import numpy as np
import pytest

from radargest.engine import (
    AdamState,
    MiningError,
    ParamStore,
    ShapeError,
    Tensor,
    adam_step,
    backward,
    batch_hard_triplet_loss,
    concat,
    cross_entropy_loss,
    file_sha256,
    finite_diff_check,
    leaky_relu,
    load_checkpoint,
    matmul,
    mine_batch_hard,
    mse_loss,
    mul,
    no_grad,
    reduce_max,
    reduce_mean,
    reduce_sum,
    reshape,
    save_checkpoint,
    sigmoid,
    softmax,
    sqrt,
    square,
    take,
    tanh,
    triplet_loss,
)


def _param(rng, shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


class TestPrimitivesForward:
    def test_leaky_relu_values(self):
        x = Tensor([-1.0, 3.0])
        out = leaky_relu(x, alpha=0.2)
        np.testing.assert_allclose(out.data, [-0.2, 3.0])

    def test_matmul_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        out = matmul(Tensor(np.eye(4)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_matmul_shape_error_names_shapes(self):
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 2\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        out = softmax(Tensor(rng.standard_normal((50, 7)) * 30), axis=-1)
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_reduce_max_tie_routes_lowest_index(self):
        x = Tensor(np.array([[2.0, 5.0, 5.0, 1.0]]), requires_grad=True)
        out = reduce_max(x, axis=1)
        out.backward()
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0, 0.0]])

    def test_reduce_max_grad_mask_sums_to_one_per_group(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal((6, 9)), requires_grad=True)
        reduce_sum(reduce_max(x, axis=1)).backward()
        mask = x.grad
        assert set(np.unique(mask)) <= {0.0, 1.0}
        np.testing.assert_array_equal(mask.sum(axis=1), np.ones(6))


class TestBackward:
    def test_sum_gradient_is_ones(self):
        p = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        reduce_sum(p).backward()
        np.testing.assert_array_equal(p.grad, np.ones((2, 3)))

    def test_sum_of_squares_gradient(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        reduce_sum(square(p)).backward()
        np.testing.assert_allclose(p.grad, [2.0, 4.0])

    def test_repeated_backward_accumulates(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        loss = reduce_sum(square(p))
        loss.backward()
        first = p.grad.copy()
        loss.backward()
        np.testing.assert_array_equal(p.grad, 2.0 * first)

    def test_non_scalar_loss_rejected(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError, match="scalar"):
            backward(square(p))

    def test_no_grad_blocks_tape(self):
        p = Tensor([1.0], requires_grad=True)
        with no_grad():
            out = square(p)
        assert not out.requires_grad

    def test_shared_subexpression_fanout(self):
        # d/dp of (s + s) with s = sum(p) is 2
        p = Tensor([3.0, 4.0], requires_grad=True)
        s = reduce_sum(p)
        (s + s).backward()
        np.testing.assert_array_equal(p.grad, [2.0, 2.0])


class TestPrimitiveGradientsFiniteDifference:
    """Every primitive vs central differences, rel err < 1e-6."""

    TOL = 1e-6

    def _check(self, build, params, seed=0):
        err = finite_diff_check(build, params, rng=np.random.default_rng(seed))
        assert err < self.TOL, f"finite-difference rel err {err:.3e}"

    def test_matmul(self):
        rng = np.random.default_rng(10)
        a, b = _param(rng, (5, 7)), _param(rng, (7, 4))
        m = rng.standard_normal((5, 4))
        self._check(lambda: reduce_sum(mul(matmul(a, b), Tensor(m))), [a, b])

    def test_matmul_batched_broadcast(self):
        rng = np.random.default_rng(11)
        a, b = _param(rng, (3, 5, 4)), _param(rng, (4, 6))
        m = rng.standard_normal((3, 5, 6))
        self._check(lambda: reduce_sum(mul(matmul(a, b), Tensor(m))), [a, b])

    def test_add_sub_mul_broadcast(self):
        rng = np.random.default_rng(12)
        a, b = _param(rng, (4, 5)), _param(rng, (5,))
        m = rng.standard_normal((4, 5))
        self._check(lambda: reduce_sum(mul(mul(a + b, a - b), Tensor(m))), [a, b])

    def test_concat_reshape_slice(self):
        rng = np.random.default_rng(13)
        a, b = _param(rng, (3, 4)), _param(rng, (3, 2))
        m = rng.standard_normal((3, 5))
        self._check(
            lambda: reduce_sum(mul(concat([a, b], axis=1)[:, 1:], Tensor(m))), [a, b]
        )
        c = _param(rng, (6, 4))
        m2 = rng.standard_normal((3, 8))
        self._check(lambda: reduce_sum(mul(reshape(c, (3, 8)), Tensor(m2))), [c])

    def test_take(self):
        rng = np.random.default_rng(14)
        a = _param(rng, (6, 3))
        idx = np.array([0, 2, 2, 5])
        m = rng.standard_normal((4, 3))
        self._check(lambda: reduce_sum(mul(take(a, idx, axis=0), Tensor(m))), [a])

    def test_reductions(self):
        rng = np.random.default_rng(15)
        a = _param(rng, (5, 6))
        m = rng.standard_normal(5)
        self._check(lambda: reduce_sum(mul(reduce_max(a, axis=1), Tensor(m))), [a])
        self._check(lambda: reduce_sum(mul(reduce_mean(a, axis=1), Tensor(m))), [a])
        self._check(lambda: reduce_mean(square(a)), [a])

    def test_activations(self):
        rng = np.random.default_rng(16)
        a = _param(rng, (4, 7))
        m = rng.standard_normal((4, 7))
        for fn in (
            lambda t: leaky_relu(t, alpha=0.2),
            sigmoid,
            tanh,
            lambda t: softmax(t, axis=1),
        ):
            self._check(lambda fn=fn: reduce_sum(mul(fn(a), Tensor(m))), [a])

    def test_sqrt(self):
        rng = np.random.default_rng(17)
        a = Tensor(rng.uniform(0.5, 2.0, size=(4, 4)), requires_grad=True)
        m = rng.standard_normal((4, 4))
        self._check(lambda: reduce_sum(mul(sqrt(a), Tensor(m))), [a])

    def test_quadratic_form_near_exact(self):
        # central differences are exact for quadratics up to roundoff
        rng = np.random.default_rng(18)
        a = _param(rng, (8,))
        q = rng.standard_normal((8, 8))
        q = q + q.T

        def build():
            v = reshape(a, (1, 8))
            return reduce_sum(mul(matmul(v, Tensor(q)), v))

        err = finite_diff_check(build, [a], rng=np.random.default_rng(0))
        assert err < 1e-9


class TestLosses:
    def test_mse_zero_and_constant_offset(self):
        rng = np.random.default_rng(20)
        t = rng.standard_normal((17, 3))
        assert mse_loss(Tensor(t), Tensor(t)).item() == 0.0
        off = mse_loss(Tensor(t + 0.1), Tensor(t))
        assert abs(off.item() - 0.01) < 1e-12

    def test_mse_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(Tensor(np.zeros((17, 3))), Tensor(np.zeros((3, 17))))

    def test_mse_nonnegative(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            a, b = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
            assert mse_loss(Tensor(a), Tensor(b)).item() >= 0.0

    def test_cross_entropy_uniform_logits(self):
        logits = Tensor(np.zeros((6, 5)))
        out = cross_entropy_loss(logits, np.zeros(6, dtype=int))
        assert abs(out.item() - np.log(5.0)) < 1e-12

    def test_cross_entropy_saturated(self):
        logits = np.zeros((3, 5))
        logits[np.arange(3), [1, 2, 4]] = 100.0
        out = cross_entropy_loss(Tensor(logits), np.array([1, 2, 4]))
        assert out.item() < 1e-12
        assert out.item() >= 0.0

    def test_cross_entropy_label_range(self):
        with pytest.raises(ValueError, match="labels out of range"):
            cross_entropy_loss(Tensor(np.zeros((2, 5))), np.array([0, 5]))

    def test_cross_entropy_gradient(self):
        rng = np.random.default_rng(22)
        logits = _param(rng, (8, 5))
        labels = rng.integers(0, 5, size=8)
        err = finite_diff_check(
            lambda: cross_entropy_loss(logits, labels), [logits], rng=np.random.default_rng(1)
        )
        assert err < 1e-6

    def test_triplet_satisfied_is_zero(self):
        a = Tensor(np.zeros((1, 4)))
        n = Tensor(np.full((1, 4), 0.5))  # ||a-n|| = 1
        out = triplet_loss(a, a, n, margin=0.2)
        assert abs(out.item()) < 1e-9

    def test_triplet_direct_value(self):
        # ||a-p|| = 0.5, ||a-n|| = 0.4, margin 0.2 -> 0.3
        a = Tensor(np.zeros((1, 1)))
        p = Tensor(np.array([[0.5]]))
        n = Tensor(np.array([[0.4]]))
        out = triplet_loss(a, p, n, margin=0.2)
        assert abs(out.item() - 0.3) < 1e-9

    def test_triplet_degenerate_zero_margin(self):
        a = Tensor(np.ones((2, 3)))
        assert abs(triplet_loss(a, a, a, margin=0.0).item()) < 1e-9

    def test_mining_picks_hardest(self):
        emb = np.array([[0.0], [1.0], [10.0], [11.0]])
        labels = np.array([0, 0, 1, 1])
        anchors, pos, neg = mine_batch_hard(emb, labels)
        np.testing.assert_array_equal(anchors, [0, 1, 2, 3])
        np.testing.assert_array_equal(pos, [1, 0, 3, 2])
        np.testing.assert_array_equal(neg, [2, 2, 1, 1])

    def test_mining_requires_positive_and_negative(self):
        emb = np.zeros((3, 2))
        with pytest.raises(MiningError):
            mine_batch_hard(emb, np.array([0, 0, 0]))  # no negatives
        with pytest.raises(MiningError):
            mine_batch_hard(emb, np.array([0, 1, 2]))  # no positives

    def test_batch_hard_gradient(self):
        rng = np.random.default_rng(23)
        emb = _param(rng, (8, 6))
        labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        a, p, n = mine_batch_hard(emb.data, labels)

        def build():  # mining indices held fixed: FD compares branch derivatives
            return triplet_loss(
                take(emb, a, axis=0), take(emb, p, axis=0), take(emb, n, axis=0), margin=0.2
            )

        err = finite_diff_check(build, [emb], rng=np.random.default_rng(2))
        assert err < 1e-6

    def test_batch_hard_wrapper_runs(self):
        rng = np.random.default_rng(24)
        emb = _param(rng, (8, 6))
        labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        out = batch_hard_triplet_loss(emb, labels, margin=0.2)
        assert out.item() >= 0.0


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        store = ParamStore()
        p = store.add("w", np.array([1.0, -2.0]))
        p.grad = np.zeros(2)
        state = AdamState(lr=1e-3)
        adam_step(store, state)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_magnitude_is_lr_sign(self):
        store = ParamStore()
        p = store.add("w", np.array([0.5, -0.5, 2.0]))
        g = np.array([0.3, -4.0, 1e-2])
        p.grad = g.copy()
        state = AdamState(lr=1e-3)
        before = p.data.copy()
        adam_step(store, state)
        update = before - p.data
        np.testing.assert_allclose(update, 1e-3 * np.sign(g), atol=1e-6)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(7)
            store = ParamStore()
            p = store.add("w", rng.standard_normal(5))
            state = AdamState()
            for _ in range(10):
                p.grad = np.sin(p.data)
                adam_step(store, state)
                p.grad = None
            return p.data.copy()

        np.testing.assert_array_equal(run(), run())

    def test_missing_grad_names_parameter(self):
        store = ParamStore()
        store.add("enc.w", np.zeros(3))
        with pytest.raises(ValueError, match="enc.w"):
            adam_step(store, AdamState())


class TestParamStoreCheckpoint:
    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("a", np.zeros(2))
        with pytest.raises(ValueError, match="duplicate"):
            store.add("a", np.zeros(2))

    def test_roundtrip_and_hash_stability(self, tmp_path):
        rng = np.random.default_rng(30)
        store = ParamStore()
        store.add("enc.w", rng.standard_normal((4, 3)))
        store.add("enc.b", rng.standard_normal(3))
        save_checkpoint(store, tmp_path / "ck")
        values = load_checkpoint(tmp_path / "ck")
        assert list(values) == ["enc.w", "enc.b"]
        np.testing.assert_array_equal(values["enc.w"], store["enc.w"].data)
        h1 = file_sha256(tmp_path / "ck" / "model.bin")
        save_checkpoint(store, tmp_path / "ck2")
        assert file_sha256(tmp_path / "ck2" / "model.bin") == h1

    def test_load_values_reports_missing_names(self):
        store = ParamStore()
        store.add("enc.w", np.zeros(2))
        store.add("enc.b", np.zeros(2))
        with pytest.raises(KeyError, match="enc.b"):
            store.load_values({"enc.w": np.ones(2)}, prefixes=("enc.",))

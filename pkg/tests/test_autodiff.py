import math

import numpy as np
import pytest

from navworld.autodiff import (
    GradBuffer,
    ParamVector,
    RmsPropState,
    Tape,
    Tensor,
    add,
    add_n,
    backward,
    bernoulli_nll,
    categorical_nll,
    concat,
    conv2d,
    flatten,
    grad_check,
    linear,
    load_params,
    log_softmax,
    lstm_cell,
    mse,
    policy_entropy,
    relu,
    save_params,
    scale,
    sigmoid,
    softmax,
    tanh,
    tensor_grad_check,
)
from navworld.errors import ConfigurationError, DataError


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64))


class TestLinear:
    def test_identity(self):
        y = linear(Tape(), t64([1.0, 2.0, 3.0]), t64(np.eye(3)), t64(np.zeros(3)))
        np.testing.assert_array_equal(y.data, [1.0, 2.0, 3.0])

    def test_zero_weights_pass_bias(self):
        y = linear(Tape(), t64([9.0, -2.0]), t64(np.zeros((1, 2))), t64([5.0]))
        np.testing.assert_array_equal(y.data, [5.0])

    def test_weight_grad_is_outer_product(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4)
        w = Tensor(rng.standard_normal((3, 4)), grad=np.zeros((3, 4)))
        b = Tensor(np.zeros(3), grad=np.zeros(3))
        tape = Tape()
        y = linear(tape, t64(x), w, b)
        loss = mse(tape, y, y.data - 1.0)  # d(loss)/dy = 2/3 per entry
        backward(tape, loss)
        np.testing.assert_allclose(w.grad, np.outer(np.full(3, 2.0 / 3.0), x), atol=1e-12)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ConfigurationError):
            linear(Tape(), t64([1.0, 2.0]), t64(np.zeros((3, 5))), t64(np.zeros(3)))


class TestConv2d:
    def test_output_shape_84(self):
        y = conv2d(Tape(), t64(np.zeros((3, 84, 84))), t64(np.zeros((16, 3, 8, 8))), t64(np.zeros(16)), 4)
        assert y.data.shape == (16, 20, 20)

    def test_output_shape_20(self):
        y = conv2d(Tape(), t64(np.zeros((16, 20, 20))), t64(np.zeros((32, 16, 4, 4))), t64(np.zeros(32)), 2)
        assert y.data.shape == (32, 9, 9)

    def test_identity_kernel(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((1, 5, 5))
        k = np.ones((1, 1, 1, 1))
        y = conv2d(Tape(), t64(x), t64(k), t64(np.zeros(1)), 1)
        np.testing.assert_allclose(y.data, x)

    def test_kernel_larger_than_input_raises(self):
        with pytest.raises(ConfigurationError):
            conv2d(Tape(), t64(np.zeros((1, 4, 4))), t64(np.zeros((1, 1, 5, 5))), t64(np.zeros(1)), 1)


class TestLstmCell:
    def zeros_cell(self, width, n_in):
        return (
            t64(np.zeros((4 * width, n_in))),
            t64(np.zeros((4 * width, width))),
            t64(np.zeros(4 * width)),
        )

    def test_zero_params_zero_cell(self):
        wx, wh, b = self.zeros_cell(2, 3)
        h2, c2 = lstm_cell(Tape(), t64([1.0, 2.0, 3.0]), t64(np.zeros(2)), t64(np.zeros(2)), wx, wh, b)
        np.testing.assert_array_equal(h2.data, np.zeros(2))
        np.testing.assert_array_equal(c2.data, np.zeros(2))

    def test_zero_params_unit_cell(self):
        # all gates sigmoid(0)=0.5, candidate tanh(0)=0: c' = 0.5*c, h' = 0.5*tanh(c')
        wx, wh, b = self.zeros_cell(1, 1)
        h2, c2 = lstm_cell(Tape(), t64([0.0]), t64([0.0]), t64([1.0]), wx, wh, b)
        assert c2.data[0] == pytest.approx(0.5, abs=1e-12)
        assert h2.data[0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-12)

    def test_width_mismatch_raises(self):
        wx, wh, b = self.zeros_cell(2, 3)
        with pytest.raises(ConfigurationError):
            lstm_cell(Tape(), t64([1.0, 2.0, 3.0]), t64(np.zeros(2)), t64(np.zeros(3)), wx, wh, b)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(7)

        def case(tape, ts):
            h2, c2 = lstm_cell(tape, ts[0], ts[1], ts[2], ts[3], ts[4], ts[5])
            return add(tape, mse(tape, h2, np.ones(3)), mse(tape, c2, -np.ones(3)))

        err = tensor_grad_check(
            case,
            [
                rng.standard_normal(5),
                rng.standard_normal(3),
                rng.standard_normal(3),
                rng.standard_normal((12, 5)),
                rng.standard_normal((12, 3)),
                rng.standard_normal(12),
            ],
        )
        assert err < 1e-5


class TestElementwise:
    def test_softmax_uniform(self):
        p = softmax(Tape(), t64(np.zeros(8)))
        np.testing.assert_allclose(p.data, np.full(8, 0.125), atol=1e-12)

    def test_relu_values(self):
        y = relu(Tape(), t64([-1.0, 2.0]))
        np.testing.assert_array_equal(y.data, [0.0, 2.0])

    def test_sigmoid_zero(self):
        assert sigmoid(Tape(), t64([0.0])).data[0] == pytest.approx(0.5)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        z = rng.standard_normal((5, 8)) * 10
        p = softmax(Tape(), t64(z))
        np.testing.assert_allclose(p.data.sum(axis=-1), np.ones(5), atol=1e-6)

    def test_log_softmax_consistency(self):
        rng = np.random.default_rng(3)
        z = rng.standard_normal(8) * 5
        ls = log_softmax(Tape(), t64(z))
        p = softmax(Tape(), t64(z))
        np.testing.assert_allclose(ls.data, np.log(p.data), atol=1e-6)

    def test_softmax_extreme_logits_stable(self):
        p = softmax(Tape(), t64([1e6, 0.0, -1e6]))
        assert np.isfinite(p.data).all()
        assert p.data[0] == pytest.approx(1.0)


class TestLosses:
    def test_nll_uniform_is_log8(self):
        loss = categorical_nll(Tape(), t64(np.zeros(8)), 3)
        assert float(loss.data) == pytest.approx(math.log(8), abs=1e-9)

    def test_nll_out_of_range(self):
        with pytest.raises(DataError):
            categorical_nll(Tape(), t64(np.zeros(8)), 8)

    def test_mse_identity_zero(self):
        p = np.array([1.0, -2.0, 3.5])
        assert float(mse(Tape(), t64(p), p).data) == 0.0

    def test_entropy_uniform_and_onehot(self):
        assert float(policy_entropy(Tape(), t64(np.zeros(8))).data) == pytest.approx(math.log(8), abs=1e-9)
        hot = np.full(8, -1e9)
        hot[2] = 0.0
        assert float(policy_entropy(Tape(), t64(hot)).data) == pytest.approx(0.0, abs=1e-6)

    def test_bernoulli_matches_naive(self):
        for z, y in [(0.3, 1.0), (-2.0, 0.0), (5.0, 1.0)]:
            loss = bernoulli_nll(Tape(), t64(np.asarray(z)), y)
            p = 1.0 / (1.0 + math.exp(-z))
            expected = -(y * math.log(p) + (1 - y) * math.log(1 - p))
            assert float(loss.data) == pytest.approx(expected, abs=1e-9)


class TestBackward:
    def test_empty_tape_noop(self):
        backward(Tape(), t64(1.0))  # must not raise

    def test_constant_loss_zero_grads(self):
        w = Tensor(np.ones((2, 2)), grad=np.zeros((2, 2)))
        tape = Tape()
        loss = mse(tape, t64([1.0]), np.array([0.0]))  # w not on the path
        backward(tape, loss)
        np.testing.assert_array_equal(w.grad, np.zeros((2, 2)))

    def test_two_layer_chain_matches_finite_differences(self):
        rng = np.random.default_rng(11)

        def case(tape, ts):
            w1, b1, w2, b2 = ts
            h = relu(tape, linear(tape, t64(rng_x), w1, b1))
            y = linear(tape, h, w2, b2)
            return categorical_nll(tape, y, 1)

        rng_x = rng.standard_normal(5) + 0.1
        err = tensor_grad_check(
            case,
            [rng.standard_normal((4, 5)), rng.standard_normal(4), rng.standard_normal((3, 4)), rng.standard_normal(3)],
        )
        assert err < 1e-6

    def test_backward_twice_doubles(self):
        w = Tensor(np.array([[2.0]]), grad=np.zeros((1, 1)))
        b = Tensor(np.array([0.0]), grad=np.zeros(1))
        tape = Tape()
        loss = mse(tape, linear(tape, t64([3.0]), w, b), np.array([0.0]))
        backward(tape, loss)
        once = w.grad.copy()
        backward(tape, loss)
        np.testing.assert_allclose(w.grad, 2.0 * once, atol=1e-12)

    def test_backward_is_linear(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(3)
        a, b_coef = 0.7, -1.3

        def run(coeff1, coeff2):
            w = Tensor(rng_w.copy(), grad=np.zeros((3, 3)))
            tape = Tape()
            y = linear(tape, t64(x), w, t64(np.zeros(3)))
            l1 = mse(tape, y, np.zeros(3))
            l2 = categorical_nll(tape, y, 0)
            loss = add(tape, scale(tape, l1, coeff1), scale(tape, l2, coeff2))
            backward(tape, loss)
            return w.grad

        rng_w = rng.standard_normal((3, 3))
        combined = run(a, b_coef)
        parts = a * run(1.0, 0.0) + b_coef * run(0.0, 1.0)
        np.testing.assert_allclose(combined, parts, atol=1e-12)

    def test_fanout_reuse_grads(self):
        # one tensor feeding several ops accumulates all contributions
        def case(tape, ts):
            x = ts[0]
            parts = concat(tape, [relu(tape, x), tanh(tape, x), sigmoid(tape, x)])
            return mse(tape, parts, np.ones(9))

        rng = np.random.default_rng(5)
        assert tensor_grad_check(case, [rng.standard_normal(3) + 0.2]) < 1e-6


@pytest.mark.parametrize("trial", range(100))
def test_primitive_gradients_property(trial):
    """Every primitive against central finite differences, randomized."""
    rng = np.random.default_rng(1000 + trial)

    def case(tape, ts):
        from navworld.autodiff import reshape

        x, w, b, k, kb, wx, wh, lb = ts
        img = reshape(tape, x, (1, 4, 4))
        c = conv2d(tape, img, k, kb, 1)
        v = flatten(tape, c)
        h0 = t64(rng_h.copy())
        c0 = t64(rng_c.copy())
        h2, c2 = lstm_cell(tape, v, h0, c0, wx, wh, lb)
        y = linear(tape, h2, w, b)
        picks = [
            categorical_nll(tape, y, trial % 3),
            scale(tape, policy_entropy(tape, y), 0.3),
            mse(tape, softmax(tape, y), np.full(3, 1.0 / 3.0)),
            bernoulli_nll(tape, linear(tape, h2, lw, lbias), float(trial % 2)),
        ]
        return add_n(tape, picks)

    # weights drawn at moderate scale so gates stay in their smooth regime;
    # saturated gates have gradients below the finite-difference noise floor
    rng_h = rng.standard_normal(2) * 0.5
    rng_c = rng.standard_normal(2) * 0.5
    lw = t64(rng.standard_normal((1, 2)))
    lbias = t64(rng.standard_normal(1) * 0.3)
    inputs = [
        rng.standard_normal(16) * 0.8,
        rng.standard_normal((3, 2)),
        rng.standard_normal(3) * 0.3,
        rng.standard_normal((2, 1, 2, 2)) * 0.5,
        rng.standard_normal(2) * 0.3,
        rng.standard_normal((8, 18)) * 0.25,  # conv output flattens to 2*3*3
        rng.standard_normal((8, 2)) * 0.4,
        rng.standard_normal(8) * 0.3,
    ]
    # small step for curvature-limited elements, large where roundoff bites
    err = tensor_grad_check(case, inputs, eps=(1e-5, 2e-4, 3e-3))
    assert err < 1e-5


class TestParamVector:
    def test_registry_partitions_flat(self):
        pv = ParamVector(np.float32)
        pv.register("a", (3, 4))
        pv.register("b", (5,))
        pv.register("c", (2, 2, 2))
        pv.finalize()
        offsets = sorted((off, int(np.prod(shape))) for off, shape in pv.registry.values())
        cursor = 0
        for off, size in offsets:
            assert off == cursor
            cursor += size
        assert cursor == pv.flat.size == 25

    def test_duplicate_name_rejected(self):
        pv = ParamVector()
        pv.register("a", (2,))
        with pytest.raises(ConfigurationError):
            pv.register("a", (2,))

    def test_views_share_memory(self):
        pv = ParamVector(np.float64)
        pv.register("w", (2, 2))
        pv.finalize()
        pv.view("w")[0, 0] = 7.0
        assert pv.flat[0] == 7.0


class TestRmsProp:
    def test_zero_grad_leaves_params(self):
        pv = ParamVector(np.float64)
        pv.register("w", (4,))
        pv.finalize()
        pv.flat[:] = [1.0, -2.0, 3.0, 0.5]
        before = pv.flat.copy()
        state = RmsPropState(pv)
        from navworld.autodiff import rmsprop_apply

        rmsprop_apply(pv, np.zeros(4), state, lr=1e-2)
        np.testing.assert_array_equal(pv.flat, before)

    def test_single_step_arithmetic(self):
        from navworld.autodiff import rmsprop_apply

        pv = ParamVector(np.float64)
        pv.register("w", (1,))
        pv.finalize()
        state = RmsPropState(pv, decay=0.99, epsilon=0.1)
        rmsprop_apply(pv, np.array([1.0]), state, lr=0.5)
        assert state.ms[0] == pytest.approx(0.01, abs=1e-12)
        assert pv.flat[0] == pytest.approx(-0.5 / math.sqrt(0.11), abs=1e-12)

    def test_repeated_steps_shrink(self):
        from navworld.autodiff import rmsprop_apply

        pv = ParamVector(np.float64)
        pv.register("w", (1,))
        pv.finalize()
        state = RmsPropState(pv, decay=0.99, epsilon=0.1)
        deltas = []
        prev = 0.0
        for _ in range(5):
            rmsprop_apply(pv, np.array([1.0]), state, lr=0.5)
            deltas.append(abs(pv.flat[0] - prev))
            prev = pv.flat[0]
        assert all(d2 < d1 for d1, d2 in zip(deltas, deltas[1:]))

    def test_lr_zero_is_identity(self):
        from navworld.autodiff import rmsprop_apply

        pv = ParamVector(np.float32)
        pv.register("w", (3,))
        pv.finalize()
        pv.flat[:] = [0.25, -1.5, 2.0]
        before = pv.flat.copy()
        rmsprop_apply(pv, np.array([1.0, 2.0, 3.0], dtype=np.float32), RmsPropState(pv), lr=0.0)
        np.testing.assert_array_equal(pv.flat, before)


class TestGradCheckHarness:
    def test_linear_softmax_nll(self):
        rng = np.random.default_rng(21)

        def build():
            pv = ParamVector(np.float64)
            pv.register("w", (4, 6))
            pv.register("b", (4,))
            pv.finalize()
            pv.view("w")[...] = rng.standard_normal((4, 6))
            pv.view("b")[...] = rng.standard_normal(4)
            gbuf = GradBuffer(pv)
            x = rng.standard_normal(6)

            def run(tape):
                w = Tensor(pv.view("w"), grad=gbuf.view("w"))
                b = Tensor(pv.view("b"), grad=gbuf.view("b"))
                return categorical_nll(tape, linear(tape, t64(x), w, b), 2)

            return pv, gbuf, run

        assert grad_check(build) < 1e-6

    def test_dead_relu_path(self):
        rng = np.random.default_rng(22)

        def build():
            pv = ParamVector(np.float64)
            pv.register("w1", (4, 3))
            pv.register("w2", (1, 4))
            pv.finalize()
            pv.view("w1")[...] = rng.standard_normal((4, 3))
            pv.view("w1")[0, :] = -5.0  # unit 0 stays dead for this input
            pv.view("w2")[...] = rng.standard_normal((1, 4))
            gbuf = GradBuffer(pv)
            x = np.abs(rng.standard_normal(3)) + 0.5

            def run(tape):
                w1 = Tensor(pv.view("w1"), grad=gbuf.view("w1"))
                w2 = Tensor(pv.view("w2"), grad=gbuf.view("w2"))
                h = relu(tape, linear(tape, t64(x), w1, t64(np.zeros(4))))
                return mse(tape, linear(tape, h, w2, t64(np.zeros(1))), np.array([1.0]))

            return pv, gbuf, run

        assert grad_check(build) < 1e-5


class TestCheckpoint:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        pv = ParamVector(np.float32)
        pv.register("conv/W", (4, 3, 2, 2))
        pv.register("conv/b", (4,))
        pv.register("lstm/Wx", (16, 10))
        pv.finalize()
        pv.flat[:] = rng.standard_normal(pv.size).astype(np.float32)
        path = tmp_path / "agent.navw"
        save_params(path, pv)
        loaded = load_params(path)
        assert loaded.registry == pv.registry
        np.testing.assert_array_equal(loaded.flat, pv.flat)
        # save again: byte-identical files
        path2 = tmp_path / "agent2.navw"
        save_params(path2, loaded)
        assert path.read_bytes() == path2.read_bytes()

    def test_magic_guard(self, tmp_path):
        p = tmp_path / "bogus.navw"
        p.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(DataError):
            load_params(p)

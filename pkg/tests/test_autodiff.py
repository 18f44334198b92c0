import numpy as np
import pytest

import tgpt.autodiff as ad
from tgpt.autodiff import (
    NonFiniteError,
    Tape,
    backward,
    constant,
    grad_check,
)


def rand(rng, *shape):
    return rng.uniform(-2, 2, shape)


class TestForward:
    def test_softmax_uniform(self):
        out = ad.softmax(constant([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, np.full(3, 1 / 3))

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(0)
        x = rand(rng, 4, 6)
        for c in (-7.0, 3.5, 100.0):
            a = ad.softmax(constant(x)).data
            b = ad.softmax(constant(x + c)).data
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_layer_norm_standardizes(self):
        rng = np.random.default_rng(1)
        x = rand(rng, 5, 8)
        out = ad.layer_norm(constant(x), constant(np.ones(8)),
                            constant(np.zeros(8)), eps=1e-12).data
        np.testing.assert_allclose(out.mean(axis=-1), 0, atol=1e-9)
        np.testing.assert_allclose(out.var(axis=-1), 1, atol=1e-9)

    def test_matmul_matches_triple_loop(self):
        rng = np.random.default_rng(2)
        for m, k, n in [(3, 4, 5), (16, 16, 16), (1, 7, 2)]:
            a, b = rand(rng, m, k), rand(rng, k, n)
            ref = np.zeros((m, n))
            for i in range(m):
                for j in range(n):
                    for kk in range(k):
                        ref[i, j] += a[i, kk] * b[kk, j]
            np.testing.assert_allclose(ad.matmul(constant(a), constant(b)).data,
                                       ref, atol=1e-12)

    def test_leading_axis_broadcast(self):
        x = constant(np.ones((2, 3, 4)))
        bias = constant(np.arange(4.0))
        out = (x + bias).data
        assert out.shape == (2, 3, 4)
        np.testing.assert_array_equal(out[1, 2], 1 + np.arange(4.0))

    def test_mid_axis_broadcast_rejected(self):
        with pytest.raises(ValueError, match="trailing"):
            ad.add(constant(np.ones((2, 1, 4))), constant(np.ones((2, 3, 4))))

    def test_non_finite_raises(self):
        with pytest.raises(NonFiniteError):
            ad.log(constant([0.0]))
        with pytest.raises(NonFiniteError):
            ad.exp(constant([1e9]))

    def test_gather(self):
        x = constant(np.arange(12.0).reshape(4, 3))
        out = ad.gather(x, [2, 0, 2]).data
        np.testing.assert_array_equal(out, [[6, 7, 8], [0, 1, 2], [6, 7, 8]])

    def test_concat_slice_roundtrip(self):
        rng = np.random.default_rng(3)
        x = rand(rng, 2, 6)
        t = constant(x)
        parts = [ad.slice_axis(t, 1, i, i + 2) for i in range(0, 6, 2)]
        np.testing.assert_array_equal(ad.concat(parts, axis=1).data, x)


class TestBackward:
    def test_sum_gives_ones(self):
        tape = Tape()
        x = tape.leaf(np.arange(6.0).reshape(2, 3))
        grads = backward(ad.reduce_sum(x))
        np.testing.assert_array_equal(grads[x.node_id], np.ones((2, 3)))

    def test_elementwise_square(self):
        tape = Tape()
        x = tape.leaf(np.array([1.0, 2.0]))
        grads = backward(ad.reduce_sum(ad.mul(x, x)))
        np.testing.assert_allclose(grads[x.node_id], [2.0, 4.0])

    def test_fanout_accumulates(self):
        tape = Tape()
        x = tape.leaf(np.array([3.0, -1.0]))
        grads = backward(ad.reduce_sum(x + x))
        np.testing.assert_array_equal(grads[x.node_id], [2.0, 2.0])

    def test_matmul_grad_vs_finite_difference(self):
        rng = np.random.default_rng(4)
        a, b = rand(rng, 3, 4), rand(rng, 4, 2)
        err = grad_check(lambda ta, tb: ad.reduce_sum(ad.matmul(ta, tb)), [a, b])
        assert err < 1e-4

    def test_untracked_leaf_gets_no_gradient(self):
        tape = Tape()
        x = tape.leaf(np.ones(3))
        c = tape.leaf(np.ones(3), requires_grad=False)
        grads = backward(ad.reduce_sum(ad.mul(x, c)))
        assert x.node_id in grads
        assert c.node_id is None

    def test_double_backward_rejected(self):
        tape = Tape()
        x = tape.leaf(np.ones(2))
        loss = ad.reduce_sum(x)
        backward(loss)
        with pytest.raises(RuntimeError, match="consumed"):
            backward(loss)

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        x = tape.leaf(np.ones(3))
        with pytest.raises(ValueError, match="scalar"):
            backward(ad.mul(x, x))

    def test_determinism(self):
        rng = np.random.default_rng(5)
        x0 = rand(rng, 4, 4)

        def run():
            tape = Tape()
            x = tape.leaf(x0)
            y = ad.reduce_sum(ad.gelu(ad.matmul(x, ad.transpose(x))))
            return backward(y)[x.node_id]

        a, b = run(), run()
        assert np.array_equal(a, b)


class TestGradCheck:
    def test_sum_of_squares(self):
        rng = np.random.default_rng(6)
        err = grad_check(lambda t: ad.reduce_sum(ad.mul(t, t)), rand(rng, 3, 3))
        assert err < 1e-8

    def test_constant_function(self):
        err = grad_check(lambda t: ad.reduce_sum(ad.mul(t, constant(np.zeros(4)))),
                         np.ones(4))
        assert err == 0.0

    def test_every_primitive(self):
        rng = np.random.default_rng(7)
        gain, bias = constant(rand(rng, 5)), constant(rand(rng, 5))
        mask = rng.integers(0, 3, 4)
        w45 = constant(rand(rng, 4, 5))
        w85 = constant(rand(rng, 8, 5))
        w43 = constant(rand(rng, 4, 3))
        w54 = constant(rand(rng, 5, 4))
        w5, w4 = constant(rand(rng, 5)), constant(rand(rng, 4))
        cases = {
            "add": lambda t: ad.reduce_sum(ad.add(t, ad.add(t, t))),
            "sub": lambda t: ad.reduce_sum(ad.sub(t, ad.mul(t, t))),
            "mul": lambda t: ad.reduce_sum(ad.mul(t, t)),
            "matmul": lambda t: ad.reduce_sum(ad.matmul(t, ad.transpose(t))),
            "transpose": lambda t: ad.reduce_sum(ad.mul(ad.transpose(t), w54)),
            "reshape": lambda t: ad.reduce_sum(ad.mul(ad.reshape(t, (5, 4)), w54)),
            "concat": lambda t: ad.reduce_sum(ad.mul(ad.concat([t, t], axis=0), w85)),
            "slice": lambda t: ad.reduce_sum(ad.mul(ad.slice_axis(t, 1, 1, 4), w43)),
            "exp": lambda t: ad.reduce_sum(ad.exp(t)),
            "log": lambda t: ad.reduce_sum(ad.log(ad.add(ad.mul(t, t), constant(1.0)))),
            "sqrt": lambda t: ad.reduce_sum(ad.sqrt(ad.add(ad.mul(t, t), constant(1.0)))),
            "softmax": lambda t: ad.reduce_sum(ad.mul(ad.softmax(t), w45)),
            "layer_norm": lambda t: ad.reduce_sum(ad.mul(
                ad.layer_norm(t, gain, bias), w45)),
            "reduce_sum_axis": lambda t: ad.reduce_sum(ad.mul(
                ad.reduce_sum(t, axis=0), w5)),
            "reduce_mean_axis": lambda t: ad.reduce_sum(ad.mul(
                ad.reduce_mean(t, axis=1), w4)),
            "gather": lambda t: ad.reduce_sum(ad.mul(ad.gather(t, mask), w45)),
            "abs": lambda t: ad.reduce_sum(ad.absolute(t)),
        }
        for name, f in cases.items():
            worst = max(grad_check(f, rand(rng, 4, 5)) for _ in range(3))
            assert worst < 1e-4, f"{name}: {worst}"

    def test_gelu_tolerance(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            x = rng.uniform(-6, 6, (3, 4))
            err = grad_check(lambda t: ad.reduce_sum(ad.gelu(t)), x)
            assert err < 1e-3

    def test_layer_norm_params(self):
        rng = np.random.default_rng(9)
        x = rand(rng, 3, 6)
        w = constant(rand(rng, 3, 6))
        err = grad_check(
            lambda t, g, b: ad.reduce_sum(ad.mul(ad.layer_norm(t, g, b), w)),
            [x, rand(rng, 6), rand(rng, 6)])
        assert err < 1e-4

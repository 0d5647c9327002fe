"""Engine-level tests: op semantics, backward rules, graph discipline."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfuse import autodiff as ad
from mmfuse.autodiff import Tensor
from mmfuse.errors import GraphError, NumericError, ShapeError


class TestMatmul:
    def test_identity(self):
        eye = Tensor(np.eye(2))
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(ad.matmul(eye, m).data, m.data)

    def test_dot_product(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        np.testing.assert_array_equal(ad.matmul(a, b).data, [[11.0]])

    def test_shape_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_gradient_matches_finite_differences(self, rng):
        a = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
        err = ad.gradcheck(lambda: ad.sum_(ad.matmul(a, b)), [a, b])
        assert err < 1e-6

    def test_matvec_and_vecmat(self, rng):
        v = Tensor(rng.normal(size=4), requires_grad=True)
        m = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        out = ad.matmul(v, m)
        assert out.shape == (2,)
        assert ad.gradcheck(lambda: ad.sum_(ad.matmul(v, m)), [v, m]) < 1e-6


class TestElementwise:
    def test_tanh_relu_values(self):
        assert ad.tanh(Tensor([0.0])).data[0] == 0.0
        np.testing.assert_array_equal(
            ad.relu(Tensor([-3.0, 3.0])).data, [0.0, 3.0]
        )

    def test_sigmoid_derivative_at_zero(self):
        x = Tensor([0.0], requires_grad=True)
        ad.sum_(ad.sigmoid(x)).backward()
        np.testing.assert_allclose(x.grad, [0.25], atol=1e-12)
        err = ad.gradcheck(lambda: ad.sum_(ad.sigmoid(x)), x)
        assert err < 1e-6

    def test_binary_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_log_domain_error(self):
        with pytest.raises(NumericError, match="log domain"):
            ad.log(Tensor([1.0, -0.5]))

    def test_sqrt_clamps_tolerated_negative(self):
        out = ad.sqrt(Tensor([4.0, -1e-13]))
        np.testing.assert_array_equal(out.data, [2.0, 0.0])
        with pytest.raises(NumericError, match="sqrt domain"):
            ad.sqrt(Tensor([-1e-6]))

    def test_overflow_aborts(self):
        with pytest.raises(NumericError, match="exp"):
            ad.exp(Tensor([1000.0]))

    def test_division_by_zero_aborts(self):
        with pytest.raises(NumericError):
            ad.div(Tensor([1.0]), Tensor([0.0]))

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
    def test_binary_gradients(self, rng, op):
        a = Tensor(rng.uniform(0.5, 2.0, size=(3, 2)), requires_grad=True)
        b = Tensor(rng.uniform(0.5, 2.0, size=(3, 2)), requires_grad=True)
        f = lambda: ad.sum_(ad.elementwise(op, a, b))
        assert ad.gradcheck(f, [a, b]) < 1e-6

    @pytest.mark.parametrize("op", ["exp", "tanh", "relu", "sigmoid", "square", "neg"])
    def test_unary_gradients(self, rng, op):
        x = Tensor(rng.uniform(0.3, 1.5, size=5), requires_grad=True)
        f = lambda: ad.sum_(ad.elementwise(op, x))
        assert ad.gradcheck(f, x) < 1e-6

    def test_row_vector_broadcast(self, rng):
        a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        v = Tensor(rng.normal(size=3), requires_grad=True)
        f = lambda: ad.sum_(ad.mul(ad.add(a, v), ad.add(a, v)))
        assert ad.gradcheck(f, [a, v]) < 1e-6

    def test_scalar_broadcast(self, rng):
        x = Tensor(rng.normal(size=4), requires_grad=True)
        s = Tensor(0.7, requires_grad=True)
        f = lambda: ad.sum_(ad.mul(ad.sub(x, s), ad.sub(x, s)))
        assert ad.gradcheck(f, [x, s]) < 1e-6


class TestSoftmax:
    def test_constant_logits(self):
        np.testing.assert_allclose(
            ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5], atol=1e-15
        )

    def test_large_logits_stable(self):
        out = ad.softmax(Tensor([1000.0, 1000.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)

    def test_exp_ratio(self):
        out = ad.softmax(Tensor([np.log(1.0), np.log(3.0)]))
        np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-12)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8),
           st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_sums_to_one_and_permutation_equivariant(self, logits, pyrandom):
        x = np.array(logits, dtype=np.float64)
        s = ad.softmax(Tensor(x)).data
        assert abs(s.sum() - 1.0) <= 1e-12
        assert np.all(s > 0)
        perm = list(range(len(x)))
        pyrandom.shuffle(perm)
        sp = ad.softmax(Tensor(x[perm])).data
        np.testing.assert_allclose(sp, s[perm], atol=1e-12)

    def test_gradient(self, rng):
        x = Tensor(rng.normal(size=6), requires_grad=True)
        probe = Tensor(rng.normal(size=6))
        f = lambda: ad.sum_(ad.mul(ad.softmax(x), probe))
        assert ad.gradcheck(f, x) < 1e-6


class TestReductions:
    def test_mean(self):
        assert ad.mean(Tensor([1.0, 2.0, 3.0])).item() == 2.0

    def test_sum_gradient_is_ones(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        ad.sum_(x).backward()
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_max_tie_break_lowest_index(self):
        x = Tensor([1.0, 3.0, 3.0], requires_grad=True)
        ad.max_(x).backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_axis_reductions(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        assert ad.sum_(x, axis=0).shape == (4,)
        assert ad.mean(x, axis=1).shape == (3,)
        values = ad.max_(x, axis=0)
        np.testing.assert_array_equal(values.data, x.data.max(axis=0))

    def test_max_axis_gradients(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        probe = Tensor(rng.normal(size=4))
        f = lambda: ad.sum_(ad.mul(ad.max_(x, axis=0), probe))
        assert ad.gradcheck(f, x) < 1e-6


class TestConcatNarrow:
    def test_concat_values(self):
        out = ad.concat([Tensor([1.0, 2.0]), Tensor([3.0])])
        np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])

    def test_concat_shape_contract(self, rng):
        mu = Tensor(rng.normal(size=4))
        sigma = Tensor(rng.normal(size=4))
        assert ad.concat([mu, sigma]).shape == (8,)

    def test_backward_slices_ones_back(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([3.0], requires_grad=True)
        ad.sum_(ad.concat([a, b])).backward()
        np.testing.assert_array_equal(a.grad, [1.0, 1.0])
        np.testing.assert_array_equal(b.grad, [1.0])

    def test_incompatible_shapes(self):
        with pytest.raises(ShapeError):
            ad.concat([Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3)))], axis=0)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
    @settings(max_examples=30, deadline=None)
    def test_concat_narrow_round_trip(self, n1, n2, n3):
        parts = [np.arange(n, dtype=np.float64) + 10 * i
                 for i, n in enumerate((n1, n2, n3))]
        joined = ad.concat([Tensor(p) for p in parts])
        offset = 0
        for p in parts:
            sliced = ad.narrow(joined, 0, offset, len(p))
            np.testing.assert_array_equal(sliced.data, p)
            offset += len(p)


class TestGraph:
    def test_forward_determinism(self, rng):
        x = Tensor(rng.normal(size=(5, 5)))
        w = Tensor(rng.normal(size=(5, 5)))
        a = ad.softmax(ad.matmul(x, w), axis=-1).data
        b = ad.softmax(ad.matmul(x, w), axis=-1).data
        assert np.array_equal(a, b)

    def test_backward_twice_raises(self):
        x = Tensor([2.0], requires_grad=True)
        y = ad.sum_(ad.square(x))
        y.backward()
        with pytest.raises(GraphError, match="already ran"):
            y.backward()

    def test_backward_on_non_scalar_raises(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(GraphError, match="scalar"):
            ad.square(x).backward()

    def test_grad_accumulates_across_graphs(self):
        x = Tensor([1.0], requires_grad=True)
        ad.sum_(ad.mul(x, 2.0)).backward()
        ad.sum_(ad.mul(x, 3.0)).backward()
        np.testing.assert_array_equal(x.grad, [5.0])
        x.zero_grad()
        assert x.grad is None

    def test_no_grad_suppresses_graph(self):
        x = Tensor([1.0], requires_grad=True)
        with ad.no_grad():
            y = ad.square(x)
        assert not y.requires_grad

    def test_reused_node_gradient(self, rng):
        x = Tensor(rng.normal(size=3), requires_grad=True)

        def f():
            y = ad.tanh(x)
            return ad.sum_(ad.add(ad.mul(y, y), y))

        assert ad.gradcheck(f, x) < 1e-6


class TestGradcheck:
    def test_square_at_three(self):
        x = Tensor([3.0], requires_grad=True)
        err = ad.gradcheck(lambda: ad.sum_(ad.square(x)), x)
        assert err < 1e-9

    def test_nonsmooth_point_is_flagged(self):
        # relu has a kink at 0: analytic gradient 0, centered difference 0.5
        x = Tensor([0.0], requires_grad=True)
        err = ad.gradcheck(lambda: ad.sum_(ad.relu(x)), x)
        assert err > 1e-4

    def test_abs_near_kink_is_flagged(self):
        # |x| straddling the kink: the finite difference sees slope 0.5
        eps = 1e-5
        x = Tensor([eps / 2], requires_grad=True)
        f = lambda: ad.sum_(ad.add(ad.relu(x), ad.relu(ad.neg(x))))
        assert ad.gradcheck(f, x, eps=eps) > 1e-4

    def test_non_scalar_output_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(GraphError):
            ad.gradcheck(lambda: ad.square(x), x)

    def test_ten_random_points_all_ops(self, rng):
        # differentiable op sweep at random points, double precision
        for _ in range(10):
            x = Tensor(rng.uniform(0.2, 1.8, size=4), requires_grad=True)
            y = Tensor(rng.uniform(0.2, 1.8, size=4), requires_grad=True)

            def f():
                mix = ad.add(ad.exp(ad.neg(x)), ad.log(y))
                mix = ad.add(mix, ad.mul(ad.sqrt(x), ad.tanh(y)))
                mix = ad.add(mix, ad.div(ad.sigmoid(x), ad.add(ad.square(y), 1.0)))
                return ad.sum_(ad.mul(mix, mix))

            assert ad.gradcheck(f, [x, y]) < 1e-4


class TestTensorInvariants:
    def test_shape_data_consistency(self, rng):
        t = Tensor(rng.normal(size=(3, 4)))
        assert t.size == 12 and t.shape == (3, 4)

    def test_non_finite_input_rejected(self):
        with pytest.raises(NumericError):
            Tensor([1.0, np.nan])
        with pytest.raises(NumericError):
            Tensor([np.inf])

    def test_zero_dimension_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((0, 3)))

    def test_dtype_mismatch_rejected(self):
        a = Tensor([1.0], dtype=np.float32)
        b = Tensor([1.0], dtype=np.float64)
        with pytest.raises(ShapeError, match="dtype"):
            ad.add(a, b)

    def test_single_precision_ops(self, rng):
        x = Tensor(rng.normal(size=(3, 3)), dtype=np.float32)
        y = ad.softmax(ad.matmul(x, x), axis=-1)
        assert y.dtype == np.float32

"""Core autodiff ops: forward values, gradients, and guards."""

import numpy as np
import pytest

from avseg import tensor as T


def rand(rng, *shape):
    return rng.standard_normal(shape)


class TestForwardValues:
    def test_softmax_symmetry(self):
        out = T.softmax(T.Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        x = T.Tensor(rand(rng, 7, 5) * 10)
        out = T.softmax(x, axis=-1)
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all(out.data >= 0)

    def test_sigmoid_identity_case(self):
        assert T.sigmoid(T.Tensor(0.0)).item() == 0.5

    def test_sigmoid_open_interval(self):
        rng = np.random.default_rng(1)
        out = T.sigmoid(T.Tensor(rand(rng, 100) * 8))
        assert np.all(out.data > 0) and np.all(out.data < 1)

    def test_matmul_identity(self):
        rng = np.random.default_rng(2)
        a = rand(rng, 3, 3)
        out = T.matmul(T.Tensor(np.eye(3)), T.Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_logsumexp_matches_numpy(self):
        rng = np.random.default_rng(3)
        x = rand(rng, 4, 6) * 30
        out = T.logsumexp(T.Tensor(x), axis=1)
        ref = np.log(np.exp(x - x.max(1, keepdims=True)).sum(1)) + x.max(1)
        np.testing.assert_allclose(out.data, ref, rtol=1e-12)

    def test_forward_determinism(self):
        def run():
            rng = np.random.default_rng(77)
            x = T.Tensor(rand(rng, 5, 4).astype(np.float32))
            w = T.Tensor(rand(rng, 4, 3).astype(np.float32))
            return T.softmax(T.matmul(x, w)).data

        a, b = run(), run()
        assert np.array_equal(a, b)


class TestBackward:
    def test_quadratic_exact(self):
        # f(x) = sum(x^2) has gradient 2x; central differences are exact here.
        rep = T.grad_check(lambda x: T.ssum(x * x), [np.array([1.0, 2.0])], name="sumsq")
        assert rep.max_rel_error < 1e-6
        x = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        y = T.ssum(x * x)
        y.backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0], rtol=1e-12)

    def test_sigmoid_of_sum(self):
        rng = np.random.default_rng(4)
        rep = T.grad_check(
            lambda x: T.sigmoid(T.ssum(x)), [rand(rng, 4)], name="sigmoid-sum"
        )
        assert rep.max_rel_error < 1e-5

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(5)
        onehot = np.zeros(5)
        onehot[2] = 1.0

        def ce(logits):
            return -T.ssum(T.log_softmax(logits) * T.Tensor(onehot))

        rep = T.grad_check(ce, [rand(rng, 5)], name="softmax-ce")
        assert rep.max_rel_error < 1e-5

    def test_shared_subgraph_accumulates(self):
        x = T.Tensor(np.array(2.0), requires_grad=True)
        y = x * x + x
        y.backward()
        np.testing.assert_allclose(x.grad, 5.0)

    def test_backward_requires_scalar(self):
        x = T.Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2).backward()


OP_CASES = [
    ("add", lambda a, b: T.ssum(a + b), 2),
    ("add_broadcast", lambda a, b: T.ssum(a + T.reshape(b, (1, -1))[:, :3]), 2),
    ("sub", lambda a, b: T.ssum(a - b), 2),
    ("mul", lambda a, b: T.ssum(a * b), 2),
    ("div", lambda a, b: T.ssum(a / (b * b + 1.0)), 2),
    ("matmul", lambda a, b: T.ssum(T.matmul(T.reshape(a, (2, -1)), T.reshape(b, (-1, 2)))), 2),
    ("exp", lambda a: T.ssum(T.exp(a)), 1),
    ("log", lambda a: T.ssum(T.log(a * a + 1.0)), 1),
    ("sigmoid", lambda a: T.ssum(T.sigmoid(a)), 1),
    ("softplus", lambda a: T.ssum(T.softplus(a)), 1),
    ("relu", lambda a: T.ssum(T.relu(a)), 1),
    ("softmax", lambda a: T.ssum(T.softmax(a, axis=-1) * T.softmax(a, axis=-1)), 1),
    ("log_softmax", lambda a: T.ssum(T.log_softmax(a, axis=-1) ** 2), 1),
    ("logsumexp", lambda a: T.ssum(T.logsumexp(T.reshape(a, (2, -1)), axis=1)), 1),
    ("mean", lambda a: T.mean(a * a), 1),
    ("amax", lambda a: T.ssum(T.amax(T.reshape(a, (2, -1)), axis=1)), 1),
    ("power", lambda a: T.ssum((a * a + 1.0) ** 0.5), 1),
    ("reshape_transpose", lambda a: T.ssum(T.transpose(T.reshape(a, (2, -1)), (1, 0)) ** 2), 1),
    ("broadcast_to", lambda a: T.ssum(T.broadcast_to(T.reshape(a, (1, -1)), (3, 6)) ** 2), 1),
    ("concat", lambda a, b: T.ssum(T.concat([a, b], axis=0) ** 2), 2),
    ("getitem", lambda a: T.ssum(T.reshape(a, (2, -1))[0, 1:] ** 2), 1),
    ("gather", lambda a: T.ssum(T.gather(T.reshape(a, (3, 2)), [0, 2, 0]) ** 2), 1),
    ("layer_norm", None, 3),  # handled below
]


class TestOpGradients:
    """Every differentiable op vs central differences, randomized shapes."""

    @pytest.mark.parametrize("name,fn,arity", OP_CASES, ids=[c[0] for c in OP_CASES])
    def test_op_grad(self, name, fn, arity):
        rng = np.random.default_rng(hash(name) % 2**32)
        trials = 3
        for _ in range(trials):
            if name == "layer_norm":
                x = rand(rng, 4, 6)
                g = rand(rng, 6) * 0.5 + 1.0
                b = rand(rng, 6) * 0.1
                rep = T.grad_check(
                    lambda x, g, b: T.ssum(T.layer_norm(x, g, b) ** 2),
                    [x, g, b],
                    name=name,
                )
            elif arity == 1:
                rep = T.grad_check(fn, [rand(rng, 6)], name=name)
            else:
                rep = T.grad_check(fn, [rand(rng, 6), rand(rng, 6)], name=name)
            assert rep.max_rel_error < 1e-5, f"{name}: {rep.max_rel_error}"

    def test_many_randomized_trials(self):
        # Aggregate property: ops stay under 1e-5 across >= 50 random instances.
        rng = np.random.default_rng(99)
        worst = 0.0
        for _ in range(50):
            shape = tuple(rng.integers(2, 5, size=2))
            rep = T.grad_check(
                lambda a, b: T.mean(T.sigmoid(T.matmul(a, b)) ** 2),
                [rand(rng, *shape), rand(rng, shape[1], 3)],
                name="mixed",
            )
            worst = max(worst, rep.max_rel_error)
        assert worst < 1e-5


class TestCheckedMode:
    def test_nan_rejected_in_checked_mode(self):
        with T.checked_mode():
            with pytest.raises(FloatingPointError):
                T.Tensor(np.array([1.0, np.nan]))

    def test_nan_passes_unchecked(self):
        t = T.Tensor(np.array([np.nan]))
        assert np.isnan(t.data[0])

    def test_op_output_guarded(self):
        with T.checked_mode():
            with pytest.raises(FloatingPointError):
                T.log(T.Tensor(np.array([0.0])))


class TestGraphSemantics:
    def test_stop_gradient_blocks(self):
        x = T.Tensor(np.ones(3), requires_grad=True)
        y = T.ssum(T.stop_gradient(x * 2.0) * x)
        y.backward()
        np.testing.assert_allclose(x.grad, 2.0 * np.ones(3))

    def test_constant_subgraphs_not_tracked(self):
        a = T.Tensor(np.ones(3))
        b = a * 2.0
        assert not b.requires_grad and b._parents == ()

    def test_dtype_preserved(self):
        x = T.Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        y = x * np.float32(2.0)
        assert y.dtype == np.float32

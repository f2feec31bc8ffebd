import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asknav import nnet


def rand_params(rng, sizes):
    p = nnet.init_params(sizes, rng)
    # nonzero biases so the gradient check covers them
    p.biases = [rng.normal(0, 0.3, size=b.shape) for b in p.biases]
    return p


def flatten(grads):
    return np.concatenate([g.ravel() for g in grads.weights + grads.biases])


def fd_grads(params, x, out_grad, h=1e-5):
    """Central-difference oracle for d(output . out_grad)/d(params)."""
    def loss(p):
        y, _ = nnet.mlp_forward(p, x)
        return float(np.sum(y * out_grad))

    cols = []
    for arrays in (params.weights, params.biases):
        for l, arr in enumerate(arrays):
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                hi = loss(params)
                arr[idx] = orig - h
                lo = loss(params)
                arr[idx] = orig
                g[idx] = (hi - lo) / (2 * h)
            cols.append(g)
    n = len(params.weights)
    return nnet.Grads(cols[:n], cols[n:])


class TestForward:
    def test_zero_params_zero_output(self):
        p = nnet.MlpParams([3, 4, 2], [np.zeros((4, 3)), np.zeros((2, 4))],
                           [np.zeros(4), np.zeros(2)])
        y, _ = nnet.mlp_forward(p, np.ones(3))
        assert np.array_equal(y, np.zeros(2))

    def test_identity_single_layer(self):
        p = nnet.MlpParams([3, 3], [np.eye(3)], [np.zeros(3)])
        x = np.array([0.5, -1.0, 2.0])
        y, _ = nnet.mlp_forward(p, x)
        assert np.array_equal(y, x)

    def test_hand_evaluated_2_3_2(self):
        w1 = np.array([[0.5, -0.25], [0.1, 0.2], [-0.3, 0.4]])
        b1 = np.array([0.1, -0.1, 0.2])
        w2 = np.array([[1.0, -1.0, 0.5], [0.25, 0.5, -0.5]])
        b2 = np.array([0.0, 0.1])
        p = nnet.MlpParams([2, 3, 2], [w1, w2], [b1, b2])
        y, _ = nnet.mlp_forward(p, np.array([1.0, -1.0]))
        # scalar hand arithmetic, no matrix ops
        a1 = math.tanh(0.85)
        a2 = math.tanh(-0.2)
        a3 = math.tanh(-0.5)
        assert y[0] == pytest.approx(a1 - a2 + 0.5 * a3, abs=1e-12)
        assert y[1] == pytest.approx(0.25 * a1 + 0.5 * a2 - 0.5 * a3 + 0.1, abs=1e-12)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(0)
        p = nnet.init_params([3, 2], rng)
        with pytest.raises(nnet.ShapeMismatch):
            nnet.mlp_forward(p, np.ones(4))

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(1)
        p = rand_params(rng, [4, 5, 3])
        xs = rng.normal(size=(6, 4))
        batch, _ = nnet.mlp_forward(p, xs)
        for i in range(6):
            single, _ = nnet.mlp_forward(p, xs[i])
            assert np.allclose(batch[i], single, atol=1e-14)


class TestBackward:
    def test_zero_output_grad(self):
        rng = np.random.default_rng(2)
        p = rand_params(rng, [3, 4, 2])
        y, cache = nnet.mlp_forward(p, rng.normal(size=3))
        g = nnet.mlp_backward(p, cache, np.zeros_like(y))
        assert all(np.all(w == 0) for w in g.weights)
        assert all(np.all(b == 0) for b in g.biases)

    def test_linear_1_1_weight_grad_is_input(self):
        p = nnet.MlpParams([1, 1], [np.array([[0.7]])], [np.zeros(1)])
        x = np.array([2.5])
        _, cache = nnet.mlp_forward(p, x)
        g = nnet.mlp_backward(p, cache, np.array([1.0]))
        assert g.weights[0][0, 0] == pytest.approx(2.5)
        assert g.biases[0][0] == pytest.approx(1.0)

    def test_matches_finite_differences_3_5_2(self):
        rng = np.random.default_rng(3)
        p = rand_params(rng, [3, 5, 2])
        x = rng.normal(size=3)
        og = rng.normal(size=2)
        _, cache = nnet.mlp_forward(p, x)
        ana = flatten(nnet.mlp_backward(p, cache, og))
        num = flatten(fd_grads(p, x, og))
        rel = np.linalg.norm(ana - num) / max(np.linalg.norm(ana) + np.linalg.norm(num), 1e-12)
        assert rel < 1e-4

    def test_gradient_check_50_random_networks(self):
        rng = np.random.default_rng(99)
        for i in range(50):
            depth = int(rng.integers(1, 4))
            sizes = [int(rng.integers(1, 9)) for _ in range(depth + 1)]
            p = rand_params(rng, sizes)
            x = rng.normal(size=sizes[0])
            og = rng.normal(size=sizes[-1])
            _, cache = nnet.mlp_forward(p, x)
            ana = flatten(nnet.mlp_backward(p, cache, og))
            num = flatten(fd_grads(p, x, og))
            rel = np.linalg.norm(ana - num) / max(np.linalg.norm(ana) + np.linalg.norm(num), 1e-12)
            assert rel < 1e-4, f"network {i} sizes {sizes}: rel error {rel}"

    def test_batched_grads_sum_over_rows(self):
        rng = np.random.default_rng(4)
        p = rand_params(rng, [3, 4, 2])
        xs = rng.normal(size=(5, 3))
        ogs = rng.normal(size=(5, 2))
        _, cache = nnet.mlp_forward(p, xs)
        batched = nnet.mlp_backward(p, cache, ogs)
        acc = nnet.zero_grads(p)
        for i in range(5):
            _, c = nnet.mlp_forward(p, xs[i])
            g = nnet.mlp_backward(p, c, ogs[i])
            for l in range(p.num_layers):
                acc.weights[l] += g.weights[l]
                acc.biases[l] += g.biases[l]
        for l in range(p.num_layers):
            assert np.allclose(batched.weights[l], acc.weights[l], atol=1e-12)
            assert np.allclose(batched.biases[l], acc.biases[l], atol=1e-12)

    def test_forward_backward_do_not_mutate_params(self):
        rng = np.random.default_rng(5)
        p = rand_params(rng, [3, 4, 2])
        before = nnet.params_hash(p)
        _, cache = nnet.mlp_forward(p, rng.normal(size=3))
        nnet.mlp_backward(p, cache, rng.normal(size=2))
        assert nnet.params_hash(p) == before


class TestSoftmaxXent:
    def test_uniform_logits(self):
        loss, grad = nnet.softmax_cross_entropy(np.zeros(2), 0)
        assert loss == pytest.approx(math.log(2))
        assert grad == pytest.approx(np.array([-0.5, 0.5]))

    def test_huge_logits_no_overflow(self):
        loss, _ = nnet.softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_hand_evaluated_closed_form(self):
        loss, _ = nnet.softmax_cross_entropy(np.array([2.0, -1.0]), 1)
        assert loss == pytest.approx(math.log(1 + math.exp(3.0)))

    def test_label_out_of_range(self):
        with pytest.raises(nnet.LabelOutOfRange):
            nnet.softmax_cross_entropy(np.zeros(3), 3)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.data())
    @settings(max_examples=100, deadline=None)
    def test_nonnegative(self, logits, data):
        label = data.draw(st.integers(0, len(logits) - 1))
        loss, _ = nnet.softmax_cross_entropy(np.array(logits), label)
        assert loss >= 0.0

    def test_gradient_is_softmax_minus_onehot(self):
        logits = np.array([0.3, -1.2, 2.0])
        _, grad = nnet.softmax_cross_entropy(logits, 2)
        p = nnet.softmax(logits)
        want = p.copy()
        want[2] -= 1
        assert np.allclose(grad, want, atol=1e-12)


class TestAdam:
    def test_zero_grad_no_change(self):
        rng = np.random.default_rng(6)
        p = rand_params(rng, [2, 3])
        opt = nnet.init_opt_state(p)
        p2, opt2 = nnet.adam_step(p, nnet.zero_grads(p), opt)
        assert np.array_equal(p2.weights[0], p.weights[0])
        assert opt2.step == 1

    def test_hand_evaluated_first_step(self):
        p = nnet.MlpParams([1, 1], [np.array([[0.0]])], [np.zeros(1)])
        opt = nnet.init_opt_state(p, learning_rate=0.1)
        g = nnet.Grads([np.array([[1.0]])], [np.zeros(1)])
        p2, _ = nnet.adam_step(p, g, opt)
        # bias correction makes mhat/sqrt(vhat) = 1 at step 1
        assert p2.weights[0][0, 0] == pytest.approx(-0.1, rel=1e-6)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        p = rand_params(rng, [3, 3])
        g = nnet.Grads([rng.normal(size=(3, 3))], [rng.normal(size=3)])
        a1, o1 = nnet.adam_step(p, g, nnet.init_opt_state(p))
        a2, o2 = nnet.adam_step(p, g, nnet.init_opt_state(p))
        assert np.array_equal(a1.weights[0], a2.weights[0])
        assert o1.step == o2.step

    def test_does_not_mutate_inputs(self):
        rng = np.random.default_rng(8)
        p = rand_params(rng, [2, 2])
        opt = nnet.init_opt_state(p)
        g = nnet.Grads([np.ones((2, 2))], [np.ones(2)])
        before = nnet.params_hash(p)
        nnet.adam_step(p, g, opt)
        assert nnet.params_hash(p) == before
        assert opt.step == 0


class TestSerialization:
    def test_roundtrip_bit_identical_forward(self, tmp_path):
        rng = np.random.default_rng(9)
        p = rand_params(rng, [5, 8, 8, 3])
        path = tmp_path / "w.json"
        nnet.save_params(p, path)
        q = nnet.load_params(path)
        x = rng.normal(size=5)
        ya, _ = nnet.mlp_forward(p, x)
        yb, _ = nnet.mlp_forward(q, x)
        assert np.array_equal(ya, yb)

    def test_hash_stable_and_sensitive(self):
        rng = np.random.default_rng(10)
        p = rand_params(rng, [2, 2])
        q = nnet.clone_params(p)
        assert nnet.params_hash(p) == nnet.params_hash(q)
        q.weights[0][0, 0] += 1e-9
        assert nnet.params_hash(p) != nnet.params_hash(q)

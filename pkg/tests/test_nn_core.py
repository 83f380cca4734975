import numpy as np
import pytest

from dvector.nn_core import (
    AdamState,
    LstmLayerParams,
    NonFiniteGradient,
    adam_step,
    clip_by_global_norm,
    finite_diff_check,
    lstm_backward,
    lstm_forward,
    sigmoid,
)


def random_layer(seed, input_dim=3, cell_dim=4, proj_dim=2, scale=0.5):
    rng = np.random.default_rng(seed)
    layer = LstmLayerParams.init(input_dim, cell_dim, proj_dim, rng)
    layer.b += rng.normal(0, scale, layer.b.shape)
    layer.p += rng.normal(0, scale, layer.p.shape)
    return layer, rng


def scalar_loop_lstm(layer, xs):
    """Straight-line recurrence with explicit per-unit loops, gate order i f o g."""
    C, R, In = layer.cell_dim, layer.proj_dim, layer.input_dim
    r = [0.0] * R
    c = [0.0] * C
    outputs = []
    for x in xs:
        v = list(x) + r
        z = [layer.b[k] + sum(layer.W[k, m] * v[m] for m in range(In + R)) for k in range(4 * C)]
        sig = lambda a: 1.0 / (1.0 + np.exp(-a))
        h = []
        for u in range(C):
            i, f, o = sig(z[u]), sig(z[C + u]), sig(z[2 * C + u])
            g = np.tanh(z[3 * C + u])
            c[u] = f * c[u] + i * g
            h.append(o * np.tanh(c[u]))
        r = [layer.p[q] + sum(layer.P[q, u] * h[u] for u in range(C)) for q in range(R)]
        outputs.append(r)
    return np.array(outputs)


class TestForward:
    def test_zero_params(self):
        layer = LstmLayerParams.zeros(3, 4, 2)
        out, _ = lstm_forward(layer, np.random.default_rng(0).normal(size=(6, 3)))
        np.testing.assert_array_equal(out, 0.0)

    def test_forget_bias_zero_state(self):
        layer = LstmLayerParams.zeros(3, 4, 2)
        layer.b[4:8] = 10.0
        layer.P[:] = 1.0
        out, _ = lstm_forward(layer, np.zeros((1, 3)))
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_matches_scalar_loop(self):
        layer, rng = random_layer(11)
        xs = rng.normal(size=(5, 3))
        out, _ = lstm_forward(layer, xs)
        np.testing.assert_allclose(out, scalar_loop_lstm(layer, xs), rtol=1e-12, atol=1e-14)

    def test_batch_matches_single(self):
        layer, rng = random_layer(2)
        xs = rng.normal(size=(7, 3, 3))
        batched, _ = lstm_forward(layer, xs)
        for b in range(3):
            single, _ = lstm_forward(layer, xs[:, b])
            np.testing.assert_allclose(batched[:, b], single, rtol=1e-13, atol=1e-15)

    def test_dimension_mismatch(self):
        layer, rng = random_layer(0)
        with pytest.raises(ValueError):
            lstm_forward(layer, rng.normal(size=(4, 5)))

    def test_deterministic(self):
        layer, rng = random_layer(4)
        xs = rng.normal(size=(9, 2, 3))
        a, _ = lstm_forward(layer, xs)
        b, _ = lstm_forward(layer, xs)
        assert a.tobytes() == b.tobytes()

    def test_sigmoid_extremes(self):
        np.testing.assert_allclose(sigmoid(np.array([-800.0, 0.0, 800.0])), [0.0, 0.5, 1.0])


def lstm_gradcheck(seed, T=3, batch=None):
    layer, rng = random_layer(seed)
    shape = (T, 3) if batch is None else (T, batch, 3)
    xs = rng.normal(size=shape)
    weights = rng.normal(size=shape[:-1] + (2,))

    def loss():
        out, _ = lstm_forward(layer, xs)
        return float(np.sum(out * weights))

    out, cache = lstm_forward(layer, xs)
    grads, dx = lstm_backward(cache, weights)
    params = dict(layer.tensors(), x=xs)
    analytic = dict(grads, x=dx)
    return finite_diff_check(loss, params, analytic, eps=1e-4)


class TestBackward:
    def test_zero_output_grads(self):
        layer, rng = random_layer(1)
        out, cache = lstm_forward(layer, rng.normal(size=(4, 3)))
        grads, dx = lstm_backward(cache, np.zeros_like(out))
        for g in grads.values():
            np.testing.assert_array_equal(g, 0.0)
        np.testing.assert_array_equal(dx, 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        report = lstm_gradcheck(seed)
        assert report.max_rel_error < 1e-4, report

    def test_batched_finite_differences(self):
        assert lstm_gradcheck(8, T=4, batch=3).max_rel_error < 1e-4

    def test_sum_of_outputs_bias(self):
        layer, rng = random_layer(6)
        xs = rng.normal(size=(3, 3))

        def loss():
            return float(lstm_forward(layer, xs)[0].sum())

        out, cache = lstm_forward(layer, xs)
        grads, _ = lstm_backward(cache, np.ones_like(out))
        report = finite_diff_check(loss, {"b": layer.b}, {"b": grads["b"]})
        assert report.max_rel_error < 1e-4

    def test_mismatched_cache(self):
        layer, rng = random_layer(0)
        out, cache = lstm_forward(layer, rng.normal(size=(4, 3)))
        with pytest.raises(ValueError):
            lstm_backward(cache, np.zeros((5, 2)))


class TestAdam:
    def test_zero_grads(self):
        p = {"w": np.array([1.5, -2.0])}
        state = AdamState()
        adam_step(p, {"w": np.array([1.0, 1.0])}, state, lr=0.1)
        before = p["w"].copy()
        m_before = state.m["w"].copy()
        adam_step(p, {"w": np.zeros(2)}, state, lr=0.1)
        # with zero grads the first moment decays by beta1 and params keep moving on momentum only
        np.testing.assert_allclose(state.m["w"], 0.9 * m_before)
        fresh = {"w": np.array([3.0])}
        adam_step(fresh, {"w": np.zeros(1)}, AdamState(), lr=0.1)
        np.testing.assert_array_equal(fresh["w"], [3.0])
        assert not np.array_equal(before, p["w"])

    def test_first_step(self):
        p = {"w": np.array([0.0])}
        adam_step(p, {"w": np.array([1.0])}, AdamState(), lr=0.1)
        np.testing.assert_allclose(p["w"], [-0.1], rtol=1e-6)

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(7)
            p = {"w": rng.normal(size=(4, 3))}
            state = AdamState()
            for _ in range(100):
                adam_step(p, {"w": 2 * p["w"] + rng.normal(size=(4, 3))}, state, lr=0.01)
            return p["w"].tobytes()

        assert run() == run()

    def test_non_finite(self):
        p = {"w": np.array([1.0])}
        state = AdamState()
        with pytest.raises(NonFiniteGradient):
            adam_step(p, {"w": np.array([np.nan])}, state)
        assert state.step == 0 and p["w"][0] == 1.0


def test_clip_by_global_norm():
    g = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
    norm = clip_by_global_norm(g, 1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt(sum(np.sum(v**2) for v in g.values()))
    assert total == pytest.approx(1.0)
    small = {"a": np.array([0.1])}
    clip_by_global_norm(small, 3.0)
    assert small["a"][0] == 0.1


class TestFiniteDiffCheck:
    def test_quadratic(self):
        p = {"p": np.random.default_rng(0).normal(size=(3, 4))}
        report = finite_diff_check(lambda: 0.5 * float(np.sum(p["p"] ** 2)), p, {"p": p["p"].copy()})
        assert report.max_rel_error < 1e-8

    def test_linear(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=10)
        p = {"p": rng.normal(size=10)}
        report = finite_diff_check(lambda: float(a @ p["p"]), p, {"p": a})
        assert report.max_rel_error < 1e-10

    def test_subsampling(self):
        p = {"p": np.zeros(50)}
        report = finite_diff_check(lambda: float(np.sum(p["p"])), p, {"p": np.ones(50)}, max_coords=7)
        assert report.n_checked == 7

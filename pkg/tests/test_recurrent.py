import math

import numpy as np
import pytest

from quickcpd.recurrent import (
    ModelParams,
    ModelSpec,
    backward,
    forward,
    from_json,
    init_params,
    predict,
    to_json,
)


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def straight_line(params: ModelParams, x: np.ndarray) -> list[float]:
    """Scalar-by-scalar re-evaluation of the cell equations, no vectorisation."""
    spec = params.spec
    H, D = spec.hidden_dim, spec.input_dim
    W, U, b = params["W"].tolist(), params["U"].tolist(), params["b"].tolist()
    hw, hb = params["head_w"].tolist(), float(params["head_b"])
    h = [0.0] * H
    c = [0.0] * H
    out = []

    def pre(col, hvec):
        return b[col] + sum(x_t[d] * W[d][col] for d in range(D)) + sum(hvec[k] * U[k][col] for k in range(H))

    for x_t in x.tolist():
        if spec.cell == "lstm":
            new_h, new_c = [], []
            for j in range(H):
                i = _sig(pre(j, h))
                f = _sig(pre(H + j, h))
                g = math.tanh(pre(2 * H + j, h))
                o = _sig(pre(3 * H + j, h))
                cj = f * c[j] + i * g
                new_c.append(cj)
                new_h.append(o * math.tanh(cj))
            h, c = new_h, new_c
        else:
            z = [_sig(pre(j, h)) for j in range(H)]
            r = [_sig(pre(H + j, h)) for j in range(H)]
            rh = [r[k] * h[k] for k in range(H)]
            n = [math.tanh(b[2 * H + j] + sum(x_t[d] * W[d][2 * H + j] for d in range(D))
                           + sum(rh[k] * U[k][2 * H + j] for k in range(H))) for j in range(H)]
            h = [(1 - z[j]) * n[j] + z[j] * h[j] for j in range(H)]
        out.append(_sig(hb + sum(hw[j] * h[j] for j in range(H))))
    return out


def _random(cell, seed, T=6, D=3, H=4, dropout=0.0):
    g = np.random.default_rng(seed)
    spec = ModelSpec(D, H, cell, dropout)
    params = ModelParams(spec, {k: g.normal(0, 0.7, size=s) for k, s in spec.shapes().items()})
    return params, g.normal(size=(T, D)), g


@pytest.mark.parametrize("cell", ["lstm", "gru"])
def test_zero_params_give_one_half(cell):
    spec = ModelSpec(2, 5, cell)
    params = ModelParams(spec, {k: np.zeros(s) for k, s in spec.shapes().items()})
    p, _ = forward(params, np.random.default_rng(0).normal(size=(7, 2)))
    assert np.all(p == 0.5)


@pytest.mark.parametrize("cell", ["lstm", "gru"])
@pytest.mark.parametrize("seed", range(3))
def test_matches_straight_line_evaluator(cell, seed):
    params, x, _ = _random(cell, seed)
    p, _ = forward(params, x)
    assert np.allclose(p, straight_line(params, x), rtol=0, atol=1e-13)


@pytest.mark.parametrize("cell", ["lstm", "gru"])
def test_causality(cell):
    params, x, _ = _random(cell, 7, T=9)
    full, _ = forward(params, x)
    for t in range(x.shape[0]):
        pref, _ = forward(params, x[: t + 1])
        assert np.array_equal(pref, full[: t + 1])


@pytest.mark.parametrize("cell", ["lstm", "gru"])
def test_output_strictly_inside_unit_interval(cell):
    params, x, _ = _random(cell, 1, T=20)
    p, _ = forward(params, 50.0 * x)
    assert np.all((p > 0) & (p < 1))


def test_eval_mode_is_deterministic():
    params, x, _ = _random("lstm", 2)
    a, _ = forward(params, x)
    b, _ = forward(params, x.copy())
    assert np.array_equal(a, b)


def test_batch_rows_are_independent():
    params, _, g = _random("gru", 4)
    xs = g.normal(size=(5, 8, 3))
    batched = predict(params, xs, batch_size=2)
    for i in range(5):
        assert np.allclose(batched[i], forward(params, xs[i])[0], rtol=0, atol=1e-15)


def test_init_bounds_and_seeding():
    spec = ModelSpec(3, 8)
    a = init_params(spec, np.random.default_rng(0))
    b = init_params(spec, np.random.default_rng(0))
    c = init_params(spec, np.random.default_rng(1))
    bound = 1 / math.sqrt(8)
    for k in spec.shapes():
        assert np.all(np.abs(a[k]) <= bound)
        assert np.array_equal(a[k], b[k])
    assert not np.array_equal(a["W"], c["W"])


# -- gradients ------------------------------------------------------------------


def fd_param_grads(params, x, weights, mask=None, eps=1e-6):
    out = {}
    for name, arr in params.arrays.items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            vals = []
            for sign in (1, -1):
                q = params.copy()
                q.arrays[name][idx] += sign * eps
                p, _ = forward(q, x, training=mask is not None, dropout_mask=mask)
                vals.append(float((weights * p).sum()))
            g[idx] = (vals[0] - vals[1]) / (2 * eps)
        out[name] = g
    return out


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-10)


@pytest.mark.parametrize("cell", ["lstm", "gru"])
@pytest.mark.parametrize("seed", range(4))
def test_backward_matches_finite_differences(cell, seed):
    params, _, g = _random(cell, seed, H=3)
    T, D = int(g.integers(1, 9)), params.spec.input_dim
    x = g.normal(size=(2, T, D))
    weights = g.normal(size=(2, T))
    _, tape = forward(params, x)
    got = backward(params, tape, weights)
    fd = fd_param_grads(params, x, weights)
    for name in got:
        assert rel_err(got[name], fd[name]) < 1e-6, name


@pytest.mark.parametrize("cell", ["lstm", "gru"])
def test_backward_with_dropout_mask(cell):
    params, _, g = _random(cell, 11, H=4, dropout=0.5)
    x = g.normal(size=(2, 5, 3))
    mask = (g.random((2, 5, 4)) < 0.5) / 0.5
    weights = g.normal(size=(2, 5))
    _, tape = forward(params, x, training=True, dropout_mask=mask)
    got = backward(params, tape, weights)
    fd = fd_param_grads(params, x, weights, mask)
    for name in got:
        assert rel_err(got[name], fd[name]) < 1e-6, name


def test_zero_upstream_gives_zero_grads():
    params, x, _ = _random("lstm", 0)
    _, tape = forward(params, x)
    for arr in backward(params, tape, np.zeros(x.shape[0])).values():
        assert not np.any(arr)


def test_single_step_lstm_by_hand():
    params, x, _ = _random("lstm", 5, T=1, D=2, H=2)
    p, tape = forward(params, x)
    H = 2
    a = x[0] @ params["W"] + params["b"]
    i, f, g_, o = (1 / (1 + np.exp(-a[:H])), None, np.tanh(a[2 * H:3 * H]), 1 / (1 + np.exp(-a[3 * H:])))
    c = i * g_
    h = o * np.tanh(c)
    dz = p[0] * (1 - p[0])
    dh = dz * params["head_w"]
    dc = dh * o * (1 - np.tanh(c) ** 2)
    da = np.concatenate([dc * g_ * i * (1 - i), np.zeros(H), dc * i * (1 - g_ ** 2),
                         dh * np.tanh(c) * o * (1 - o)])
    grads = backward(params, tape, np.array([1.0]))
    assert np.allclose(grads["head_w"], dz * h)
    assert np.allclose(grads["b"], da)
    assert np.allclose(grads["W"], np.outer(x[0], da))
    assert not np.any(grads["U"])


def test_checkpoint_roundtrip_is_exact():
    params, x, _ = _random("gru", 3)
    back = from_json(to_json(params))
    assert back.spec == params.spec
    for k in params.arrays:
        assert np.array_equal(back[k], params[k])
    assert to_json(back) == to_json(params)


def test_dropout_needs_rng_in_training():
    params, x, _ = _random("lstm", 0, dropout=0.3)
    with pytest.raises(ValueError):
        forward(params, x, training=True)
    p_eval, _ = forward(params, x)
    p_eval2, _ = forward(params, x, training=False)
    assert np.array_equal(p_eval, p_eval2)


def test_wrong_input_dim_rejected():
    params, x, _ = _random("lstm", 0)
    with pytest.raises(ValueError):
        forward(params, x[:, :2])

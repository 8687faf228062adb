import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtgnsvdd import diffcore as dc
from rtgnsvdd.diffcore import (
    GruParams,
    OptimizerState,
    ShapeError,
    Tape,
    TapeError,
    Value,
    adam_step,
    backward,
    clip_global_norm,
    grad_check,
    value_fn_to_checked,
)

RNG = np.random.default_rng(20240901)


def checked(fn, x, eps=1e-5):
    return grad_check(value_fn_to_checked(fn), np.asarray(x, dtype=np.float64), eps=eps)


# ---------------------------------------------------------------------------
# linear


def test_linear_identity():
    out = dc.linear(Value([1.0, 0.0]), Value(np.eye(2)), Value(np.zeros(2)))
    assert np.allclose(out.data, [1.0, 0.0])


def test_linear_scalar_affine():
    out = dc.linear(Value([2.0]), Value([[3.0]]), Value([1.0]))
    assert np.allclose(out.data, [7.0])


def test_linear_batched_rows_match_single():
    x = RNG.normal(size=(5, 4))
    w = Value(RNG.normal(size=(3, 4)))
    b = Value(RNG.normal(size=3))
    batched = dc.linear(Value(x), w, b).data
    for i in range(5):
        assert np.allclose(batched[i], dc.linear(Value(x[i]), w, b).data)


def test_linear_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        dc.linear(Value(np.zeros(3)), Value(np.zeros((2, 4))), Value(np.zeros(2)))
    assert "(3,)" in str(err.value) and "(2, 4)" in str(err.value)


def test_linear_weight_gradient_matches_fd():
    x = RNG.normal(size=4)
    b = RNG.normal(size=3)
    for _ in range(10):
        w0 = RNG.normal(size=(3, 4))

        def fc(wflat):
            with Tape() as tape:
                w = Value(wflat.reshape(3, 4), requires_grad=True)
                out = dc.vsum(dc.linear(Value(x), w, Value(b)))
                backward(tape, out)
            return float(out.data), w.grad.ravel()

        assert grad_check(fc, w0.ravel()) < 1e-5


# ---------------------------------------------------------------------------
# gru_cell


def make_gru(d, m, rng):
    return GruParams.init(d, m, rng)


def test_gru_update_gate_one_carries_h_prev():
    rng = np.random.default_rng(0)
    p = make_gru(3, 4, rng)
    p.bz.data[:] = 50.0  # saturate update gate -> z ~ 1
    h = rng.uniform(-0.9, 0.9, size=3)
    out = dc.gru_cell(Value(h), Value(rng.normal(size=4)), p)
    assert np.allclose(out.data, h, atol=1e-8)


def test_gru_update_gate_zero_gives_candidate():
    rng = np.random.default_rng(1)
    p = make_gru(3, 4, rng)
    p.bz.data[:] = -50.0  # z ~ 0 -> output is the candidate state
    h = rng.uniform(-0.9, 0.9, size=3)
    msg = rng.normal(size=4)
    out = dc.gru_cell(Value(h), Value(msg), p)
    r = 1.0 / (1.0 + np.exp(-(p.wr.data @ msg + p.ur.data @ h + p.br.data)))
    cand = np.tanh(p.wh.data @ msg + p.uh.data @ (r * h) + p.bh.data)
    assert np.allclose(out.data, cand, atol=1e-8)


def test_gru_output_range():
    rng = np.random.default_rng(2)
    p = make_gru(5, 3, rng)
    h = rng.uniform(-1, 1, size=5)
    for _ in range(20):
        h = dc.gru_cell(Value(h), Value(rng.normal(size=3) * 3), p).data
        assert np.all(np.abs(h) < 1.0)


def test_gru_full_jacobian_matches_fd():
    # flatten (h, msg, all nine parameter blocks) into one vector and check
    # the gradient of a random linear functional of the output
    d, m = 3, 4
    rng = np.random.default_rng(3)
    probe = rng.normal(size=d)
    shapes = [(d,), (m,), (d, m), (d, d), (d,), (d, m), (d, d), (d,), (d, m), (d, d), (d,)]
    sizes = [int(np.prod(s)) for s in shapes]

    def unpack(x):
        parts = []
        ofs = 0
        for size, shape in zip(sizes, shapes):
            parts.append(Value(x[ofs:ofs + size].reshape(shape), requires_grad=True))
            ofs += size
        return parts

    def fc(x):
        with Tape() as tape:
            h, msg, wz, uz, bz, wr, ur, br, wh, uh, bh = unpack(x)
            p = GruParams(wz, uz, bz, wr, ur, br, wh, uh, bh)
            out = dc.vsum(dc.mul(dc.gru_cell(h, msg, p), Value(probe)))
            backward(tape, out)
            grads = [v.grad if v.grad is not None else np.zeros(v.shape)
                     for v in (h, msg, wz, uz, bz, wr, ur, br, wh, uh, bh)]
        return float(out.data), np.concatenate([g.ravel() for g in grads])

    worst = 0.0
    for _ in range(3):
        x0 = rng.normal(size=sum(sizes)) * 0.5
        worst = max(worst, grad_check(fc, x0))
    assert worst < 1e-4


def test_gru_batched_matches_per_row():
    rng = np.random.default_rng(4)
    p = make_gru(4, 6, rng)
    h = rng.uniform(-0.8, 0.8, size=(5, 4))
    msg = rng.normal(size=(5, 6))
    batched = dc.gru_cell(Value(h), Value(msg), p).data
    for i in range(5):
        assert np.allclose(batched[i], dc.gru_cell(Value(h[i]), Value(msg[i]), p).data)


# ---------------------------------------------------------------------------
# softplus


def test_softplus_anchors():
    assert np.isclose(dc.softplus(Value(np.array(0.0))).data, np.log(2.0))
    assert np.isclose(dc.softplus(Value(np.array(100.0))).data, 100.0)


def test_softplus_derivative_is_logistic():
    for _ in range(10):
        x = RNG.normal(size=6) * 3
        assert checked(lambda v: dc.vsum(dc.softplus(v)), x) < 1e-6


@given(st.floats(min_value=-700, max_value=700, allow_nan=False))
def test_softplus_strictly_positive(x):
    assert dc.softplus(Value(np.array(x))).data > 0.0


# ---------------------------------------------------------------------------
# concat / sq_dist


def test_concat_basic():
    out = dc.concat(Value([1.0]), Value([2.0]))
    assert np.allclose(out.data, [1.0, 2.0])


def test_concat_shape_arithmetic():
    out = dc.concat(Value(np.zeros(4)), Value(np.zeros(4)))
    assert out.shape == (8,)


def test_concat_grad_splits():
    with Tape() as tape:
        a = Value(RNG.normal(size=3), requires_grad=True)
        b = Value(RNG.normal(size=3), requires_grad=True)
        out = dc.vsum(dc.concat(a, b))
        backward(tape, out)
    assert np.allclose(a.grad, 1.0) and np.allclose(b.grad, 1.0)


def test_concat_rejects_matrices():
    with pytest.raises(ShapeError):
        dc.concat(Value(np.zeros((2, 2))), Value(np.zeros(2)))


def test_sq_dist_anchors():
    a = Value(RNG.normal(size=5))
    assert dc.sq_dist(a, a).data == 0.0
    assert dc.sq_dist(Value([1.0, 0.0]), Value([0.0, 1.0])).data == 2.0


def test_sq_dist_shape_mismatch():
    with pytest.raises(ShapeError):
        dc.sq_dist(Value(np.zeros(3)), Value(np.zeros(4)))


def test_sq_dist_gradient_matches_fd():
    b = RNG.normal(size=5)
    for _ in range(10):
        x = RNG.normal(size=5)
        assert checked(lambda v: dc.sq_dist(v, Value(b)), x) < 1e-6


# ---------------------------------------------------------------------------
# backward semantics


def test_backward_constant_root_leaves_zero_grads():
    with Tape() as tape:
        x = Value(np.ones(3), requires_grad=True)
        const = dc.vsum(Value(np.ones(2)))
        backward(tape, const)
    assert x.grad is None


def test_backward_chain_matches_fd():
    target = RNG.normal(size=4)
    for _ in range(10):
        x = RNG.normal(size=4)
        assert checked(lambda v: dc.sq_dist(dc.softplus(v), Value(target)), x) < 1e-5


def test_backward_accumulates_duplicated_parameter():
    with Tape() as tape:
        x = Value(np.array(3.0), requires_grad=True)
        out = dc.add(x, x)
        backward(tape, out)
    assert x.grad == 2.0


def test_backward_twice_errors():
    with Tape() as tape:
        x = Value(np.array(1.0), requires_grad=True)
        out = dc.mul(x, x)
        backward(tape, out)
        with pytest.raises(TapeError):
            backward(tape, out)


def test_backward_nonscalar_root_errors():
    with Tape() as tape:
        x = Value(np.ones(2), requires_grad=True)
        out = dc.mul(x, x)
        with pytest.raises(TapeError):
            backward(tape, out)


def test_backward_linearity():
    x0 = RNG.normal(size=4)
    w = RNG.normal(size=4)

    def grad_of(fn):
        with Tape() as tape:
            x = Value(x0.copy(), requires_grad=True)
            backward(tape, fn(x))
        return x.grad.copy()

    f = lambda x: dc.sq_dist(x, Value(w))
    g = lambda x: dc.vsum(dc.softplus(x))
    alpha, beta = 0.7, -1.3
    combined = grad_of(lambda x: dc.add(dc.scale(f(x), alpha), dc.scale(g(x), beta)))
    assert np.allclose(combined, alpha * grad_of(f) + beta * grad_of(g), atol=1e-12)


def test_no_tape_means_no_recording():
    x = Value(np.ones(3), requires_grad=True)
    out = dc.softplus(x)
    assert not out.requires_grad


# ---------------------------------------------------------------------------
# elementwise ops vs finite differences

_CONST = np.array([0.31, -1.4, 2.2, 0.05, -0.77])

@pytest.mark.parametrize("name,fn,domain", [
    ("add", lambda v: dc.vsum(dc.add(v, Value(_CONST))), None),
    ("sub", lambda v: dc.vsum(dc.sub(Value(_CONST), v)), None),
    ("mul", lambda v: dc.vsum(dc.mul(v, Value(_CONST))), None),
    ("div", lambda v: dc.vsum(dc.div(Value(_CONST), v)), "positive"),
    ("log", lambda v: dc.vsum(dc.log(v)), "positive"),
    ("square", lambda v: dc.vsum(dc.square(v)), None),
    ("tanh", lambda v: dc.vsum(dc.tanh(v)), None),
    ("mean", dc.mean, None),
    ("scale", lambda v: dc.scale(dc.mean(v), -2.5), None),
])
def test_elementwise_ops_match_fd(name, fn, domain):
    for _ in range(10):
        x = RNG.uniform(0.5, 2.0, size=5) if domain == "positive" else RNG.normal(size=5)
        assert checked(fn, x) < 1e-5, name


def test_broadcast_sub_matrix_vector():
    a = RNG.normal(size=(4, 3))
    for _ in range(5):
        c0 = RNG.normal(size=3)

        def fc(c):
            with Tape() as tape:
                cv = Value(c, requires_grad=True)
                out = dc.vsum(dc.square(dc.sub(Value(a), cv)))
                backward(tape, out)
            return float(out.data), cv.grad.copy()

        assert grad_check(fc, c0) < 1e-5


def test_rowcat_and_mean_last_match_fd():
    left = RNG.normal(size=(3, 2))

    def fc(x):
        with Tape() as tape:
            v = Value(x.reshape(3, 2), requires_grad=True)
            out = dc.vsum(dc.mean_last(dc.rowcat([Value(left), v])))
            backward(tape, out)
        return float(out.data), v.grad.ravel()

    assert grad_check(fc, RNG.normal(size=6)) < 1e-6


def test_row_sq_dist_matches_composition():
    a = RNG.normal(size=(6, 4))
    c = RNG.normal(size=4)
    direct = dc.row_sq_dist(Value(a), Value(c)).data
    composed = np.array([dc.sq_dist(Value(a[i]), Value(c)).data for i in range(6)])
    assert np.allclose(direct, composed, atol=1e-12)


def test_maximum_floor_gradient():
    x = np.array([-2.0, 0.5, 3.0])
    with Tape() as tape:
        v = Value(x, requires_grad=True)
        out = dc.vsum(dc.maximum(v, 1.0))
        backward(tape, out)
    assert np.allclose(out.data, 1.0 + 1.0 + 3.0)
    assert np.allclose(v.grad, [0.0, 0.0, 1.0])


def test_time_encode_values_gradient():
    dt = np.abs(RNG.normal(size=6)) * 5

    def fc(x):
        with Tape() as tape:
            om = Value(x[:4], requires_grad=True)
            ph = Value(x[4:], requires_grad=True)
            out = dc.vsum(dc.time_encode_values(dt, om, ph))
            backward(tape, out)
        return float(out.data), np.concatenate([om.grad, ph.grad])

    for _ in range(10):
        x0 = RNG.normal(size=8)
        assert grad_check(fc, x0) < 1e-5


# ---------------------------------------------------------------------------
# optimizer


def test_adam_zero_grad_zero_decay_is_identity():
    p = Value(RNG.normal(size=4), requires_grad=True)
    before = p.data.copy()
    state = OptimizerState([p], lr=0.1, weight_decay=0.0)
    adam_step(state, [p.data], [np.zeros(4)])
    assert np.array_equal(p.data, before)


def test_adam_one_step_descends_quadratic():
    p = Value(np.array(1.0), requires_grad=True)
    state = OptimizerState([p], lr=0.1)
    adam_step(state, [p.data], [np.asarray(2.0 * p.data)])
    assert abs(float(p.data)) < 1.0


def test_adam_200_steps_reach_minimum():
    p = Value(np.array(1.0), requires_grad=True)
    state = OptimizerState([p], lr=0.05)
    for _ in range(200):
        adam_step(state, [p.data], [np.asarray(2.0 * p.data)])
    assert abs(float(p.data)) < 1e-2  # closed-form minimum is 0


def test_adam_shape_mismatch():
    p = Value(np.zeros(3), requires_grad=True)
    state = OptimizerState([p], lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(state, [p.data], [np.zeros(4)])


def test_adam_decay_mask_spares_center():
    enc = Value(np.ones(3), requires_grad=True)
    center = Value(np.ones(3), requires_grad=True)
    state = OptimizerState([enc, center], lr=0.1, weight_decay=0.5, decay_mask=[True, False])
    adam_step(state, [enc.data, center.data], [np.zeros(3), np.zeros(3)])
    assert np.all(enc.data < 1.0)
    assert np.array_equal(center.data, np.ones(3))


def test_clip_global_norm():
    a = Value(np.zeros(3), requires_grad=True)
    b = Value(np.zeros(2), requires_grad=True)
    a.grad = np.full(3, 4.0)
    b.grad = np.full(2, 3.0)
    norm = clip_global_norm([a, b], max_norm=5.0)
    assert np.isclose(norm, np.sqrt(48 + 18))
    assert np.isclose(np.sqrt((a.grad ** 2).sum() + (b.grad ** 2).sum()), 5.0)


# ---------------------------------------------------------------------------
# grad_check itself


def test_grad_check_linear_function_is_exact():
    def f(x):
        return float(x.sum()), np.ones_like(x)

    assert grad_check(f, RNG.normal(size=6)) < 1e-9


def test_grad_check_detects_wrong_gradient():
    def f(x):
        return float((x ** 2).sum()), 3.0 * x  # wrong on purpose (should be 2x)

    assert grad_check(f, RNG.uniform(1.0, 2.0, size=4)) > 1e-2


def test_grad_check_rejects_nonfinite():
    def f(x):
        return float(np.log(x[0])), np.array([1.0 / x[0]])

    with pytest.raises(ValueError):
        grad_check(f, np.array([1e-10]), eps=1e-5)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from cbfcert.controller import Controller, control_law, control_law_grad, control_law_vjp, controller_lipschitz
from cbfcert.neural import Mlp


def _ctrl(seed, q=(1.0,), scale=3.0):
    net = Mlp.init([2, 10, len(q)], np.random.default_rng(seed))
    net = Mlp(tuple(W * scale for W in net.weights), net.biases, net.activations)
    return Controller(net, q, [-2.0] * len(q), [2.0] * len(q))


def test_rejects_bad_q_and_bounds():
    net = Mlp.zeros([2, 3, 1])
    with pytest.raises(ValueError):
        Controller(net, [0.0], [-1.0], [1.0])
    with pytest.raises(ValueError):
        Controller(net, [1.0], [1.0], [1.0])


def test_law_solves_box_qp():
    ctrl = _ctrl(0, q=(0.5, 2.0))
    X = np.random.default_rng(1).uniform(-2, 2, (10, 2))
    U = control_law(ctrl, X)
    c = ctrl.net.forward(X)
    for u, ci in zip(U, c):
        res = minimize(lambda v: 0.5 * v @ (ctrl.q_diag * v) + ci @ v, np.zeros(2), bounds=[(-2, 2)] * 2)
        assert np.allclose(u, res.x, atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3))
def test_input_constraints_hold(seed, a, b):
    ctrl = _ctrl(seed, scale=20.0)
    u = control_law(ctrl, np.array([[a, b]]))
    assert np.all(u >= -2) and np.all(u <= 2)


def test_grads_vs_fd():
    ctrl = _ctrl(2)
    X = np.random.default_rng(3).uniform(-1, 1, (6, 2))
    d_theta, d_x = control_law_grad(ctrl, X)
    theta = ctrl.net.to_vec()
    h = 1e-6
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        up = control_law(ctrl.with_net(ctrl.net.from_vec(theta + e)), X)
        dn = control_law(ctrl.with_net(ctrl.net.from_vec(theta - e)), X)
        assert np.allclose(d_theta[:, :, k], (up - dn) / (2 * h), atol=1e-6)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        assert np.allclose(d_x[:, :, j], (control_law(ctrl, X + e) - control_law(ctrl, X - e)) / (2 * h), atol=1e-6)
    w = np.random.default_rng(4).normal(size=(6, 1))
    assert np.allclose(control_law_vjp(ctrl, X, w), np.einsum("nu,nup->p", w, d_theta))


def test_saturated_inputs_have_zero_gradient():
    net = Mlp((np.zeros((1, 2)),), (np.array([-10.0]),), ("identity",))
    ctrl = Controller(net, [1.0], [-2.0], [2.0])
    assert control_law(ctrl, np.zeros((1, 2)))[0, 0] == 2.0
    d_theta, d_x = control_law_grad(ctrl, np.zeros(2))
    assert not d_theta.any() and not d_x.any()


def test_lipschitz_bound_dominates():
    ctrl = _ctrl(7, q=(0.5,))
    rng = np.random.default_rng(0)
    X1, X2 = rng.uniform(-3, 3, (2, 2000, 2))
    ratio = np.abs(control_law(ctrl, X1) - control_law(ctrl, X2))[:, 0] / np.linalg.norm(X1 - X2, axis=1)
    assert ratio.max() <= controller_lipschitz(ctrl)

import numpy as np
import pytest

from fbgbezier.errors import DataError, NumericalError
from fbgbezier.learn.dataset import Dataset, split
from fbgbezier.learn.net import (NetModel, _accumulate, init_net, jacobian, lm_step,
                                 loss_and_gradient, train_lm, train_net)


def small_problem(seed=0):
    rng = np.random.default_rng(seed)
    net = init_net((5, 4, 3), seed)
    X = rng.normal(size=(30, 5))
    Y = rng.normal(size=(30, 3))
    return net, X, Y


def test_parameter_count_of_default_architecture():
    assert init_net((5, 64, 32, 16, 12), 0).n_params == 3196


def test_param_packing_round_trip():
    net = init_net((5, 4, 3), 1)
    theta = net.get_params()
    other = init_net((5, 4, 3), 2)
    other.set_params(theta)
    np.testing.assert_array_equal(other.get_params(), theta)


def test_gradient_matches_central_differences():
    net, X, Y = small_problem()
    _, grad = loss_and_gradient(net, X, Y)
    theta = net.get_params()

    def half_sse(t):
        net.set_params(t)
        e = Y - net.forward(X)[-1]
        return 0.5 * np.sum(e * e)

    h = 1e-6
    fd = np.array([(half_sse(theta + h * np.eye(len(theta))[i])
                    - half_sse(theta - h * np.eye(len(theta))[i])) / (2 * h)
                   for i in range(len(theta))])
    net.set_params(theta)
    rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
    assert np.max(rel) < 1e-5


def test_jacobian_matches_finite_differences():
    net, X, _ = small_problem(1)
    _, J = jacobian(net, X[:4])
    theta = net.get_params()
    h = 1e-6
    for i in (0, 7, len(theta) - 1):
        t = theta.copy()
        t[i] += h
        net.set_params(t)
        up = net.forward(X[:4])[-1].reshape(-1)
        t[i] -= 2 * h
        net.set_params(t)
        dn = net.forward(X[:4])[-1].reshape(-1)
        np.testing.assert_allclose(J[:, i], (up - dn) / (2 * h), rtol=1e-6, atol=1e-9)
    net.set_params(theta)


def test_large_damping_gives_scaled_gradient_step():
    net, X, Y = small_problem(2)
    JtJ, Jte, _ = _accumulate(net, X, Y, chunk=7)
    mu = 1e9
    step = lm_step(JtJ, Jte, mu)
    np.testing.assert_allclose(step * mu, Jte, rtol=1e-6)


def test_chunking_does_not_change_normal_equations():
    net, X, Y = small_problem(3)
    a = _accumulate(net, X, Y, chunk=4)
    b = _accumulate(net, X, Y, chunk=1000)
    np.testing.assert_allclose(np.triu(a[0]), np.triu(b[0]), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-12)


def test_linear_network_recovers_weights():
    rng = np.random.default_rng(4)
    W = rng.normal(size=(3, 5))
    b = rng.normal(size=3)
    X = rng.normal(size=(100, 5))
    net = init_net((5, 3), 0)
    trace = train_lm(net, X, X @ W.T + b, max_epochs=20)
    np.testing.assert_allclose(net.weights[0], W, atol=1e-8)
    np.testing.assert_allclose(net.biases[0], b, atol=1e-8)
    assert trace.train_mse[-1] < 1e-16


def test_training_error_never_increases():
    net, X, Y = small_problem(5)
    trace = train_lm(net, X, Y, max_epochs=15)
    assert all(b <= a for a, b in zip(trace.train_mse, trace.train_mse[1:]))


def test_early_stopping_restores_best_weights():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(40, 5))
    Y = rng.normal(size=(40, 3))
    Xv = rng.normal(size=(20, 5))
    Yv = rng.normal(size=(20, 3))
    net = init_net((5, 16, 3), 0)
    trace = train_lm(net, X, Y, Xv, Yv, max_epochs=40, patience=3)
    best = min(trace.val_mse)
    d = net.forward(Xv)[-1] - Yv
    assert np.mean(d * d) == pytest.approx(best, rel=1e-12)
    assert trace.val_mse[trace.best_epoch] == best


def test_singular_system_reports_numerical_error():
    with pytest.raises(NumericalError):
        lm_step(np.array([[-1.0, 0], [0, 1]]), np.ones(2), 0.0)


def test_train_net_end_to_end_small():
    rng = np.random.default_rng(7)
    X = rng.uniform(-1, 1, size=(300, 5))
    Y = np.column_stack([np.sin(X[:, 0]) * np.ones(300)] * 12) + 0.1 * X[:, 1:2]
    data = split(Dataset(X, Y), (0.8, 0.0, 0.2), 1)
    net, trace = train_net(data, hidden=(8,), seed=1, max_epochs=30)
    pred = net.predict(data.test.features)
    assert np.sqrt(np.mean((pred - data.test.targets) ** 2)) < 0.05
    a, _ = train_net(data, hidden=(8,), seed=1, max_epochs=3)
    b, _ = train_net(data, hidden=(8,), seed=1, max_epochs=3)
    np.testing.assert_array_equal(a.get_params(), b.get_params())


def test_train_net_needs_rows():
    with pytest.raises(DataError):
        train_net(Dataset(np.zeros((10, 5)), np.zeros((10, 12))))

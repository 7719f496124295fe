"""Feedforward regression network trained with Levenberg-Marquardt.

tanh hidden layers, linear output.  Parameters are packed layer by layer as
``[W1.ravel(), b1, W2.ravel(), b2, ...]`` with ``W`` of shape ``(out, in)``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas, cho_factor, cho_solve, LinAlgError

from ..errors import DataError, DimensionError, NumericalError
from .dataset import Dataset, Normalizer, Split, split

log = logging.getLogger(__name__)


@dataclass
class NetModel:
    layer_sizes: tuple
    weights: list
    biases: list
    config: dict = field(default_factory=dict)
    normalizer: Normalizer = None
    last_predict_seconds_per_sample: float = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_sizes[i + 1], self.layer_sizes[i]) or b.shape != (W.shape[0],):
                raise DimensionError(f"layer {i} parameters inconsistent with sizes {self.layer_sizes}")

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def set_params(self, theta: np.ndarray) -> None:
        pos = 0
        for i in range(len(self.weights)):
            n_out, n_in = self.layer_sizes[i + 1], self.layer_sizes[i]
            self.weights[i] = theta[pos:pos + n_out * n_in].reshape(n_out, n_in).copy()
            pos += n_out * n_in
            self.biases[i] = theta[pos:pos + n_out].copy()
            pos += n_out

    def forward(self, X):
        """Activations of every layer, input included."""
        acts = [np.asarray(X, dtype=float)]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ W.T + b
            acts.append(z if i == last else np.tanh(z))
        return acts

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.layer_sizes[0]:
            raise DimensionError(f"expected {self.layer_sizes[0]} inputs, got {X.shape[1]}")
        t0 = time.perf_counter()
        if self.normalizer is None:
            out = self.forward(X)[-1]
        else:
            out = self.normalizer.denormalize_targets(
                self.forward(self.normalizer.features(X))[-1])
        if len(X):
            self.last_predict_seconds_per_sample = (time.perf_counter() - t0) / len(X)
        return out


def init_net(layer_sizes, seed: int) -> NetModel:
    """Uniform fan-in initialization, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x4E7]))
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        lim = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
        biases.append(rng.uniform(-lim, lim, size=n_out))
    return NetModel(tuple(layer_sizes), weights, biases)


def jacobian(net: NetModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Outputs and the Jacobian of every output w.r.t. every parameter.

    Returns ``(Y, J)`` with ``J`` of shape ``(n * n_out, n_params)``; row
    ``i * n_out + k`` is output ``k`` of sample ``i``.
    """
    acts = net.forward(X)
    n = acts[0].shape[0]
    n_out = net.layer_sizes[-1]
    L = len(net.weights)
    offsets = np.cumsum([0] + [W.size + b.size for W, b in zip(net.weights, net.biases)])
    J = np.empty((n, n_out, offsets[-1]))
    # delta[i, k, :] = d output_k / d pre-activation of the current layer
    delta = np.broadcast_to(np.eye(n_out), (n, n_out, n_out))
    for layer in range(L - 1, -1, -1):
        n_l, n_in = net.weights[layer].shape
        a_in = acts[layer]
        start = offsets[layer]
        gW = J[:, :, start:start + n_l * n_in].reshape(n, n_out, n_l, n_in)
        np.multiply(delta[:, :, :, None], a_in[:, None, None, :], out=gW)
        J[:, :, start + n_l * n_in:offsets[layer + 1]] = delta
        if layer > 0:
            delta = (delta @ net.weights[layer]) * (1.0 - acts[layer] ** 2)[:, None, :]
    return acts[-1], J.reshape(n * n_out, -1)


def loss_and_gradient(net: NetModel, X, Y):
    """Half sum of squared errors and its gradient ``-J^T e``."""
    out, J = jacobian(net, X)
    e = (Y - out).reshape(-1)
    return 0.5 * float(e @ e), -(J.T @ e)


def _accumulate(net: NetModel, X, Y, chunk: int):
    """``J^T J`` (upper triangle) and ``J^T e`` summed over fixed-size chunks."""
    P = net.n_params
    JtJ = np.zeros((P, P), order="F")
    Jte = np.zeros(P)
    sse = 0.0
    for start in range(0, len(X), chunk):
        out, J = jacobian(net, X[start:start + chunk])
        e = (Y[start:start + chunk] - out).reshape(-1)
        JtJ = blas.dsyrk(1.0, J, beta=1.0, c=JtJ, trans=1, overwrite_c=1)
        Jte += J.T @ e
        sse += float(e @ e)
    return JtJ, Jte, sse


def lm_step(JtJ_upper: np.ndarray, Jte: np.ndarray, mu: float) -> np.ndarray:
    """Solve ``(J^T J + mu I) delta = J^T e`` by Cholesky."""
    A = np.triu(JtJ_upper) + np.triu(JtJ_upper, 1).T
    A[np.diag_indices_from(A)] += mu
    try:
        c = cho_factor(A, lower=False, check_finite=True)
        return cho_solve(c, Jte)
    except (LinAlgError, ValueError) as exc:
        raise NumericalError(f"damped system not solvable at mu={mu:g}: {exc}",
                             {"mu": mu}) from exc


def _mse(net, X, Y):
    if len(X) == 0:
        return np.nan
    d = net.forward(X)[-1] - Y
    return float(np.mean(d * d))


@dataclass
class TrainTrace:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""


def train_lm(net: NetModel, X, Y, X_val=None, Y_val=None, mu0: float = 1e-3, mu_up: float = 10.0,
             mu_down: float = 10.0, mu_max: float = 1e10, max_epochs: int = 100, patience: int = 6,
             chunk: int = 128, min_grad: float = 1e-10) -> TrainTrace:
    """Levenberg-Marquardt on the squared error, modifying ``net`` in place.

    A step is accepted when it lowers the training error (``mu`` shrinks),
    otherwise ``mu`` grows and the step is retried.  With validation data
    the weights of the best validation epoch are restored at the end and
    training stops after ``patience`` epochs without improvement.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    has_val = X_val is not None and len(X_val) > 0
    trace = TrainTrace()
    mu = mu0
    theta = net.get_params()
    best_theta, best_val = theta.copy(), np.inf
    bad_epochs = 0
    JtJ, Jte, sse = _accumulate(net, X, Y, chunk)
    if not np.isfinite(sse):
        raise NumericalError("non-finite initial loss", {"params": theta})
    trace.train_mse.append(sse / Y.size)
    if has_val:
        best_val = _mse(net, X_val, Y_val)
        trace.val_mse.append(best_val)
    trace.mu.append(mu)
    for epoch in range(1, max_epochs + 1):
        if np.linalg.norm(Jte) < min_grad:
            trace.stop_reason = "gradient"
            break
        accepted = False
        while mu <= mu_max:
            step = lm_step(JtJ, Jte, mu)
            net.set_params(theta + step)
            new_sse = _mse(net, X, Y) * Y.size
            if np.isfinite(new_sse) and new_sse < sse:
                accepted = True
                mu /= mu_down
                break
            mu *= mu_up
        if not accepted:
            net.set_params(theta)
            trace.stop_reason = "mu_max"
            break
        theta = net.get_params()
        if not np.all(np.isfinite(theta)):
            raise NumericalError("parameters became non-finite", {"epoch": epoch, "mu": mu})
        JtJ, Jte, sse = _accumulate(net, X, Y, chunk)
        trace.train_mse.append(sse / Y.size)
        trace.mu.append(mu)
        if has_val:
            v = _mse(net, X_val, Y_val)
            trace.val_mse.append(v)
            if v < best_val:
                best_val, best_theta, bad_epochs = v, theta.copy(), 0
                trace.best_epoch = epoch
            else:
                bad_epochs += 1
                if bad_epochs >= patience:
                    trace.stop_reason = "patience"
                    break
        log.debug("epoch %d train_mse %.3e mu %.1e", epoch, trace.train_mse[-1], mu)
    else:
        trace.stop_reason = "max_epochs"
    if has_val:
        net.set_params(best_theta)
    else:
        trace.best_epoch = len(trace.train_mse) - 1
    return trace


def train_net(data: Dataset, hidden=(64, 32, 16), seed: int = 0, mu0: float = 1e-3,
              mu_up: float = 10.0, mu_down: float = 10.0, max_epochs: int = 100,
              patience: int = 6, val_fraction: float = 0.15, chunk: int = 128):
    """Fit a network on the training rows of ``data``.

    Training rows are sub-split into fit/validation parts for early
    stopping.  Features are z-scored and targets divided by the robot
    length.  Returns ``(model, trace)``.
    """
    train = data.train
    if len(train) < 50:
        raise DataError(f"need at least 50 training rows, got {len(train)}")
    sub = split(Dataset(train.features, train.targets), (1.0 - val_fraction, val_fraction, 0.0),
                seed)
    fit, val = sub.part(Split.TRAIN), sub.part(Split.VAL)
    norm = Normalizer.fit(fit.features)
    sizes = (train.features.shape[1], *hidden, train.targets.shape[1])
    net = init_net(sizes, seed)
    trace = train_lm(net, norm.features(fit.features), norm.targets(fit.targets),
                     norm.features(val.features), norm.targets(val.targets), mu0=mu0,
                     mu_up=mu_up, mu_down=mu_down, max_epochs=max_epochs, patience=patience,
                     chunk=chunk)
    net.normalizer = norm
    net.config = {"hidden": list(hidden), "seed": seed, "mu0": mu0, "mu_up": mu_up,
                  "mu_down": mu_down, "max_epochs": max_epochs, "patience": patience,
                  "val_fraction": val_fraction}
    return net, trace

"""Recurrent regressor: one LSTM layer unrolled over a fixed lookback
window, then three dense ELU layers and a linear output, trained on the
MAPE loss by Adam with backpropagation through the window."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .. import numkit as nk
from ..core import named_rng
from ..errors import NumericError

N_DENSE_LAYERS = 3


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(n_features: int, hidden: int, dense,
                rng: np.random.Generator) -> nk.ParamSet:
    """He-style fan-in scaled uniform weights, zero biases.

    Gate layout along the last axis is input, forget, candidate, output.
    """
    arrays = {}
    limit = np.sqrt(6.0 / n_features)
    arrays["lstm_Wx"] = rng.uniform(-limit, limit, (n_features, 4 * hidden))
    limit = np.sqrt(6.0 / hidden)
    arrays["lstm_Wh"] = rng.uniform(-limit, limit, (hidden, 4 * hidden))
    arrays["lstm_b"] = np.zeros(4 * hidden)
    sizes = [hidden] + list(dense)
    for i in range(len(dense)):
        limit = np.sqrt(6.0 / sizes[i])
        arrays[f"d{i}_W"] = rng.uniform(-limit, limit, (sizes[i], sizes[i + 1]))
        arrays[f"d{i}_b"] = np.zeros(sizes[i + 1])
    limit = np.sqrt(6.0 / sizes[-1])
    arrays["out_W"] = rng.uniform(-limit, limit, (sizes[-1], 1))
    arrays["out_b"] = np.zeros(1)
    return nk.ParamSet(arrays)


def trained_keys(n_dense: int = N_DENSE_LAYERS):
    keys = ["lstm_Wx", "lstm_Wh", "lstm_b"]
    for i in range(n_dense):
        keys += [f"d{i}_W", f"d{i}_b"]
    return keys + ["out_W", "out_b"]


def forward(params: nk.ParamSet, X_seq: np.ndarray, n_dense: int,
            keep_caches: bool = True):
    """Unroll the cell over (n, window, features); final hidden state feeds
    the dense head. Gate activations stay in (0, 1) and hidden entries in
    (-1, 1) by the squashing nonlinearities."""
    n, window, _ = X_seq.shape
    hidden = params["lstm_Wh"].shape[0]
    h = np.zeros((n, hidden))
    c = np.zeros((n, hidden))
    steps = []
    for t in range(window):
        x = X_seq[:, t, :]
        z = x @ params["lstm_Wx"] + h @ params["lstm_Wh"] + params["lstm_b"]
        gi = _sigmoid(z[:, :hidden])
        gf = _sigmoid(z[:, hidden:2 * hidden])
        gc = np.tanh(z[:, 2 * hidden:3 * hidden])
        go = _sigmoid(z[:, 3 * hidden:])
        c_new = gf * c + gi * gc
        tanh_c = np.tanh(c_new)
        h_new = go * tanh_c
        if keep_caches:
            steps.append((x, h, c, gi, gf, gc, go, tanh_c))
        h, c = h_new, c_new

    a = h
    dense_caches = []
    for i in range(n_dense):
        z = a @ params[f"d{i}_W"] + params[f"d{i}_b"]
        if keep_caches:
            dense_caches.append((a, z))
        a = nk.elu(z)
    yhat = (a @ params["out_W"] + params["out_b"])[:, 0]
    if keep_caches:
        dense_caches.append(a)
    return yhat, steps, dense_caches


def backward(params: nk.ParamSet, steps, dense_caches, d_yhat: np.ndarray,
             n_dense: int) -> dict:
    grads = {}
    a_last = dense_caches[-1]
    dout = d_yhat[:, None]
    grads["out_W"] = a_last.T @ dout
    grads["out_b"] = dout.sum(axis=0)
    upstream = dout @ params["out_W"].T
    for i in reversed(range(n_dense)):
        a_in, z = dense_caches[i]
        dz = upstream * nk.d_elu(z)
        grads[f"d{i}_W"] = a_in.T @ dz
        grads[f"d{i}_b"] = dz.sum(axis=0)
        upstream = dz @ params[f"d{i}_W"].T

    hidden = params["lstm_Wh"].shape[0]
    dWx = np.zeros_like(params["lstm_Wx"])
    dWh = np.zeros_like(params["lstm_Wh"])
    db = np.zeros_like(params["lstm_b"])
    dh = upstream
    dc = np.zeros_like(dh)
    for t in reversed(range(len(steps))):
        x, h_prev, c_prev, gi, gf, gc, go, tanh_c = steps[t]
        d_go = dh * tanh_c
        dc = dc + dh * go * (1.0 - tanh_c ** 2)
        d_gi = dc * gc
        d_gc = dc * gi
        d_gf = dc * c_prev
        dz = np.concatenate([
            d_gi * gi * (1.0 - gi),
            d_gf * gf * (1.0 - gf),
            d_gc * (1.0 - gc ** 2),
            d_go * go * (1.0 - go),
        ], axis=1)
        dWx += x.T @ dz
        dWh += h_prev.T @ dz
        db += dz.sum(axis=0)
        dh = dz @ params["lstm_Wh"].T
        dc = dc * gf
    grads["lstm_Wx"] = dWx
    grads["lstm_Wh"] = dWh
    grads["lstm_b"] = db
    return grads


def loss_and_grads(params: nk.ParamSet, X_seq: np.ndarray, y: np.ndarray,
                   lam: float, n_dense: int = N_DENSE_LAYERS):
    """MAPE (+ optional L2) objective with gradients through the window."""
    yhat, steps, dense_caches = forward(params, X_seq, n_dense)
    loss = nk.mape_loss(y, yhat) + nk.l2_penalty(params, lam)
    grads = backward(params, steps, dense_caches,
                     nk.mape_loss_grad(y, yhat), n_dense)
    for key, g in nk.l2_penalty_grads(params, lam).items():
        grads[key] = grads[key] + g
    return loss, grads


class LstmRegressor(BaseEstimator, RegressorMixin):
    """One LSTM layer over a fixed-length window, three dense ELU layers,
    linear output.

    fit/predict take X of shape (n, lookback, features): windows of
    consecutive in-window intervals, oldest first. Standardization and
    target scaling follow the same train-split-only rule as the MLP.
    """

    def __init__(self, lookback=10, hidden=32, dense=(32, 16, 8), l2=0.0,
                 batch_size=64, epochs=200, patience=15, learning_rate=1e-3,
                 beta1=0.9, beta2=0.999, adam_eps=1e-8, random_state=0):
        self.lookback = lookback
        self.hidden = hidden
        self.dense = dense
        self.l2 = l2
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.random_state = random_state

    def _check_windows(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 3:
            raise ValueError(f"expected (n, lookback, features), got {X.shape}")
        if X.shape[1] != self.lookback:
            raise ValueError(
                f"window length {X.shape[1]} != lookback {self.lookback}"
            )
        if not np.all(np.isfinite(X)):
            raise ValueError("windows contain non-finite values")
        return X

    def _standardize(self, X):
        return (X - self.x_mean_) / self.x_std_

    def fit(self, X, y, X_val=None, y_val=None):
        X = self._check_windows(X)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty window set")
        if len(self.dense) != N_DENSE_LAYERS:
            raise ValueError(f"dense must list {N_DENSE_LAYERS} widths")
        if np.any(y == 0):
            raise ValueError("targets must be bounded away from zero for MAPE")

        flat = X.reshape(-1, X.shape[2])
        self.x_mean_ = flat.mean(axis=0)
        std = flat.std(axis=0)
        self.x_std_ = np.where(std > 0, std, 1.0)
        self.y_scale_ = float(np.mean(np.abs(y))) or 1.0

        Xs = self._standardize(X)
        ys = y / self.y_scale_
        if X_val is None:
            Xv, yv = Xs, ys
        else:
            Xv = self._standardize(self._check_windows(X_val))
            yv = np.asarray(y_val, dtype=float).ravel() / self.y_scale_

        n_dense = len(self.dense)
        params = init_params(
            X.shape[2], self.hidden, self.dense,
            named_rng(self.random_state, "lstm", "init"),
        )
        shuffle_rng = named_rng(self.random_state, "lstm", "shuffle")
        state = nk.AdamState.init(
            params, trained_keys(n_dense),
            learning_rate=self.learning_rate, beta1=self.beta1,
            beta2=self.beta2, eps=self.adam_eps,
        )

        best_params = params.copy()
        best_val = np.inf
        stale = 0
        n = Xs.shape[0]
        batch = max(1, min(self.batch_size, n))
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(n)
            for start in range(0, n, batch):
                rows = order[start:start + batch]
                loss, grads = loss_and_grads(
                    params, Xs[rows], ys[rows], self.l2, n_dense
                )
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, batch "
                        f"{start // batch}"
                    )
                params, state = nk.adam_step(params, grads, state)
            val_pred, _, _ = forward(params, Xv, n_dense, keep_caches=False)
            val_mape = nk.mape_loss(yv, val_pred)
            if val_mape < best_val:
                best_val = val_mape
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if stale > self.patience:
                    break

        self.params_ = best_params
        self.n_dense_ = n_dense
        self.n_features_in_ = X.shape[2]
        self.validation_mape_ = float(best_val)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = self._check_windows(X)
        out, _, _ = forward(
            self.params_, self._standardize(X), self.n_dense_,
            keep_caches=False,
        )
        return out * self.y_scale_


def to_payload(est: LstmRegressor):
    check_is_fitted(est, "params_")
    arrays = {f"param/{k}": v for k, v in est.params_.items()}
    arrays["x_mean"] = est.x_mean_
    arrays["x_std"] = est.x_std_
    arrays["y_scale"] = np.array([est.y_scale_])
    arrays["validation_mape"] = np.array([est.validation_mape_])
    arrays["adam_floats"] = np.array([
        est.l2, est.learning_rate, est.beta1, est.beta2, est.adam_eps,
    ])
    meta = {
        "lookback": est.lookback,
        "hidden": est.hidden,
        "dense": list(est.dense),
        "batch_size": est.batch_size,
        "epochs": est.epochs,
        "patience": est.patience,
        "random_state": est.random_state,
        "n_features_in": est.n_features_in_,
        "standardized_on": "train",
    }
    return arrays, meta


def from_payload(arrays, meta) -> LstmRegressor:
    fl = arrays["adam_floats"]
    est = LstmRegressor(
        lookback=meta["lookback"],
        hidden=meta["hidden"],
        dense=tuple(meta["dense"]),
        l2=float(fl[0]),
        batch_size=meta["batch_size"],
        epochs=meta["epochs"],
        patience=meta["patience"],
        learning_rate=float(fl[1]),
        beta1=float(fl[2]),
        beta2=float(fl[3]),
        adam_eps=float(fl[4]),
        random_state=meta["random_state"],
    )
    est.params_ = nk.ParamSet({
        k[len("param/"):]: v for k, v in arrays.items()
        if k.startswith("param/")
    })
    est.x_mean_ = arrays["x_mean"]
    est.x_std_ = arrays["x_std"]
    est.y_scale_ = float(arrays["y_scale"][0])
    est.validation_mape_ = float(arrays["validation_mape"][0])
    est.n_dense_ = len(meta["dense"])
    est.n_features_in_ = int(meta["n_features_in"])
    return est

"""Feed-forward regressor: four hidden ELU layers with batch norm,
trained on the MAPE loss plus an L2 weight penalty by mini-batch Adam."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .. import numkit as nk
from ..core import named_rng
from ..errors import NumericError

N_HIDDEN_LAYERS = 4


def init_params(n_features: int, hidden, rng: np.random.Generator) -> nk.ParamSet:
    """He-style fan-in scaled uniform weights; unit BN scale, zero shift.

    Hidden layers carry no additive bias: batch normalization subtracts
    the batch mean, so a pre-BN bias would cancel exactly and its shift
    beta already plays that role.
    """
    sizes = [n_features] + list(hidden)
    arrays = {}
    for i in range(len(hidden)):
        fan_in = sizes[i]
        limit = np.sqrt(6.0 / fan_in)
        arrays[f"h{i}_W"] = rng.uniform(-limit, limit, (fan_in, sizes[i + 1]))
        arrays[f"h{i}_gamma"] = np.ones(sizes[i + 1])
        arrays[f"h{i}_beta"] = np.zeros(sizes[i + 1])
        arrays[f"h{i}_rmean"] = np.zeros(sizes[i + 1])
        arrays[f"h{i}_rvar"] = np.ones(sizes[i + 1])
    limit = np.sqrt(6.0 / sizes[-1])
    arrays["out_W"] = rng.uniform(-limit, limit, (sizes[-1], 1))
    arrays["out_b"] = np.zeros(1)
    return nk.ParamSet(arrays)


def trained_keys(n_layers: int = N_HIDDEN_LAYERS):
    keys = []
    for i in range(n_layers):
        keys += [f"h{i}_W", f"h{i}_gamma", f"h{i}_beta"]
    return keys + ["out_W", "out_b"]


def forward_train(params: nk.ParamSet, X: np.ndarray, n_layers: int):
    """Batch-statistics forward pass; returns predictions, caches, and the
    per-layer batch moments (the caller updates running stats)."""
    h = X
    caches = []
    moments = []
    for i in range(n_layers):
        z = h @ params[f"h{i}_W"]
        bn, cache, mean, var = nk.batchnorm_forward(
            z, params[f"h{i}_gamma"], params[f"h{i}_beta"]
        )
        a = nk.elu(bn)
        caches.append((h, cache, bn))
        moments.append((mean, var))
        h = a
    yhat = (h @ params["out_W"] + params["out_b"])[:, 0]
    caches.append(h)
    return yhat, caches, moments


def forward_infer(params: nk.ParamSet, X: np.ndarray, n_layers: int) -> np.ndarray:
    h = X
    for i in range(n_layers):
        z = h @ params[f"h{i}_W"]
        bn = nk.batchnorm_infer(
            z, params[f"h{i}_gamma"], params[f"h{i}_beta"],
            params[f"h{i}_rmean"], params[f"h{i}_rvar"],
        )
        h = nk.elu(bn)
    return (h @ params["out_W"] + params["out_b"])[:, 0]


def backward(params: nk.ParamSet, caches, d_yhat: np.ndarray,
             n_layers: int) -> dict:
    grads = {}
    h_last = caches[-1]
    dout = d_yhat[:, None]
    grads["out_W"] = h_last.T @ dout
    grads["out_b"] = dout.sum(axis=0)
    upstream = dout @ params["out_W"].T
    for i in reversed(range(n_layers)):
        h_in, bn_cache, bn = caches[i]
        d_bn = upstream * nk.d_elu(bn)
        dz, dgamma, dbeta = nk.batchnorm_backward(
            d_bn, bn_cache, params[f"h{i}_gamma"]
        )
        grads[f"h{i}_gamma"] = dgamma
        grads[f"h{i}_beta"] = dbeta
        grads[f"h{i}_W"] = h_in.T @ dz
        upstream = dz @ params[f"h{i}_W"].T
    return grads


def _objective(params: nk.ParamSet, X: np.ndarray, y: np.ndarray,
               lam: float, n_layers: int):
    yhat, caches, moments = forward_train(params, X, n_layers)
    loss = nk.mape_loss(y, yhat) + nk.l2_penalty(params, lam)
    grads = backward(params, caches, nk.mape_loss_grad(y, yhat), n_layers)
    for key, g in nk.l2_penalty_grads(params, lam).items():
        grads[key] = grads[key] + g
    return loss, grads, moments


def loss_and_grads(params: nk.ParamSet, X: np.ndarray, y: np.ndarray,
                   lam: float, n_layers: int = N_HIDDEN_LAYERS):
    """MAPE + L2 objective and its analytic gradients on one batch."""
    loss, grads, _ = _objective(params, X, y, lam, n_layers)
    return loss, grads


class MlpRegressor(BaseEstimator, RegressorMixin):
    """Four hidden ELU layers with batch normalization, linear output.

    Features are standardized with train-split statistics stored on the
    estimator. Targets are divided by the mean absolute train target;
    MAPE is invariant under that joint positive scaling, so the loss is
    unchanged while the net learns O(1) outputs. Training keeps the
    snapshot with the best validation MAPE.
    """

    def __init__(self, hidden=(64, 64, 32, 16), l2=1e-4, batch_size=64,
                 epochs=200, patience=15, learning_rate=1e-3, beta1=0.9,
                 beta2=0.999, adam_eps=1e-8, random_state=0):
        self.hidden = hidden
        self.l2 = l2
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.random_state = random_state

    def _standardize(self, X):
        return (X - self.x_mean_) / self.x_std_

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty table")
        if len(self.hidden) != N_HIDDEN_LAYERS:
            raise ValueError(f"hidden must list {N_HIDDEN_LAYERS} widths")
        if np.any(y == 0):
            raise ValueError("targets must be bounded away from zero for MAPE")

        self.x_mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.x_std_ = np.where(std > 0, std, 1.0)
        self.y_scale_ = float(np.mean(np.abs(y))) or 1.0

        Xs = self._standardize(X)
        ys = y / self.y_scale_
        if X_val is None:
            Xv, yv = Xs, ys
        else:
            X_val = check_array(X_val, dtype=np.float64)
            Xv = self._standardize(X_val)
            yv = np.asarray(y_val, dtype=float).ravel() / self.y_scale_

        n_layers = len(self.hidden)
        params = init_params(
            X.shape[1], self.hidden, named_rng(self.random_state, "mlp", "init")
        )
        shuffle_rng = named_rng(self.random_state, "mlp", "shuffle")
        state = nk.AdamState.init(
            params, trained_keys(n_layers),
            learning_rate=self.learning_rate, beta1=self.beta1,
            beta2=self.beta2, eps=self.adam_eps,
        )

        best_params = params.copy()
        best_val = np.inf
        stale = 0
        n = Xs.shape[0]
        batch = max(2, min(self.batch_size, n))
        for epoch in range(self.epochs):
            order = shuffle_rng.permutation(n)
            for start in range(0, n, batch):
                rows = order[start:start + batch]
                if len(rows) < 2:
                    continue  # batch norm needs >= 2 rows
                loss, grads, moments = _objective(
                    params, Xs[rows], ys[rows], self.l2, n_layers
                )
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, batch "
                        f"{start // batch}"
                    )
                params, state = nk.adam_step(params, grads, state)
                updates = {}
                for i, (mean, var) in enumerate(moments):
                    rm, rv = nk.update_running_stats(
                        params[f"h{i}_rmean"], params[f"h{i}_rvar"], mean, var
                    )
                    updates[f"h{i}_rmean"] = rm
                    updates[f"h{i}_rvar"] = rv
                params = params.replace(updates)
            val_mape = nk.mape_loss(yv, forward_infer(params, Xv, n_layers))
            if val_mape < best_val:
                best_val = val_mape
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if stale > self.patience:
                    break

        self.params_ = best_params
        self.n_layers_ = n_layers
        self.n_features_in_ = X.shape[1]
        self.validation_mape_ = float(best_val)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        out = forward_infer(self.params_, self._standardize(X), self.n_layers_)
        return out * self.y_scale_


def to_payload(est: MlpRegressor):
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
        "hidden": list(est.hidden),
        "batch_size": est.batch_size,
        "epochs": est.epochs,
        "patience": est.patience,
        "random_state": est.random_state,
        "n_features_in": est.n_features_in_,
        "standardized_on": "train",
    }
    return arrays, meta


def from_payload(arrays, meta) -> MlpRegressor:
    fl = arrays["adam_floats"]
    est = MlpRegressor(
        hidden=tuple(meta["hidden"]),
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
    est.n_layers_ = len(meta["hidden"])
    est.n_features_in_ = int(meta["n_features_in"])
    return est

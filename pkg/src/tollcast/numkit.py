"""Minimal numerical core for the hand-built networks.

Dense 64-bit tensors are numpy arrays; NaN/Inf are rejected at the
boundaries. Layer math, the MAPE loss, the L2 penalty, Adam, and the
finite-difference gradient checker all live here so every trainable
architecture in the repo can be verified against the same oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name}")
    return arr


class ParamSet:
    """Named float64 tensors with unique names and frozen shapes.

    Keys whose trailing component starts with "W" are weight matrices;
    only those enter the L2 penalty.
    """

    def __init__(self, arrays: dict, weight_keys=None):
        self._arrays = {}
        for name, value in arrays.items():
            self._arrays[name] = check_finite(name, value)
        if weight_keys is None:
            weight_keys = [
                k for k in self._arrays if k.rsplit("_", 1)[-1].startswith("W")
            ]
        self.weight_keys = frozenset(weight_keys)
        unknown = self.weight_keys - set(self._arrays)
        if unknown:
            raise ValueError(f"weight keys not in set: {sorted(unknown)}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        value = check_finite(name, value)
        if name in self._arrays and value.shape != self._arrays[name].shape:
            raise ValueError(
                f"shape of {name} is frozen at {self._arrays[name].shape}, "
                f"got {value.shape}"
            )
        self._arrays[name] = value

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def keys(self):
        return self._arrays.keys()

    def items(self):
        return self._arrays.items()

    def copy(self) -> "ParamSet":
        return ParamSet(
            {k: v.copy() for k, v in self._arrays.items()},
            weight_keys=self.weight_keys,
        )

    def replace(self, updates: dict) -> "ParamSet":
        """New ParamSet with some arrays swapped (shapes must match)."""
        arrays = dict(self._arrays)
        for name, value in updates.items():
            value = check_finite(name, value)
            if name in arrays and value.shape != arrays[name].shape:
                raise ValueError(f"shape mismatch for {name}")
            arrays[name] = value
        return ParamSet(arrays, weight_keys=self.weight_keys)


def elu(x, alpha: float = 1.0):
    """x for x > 0, else alpha * (exp(x) - 1)."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def d_elu(x, alpha: float = 1.0):
    """Derivative of elu: 1 for x > 0, else alpha * exp(x)."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


def batchnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                      eps: float = BN_EPS):
    """Train-mode batch normalization over axis 0.

    Returns (out, cache, batch_mean, batch_var); the caller owns the
    running-statistics update so probing the loss stays side-effect free.
    Requires at least two rows.
    """
    if x.shape[0] < 2:
        raise NumericError("batch normalization needs a batch of >= 2 rows")
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    out = gamma * x_hat + beta
    cache = (x_hat, inv_std)
    return out, cache, mean, var


def batchnorm_backward(dout: np.ndarray, cache, gamma: np.ndarray):
    """Gradients of train-mode batch norm w.r.t. input, gamma, beta."""
    x_hat, inv_std = cache
    n = dout.shape[0]
    dgamma = (dout * x_hat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dx_hat = dout * gamma
    dx = (inv_std / n) * (
        n * dx_hat
        - dx_hat.sum(axis=0)
        - x_hat * (dx_hat * x_hat).sum(axis=0)
    )
    return dx, dgamma, dbeta


def batchnorm_infer(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                    running_mean: np.ndarray, running_var: np.ndarray,
                    eps: float = BN_EPS) -> np.ndarray:
    """Inference-mode normalization using running statistics only."""
    return gamma * (x - running_mean) / np.sqrt(running_var + eps) + beta


def update_running_stats(running_mean, running_var, batch_mean, batch_var,
                         momentum: float = BN_MOMENTUM):
    new_mean = momentum * running_mean + (1.0 - momentum) * batch_mean
    new_var = momentum * running_var + (1.0 - momentum) * batch_var
    return new_mean, new_var


def mape_loss(y: np.ndarray, yhat: np.ndarray) -> float:
    """Mean absolute percentage error, mean of |y - yhat| / |y|.

    Invariant under joint positive scaling of (y, yhat); callers keep
    |y| above their guard threshold.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.size == 0:
        raise ValueError("mape_loss of empty vectors")
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch {y.shape} vs {yhat.shape}")
    return float(np.mean(np.abs(y - yhat) / np.abs(y)))


def mape_loss_grad(y: np.ndarray, yhat: np.ndarray) -> np.ndarray:
    """d mape / d yhat; the subgradient at yhat == y is 0."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    return -np.sign(y - yhat) / (np.abs(y) * y.size)


def l2_penalty(params: ParamSet, lam: float) -> float:
    """lam * sum of squared entries over weight matrices only."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if lam == 0:
        return 0.0
    return float(lam * sum(
        np.sum(params[k] ** 2) for k in sorted(params.weight_keys)
    ))


def l2_penalty_grads(params: ParamSet, lam: float) -> dict:
    """Gradient of the L2 penalty: 2 * lam * w per weight matrix."""
    if lam == 0:
        return {}
    return {k: 2.0 * lam * params[k] for k in params.weight_keys}


@dataclass(frozen=True)
class AdamState:
    """First/second moments per trained parameter plus the step counter."""

    m: dict
    v: dict
    step: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: ParamSet, keys, learning_rate=1e-3, beta1=0.9,
             beta2=0.999, eps=1e-8) -> "AdamState":
        keys = list(keys)
        return cls(
            m={k: np.zeros_like(params[k]) for k in keys},
            v={k: np.zeros_like(params[k]) for k in keys},
            step=0,
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params: ParamSet, grads: dict, state: AdamState):
    """One bias-corrected Adam update; returns (new params, new state)."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, updates = {}, {}, {}
    for key in state.m:
        g = grads[key]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {key!r}")
        m = b1 * state.m[key] + (1.0 - b1) * g
        v = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        updates[key] = params[key] - state.learning_rate * m_hat / (
            np.sqrt(v_hat) + state.eps
        )
        new_m[key] = m
        new_v[key] = v
    new_params = params.replace(updates)
    new_state = AdamState(
        m=new_m, v=new_v, step=t,
        learning_rate=state.learning_rate, beta1=state.beta1,
        beta2=state.beta2, eps=state.eps,
    )
    return new_params, new_state


def _perturbed(params: ParamSet, key: str, flat_index: int,
               delta: float) -> ParamSet:
    bumped = params[key].copy()
    bumped.flat[flat_index] += delta
    return params.replace({key: bumped})


def grad_check(loss_and_grad, params: ParamSet, n_probes: int = 200,
               rng=None, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_and_grad(params) -> (loss, grads dict)` must be pure. Probes
    n_probes random coordinates of the parameters that appear in the
    gradient dict; relative error is |ga - gfd| / max(|ga|, |gfd|, 1e-8).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    _, grads = loss_and_grad(params)
    keys = sorted(grads)
    sizes = np.array([params[k].size for k in keys])
    total = int(sizes.sum())
    worst = 0.0
    for _ in range(n_probes):
        flat = int(rng.integers(total))
        for key, size in zip(keys, sizes):
            if flat < size:
                break
            flat -= int(size)
        loss_plus, _ = loss_and_grad(_perturbed(params, key, flat, step))
        loss_minus, _ = loss_and_grad(_perturbed(params, key, flat, -step))
        g_fd = (loss_plus - loss_minus) / (2.0 * step)
        g_an = float(grads[key].flat[flat])
        err = abs(g_an - g_fd) / max(abs(g_an), abs(g_fd), 1e-8)
        worst = max(worst, err)
    return worst

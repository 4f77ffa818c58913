"""Minimal MLP: SiLU hidden layers, linear output, manual backprop, Adam.

All matrix products go through np.einsum with fixed index order, which keeps
a batch forward bitwise-identical to row-by-row forwards (BLAS gemm kernels
do not guarantee that) and keeps results reproducible across batch shapes.
All training math is float64; 32-bit casting happens only at serialization.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadDims, DimensionMismatch, ShapeMismatch
from .rng import SplitMix64, derive


@dataclass
class Mlp:
    layer_dims: list
    weights: list   # weights[l]: (layer_dims[l], layer_dims[l+1])
    biases: list    # biases[l]: (layer_dims[l+1],)


@dataclass
class AdamState:
    m: list         # per layer: (mW, mb)
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_mlp(dims, seed):
    """Glorot-uniform weights, zero biases, deterministic in seed."""
    dims = [int(x) for x in dims]
    if len(dims) < 2 or any(x <= 0 for x in dims):
        raise BadDims(f"bad layer dims {dims}")
    rng = SplitMix64(derive(seed, "mlp-init"))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        u = rng.uniform(fan_in * fan_out).reshape(fan_in, fan_out)
        weights.append((2.0 * u - 1.0) * limit)
        biases.append(np.zeros(fan_out))
    return Mlp(dims, weights, biases)


def init_adam(mlp, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    m = [(np.zeros_like(W), np.zeros_like(b))
         for W, b in zip(mlp.weights, mlp.biases)]
    v = [(np.zeros_like(W), np.zeros_like(b))
         for W, b in zip(mlp.weights, mlp.biases)]
    return AdamState(m, v, 0, lr, beta1, beta2, eps)


def _sigmoid(z):
    """Numerically safe logistic; never exponentiates a positive argument."""
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _silu(z):
    return z * _sigmoid(z)


def _silu_grad(z):
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


def _matmul(A, B):
    # einsum, not @: see module docstring
    return np.einsum("ij,jk->ik", A, B)


def _check_input(mlp, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != mlp.layer_dims[0]:
        raise DimensionMismatch(
            f"input shape {X.shape} incompatible with d_in={mlp.layer_dims[0]}")
    return X


def _forward_cached(mlp, X):
    """Activations (inputs to each layer) and pre-activations per layer."""
    acts, pres = [X], []
    Z = X
    last = len(mlp.weights) - 1
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        pre = _matmul(Z, W) + b
        pres.append(pre)
        Z = pre if l == last else _silu(pre)
        acts.append(Z)
    return acts, pres


def forward(mlp, X):
    """Batch forward pass; returns the (N, layer_dims[-1]) output matrix."""
    X = _check_input(mlp, X)
    acts, _ = _forward_cached(mlp, X)
    return acts[-1]


def backward(mlp, X, output_grad):
    """Gradients of sum(output * output_grad) w.r.t. all parameters.

    Returns a per-layer list of (dW, db) matching mlp.weights/biases.
    """
    X = _check_input(mlp, X)
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != (X.shape[0], mlp.layer_dims[-1]):
        raise DimensionMismatch(
            f"output_grad shape {output_grad.shape}, expected "
            f"{(X.shape[0], mlp.layer_dims[-1])}")
    acts, pres = _forward_cached(mlp, X)
    grads = [None] * len(mlp.weights)
    dZ = output_grad
    for l in range(len(mlp.weights) - 1, -1, -1):
        dW = np.einsum("ji,jk->ik", acts[l], dZ)
        db = dZ.sum(axis=0)
        grads[l] = (dW, db)
        if l > 0:
            dA = np.einsum("ij,kj->ik", dZ, mlp.weights[l])
            dZ = dA * _silu_grad(pres[l - 1])
    return grads


def adam_step(mlp, grads, state):
    """Standard bias-corrected Adam update, in place; returns (mlp, state)."""
    if len(grads) != len(mlp.weights):
        raise ShapeMismatch("gradient layer count mismatch")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for l, (dW, db) in enumerate(grads):
        if dW.shape != mlp.weights[l].shape or db.shape != mlp.biases[l].shape:
            raise ShapeMismatch(f"gradient shape mismatch at layer {l}")
        mW, mb = state.m[l]
        vW, vb = state.v[l]
        mW *= state.beta1
        mW += (1.0 - state.beta1) * dW
        mb *= state.beta1
        mb += (1.0 - state.beta1) * db
        vW *= state.beta2
        vW += (1.0 - state.beta2) * dW * dW
        vb *= state.beta2
        vb += (1.0 - state.beta2) * db * db
        mlp.weights[l] -= state.lr * (mW / c1) / (np.sqrt(vW / c2) + state.eps)
        mlp.biases[l] -= state.lr * (mb / c1) / (np.sqrt(vb / c2) + state.eps)
    return mlp, state


def parameter_count(dims):
    return sum(di * do + do for di, do in zip(dims[:-1], dims[1:]))

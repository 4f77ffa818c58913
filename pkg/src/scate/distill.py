"""Spectral distillation: targets, training objective and driver, the
least-squares oracle, and the naive baselines.

The surrogate learns the top-P empirical eigenvector (RF) or left-singular
(GBM) coordinates of the base model's smoothing operator; at inference the
predicted coordinates are contracted with the fixed coefficient vector
c_j = lambda_j (Psi_P^T y)_j (sigma_j (V_P^T y)_j for GBMs).
"""

from dataclasses import dataclass, field

import numpy as np

from .data import REGRESSION, ScalingStats, standardize
from .ensemble import ForestParams, _as_xy, fit_rf, predict_rf
from .cart import TreeParams
from .errors import DimensionMismatch, RankTooLarge, ShapeMismatch, TooFewPositive
from .mlp import Mlp, adam_step, backward, forward, init_adam, init_mlp
from .rng import SplitMix64, derive
from .spectral import EigenDecomposition


@dataclass
class SpectralTargets:
    targets: np.ndarray       # N x P spectral coordinates to regress onto
    weights: np.ndarray       # length P, max 1, strictly positive, non-increasing
    coefficients: np.ndarray  # c, contracted with predicted coordinates


@dataclass
class DistilledModel:
    mlp: Mlp
    coefficients: np.ndarray
    scaling: ScalingStats
    task: str
    p: int
    provenance: dict
    loss_trace: list = field(default_factory=list)  # (epoch, weighted_mse, ortho, total)


def _spectrum_and_basis(decomp):
    if isinstance(decomp, EigenDecomposition):
        return decomp.eigenvalues, decomp.eigenvectors, decomp.eigenvectors
    # SVD triplet: targets live on the left factor, coefficients on the right
    return decomp.sigma, decomp.u, decomp.v


def make_targets(decomp, y, P):
    """Top-P spectral targets, loss weights and the coefficient vector.

    Weights are the squared spectrum, floored at 1e-12 * lambda_1 before
    squaring (keeps them strictly positive when the tail underflows) and
    renormalized so the leading weight is exactly 1.
    """
    spectrum, basis, right = _spectrum_and_basis(decomp)
    y = np.asarray(y, dtype=np.float64)
    if not 1 <= P <= basis.shape[1]:
        raise RankTooLarge(f"P={P} outside 1..{basis.shape[1]}")
    if spectrum[0] <= 0.0:
        raise TooFewPositive("leading spectral value is not positive")
    spec_p = spectrum[:P]
    clipped = np.maximum(spec_p, 1e-12 * spectrum[0])
    weights = clipped * clipped
    weights = weights / weights[0]
    coefficients = spec_p * (right[:, :P].T @ y)
    return SpectralTargets(basis[:, :P].copy(), weights, coefficients)


def _loss_parts(preds, targets, weights, gamma):
    n = preds.shape[0]
    resid = preds - targets
    wmse = float((resid * resid * weights).sum()) / n
    G = np.einsum("ji,jk->ik", preds, preds) / n
    off = G - np.diag(np.diag(G))
    ortho = float((off * off).sum())
    grad = (2.0 / n) * resid * weights \
        + gamma * (4.0 / n) * np.einsum("ij,jk->ik", preds, off)
    return wmse + gamma * ortho, grad, wmse, ortho


def scate_loss(preds, targets, weights, gamma):
    """Spectrum-weighted MSE plus gamma times the squared off-diagonal Gram;
    returns (loss, gradient w.r.t. preds)."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if preds.shape != targets.shape or weights.shape != (preds.shape[1],):
        raise ShapeMismatch(
            f"preds {preds.shape}, targets {targets.shape}, weights {weights.shape}")
    if gamma < 0.0:
        raise ValueError("gamma must be >= 0")
    loss, grad, _, _ = _loss_parts(preds, targets, weights, gamma)
    return loss, grad


def _train_mlp(X, T, weights, gamma, dims, epochs, lr, seed, batch_size):
    """Shared Adam loop; returns (mlp, per-epoch loss trace).

    Defaults to shuffled 64-row mini-batches: with a fixed epoch budget the
    step count is what drives convergence, and full-batch runs measurably
    underfit.  Trace entries average the per-batch losses seen during the
    epoch (for full batch, the pre-update loss).
    """
    n = X.shape[0]
    if batch_size is None:
        batch_size = 64
    mlp = init_mlp(dims, derive(seed, "init"))
    state = init_adam(mlp, lr=lr)
    shuffle = SplitMix64(derive(seed, "batches"))
    trace = []
    for epoch in range(epochs):
        if batch_size >= n:
            preds = forward(mlp, X)
            loss, grad, wmse, ortho = _loss_parts(preds, T, weights, gamma)
            adam_step(mlp, backward(mlp, X, grad), state)
            trace.append((epoch, wmse, ortho, loss))
        else:
            perm = shuffle.permutation(n)
            acc = np.zeros(3)
            for s in range(0, n, batch_size):
                idx = perm[s:s + batch_size]
                preds = forward(mlp, X[idx])
                loss, grad, wmse, ortho = _loss_parts(preds, T[idx], weights, gamma)
                adam_step(mlp, backward(mlp, X[idx], grad), state)
                acc += idx.shape[0] * np.array([wmse, ortho, loss])
            acc /= n
            trace.append((epoch, acc[0], acc[1], acc[2]))
    return mlp, trace


def train_scate(X_train, targets, arch=(16, 2), epochs=200, gamma=1e-3,
                lr=1e-2, seed=0, batch_size=None, scaling=None,
                task=REGRESSION, provenance=None):
    """Train the SCATE surrogate on (already standardized) training rows.

    arch is (width, depth); depth 0 gives a purely linear map.  `scaling`
    carries the feature stats the rows were standardized with, so the model
    is self-contained at inference.
    """
    X = np.ascontiguousarray(X_train, dtype=np.float64)
    n, d = X.shape
    T, w = targets.targets, targets.weights
    if T.shape[0] != n:
        raise ShapeMismatch(f"{n} rows vs {T.shape[0]} target rows")
    width, depth = int(arch[0]), int(arch[1])
    dims = [d] + [width] * depth + [T.shape[1]]
    mlp, trace = _train_mlp(X, T, w, gamma, dims, epochs, lr, seed, batch_size)
    prov = {"base": "rf", "seed": seed, "gamma": gamma, "epochs": epochs}
    prov.update(provenance or {})
    if scaling is None:
        scaling = ScalingStats(np.zeros(d), np.ones(d))
    return DistilledModel(mlp, targets.coefficients.copy(), scaling, task,
                          T.shape[1], prov, trace)


def predict_distilled(model, x):
    """Standardize, forward, contract with c; vector in, scalar out."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.scaling.mean.shape[0]:
        raise DimensionMismatch(
            f"x has {X.shape[1]} features, model expects {model.scaling.mean.shape[0]}")
    Xs, _ = standardize(X, model.scaling)
    out = forward(model.mlp, Xs)
    vals = np.einsum("ij,j->i", out, model.coefficients)
    return float(vals[0]) if single else vals


def distilled_label(model, x):
    """Binary label 1{value >= 0.5}; scalar or vector following the input."""
    vals = predict_distilled(model, x)
    if np.isscalar(vals):
        return int(vals >= 0.5)
    return (vals >= 0.5).astype(np.int64)


def oracle_eval(decomp, K_cross, y, P):
    """Least-squares rank-P reconstruction of the cross-operator rows.

    With the spectral basis orthonormal, the optimal factor is
    W = K_cross * basis / spectrum (columns with spectrum <= 1e-12 * top
    dropped), so the reconstruction is the basis projection — a strict
    lower bound on any rank-P distillation's Frobenius error.
    """
    spectrum, _, right = _spectrum_and_basis(decomp)
    K_cross = np.asarray(K_cross, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not 1 <= P <= right.shape[1]:
        raise RankTooLarge(f"P={P} outside 1..{right.shape[1]}")
    keep = spectrum[:P] > 1e-12 * max(spectrum[0], 0.0)
    B = right[:, :P][:, keep]
    K_tilde = (K_cross @ B) @ B.T
    frob = float(np.linalg.norm(K_cross - K_tilde))
    return {"frobenius_error": frob, "predictions": K_tilde @ y}


def scate_frobenius_error(model, decomp, X_query, K_cross, P):
    """Frobenius error of the trained network's rank-P reconstruction:
    || K_cross - g(X_query) diag(spectrum_P) basis_P^T ||_F."""
    spectrum, _, right = _spectrum_and_basis(decomp)
    X_query = np.asarray(X_query, dtype=np.float64)
    Xs, _ = standardize(X_query, model.scaling)
    G = forward(model.mlp, Xs)
    recon = (G * spectrum[:P]) @ right[:, :P].T
    return float(np.linalg.norm(np.asarray(K_cross, dtype=np.float64) - recon))


def naive_mlp_distill(X_train, teacher, arch=(16, 2), epochs=200, lr=1e-2,
                      seed=0, batch_size=None, scaling=None, task=REGRESSION,
                      combine="mean", base_offset=0.0):
    """Hinton-style baseline: same architecture/optimizer/epochs, but the
    network regresses the per-tree predictions directly (uniform weights,
    no orthogonality penalty).

    X_train follows the same convention as train_scate: rows already
    standardized with `scaling`.  teacher is (N,) or (N, B).  The B-output
    head is collapsed after training into a single output computing the
    mean (RF) or sum (GBM contributions) of the tree outputs, plus
    base_offset; c is then (1.0,).
    """
    X = np.ascontiguousarray(X_train, dtype=np.float64)
    T = np.asarray(teacher, dtype=np.float64)
    if T.ndim == 1:
        T = T[:, None]
    if T.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"{X.shape[0]} rows vs {T.shape[0]} teacher rows")
    n, d = X.shape
    n_out = T.shape[1]
    width, depth = int(arch[0]), int(arch[1])
    dims = [d] + [width] * depth + [n_out]
    mlp, trace = _train_mlp(X, T, np.ones(n_out), 0.0, dims, epochs, lr,
                            seed, batch_size)
    comb = np.full(n_out, 1.0 / n_out) if combine == "mean" else np.ones(n_out)
    W_last, b_last = mlp.weights[-1], mlp.biases[-1]
    head_w = np.ascontiguousarray((W_last @ comb)[:, None])
    head_b = np.array([float(b_last @ comb) + base_offset])
    collapsed = Mlp(dims[:-1] + [1], mlp.weights[:-1] + [head_w],
                    mlp.biases[:-1] + [head_b])
    if scaling is None:
        scaling = ScalingStats(np.zeros(d), np.ones(d))
    prov = {"base": "naive-mlp", "seed": seed, "gamma": 0.0, "epochs": epochs}
    return DistilledModel(collapsed, np.array([1.0]), scaling, task, 1, prov, trace)


def r2_score(y, pred):
    y = np.asarray(y, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res < 1e-30 else 0.0
    return 1.0 - ss_res / ss_tot


def accuracy_score(y, pred_values):
    y = np.asarray(y, dtype=np.float64)
    labels = (np.asarray(pred_values, dtype=np.float64) >= 0.5)
    return float((labels == (y >= 0.5)).mean())


def metric_for_task(task, y, pred_values):
    """R^2 for regression, thresholded accuracy for binary classification."""
    if task == REGRESSION:
        return r2_score(y, pred_values)
    return accuracy_score(y, pred_values)


def naive_small_rf(train, validation, grid, seed=0, task=REGRESSION):
    """Grid of small forests: (forest, minimal-serialized bytes, val score)."""
    from .model_io import measure_size  # local import: model_io needs DistilledModel
    Xv, yv = _as_xy(validation)
    out = []
    for ne in grid["n_estimators"]:
        for md in grid["max_depth"]:
            cell_seed = derive(seed, "naive-rf", int(ne), -1 if md is None else int(md))
            params = ForestParams(n_trees=int(ne),
                                  tree=TreeParams(max_depth=md), seed=cell_seed)
            forest = fit_rf(train, params)
            size = measure_size(forest)
            score = metric_for_task(task, yv, predict_rf(forest, Xv))
            out.append((forest, size, score))
    return out

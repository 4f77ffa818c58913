"""Acceptance gate: the nine shipping criteria, one PASS/FAIL line each.

The per-criterion lines are written to the real stdout so they stay visible
under pytest's output capture.  Criteria 5, 6, and 8 share one module-scoped
benchmark sweep (five seeds, every budget-eligible architecture, 200 epochs);
everything else runs in seconds.

Criterion 8 is comparative-and-reported by protocol: a SCATE loss to the
naive baseline prints a DEVIATION line and a warning instead of failing the
suite, since the ordering is known to be dataset-dependent.
"""

import copy
import json
import os
import time
import warnings

import numpy as np
import pytest

from scate.cart import TreeParams, leaf_ids
from scate.cli import _CONFIG_DEFAULTS, _cross_operator, _per_tree_teacher, \
    _prepare, main
from scate.data import REGRESSION, ScalingStats
from scate.distill import (DistilledModel, naive_mlp_distill, oracle_eval,
                           predict_distilled, r2_score, scate_frobenius_error,
                           scate_loss, train_scate)
from scate.ensemble import (ForestParams, GbmParams, fit_gbm, fit_rf,
                            predict_gbm, predict_rf)
from scate.mlp import backward, forward, init_mlp
from scate.model_io import measure_size, model_size_bytes, serialize
from scate.operators import (gbm_smoother_matrix, gbm_smoother_rows,
                             rf_kernel_matrix)
from scate.rng import SplitMix64, derive
from scate.spectral import decay_fit, eckart_young_error, eig_sym, svd_dense, \
    svd_trunc

BUDGET = 10240


@pytest.fixture
def announce(capsys):
    """One visible PASS/FAIL line per criterion, bypassing output capture."""
    def _fn(num, name, ok, detail, status=None):
        status = status or ("PASS" if ok else "FAIL")
        with capsys.disabled():
            print(f"criterion {num} ({name}): {status} - {detail}", flush=True)
        return ok
    return _fn


# ---------------------------------------------------------------------------
# criterion 1: operator fixed points


def test_criterion1_operator_equivalence(announce):
    rng = SplitMix64(20260813)
    t0 = time.perf_counter()
    worst_rf = 0.0
    for i in range(20):
        if i == 0:
            n, B = 1000, 250  # exercise the stated bounds once
        else:
            n = 30 + int(rng.below(971))
            B = 1 + int(rng.below(250))
        d = 3 + int(rng.below(6))
        tree = TreeParams(
            max_depth=2 + int(rng.below(12)),
            min_samples_leaf=1 + int(rng.below(3)),
            mtry=None if rng.below(2) else 1 + int(rng.below(d)),
            balance_gamma=0.0 if rng.below(2) else 0.1,
            bootstrap=bool(rng.below(2)),
            honest=bool(rng.below(4) == 0))
        X = rng.uniform(n * d).reshape(n, d)
        y = X @ rng.normal(d) + 0.3 * rng.normal(n)
        forest = fit_rf((X, y), ForestParams(B, tree, seed=i))
        K = rf_kernel_matrix(forest, X)
        err = float(np.abs(K.values @ y - predict_rf(forest, X)).max())
        worst_rf = max(worst_rf, err)

    worst_gbm = 0.0
    for eta, B, seed in ((0.1, 100, 7), (1.0, 60, 8)):
        n, d = 400, 6
        X = rng.uniform(n * d).reshape(n, d)
        y = 5.0 * np.sin(3 * X[:, 0]) + X @ rng.normal(d) + rng.normal(n)
        model = fit_gbm((X, y), GbmParams(B, eta, TreeParams(
            max_depth=4, bootstrap=False), seed))
        state = gbm_smoother_matrix(model, X)
        train_idx = np.array([int(rng.below(n)) for _ in range(50)])
        Xq = np.vstack([X[train_idx], rng.uniform(50 * d).reshape(50, d)])
        rows = gbm_smoother_rows(state, model, Xq)
        err = float(np.abs(rows @ y - predict_gbm(model, Xq)).max())
        worst_gbm = max(worst_gbm, err)

    elapsed = time.perf_counter() - t0
    ok = worst_rf <= 1e-10 and worst_gbm <= 1e-8 and elapsed < 120.0
    assert announce(
        1, "operator fixed points", ok,
        f"RF max |Ky - pred| {worst_rf:.2e} <= 1e-10 over 20 configs, "
        f"GBM max probe error {worst_gbm:.2e} <= 1e-8, {elapsed:.0f}s < 120s")


# ---------------------------------------------------------------------------
# criterion 2: kernel structure


def _brute_kernel_pairs(forest, X):
    """Defining double loop, populations counted over the rows of X."""
    n, B = X.shape[0], len(forest.trees)
    K = np.zeros((n, n))
    for tree in forest.trees:
        leaves = leaf_ids(tree, X)
        for i in range(n):
            for j in range(n):
                if leaves[i] == leaves[j]:
                    K[i, j] += 1.0 / ((leaves == leaves[i]).sum() * B)
    return K


def _brute_kernel_eq(forest, X):
    """Same definition via the leaf co-membership indicator matrix; the
    population of row i's leaf is that indicator row's sum (no bucketing)."""
    n = X.shape[0]
    K = np.zeros((n, n))
    for tree in forest.trees:
        leaves = leaf_ids(tree, X)
        eq = leaves[:, None] == leaves[None, :]
        K += eq / eq.sum(axis=1)[:, None]
    return K / len(forest.trees)


def test_criterion2_kernel_structure(announce):
    rng = SplitMix64(22)
    worst = {"sym": 0.0, "sums": 0.0, "eig_low": 0.0, "eig_high": 0.0,
             "brute": 0.0}
    for i in range(10):
        n = 40 + int(rng.below(161))  # <= 200
        d = 2 + int(rng.below(5))
        B = 3 + int(rng.below(38))
        tree = TreeParams(max_depth=2 + int(rng.below(7)),
                          min_samples_leaf=1 + int(rng.below(2)),
                          balance_gamma=0.0 if rng.below(2) else 0.15,
                          bootstrap=bool(rng.below(2)))
        X = rng.uniform(n * d).reshape(n, d)
        y = X @ rng.normal(d) + rng.normal(n)
        forest = fit_rf((X, y), ForestParams(B, tree, seed=100 + i))
        K = rf_kernel_matrix(forest, X).values
        worst["sym"] = max(worst["sym"], float(np.abs(K - K.T).max()))
        worst["sums"] = max(worst["sums"],
                            float(np.abs(K.sum(axis=1) - 1.0).max()),
                            float(np.abs(K.sum(axis=0) - 1.0).max()))
        eigs = np.linalg.eigvalsh(K)
        worst["eig_low"] = max(worst["eig_low"], float(-eigs.min()))
        worst["eig_high"] = max(worst["eig_high"], float(eigs.max() - 1.0))
        brute = _brute_kernel_eq(forest, X)
        if n * n * B <= 300_000:
            assert np.abs(brute - _brute_kernel_pairs(forest, X)).max() <= 1e-15
        worst["brute"] = max(worst["brute"], float(np.abs(K - brute).max()))
    ok = (worst["sym"] <= 1e-12 and worst["sums"] <= 1e-10
          and worst["eig_low"] <= 1e-8 and worst["eig_high"] <= 1e-8
          and worst["brute"] <= 1e-14)
    assert announce(
        2, "kernel structure", ok,
        f"symmetry {worst['sym']:.1e} <= 1e-12, sums off by {worst['sums']:.1e}"
        f" <= 1e-10, min eig >= -{worst['eig_low']:.1e}, lambda1 excess "
        f"{worst['eig_high']:.1e} <= 1e-8, brute-force gap {worst['brute']:.1e}"
        f" <= 1e-14 on 10 instances (N <= 200)")


# ---------------------------------------------------------------------------
# criterion 3: spectral suite


def _planted_sym(n, rate, seed):
    g = SplitMix64(seed)
    Q, _ = np.linalg.qr(g.normal(n * n).reshape(n, n))
    lam = np.exp(-rate * np.arange(n, dtype=np.float64))
    return (Q * lam) @ Q.T, lam


def _ols_beta(values, m):
    x = np.log(np.arange(1, m + 1, dtype=np.float64))
    yv = np.log(values[:m])
    xc, yc = x - x.mean(), yv - yv.mean()
    slope = float((xc * yc).sum() / (xc * xc).sum())
    return -slope


def test_criterion3_spectral_suite(announce):
    rng = SplitMix64(33)
    # Rayleigh residuals, dense route on a real kernel
    n = 150
    X = rng.uniform(n * 4).reshape(n, 4)
    y = X @ rng.normal(4) + rng.normal(n)
    K = rf_kernel_matrix(fit_rf((X, y), ForestParams(
        25, TreeParams(max_depth=6), 1)), X).values
    dec = eig_sym(K)
    resid = np.linalg.norm(K @ dec.eigenvectors
                           - dec.eigenvectors * dec.eigenvalues, axis=0)
    lam1 = dec.eigenvalues[0]
    rayleigh_dense = float(resid.max() / lam1)
    # Rayleigh residuals, randomized route on a planted decaying matrix
    A, _ = _planted_sym(300, 0.3, 5)
    dec_t = eig_sym(A, p=40, dense_cutoff=100, seed=6)
    resid_t = np.linalg.norm(A @ dec_t.eigenvectors
                             - dec_t.eigenvectors * dec_t.eigenvalues, axis=0)
    rayleigh_rand = float(resid_t.max() / dec_t.eigenvalues[0])

    # Eckart-Young identity against direct reconstruction on the full spectrum
    ey_gap = 0.0
    for P in (1, 10, 60, n):
        V = dec.eigenvectors[:, :P]
        direct = float(np.linalg.norm(K - (V * dec.eigenvalues[:P]) @ V.T))
        ey_gap = max(ey_gap, abs(eckart_young_error(dec, P) - direct))

    # randomized SVD vs dense reference on 100x100
    g = SplitMix64(44)
    U, _ = np.linalg.qr(g.normal(100 * 100).reshape(100, 100))
    Vq, _ = np.linalg.qr(g.normal(100 * 100).reshape(100, 100))
    S = (U * np.exp(-0.15 * np.arange(100.0))) @ Vq.T
    ref = svd_dense(S)
    got = svd_trunc(S, 20, seed=9)
    svd_rel = float(np.max(np.abs(got.sigma[:20] - ref.sigma[:20])
                           / ref.sigma[:20]))

    # decay_fit: planted power laws recovered exactly, OLS agreement otherwise
    j = np.arange(1, 81, dtype=np.float64)
    beta_gap = 0.0
    for beta in (0.7, 1.0, 2.5):
        fit = decay_fit(3.2 * j ** -beta, top_m=80)
        beta_gap = max(beta_gap, abs(fit.beta - beta))
    bumpy = j ** -1.2 * (1.0 + 0.05 * np.sin(j))
    ols_gap = abs(decay_fit(bumpy, top_m=80).beta - _ols_beta(bumpy, 80))

    ok = (rayleigh_dense <= 1e-6 and rayleigh_rand <= 1e-6 and ey_gap <= 1e-8
          and svd_rel <= 1e-6 and beta_gap <= 1e-9 and ols_gap <= 1e-9)
    assert announce(
        3, "spectral suite", ok,
        f"Rayleigh {max(rayleigh_dense, rayleigh_rand):.1e} <= 1e-6*lambda1, "
        f"Eckart-Young gap {ey_gap:.1e} <= 1e-8, rSVD top-20 rel "
        f"{svd_rel:.1e} <= 1e-6, planted beta gap {beta_gap:.1e}, "
        f"OLS gap {ols_gap:.1e} <= 1e-9")


# ---------------------------------------------------------------------------
# criterion 4: gradient suite


def test_criterion4_gradient_suite(announce):
    widths, depths = (4, 8, 16, 32, 64, 128), (1, 2, 3, 4, 5)
    rng = SplitMix64(55)
    N, P = 8, 50
    T = rng.normal(N * P).reshape(N, P)
    wts = 0.9 ** np.arange(P, dtype=np.float64)
    gamma = 1e-3
    h = 1e-5
    worst_net = 0.0
    for w in widths:
        for dep in depths:
            dims = [10] + [w] * dep + [P]
            mlp = init_mlp(dims, seed=w * 10 + dep)
            X = rng.normal(N * 10).reshape(N, 10)

            def loss_value():
                return scate_loss(forward(mlp, X), T, wts, gamma)[0]

            _, gout = scate_loss(forward(mlp, X), T, wts, gamma)
            grads = backward(mlp, X, gout)
            gmax = max(max(np.abs(dW).max(), np.abs(db).max())
                       for dW, db in grads)
            err = 0.0
            coord_rng = SplitMix64(derive(66, w, dep))
            for layer, (dW, db) in enumerate(grads):
                Wm, bv = mlp.weights[layer], mlp.biases[layer]
                picks = [(Wm, dW, (int(coord_rng.below(Wm.shape[0])),
                                   int(coord_rng.below(Wm.shape[1]))))
                         for _ in range(12)]
                picks += [(bv, db, (int(coord_rng.below(bv.shape[0])),))
                          for _ in range(8)]
                for param, grad, idx in picks:
                    keep = param[idx]
                    param[idx] = keep + h
                    up = loss_value()
                    param[idx] = keep - h
                    dn = loss_value()
                    param[idx] = keep
                    err = max(err, abs(grad[idx] - (up - dn) / (2 * h)))
            worst_net = max(worst_net, err / gmax)

    # loss gradient w.r.t. predictions, all 400 coordinates
    preds = rng.normal(N * P).reshape(N, P)
    _, grad = scate_loss(preds, T, wts, 0.25)
    fd = np.zeros_like(preds)
    for i in range(N):
        for k in range(P):
            up, dn = preds.copy(), preds.copy()
            up[i, k] += 1e-6
            dn[i, k] -= 1e-6
            fd[i, k] = (scate_loss(up, T, wts, 0.25)[0]
                        - scate_loss(dn, T, wts, 0.25)[0]) / 2e-6
    loss_rel = float(np.abs(grad - fd).max() / np.abs(grad).max())

    ok = worst_net <= 1e-4 and loss_rel <= 1e-6
    assert announce(
        4, "gradient suite", ok,
        f"backprop vs central FD rel {worst_net:.1e} <= 1e-4 over 30 "
        f"architectures, loss gradient rel {loss_rel:.1e} <= 1e-6")


# ---------------------------------------------------------------------------
# criteria 5 / 6 / 8: benchmark sweep (shared fixture)


def _bench_config():
    cfg = copy.deepcopy(_CONFIG_DEFAULTS)
    # defaults are already the benchmark setting; restate the load-bearing
    # parts so this module pins them independently of the CLI defaults
    cfg["data"] = {"kind": "friedman1", "n": 1000, "d": 10, "noise_sd": 1.0}
    cfg["model"] = {"kind": "rf", "n_trees": 250, "max_depth": 15}
    cfg.update(p=50, epochs=200, gamma=1e-3, lr=0.01, batch_size=64)
    return cfg


def _eligible_cells(grid, d, p):
    """Grid cells whose deployed model fits the byte budget.  Sizes are
    architecture-determined (naive models collapse to a single output), so
    over-budget cells can be skipped up front without changing any
    best-under-budget selection."""
    return [c for c in grid if model_size_bytes(d, c[0], c[1], p) <= BUDGET]


@pytest.fixture(scope="module")
def bench():
    cfg = _bench_config()
    p, d = cfg["p"], cfg["data"]["d"]
    grid = [(w, dep) for w in cfg["grid"]["widths"]
            for dep in cfg["grid"]["depths"]]
    scate_cells = _eligible_cells(grid, d, p)   # SCATE keeps the P-output head
    naive_cells = _eligible_cells(grid, d, 1)   # naive deploys a collapsed head
    assert scate_cells and naive_cells

    t0 = time.perf_counter()
    out = {"base_r2": [], "base_size": [], "oracle_frob": [], "oracle_r2": [],
           "scate": [], "naive": []}
    for seed_index, seed in enumerate(cfg["seeds"]):
        prep = _prepare(cfg, seed, {})
        Xte, yte = prep["Xte"], prep["yte"]
        out["base_r2"].append(r2_score(yte, predict_rf(prep["base"], Xte)))
        out["base_size"].append(measure_size(prep["base"]))
        cross = _cross_operator(cfg, prep)
        oracle = oracle_eval(prep["decomp"], cross, prep["y_op"], p)
        out["oracle_frob"].append(oracle["frobenius_error"])
        out["oracle_r2"].append(r2_score(yte, oracle["predictions"]))
        teacher, combine, offset = _per_tree_teacher("rf", prep["base"],
                                                     prep["X_op"])
        for ci, cell in enumerate(scate_cells):
            m = train_scate(prep["Xs_op"], prep["targets"], arch=cell,
                            epochs=cfg["epochs"], gamma=cfg["gamma"],
                            lr=cfg["lr"], seed=derive(seed, "c5s", ci),
                            batch_size=cfg["batch_size"],
                            scaling=prep["stats"])
            size = measure_size(m)
            assert size == model_size_bytes(d, cell[0], cell[1], p)
            out["scate"].append({
                "seed": seed, "cell": cell, "size": size,
                "r2": r2_score(yte, predict_distilled(m, Xte)),
                "frob": scate_frobenius_error(m, prep["decomp"], Xte, cross, p),
            })
        for ci, cell in enumerate(naive_cells):
            m = naive_mlp_distill(prep["Xs_op"], teacher, arch=cell,
                                  epochs=cfg["epochs"], lr=cfg["lr"],
                                  seed=derive(seed, "c5n", ci),
                                  batch_size=cfg["batch_size"],
                                  scaling=prep["stats"], combine=combine,
                                  base_offset=offset)
            size = measure_size(m)
            assert size == model_size_bytes(d, cell[0], cell[1], 1)
            out["naive"].append({
                "seed": seed, "cell": cell, "size": size,
                "r2": r2_score(yte, predict_distilled(m, Xte)),
            })
    out["elapsed"] = time.perf_counter() - t0
    out["seeds"] = list(cfg["seeds"])
    out["n_seeds"] = len(cfg["seeds"])
    return out


def _best_mean(records, n_seeds):
    """Best mean-over-seeds cell among budget-eligible records."""
    by_cell = {}
    for r in records:
        if r["size"] <= BUDGET:
            by_cell.setdefault(r["cell"], []).append(r["r2"])
    assert all(len(v) == n_seeds for v in by_cell.values())
    cell, vals = max(by_cell.items(), key=lambda kv: (np.mean(kv[1]), kv[0]))
    return cell, float(np.mean(vals))


def test_criterion5_benchmark_reproduction(bench, announce):
    base_mean = float(np.mean(bench["base_r2"]))
    cell, scate_mean = _best_mean(bench["scate"], bench["n_seeds"])
    floor = max(0.70, base_mean - 0.10)
    minutes = bench["elapsed"] / 60.0
    ok = (0.78 <= base_mean <= 0.92 and scate_mean >= floor
          and bench["elapsed"] < 1200.0)
    assert announce(
        5, "benchmark reproduction", ok,
        f"base R2 mean {base_mean:.3f} in [0.78, 0.92] "
        f"(seeds {min(bench['base_r2']):.3f}-{max(bench['base_r2']):.3f}), "
        f"best <=10KB cell w{cell[0]}d{cell[1]} mean R2 {scate_mean:.3f} >= "
        f"{floor:.3f}, {minutes:.1f} min < 20 min")


def test_criterion6_oracle_dominance(bench, announce):
    oracle = dict(zip(bench["seeds"], bench["oracle_frob"]))
    gaps = [r["frob"] - oracle[r["seed"]] for r in bench["scate"]]
    ok = all(g >= 0.0 for g in gaps)
    assert announce(
        6, "oracle dominance", ok,
        f"oracle Frobenius error <= SCATE error in {sum(g >= 0 for g in gaps)}"
        f"/{len(gaps)} runs (min gap {min(gaps):.3e})")


def test_criterion7_size_accounting(bench, announce):
    model = DistilledModel(init_mlp([10, 16, 16, 50], 0),
                           SplitMix64(1).normal(50),
                           ScalingStats(np.zeros(10), np.ones(10)),
                           REGRESSION, 50, {})
    nbytes = len(serialize(model))
    factor = min(bench["base_size"]) / nbytes
    ok = nbytes == 5511 and nbytes < BUDGET and factor >= 100.0
    assert announce(
        7, "size accounting", ok,
        f"width-16 depth-2 model {nbytes} B < 10240, base forest "
        f"{min(bench['base_size']) / 1e6:.1f} MB, compression {factor:.0f}x "
        f">= 100x")


def test_criterion8_naive_baseline_ordering(bench, announce):
    scell, scate_mean = _best_mean(bench["scate"], bench["n_seeds"])
    ncell, naive_mean = _best_mean(bench["naive"], bench["n_seeds"])
    ok = scate_mean >= naive_mean
    detail = (f"10KB mean R2: SCATE {scate_mean:.3f} (w{scell[0]}d{scell[1]})"
              f" vs naive MLP {naive_mean:.3f} (w{ncell[0]}d{ncell[1]})")
    announce(8, "naive baseline ordering", ok, detail,
              status="PASS" if ok else "DEVIATION (reported, non-blocking)")
    if not ok:
        warnings.warn("criterion 8 deviation: " + detail)


# ---------------------------------------------------------------------------
# criterion 9: determinism


def test_criterion9_pipeline_determinism(tmp_path, announce):
    cfg = {"data": {"kind": "friedman1", "n": 400, "d": 8, "noise_sd": 1.0},
           "model": {"kind": "rf", "n_trees": 60, "max_depth": 10},
           "p": 20, "epochs": 40, "arch": [8, 1], "seed": 3}
    cfg_path = str(tmp_path / "cfg.json")
    with open(cfg_path, "w") as fh:
        json.dump(cfg, fh)
    outs = [str(tmp_path / "run1"), str(tmp_path / "run2")]
    for out in outs:
        assert main(["pipeline", "--config", cfg_path, "--out", out]) == 0
    names = ["report.json", "model.scte", "spectrum.csv", "loss_trace.csv"]
    same = []
    for name in names:
        blobs = []
        for out in outs:
            with open(os.path.join(out, name), "rb") as fh:
                blobs.append(fh.read())
        same.append(blobs[0] == blobs[1])
    ok = all(same)
    assert announce(
        9, "determinism", ok,
        f"{sum(same)}/{len(names)} non-timing artifacts byte-identical "
        f"across reruns")

"""Command-line surface: pipeline, sweep, spectrum, bench-time, gen-data,
inspect-model.

Configuration comes from an optional JSON file (--config) with individual
flags overriding file values.  Exit codes: 0 success, 1 stage error,
2 config error.  All artifacts land under the configured output directory
with stable filenames; wall-clock timings go to separate files so the
remaining outputs are byte-identical across reruns of the same config.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .cart import TreeParams, leaf_ids
from .data import (BINARY_CLASSIFICATION, REGRESSION, gen_friedman1, load_csv,
                   split, standardize, to_csv)
from .distill import (make_targets, metric_for_task, naive_mlp_distill,
                      oracle_eval, predict_distilled, scate_frobenius_error,
                      train_scate)
from .ensemble import (ForestParams, GbmParams, fit_gbm, fit_rf, predict_gbm,
                       predict_rf)
from .errors import ConfigError, ScateError, TooFewPositive
from .model_io import (FOREST_MAGIC, MODEL_MAGIC, deserialize,
                       deserialize_forest, measure_size, serialize)
from .operators import (gbm_smoother_matrix, gbm_smoother_rows,
                        rf_kernel_cross, rf_kernel_matrix, subsample_operator)
from .rng import derive
from .spectral import decay_fit, eig_sym, svd_dense, svd_trunc

DEFAULT_GRID = {"widths": [4, 8, 16, 32, 64, 128], "depths": [1, 2, 3, 4, 5]}
DEFAULT_NAIVE_RF_GRID = {"n_estimators": [10, 50, 100, 200, 500],
                         "max_depth": [3, 4, 5, 6, 7, 8, 9, None]}

_CONFIG_DEFAULTS = {
    "data": {"kind": "friedman1", "n": 1000, "d": 10, "noise_sd": 1.0},
    "model": {"kind": "rf"},
    "p": 50,
    "operator_cap": 4000,
    "dense_cutoff": 2000,
    "arch": [16, 2],
    "grid": DEFAULT_GRID,
    "naive_rf_grid": DEFAULT_NAIVE_RF_GRID,
    "methods": ["scate", "naive_mlp", "naive_rf"],
    "epochs": 200,
    "gamma": 0.001,
    "lr": 0.01,
    "batch_size": 64,
    "ratios": [0.7, 0.15, 0.15],
    "seed": 0,
    "seeds": [0, 1, 2, 3, 4],
    "budgets": [10240, 102400],
    "out": "scate-out",
}

_MODEL_DEFAULTS = {
    "rf": {"n_trees": 250, "max_depth": 15, "min_samples_leaf": 1, "mtry": None,
           "bootstrap": True, "honest": False, "subsample_fraction": 1.0,
           "balance_gamma": 0.0},
    "gbm": {"n_trees": 100, "max_depth": 6, "min_samples_leaf": 1,
            "learning_rate": 0.1},
}


class StageError(ScateError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


# ---------------------------------------------------------------------------
# configuration

def _merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(args):
    cfg = dict(_CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(file_cfg, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, file_cfg)
    cfg = _merge(cfg, _flag_overrides(args))
    _validate_config(cfg)
    return cfg


def _flag_overrides(args):
    ov = {}
    data, model = {}, {}
    if getattr(args, "csv", None):
        data.update({"kind": "csv", "path": args.csv})
    for flag, key, sub in (
            ("n", "n", data), ("d", "d", data), ("noise_sd", "noise_sd", data),
            ("target", "target", data), ("task", "task", data),
            ("model", "kind", model), ("n_trees", "n_trees", model),
            ("max_depth", "max_depth", model),
            ("learning_rate", "learning_rate", model),
            ("honest", "honest", model)):
        val = getattr(args, flag, None)
        if val is not None:
            sub[key] = val
    if data:
        ov["data"] = data
    if model:
        ov["model"] = model
    for flag in ("p", "operator_cap", "epochs", "gamma", "lr", "batch_size",
                 "seed", "out"):
        val = getattr(args, flag, None)
        if val is not None:
            ov[flag] = val
    if getattr(args, "arch", None) is not None:
        ov["arch"] = _parse_arch(args.arch)
    for flag, cast in (("seeds", int), ("budgets", int), ("ratios", float),
                       ("methods", str)):
        val = getattr(args, flag, None)
        if val is not None:
            try:
                ov[flag] = [cast(x) for x in val.split(",") if x != ""]
            except ValueError as exc:
                raise ConfigError(f"bad --{flag}: {exc}")
    return ov


def _parse_arch(text):
    try:
        w, d = text.lower().split("x")
        return [int(w), int(d)]
    except ValueError:
        raise ConfigError(f"bad --arch {text!r}, expected WIDTHxDEPTH like 16x2")


def _validate_config(cfg):
    data = cfg["data"]
    if data.get("kind") not in ("friedman1", "csv"):
        raise ConfigError(f"data.kind must be friedman1 or csv, got {data.get('kind')!r}")
    if data["kind"] == "csv":
        if not data.get("path") or not data.get("target"):
            raise ConfigError("csv data needs path and target")
        if data.get("task", REGRESSION) not in (REGRESSION, BINARY_CLASSIFICATION):
            raise ConfigError(f"bad task {data.get('task')!r}")
    else:
        for key in ("n", "d"):
            if int(data.get(key, 0)) <= 0:
                raise ConfigError(f"data.{key} must be positive")
    kind = cfg["model"].get("kind")
    if kind not in ("rf", "gbm"):
        raise ConfigError(f"model.kind must be rf or gbm, got {kind!r}")
    for key in ("p", "operator_cap", "epochs", "dense_cutoff"):
        if int(cfg[key]) <= 0:
            raise ConfigError(f"{key} must be positive")
    if cfg["gamma"] < 0 or cfg["lr"] <= 0:
        raise ConfigError("gamma must be >= 0 and lr > 0")
    if len(cfg["ratios"]) != 3 or any(r <= 0 for r in cfg["ratios"]):
        raise ConfigError("ratios must be three positive fractions")
    if len(cfg["arch"]) != 2 or cfg["arch"][0] <= 0 or cfg["arch"][1] < 0:
        raise ConfigError("arch must be [width, depth]")
    budgets = cfg["budgets"]
    if any(int(b) <= 0 for b in budgets) or sorted(budgets) != list(budgets):
        raise ConfigError("budgets must be positive and ascending")
    if not cfg["seeds"]:
        raise ConfigError("seeds must be non-empty")
    bad = set(cfg["methods"]) - {"scate", "naive_mlp", "naive_rf"}
    if bad:
        raise ConfigError(f"unknown methods {sorted(bad)}")


def _model_params(cfg):
    kind = cfg["model"]["kind"]
    m = _merge(_MODEL_DEFAULTS[kind], {k: v for k, v in cfg["model"].items()
                                       if k != "kind"})
    if kind == "rf":
        tree = TreeParams(max_depth=m["max_depth"],
                          min_samples_leaf=m["min_samples_leaf"],
                          mtry=m["mtry"], balance_gamma=m["balance_gamma"],
                          honest=m["honest"], bootstrap=m["bootstrap"],
                          subsample_fraction=m["subsample_fraction"])
        return lambda seed: ForestParams(m["n_trees"], tree, seed)
    tree = TreeParams(max_depth=m["max_depth"],
                      min_samples_leaf=m["min_samples_leaf"], bootstrap=False)
    return lambda seed: GbmParams(m["n_trees"], m["learning_rate"], tree, seed)


# ---------------------------------------------------------------------------
# pipeline stages

def _stage(timings, name, fn, *a, **kw):
    t0 = time.perf_counter()
    try:
        out = fn(*a, **kw)
    except ConfigError:
        raise
    except ScateError as exc:
        raise StageError(name, exc)
    timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0
    return out


def _load_dataset(cfg, seed):
    data = cfg["data"]
    if data["kind"] == "csv":
        try:
            return load_csv(data["path"], data["target"],
                            data.get("task", REGRESSION))
        except OSError as exc:
            raise ConfigError(f"cannot read csv {data['path']}: {exc}")
    return gen_friedman1(int(data["n"]), int(data["d"]),
                         float(data.get("noise_sd", 1.0)),
                         derive(seed, "data"))


def _prepare(cfg, seed, timings):
    """Everything up to spectral targets for one seed: data, split, base
    model, operator on the (possibly subsampled) rows, decomposition."""
    kind = cfg["model"]["kind"]
    ds = _stage(timings, "data", _load_dataset, cfg, seed)
    spl = _stage(timings, "split", split, ds.n, tuple(cfg["ratios"]), seed)
    X, y = ds.features, ds.target
    Xtr, ytr = X[spl.train], y[spl.train]
    make_params = _model_params(cfg)
    fit = fit_rf if kind == "rf" else fit_gbm
    base = _stage(timings, "base-fit", fit, (Xtr, ytr),
                  make_params(derive(seed, "base")))
    sub = subsample_operator(np.arange(Xtr.shape[0]), int(cfg["operator_cap"]),
                             seed)
    X_op, y_op = Xtr[sub], ytr[sub]
    p, cutoff = int(cfg["p"]), int(cfg["dense_cutoff"])

    def build_operator():
        if kind == "rf":
            K = rf_kernel_matrix(base, X_op, row_indices=sub)
            if K.n <= cutoff:
                dec = eig_sym(K.values, dense_cutoff=cutoff)
            else:
                dec = eig_sym(K.values, p=max(p, 100), dense_cutoff=cutoff,
                              seed=derive(seed, "eig"))
            return K.values, None, dec
        state = gbm_smoother_matrix(base, Xtr)
        S_rows = state.matrix[sub, :]
        if min(S_rows.shape) <= cutoff:
            dec = svd_dense(S_rows)
        else:
            dec = svd_trunc(S_rows, max(p, 100), seed=derive(seed, "svd"))
        return S_rows, state, dec

    operator, state, dec = _stage(timings, "operator", build_operator)
    y_coeff = y_op if kind == "rf" else ytr
    targets = _stage(timings, "targets", make_targets, dec, y_coeff, p)
    _, stats = standardize(Xtr)
    Xs_op, _ = standardize(X_op, stats)
    return {
        "dataset": ds, "split": spl, "base": base, "state": state,
        "sub": sub, "X_op": X_op, "y_op": y_op, "Xs_op": Xs_op,
        "decomp": dec, "targets": targets, "stats": stats,
        "Xtr": Xtr, "ytr": ytr,
        "Xte": X[spl.test], "yte": y[spl.test],
        "Xval": X[spl.validation], "yval": y[spl.validation],
    }


def _predict_base(kind, base, X):
    return predict_rf(base, X) if kind == "rf" else predict_gbm(base, X)


def _cross_operator(cfg, prep):
    """Test-row block of the smoothing operator (for the oracle)."""
    if cfg["model"]["kind"] == "rf":
        return rf_kernel_cross(prep["base"], prep["X_op"], prep["Xte"],
                               row_indices=prep["sub"])
    return gbm_smoother_rows(prep["state"], prep["base"], prep["Xte"])


def _spectrum_of(dec):
    return dec.eigenvalues if hasattr(dec, "eigenvalues") else dec.sigma


def _beta_fit_dict(dec):
    spec = _spectrum_of(dec)
    try:
        fit = decay_fit(spec, top_m=min(100, spec.shape[0]))
    except TooFewPositive:
        return None
    return {"beta": fit.beta, "intercept": fit.intercept, "r2": fit.r2,
            "n_points": fit.n_points, "c2_satisfied": bool(fit.beta > 1.0)}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows, footer_json=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        if footer_json is not None:
            fh.write("# " + json.dumps(footer_json, sort_keys=True) + "\n")


def read_spectrum_csv(path):
    """Parse the spectrum CSV back into (values, footer dict) — round-trip
    helper used by tests and downstream tooling."""
    values, footer = [], None
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if line.startswith("#"):
                footer = json.loads(line[1:])
            elif i > 0 and line:
                values.append(float(line.split(",")[1]))
    return np.array(values), footer


def _spectrum_rows(cfg, dec):
    spec = _spectrum_of(dec)
    name = "eigenvalue" if cfg["model"]["kind"] == "rf" else "singular_value"
    top = spec[:min(100, spec.shape[0])]
    return name, [(i + 1, repr(float(v))) for i, v in enumerate(top)]


def cmd_pipeline(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    timings = {}
    seed = int(cfg["seed"])
    kind = cfg["model"]["kind"]
    task = cfg["data"].get("task", REGRESSION)
    p = int(cfg["p"])
    prep = _prepare(cfg, seed, timings)

    model = _stage(timings, "train", train_scate, prep["Xs_op"],
                   prep["targets"], arch=tuple(cfg["arch"]),
                   epochs=int(cfg["epochs"]), gamma=float(cfg["gamma"]),
                   lr=float(cfg["lr"]), seed=derive(seed, "scate"),
                   batch_size=int(cfg["batch_size"]), scaling=prep["stats"],
                   task=task, provenance={"base": kind})

    def evaluate():
        yte = prep["yte"]
        base_pred = _predict_base(kind, prep["base"], prep["Xte"])
        dist_pred = predict_distilled(model, prep["Xte"])
        cross = _cross_operator(cfg, prep)
        y_solve = prep["y_op"] if kind == "rf" else prep["ytr"]
        oracle = oracle_eval(prep["decomp"], cross, y_solve, p)
        scate_frob = scate_frobenius_error(model, prep["decomp"], prep["Xte"],
                                           cross, p)
        dec = prep["decomp"]
        spec = _spectrum_of(dec)
        if spec.shape[0] == dec.rank_full:
            tail = spec[p:]
            ey = float(np.sqrt((tail * tail).sum()))
        else:
            ey = None
        raw = serialize(model)
        base_bytes = measure_size(prep["base"])
        return {
            "task": task,
            "seed": seed,
            "base_model": kind,
            "base_metric": metric_for_task(task, yte, base_pred),
            "distilled_metric": metric_for_task(task, yte, dist_pred),
            "oracle_metric_at_p": metric_for_task(task, yte, oracle["predictions"]),
            "frobenius_errors": {
                "oracle": oracle["frobenius_error"],
                "scate": scate_frob,
                "eckart_young_at_p": ey,
            },
            "beta_fit": _beta_fit_dict(dec),
            "sizes": {
                "base_bytes": base_bytes,
                "distilled_bytes": len(raw),
                "compression_factor": base_bytes / len(raw),
            },
        }, raw

    report, raw = _stage(timings, "evaluate", evaluate)

    def write_artifacts():
        _write_json(os.path.join(out, "report.json"), report)
        with open(os.path.join(out, "model.scte"), "wb") as fh:
            fh.write(raw)
        name, rows = _spectrum_rows(cfg, prep["decomp"])
        _write_csv(os.path.join(out, "spectrum.csv"), ["index", name], rows,
                   footer_json=report["beta_fit"])
        _write_csv(os.path.join(out, "loss_trace.csv"),
                   ["epoch", "weighted_mse", "ortho_penalty", "total"],
                   [(e, repr(float(a)), repr(float(b)), repr(float(c)))
                    for e, a, b, c in model.loss_trace])

    _stage(timings, "write", write_artifacts)
    _write_json(os.path.join(out, "timings.json"), timings)
    print(f"pipeline done: base={report['base_metric']:.4f} "
          f"distilled={report['distilled_metric']:.4f} "
          f"oracle@{p}={report['oracle_metric_at_p']:.4f} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# sweep

def _per_tree_teacher(kind, base, X):
    if kind == "rf":
        cols = [t.value[leaf_ids(t, X)] for t in base.trees]
        return np.stack(cols, axis=1), "mean", 0.0
    cols = [base.learning_rate * t.value[leaf_ids(t, X)] for t in base.trees]
    return np.stack(cols, axis=1), "sum", base.base_score


def _time_infer_per_1k(predict, X, reps=1):
    idx = np.arange(1000) % X.shape[0]
    X1k = X[idx]
    best = []
    for _ in range(reps):
        t0 = time.perf_counter()
        predict(X1k)
        best.append(time.perf_counter() - t0)
    return float(np.median(best))


def _sweep_cells(cfg):
    cells = {"scate": [], "naive_mlp": [], "naive_rf": []}
    for w in cfg["grid"]["widths"]:
        for dep in cfg["grid"]["depths"]:
            cells["scate"].append((f"w{w}d{dep}", (int(w), int(dep))))
            cells["naive_mlp"].append((f"w{w}d{dep}", (int(w), int(dep))))
    for ne in cfg["naive_rf_grid"]["n_estimators"]:
        for md in cfg["naive_rf_grid"]["max_depth"]:
            label = f"n{ne}md{'none' if md is None else md}"
            cells["naive_rf"].append((label, (int(ne), md)))
    return cells


def cmd_sweep(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    kind = cfg["model"]["kind"]
    task = cfg["data"].get("task", REGRESSION)
    p = int(cfg["p"])
    global_seed = int(cfg["seed"])
    cells = _sweep_cells(cfg)
    methods = list(cfg["methods"])
    records = []

    def record(method, cell, seed, size, metric, t_train, t_infer,
               status="ok", error=""):
        records.append({"method": method, "cell": cell, "seed": seed,
                        "size_bytes": "" if size is None else int(size),
                        "metric": "" if metric is None else repr(float(metric)),
                        "wall_train_s": repr(float(t_train)),
                        "wall_infer_s_per_1k": "" if t_infer is None else repr(float(t_infer)),
                        "status": status, "error": error})

    for seed_index, seed in enumerate(int(s) for s in cfg["seeds"]):
        timings = {}
        prep = _prepare(cfg, seed, timings)
        Xte, yte = prep["Xte"], prep["yte"]
        base = prep["base"]

        t_infer = _time_infer_per_1k(lambda X: _predict_base(kind, base, X), Xte)
        record("base", f"{kind}", seed, measure_size(base),
               metric_for_task(task, yte, _predict_base(kind, base, Xte)),
               timings.get("base-fit", 0.0), t_infer)

        t0 = time.perf_counter()
        cross = _cross_operator(cfg, prep)
        y_solve = prep["y_op"] if kind == "rf" else prep["ytr"]
        oracle = oracle_eval(prep["decomp"], cross, y_solve, p)
        record("oracle", f"p{p}", seed, None,
               metric_for_task(task, yte, oracle["predictions"]),
               time.perf_counter() - t0, None)

        if "naive_mlp" in methods:
            teacher, combine, offset = _per_tree_teacher(kind, base, prep["X_op"])

        for method in methods:
            for cell_index, (label, cell) in enumerate(cells[method]):
                run_seed = derive(global_seed, method, cell_index, seed_index)
                t0 = time.perf_counter()
                try:
                    if method == "scate":
                        m = train_scate(prep["Xs_op"], prep["targets"],
                                        arch=cell, epochs=int(cfg["epochs"]),
                                        gamma=float(cfg["gamma"]),
                                        lr=float(cfg["lr"]), seed=run_seed,
                                        batch_size=int(cfg["batch_size"]),
                                        scaling=prep["stats"], task=task)
                        size = measure_size(m)
                        pred = predict_distilled(m, Xte)
                        t_inf = _time_infer_per_1k(lambda X: predict_distilled(m, X), Xte)
                    elif method == "naive_mlp":
                        m = naive_mlp_distill(prep["Xs_op"], teacher, arch=cell,
                                              epochs=int(cfg["epochs"]),
                                              lr=float(cfg["lr"]), seed=run_seed,
                                              batch_size=int(cfg["batch_size"]),
                                              scaling=prep["stats"], task=task,
                                              combine=combine, base_offset=offset)
                        size = measure_size(m)
                        pred = predict_distilled(m, Xte)
                        t_inf = _time_infer_per_1k(lambda X: predict_distilled(m, X), Xte)
                    else:
                        ne, md = cell
                        params = ForestParams(
                            ne, TreeParams(max_depth=md), run_seed)
                        f = fit_rf((prep["Xtr"], prep["ytr"]), params)
                        size = measure_size(f)
                        pred = predict_rf(f, Xte)
                        t_inf = _time_infer_per_1k(lambda X: predict_rf(f, X), Xte)
                    record(method, label, seed, size,
                           metric_for_task(task, yte, pred),
                           time.perf_counter() - t0, t_inf)
                except ScateError as exc:
                    record(method, label, seed, None, None,
                           time.perf_counter() - t0, None,
                           status="error", error=str(exc))

    header = ["method", "cell", "seed", "size_bytes", "metric",
              "wall_train_s", "wall_infer_s_per_1k", "status", "error"]
    _write_csv(os.path.join(out, "records.csv"), header,
               [[r[h] for h in header] for r in records])
    _write_best_tables(cfg, out, records)
    _write_pareto(out, records)
    print(f"sweep done: {len(records)} records -> {out}")
    return 0


def _ok_records(records):
    return [r for r in records if r["status"] == "ok" and r["metric"] != ""]


def _write_best_tables(cfg, out, records):
    """Per (budget, method): the cell with the best mean-over-seeds metric
    among records fitting the budget, or NA; plus per-seed bests."""
    ok = _ok_records(records)
    methods = sorted({r["method"] for r in ok})
    best_rows, per_seed_rows = [], []
    for budget in cfg["budgets"]:
        for method in methods:
            fits = [r for r in ok
                    if r["method"] == method and r["size_bytes"] != ""
                    and int(r["size_bytes"]) <= int(budget)]
            by_cell = {}
            for r in fits:
                by_cell.setdefault(r["cell"], []).append(float(r["metric"]))
            if not by_cell:
                best_rows.append([budget, method, "NA", "NA", 0])
            else:
                cell, vals = max(by_cell.items(),
                                 key=lambda kv: (np.mean(kv[1]), kv[0]))
                best_rows.append([budget, method, cell,
                                  repr(float(np.mean(vals))), len(vals)])
            by_seed = {}
            for r in fits:
                by_seed.setdefault(r["seed"], []).append(r)
            for seed in sorted(by_seed):
                br = max(by_seed[seed], key=lambda r: float(r["metric"]))
                per_seed_rows.append([budget, method, seed, br["cell"],
                                      br["metric"]])
    _write_csv(os.path.join(out, "best_under_budget.csv"),
               ["budget_bytes", "method", "cell", "mean_metric", "n_records"],
               best_rows)
    _write_csv(os.path.join(out, "best_per_seed.csv"),
               ["budget_bytes", "method", "seed", "cell", "metric"],
               per_seed_rows)


def _write_pareto(out, records):
    """Non-dominated (mean size, mean metric) points per method."""
    ok = [r for r in _ok_records(records) if r["size_bytes"] != ""]
    stats = {}
    for r in ok:
        key = (r["method"], r["cell"])
        stats.setdefault(key, []).append(
            (int(r["size_bytes"]), float(r["metric"])))
    points = []
    for (method, cell), vals in stats.items():
        sizes, metrics = zip(*vals)
        points.append((method, cell, float(np.mean(sizes)),
                       float(np.mean(metrics))))
    rows = []
    for method in sorted({pt[0] for pt in points}):
        mine = [pt for pt in points if pt[0] == method]
        mine.sort(key=lambda pt: (pt[2], -pt[3]))
        frontier = []
        best = -np.inf
        for pt in mine:
            if pt[3] > best:
                frontier.append(pt)
                best = pt[3]
        rows.extend([m, c, repr(s), repr(v)] for m, c, s, v in frontier)
    _write_csv(os.path.join(out, "pareto.csv"),
               ["method", "cell", "mean_size_bytes", "mean_metric"], rows)


# ---------------------------------------------------------------------------
# remaining commands

def cmd_spectrum(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    timings = {}
    prep = _prepare(cfg, int(cfg["seed"]), timings)
    name, rows = _spectrum_rows(cfg, prep["decomp"])
    footer = _beta_fit_dict(prep["decomp"])
    _write_csv(os.path.join(out, "spectrum.csv"), ["index", name], rows,
               footer_json=footer)
    _write_json(os.path.join(out, "timings.json"), timings)
    if footer is None:
        print("spectrum done: decay fit unavailable (no positive eigenvalues)")
    else:
        print(f"spectrum done: beta={footer['beta']:.4f} r2={footer['r2']:.4f} "
              f"C2 satisfied: {footer['c2_satisfied']}")
    return 0


def cmd_bench_time(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    kind = cfg["model"]["kind"]
    task = cfg["data"].get("task", REGRESSION)
    timings = {}
    prep = _prepare(cfg, int(cfg["seed"]), timings)
    Xte = prep["Xte"]
    bucket = 5120

    def median_of_5(predict):
        return _time_infer_per_1k(predict, Xte, reps=5)

    rows = []
    base = prep["base"]
    rows.append(["base", measure_size(base),
                 repr(timings.get("base-fit", 0.0)),
                 repr(median_of_5(lambda X: _predict_base(kind, base, X)))])
    t0 = time.perf_counter()
    model = train_scate(prep["Xs_op"], prep["targets"], arch=tuple(cfg["arch"]),
                        epochs=int(cfg["epochs"]), gamma=float(cfg["gamma"]),
                        lr=float(cfg["lr"]), seed=derive(int(cfg["seed"]), "scate"),
                        batch_size=int(cfg["batch_size"]),
                        scaling=prep["stats"], task=task)
    t_train = time.perf_counter() - t0
    rows.append(["scate", measure_size(model), repr(t_train),
                 repr(median_of_5(lambda X: predict_distilled(model, X)))])
    table = [[m, s, (int(s) // bucket) * bucket, tt, ti]
             for m, s, tt, ti in rows]
    _write_csv(os.path.join(out, "timing.csv"),
               ["method", "size_bytes", "size_bucket_bytes", "train_s",
                "infer_s_per_1k"], table)
    print(f"bench-time done -> {out}")
    return 0


def cmd_gen_data(cfg, path):
    data = cfg["data"]
    if data["kind"] != "friedman1":
        raise ConfigError("gen-data only generates friedman1")
    ds = gen_friedman1(int(data["n"]), int(data["d"]),
                       float(data.get("noise_sd", 1.0)),
                       derive(int(cfg["seed"]), "data"))
    to_csv(ds, path)
    print(f"wrote {ds.n} rows x {ds.d} features -> {path}")
    return 0


def cmd_inspect_model(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ScateError(f"cannot read model file {path}: {exc}")
    if raw[:4] == MODEL_MAGIC:
        m = deserialize(raw)
        info = {"format": "scte", "task": m.task,
                "d_in": int(m.mlp.layer_dims[0]), "p": m.p,
                "layer_dims": list(m.mlp.layer_dims),
                "n_parameters": int(sum(W.size + b.size for W, b in
                                        zip(m.mlp.weights, m.mlp.biases))),
                "size_bytes": len(raw), "crc_ok": True}
    elif raw[:4] == FOREST_MAGIC:
        mf = deserialize_forest(raw)
        info = {"format": "sctf",
                "combine": "mean" if mf.kind == 0 else "sum",
                "scale": mf.scale, "base": mf.base,
                "n_trees": len(mf.trees),
                "total_nodes": int(sum(t[0].shape[0] for t in mf.trees)),
                "size_bytes": len(raw), "crc_ok": True}
    else:
        raise ScateError(f"unrecognized magic {raw[:4]!r}")
    print(json.dumps(info, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(sp):
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--csv", help="CSV dataset path (switches data.kind)")
    sp.add_argument("--target", help="target column for CSV data")
    sp.add_argument("--task", choices=[REGRESSION, BINARY_CLASSIFICATION])
    sp.add_argument("--n", type=int, help="synthetic rows")
    sp.add_argument("--d", type=int, help="synthetic features")
    sp.add_argument("--noise-sd", dest="noise_sd", type=float)
    sp.add_argument("--model", choices=["rf", "gbm"])
    sp.add_argument("--n-trees", dest="n_trees", type=int)
    sp.add_argument("--max-depth", dest="max_depth", type=int)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float)
    sp.add_argument("--honest", action="store_const", const=True, default=None)
    sp.add_argument("--p", type=int)
    sp.add_argument("--operator-cap", dest="operator_cap", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--arch", help="WIDTHxDEPTH, e.g. 16x2")
    sp.add_argument("--seeds", help="comma-separated sweep seeds")
    sp.add_argument("--budgets", help="comma-separated byte budgets")
    sp.add_argument("--ratios", help="train,val,test fractions")
    sp.add_argument("--methods", help="comma-separated sweep methods")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="scate",
        description="Distill tree ensembles into compact spectral surrogates.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("pipeline", "sweep", "spectrum", "bench-time"):
        _add_common(sub.add_parser(name))
    gd = sub.add_parser("gen-data")
    _add_common(gd)
    gd.add_argument("path", help="output CSV path")
    im = sub.add_parser("inspect-model")
    im.add_argument("path", help=".scte or .sctf file")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "inspect-model":
            return cmd_inspect_model(args.path)
        cfg = load_config(args)
        if args.command == "pipeline":
            return cmd_pipeline(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        if args.command == "bench-time":
            return cmd_bench_time(cfg)
        if args.command == "gen-data":
            return cmd_gen_data(cfg, args.path)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except ScateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

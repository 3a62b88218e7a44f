"""Command-line entry point.

    multilinop generate --out data --n-fires 60
    multilinop fit --manifest data/manifest.json --out runs/lin --kind linear
    multilinop evaluate --run runs/lin --part test
    multilinop qoi --manifest data/manifest.json --out runs/qoi
    multilinop sweep --manifest data/manifest.json --out runs/sw --axis lambda --grid "[1e2, 1e5]"
    multilinop gp --manifest data/manifest.json --out runs/gp --variant coeffs

Every key of a command's configuration can come from ``--config file.json``
and be overridden by the flag of the same name (``n_fires`` -> ``--n-fires``);
flag values are parsed as JSON when possible. The resolved configuration is
written to ``config.resolved.json`` in the run directory. Timings go to a
separate ``timings.json`` so every other artifact is byte-stable.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import baselines, evalqoi, mlop, reduction, synthfire
from .tensorio import (
    DatasetSplit,
    MatrixFormatError,
    SplitError,
    final_time_columns,
    load_dataset,
    save_dataset,
    split_by_fire,
    write_json,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_SPLIT = {"split_seed": 0, "fractions": [0.45, 0.10, 0.45]}
_BASIS = {"energy": 0.95, "rank": None, "out_rank": None}
_MODEL = {"kind": "linear", "lam": 1e5, "clamp": True}

DEFAULTS = {
    "generate": {"out": None, "n_fires": 60, "seed": 0, "conditions": None, "sampler": {}},
    "fit": {"manifest": None, "out": None, **_SPLIT, **_BASIS, **_MODEL},
    "evaluate": {"run": None, "manifest": None, "out": None, "part": "test", "beta": 0.95,
                 "n_thresholds": None},
    "qoi": {"manifest": None, "out": None, "model": None, **_SPLIT, "part": "test", "energy": 0.95,
            "estimators": list(evalqoi.QOI_ESTIMATORS), "schedule": [0.1, 0.25, 0.5, 1.0],
            "repetitions": 20, "seed": 0},
    "sweep": {"manifest": None, "out": None, "axis": None, "grid": None, **_SPLIT, **_BASIS, **_MODEL,
              "beta": 0.95, "n_thresholds": None, "variant": "coeffs", "subsample": 500, "seed": 0,
              "noise": baselines.MIN_NOISE},
    "gp": {"manifest": None, "out": None, **_SPLIT, "energy": 0.95, "variant": "coeffs", "subsample": 500,
           "grid": None, "seed": 0, "noise": baselines.MIN_NOISE, "beta": 0.95, "part": "test",
           "n_thresholds": None},
}

SWEEP_AXES = ("beta", "energy", "lambda", "gp_lengthscale")
# default GP length-scale grid, in units of the median pairwise training distance
GP_GRID_FACTORS = (0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def resolve_config(command: str, file_config: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the config file, then explicit overrides; validated."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = copy.deepcopy(DEFAULTS[command])
    for source in (file_config or {}, overrides or {}):
        unknown = set(source) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown {command} keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in source.items() if v is not None})
    _validate(command, cfg)
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"missing required setting {k!r}")


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate(command: str, cfg: dict) -> None:
    if command == "evaluate":
        _require(cfg, "run")
    else:
        _require(cfg, "out")
    if command not in ("generate", "evaluate"):
        _require(cfg, "manifest")
    if "fractions" in cfg:
        fr = cfg["fractions"]
        _check(isinstance(fr, list) and len(fr) == 3 and all(isinstance(x, (int, float)) and x > 0 for x in fr)
               and abs(sum(fr) - 1.0) < 1e-9, f"fractions must be three positive numbers summing to 1, got {fr!r}")
    if "energy" in cfg and cfg.get("rank") is None:
        e = cfg["energy"]
        _check(isinstance(e, (int, float)) and 0 < e <= 1, f"energy must lie in (0, 1], got {e!r}")
    for k in ("rank", "out_rank"):
        if cfg.get(k) is not None:
            _check(isinstance(cfg[k], int) and cfg[k] >= 1, f"{k} must be a positive integer")
    if "kind" in cfg:
        _check(cfg["kind"] in ("linear", "quadratic"), f"kind must be linear or quadratic, got {cfg['kind']!r}")
    if "lam" in cfg:
        _check(isinstance(cfg["lam"], (int, float)) and cfg["lam"] >= 0, "lam must be a non-negative number")
    if "beta" in cfg:
        _check(isinstance(cfg["beta"], (int, float)) and 0 < cfg["beta"] < 1, "beta must lie in (0, 1)")
    if "part" in cfg:
        _check(cfg["part"] in ("train", "val", "validation", "test"), f"unknown part {cfg['part']!r}")
    if cfg.get("n_thresholds") is not None:
        _check(isinstance(cfg["n_thresholds"], int) and cfg["n_thresholds"] >= 2, "n_thresholds must be >= 2")
    if "variant" in cfg:
        _check(cfg["variant"] in ("images", "coeffs"), f"variant must be images or coeffs, got {cfg['variant']!r}")
    if "subsample" in cfg:
        _check(isinstance(cfg["subsample"], int) and cfg["subsample"] >= 1, "subsample must be a positive integer")

    if command == "generate":
        _check(isinstance(cfg["n_fires"], int) and cfg["n_fires"] >= 3, "n_fires must be an integer >= 3")
        _check(isinstance(cfg["sampler"], dict), "sampler must be an object")
    elif command == "qoi":
        _check(set(cfg["estimators"]) <= set(evalqoi.QOI_ESTIMATORS) and cfg["estimators"],
               f"estimators must be a non-empty subset of {list(evalqoi.QOI_ESTIMATORS)}")
        sched = cfg["schedule"]
        _check(isinstance(sched, list) and sched and all(isinstance(x, (int, float)) and 0 < x <= 1 for x in sched),
               "schedule must list holdout fractions in (0, 1]")
        _check(isinstance(cfg["repetitions"], int) and cfg["repetitions"] >= 1, "repetitions must be >= 1")
    elif command == "sweep":
        _check(cfg["axis"] in SWEEP_AXES, f"axis must be one of {list(SWEEP_AXES)}, got {cfg['axis']!r}")
        grid = cfg["grid"]
        _check(isinstance(grid, list) and grid and all(isinstance(x, (int, float)) for x in grid),
               "grid must be a non-empty list of numbers")
        in_range = {"beta": lambda v: 0 < v < 1, "energy": lambda v: 0 < v <= 1,
                 "lambda": lambda v: v >= 0, "gp_lengthscale": lambda v: v > 0}[cfg["axis"]]
        _check(all(in_range(v) for v in grid), f"grid values out of range for axis {cfg['axis']!r}")
    if command == "gp" and cfg["grid"] is not None:
        _check(isinstance(cfg["grid"], list) and cfg["grid"] and all(isinstance(x, (int, float)) and x > 0
                                                                   for x in cfg["grid"]),
               "grid must be a non-empty list of positive length scales")


def _start_run(command: str, cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.resolved.json", {"command": command, **cfg})
    return out


class _Timer:
    """Accumulates wall time per named phase."""

    def __init__(self):
        self.phases: dict[str, float] = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0


# --------------------------------------------------------------------------
# shared pipeline pieces
# --------------------------------------------------------------------------

def _load(manifest):
    try:
        return load_dataset(manifest)
    except (OSError, KeyError, json.JSONDecodeError, MatrixFormatError) as exc:
        raise ConfigError(f"cannot load dataset {manifest}: {exc}") from exc


def _split(inputs, cfg) -> DatasetSplit:
    try:
        return split_by_fire(inputs.labels, tuple(cfg["fractions"]), seed=cfg["split_seed"])
    except SplitError as exc:
        raise ConfigError(str(exc)) from exc


def fit_bases(inputs, outputs, train, energy=0.95, rank=None, out_rank=None):
    """Input and output bases on the training columns only."""
    f, g = inputs.data[:, train], outputs.data[:, train]
    if rank is not None:
        return reduction.fit_basis(f, rank=rank), reduction.fit_basis(g, rank=out_rank or rank)
    return reduction.fit_basis(f, energy=energy), reduction.fit_basis(g, energy=energy)


def fit_operator(b_in, b_out, kind="linear", lam=1e5, clamp=True):
    if kind == "linear":
        return mlop.fit_linear_closed_form(b_in, b_out, clamp)
    return mlop.fit_quadratic(b_in, b_out, lam, clamp)


def _part(split: DatasetSplit, name: str) -> np.ndarray:
    cols = split.part(name)
    if cols.size == 0:
        raise ConfigError(f"split part {name!r} is empty")
    return cols


def _column_errors(pred, truth):
    errs = []
    for j in range(truth.shape[1]):
        den = np.linalg.norm(truth[:, j])
        errs.append(float(np.linalg.norm(pred[:, j] - truth[:, j]) / den) if den > 0 else float("nan"))
    return errs


def _write_reports(out: Path, labels, pred, truth, tau: float, extra: dict, n_thresholds=None) -> dict:
    report = evalqoi.classification_report(pred, truth, tau, n_thresholds)
    evalqoi.write_report_csv(out / "report.csv", labels, report, _column_errors(pred, truth))
    evalqoi.write_roc_csv(out / "roc.csv", labels, report)
    summary = {
        **extra,
        "tau": tau,
        "auc": report.auc,
        "iou_at_best": report.iou_at_best,
        "best_threshold": report.best_threshold,
        "rel_err": evalqoi.relative_frobenius_error(pred, truth),
        **report.summary(),
    }
    write_json(out / "report.json", summary)
    return summary


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_generate(cfg: dict) -> dict:
    """Simulate a synthetic fire/smoke corpus and write it as a dataset."""
    try:
        sampler = synthfire.SamplerConfig.from_dict(cfg["sampler"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sampler settings: {exc}") from exc
    out = _start_run("generate", cfg)
    timer = _Timer()
    with timer("simulate"):
        inputs, outputs, extra = synthfire.generate_dataset(cfg["n_fires"], sampler, cfg["seed"], cfg["conditions"])
    manifest = save_dataset(out, inputs, outputs, extra)
    write_json(out / "timings.json", timer.phases)
    return {"manifest": str(manifest), "n_snapshots": inputs.n_snapshots}


def cmd_fit(cfg: dict) -> dict:
    """Split by fire, build training bases and fit a linear or quadratic operator."""
    inputs, outputs = _load(cfg["manifest"])
    split = _split(inputs, cfg)
    out = _start_run("fit", cfg)
    write_json(out / "split.json", split.to_dict())
    timer = _Timer()
    train = split.train
    with timer("encoding"):
        b_in, b_out = fit_bases(inputs, outputs, train, cfg["energy"], cfg["rank"], cfg["out_rank"])
    with timer("training"):
        model = fit_operator(b_in, b_out, cfg["kind"], cfg["lam"], cfg["clamp"])
    mlop.save_model(model, out / "model")
    g_train = outputs.data[:, train]
    metrics = {
        "kind": model.kind,
        "lambda": float(model.lam),
        "r": b_in.rank,
        "r_out": b_out.rank,
        "n_train": int(train.size),
        "coefficient_train_error": mlop.training_error(model),
        "train_rel_err": evalqoi.relative_frobenius_error(mlop.predict(model, inputs.data[:, train]), g_train),
        "input_projection_error": reduction.projection_error(b_in, inputs.data[:, train]),
        "output_projection_error": reduction.projection_error(b_out, g_train),
        "theta_norm": float(np.linalg.norm(model.theta)),
    }
    write_json(out / "metrics.json", metrics)
    write_json(out / "timings.json", timer.phases)
    return metrics


def cmd_evaluate(cfg: dict) -> dict:
    """Score a fitted run on one split part with tau taken from validation outputs."""
    run = Path(cfg["run"])
    try:
        fit_cfg = json.loads((run / "config.resolved.json").read_text())
        split = DatasetSplit.from_dict(json.loads((run / "split.json").read_text()))
        model = mlop.load_model(run / "model")
    except (OSError, KeyError, json.JSONDecodeError, MatrixFormatError) as exc:
        raise ConfigError(f"cannot load fitted run {run}: {exc}") from exc
    if cfg["manifest"] is None:
        cfg["manifest"] = fit_cfg.get("manifest")
    if cfg["out"] is None:
        cfg["out"] = str(run / f"eval-{cfg['part']}")
    inputs, outputs = _load(cfg["manifest"])
    cols = _part(split, cfg["part"])
    val = _part(split, "val")
    out = _start_run("evaluate", cfg)
    timer = _Timer()
    tau = evalqoi.smoke_threshold(outputs.data[:, val], cfg["beta"])
    with timer("prediction"):
        pred = mlop.predict(model, inputs.data[:, cols])
    with timer("scoring"):
        summary = _write_reports(out, [inputs.labels[j] for j in cols], pred, outputs.data[:, cols], tau,
                                 {"part": cfg["part"], "beta": cfg["beta"], "kind": model.kind,
                                  "r": model.input_basis.rank, "r_out": model.output_basis.rank},
                                 cfg["n_thresholds"])
    timer.phases["prediction_per_input"] = timer.phases["prediction"] / cols.size
    write_json(out / "timings.json", timer.phases)
    return summary


def qoi_setup(inputs, outputs, split: DatasetSplit, part="test", energy=0.95):
    """Final-time training/holdout columns, a log-smoke basis and a log-smoke surrogate."""
    final = set(final_time_columns(inputs.labels).tolist())
    train = np.array([j for j in split.train if j in final], dtype=np.intp)
    hold = np.array([j for j in split.part(part) if j in final], dtype=np.intp)
    if train.size < 2 or hold.size < 1:
        raise ConfigError("not enough final-time snapshots for the QoI study")
    log_train = np.log1p(outputs.data[:, train])
    qoi_basis = reduction.fit_basis(log_train, energy=energy)
    in_basis = reduction.fit_basis(inputs.data[:, train], energy=energy)
    model = mlop.fit_linear_closed_form(in_basis, qoi_basis)
    return train, hold, qoi_basis, model


def _schedule_counts(schedule, n_hold):
    return [max(1, min(n_hold, int(round(x * n_hold)))) for x in schedule]


def cmd_qoi(cfg: dict) -> dict:
    """Convergence of the AOD-proxy estimators against the all-holdout reference."""
    inputs, outputs = _load(cfg["manifest"])
    split = _split(inputs, cfg)
    out = _start_run("qoi", cfg)
    timer = _Timer()
    with timer("training"):
        train, hold, qoi_basis, model = qoi_setup(inputs, outputs, split, cfg["part"], cfg["energy"])
    if cfg["model"] is not None:
        try:
            fitted = mlop.load_model(Path(cfg["model"]) / "model")
        except (OSError, KeyError, MatrixFormatError) as exc:
            raise ConfigError(f"cannot load model {cfg['model']}: {exc}") from exc

        def model(block, _m=fitted):
            # the fitted operator predicts smoke, the estimator averages log smoke
            return np.log1p(np.maximum(mlop.predict(_m, block), 0.0))

    counts = _schedule_counts(cfg["schedule"], hold.size)
    with timer("estimation"):
        errs = evalqoi.qoi_convergence(inputs.data[:, hold], outputs.data[:, hold], counts, cfg["repetitions"],
                                       cfg["seed"], cfg["estimators"], qoi_basis, model)
    rows = []
    with open(out / "qoi.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "fraction", "m_prime", "median", "q25", "q75"])
        for name in cfg["estimators"]:
            for frac, mp, e in zip(cfg["schedule"], counts, errs[name]):
                row = [name, frac, mp, float(np.median(e)), float(np.quantile(e, 0.25)), float(np.quantile(e, 0.75))]
                rows.append(row)
                w.writerow([row[0], repr(float(frac)), mp] + [repr(v) for v in row[3:]])
    with open(out / "qoi_samples.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "m_prime", "repetition", "rel_err"])
        for name in cfg["estimators"]:
            for mp, e in zip(counts, errs[name]):
                for rep, v in enumerate(e):
                    w.writerow([name, mp, rep, repr(float(v))])
    summary = {
        "n_train": int(train.size),
        "n_holdout": int(hold.size),
        "r_qoi": qoi_basis.rank,
        "medians": {name: [r[3] for r in rows if r[0] == name] for name in cfg["estimators"]},
        "m_prime": counts,
    }
    write_json(out / "report.json", summary)
    write_json(out / "timings.json", timer.phases)
    return summary


def _gp_data(inputs, outputs, cols, variant, b_in=None, b_out=None):
    f, g = inputs.data[:, cols], outputs.data[:, cols]
    if variant == "coeffs":
        return reduction.encode(b_in, f), reduction.encode(b_out, g)
    return f, g


def _gp_fields(model, x, variant, b_out=None):
    y = baselines.gp_predict(model, x)
    if variant == "coeffs":
        y = reduction.decode(b_out, y)
    return np.maximum(y, 0.0)


def _gp_subsample(train, n, seed):
    rng = np.random.default_rng(seed)
    if n >= train.size:
        return train
    return np.sort(rng.choice(train, size=n, replace=False))


def cmd_gp(cfg: dict) -> dict:
    """Gaussian-process baseline on images or POD coefficients."""
    inputs, outputs = _load(cfg["manifest"])
    split = _split(inputs, cfg)
    cols = _part(split, cfg["part"])
    val = _part(split, "val")
    out = _start_run("gp", cfg)
    write_json(out / "split.json", split.to_dict())
    timer = _Timer()
    variant = cfg["variant"]
    b_in = b_out = None
    with timer("encoding"):
        if variant == "coeffs":
            b_in, b_out = fit_bases(inputs, outputs, split.train, cfg["energy"])
        sub = _gp_subsample(split.train, cfg["subsample"], cfg["seed"])
        x, y = _gp_data(inputs, outputs, sub, variant, b_in, b_out)
        x_val, _ = _gp_data(inputs, outputs, val, variant, b_in, b_out)
    grid = cfg["grid"] or [f * baselines.median_distance(x) for f in GP_GRID_FACTORS]
    g_val = outputs.data[:, val]

    def val_error(m):
        return evalqoi.relative_frobenius_error(_gp_fields(m, x_val, variant, b_out), g_val)

    with timer("tuning"):
        if len(grid) == 1:
            best, errors = float(grid[0]), [float("nan")]
        else:
            best, errors = baselines.tune_length_scale(x, y, grid, None, None, cfg["noise"], error_fn=val_error)
    with timer("training"):
        model = baselines.gp_fit(x, y, best, cfg["noise"], variant)
    baselines.save_gp(model, out / "gp")
    if variant == "coeffs":
        reduction.save_basis(b_in, out / "gp" / "input_basis")
        reduction.save_basis(b_out, out / "gp" / "output_basis")
    with open(out / "tuning.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["length_scale", "val_rel_err"])
        for ell, e in zip(grid, errors):
            w.writerow([repr(float(ell)), repr(float(e))])
    tau = evalqoi.smoke_threshold(g_val, cfg["beta"])
    with timer("prediction"):
        xq, _ = _gp_data(inputs, outputs, cols, variant, b_in, b_out)
        pred = _gp_fields(model, xq, variant, b_out)
    summary = _write_reports(out, [inputs.labels[j] for j in cols], pred, outputs.data[:, cols], tau,
                             {"part": cfg["part"], "beta": cfg["beta"], "variant": variant,
                              "length_scale": best, "noise": model.noise, "n_train": int(sub.size)},
                             cfg["n_thresholds"])
    write_json(out / "timings.json", timer.phases)
    return summary


SWEEP_COLUMNS = ["axis", "value", "tau", "r", "r_out", "theta_norm", "auc_median", "iou_median", "rel_err"]


def sweep_rows(inputs, outputs, split: DatasetSplit, cfg: dict) -> list[dict]:
    """One row per grid value, every model scored on the validation part."""
    axis, grid = cfg["axis"], cfg["grid"]
    train, val = split.train, _part(split, "val")
    g_val = outputs.data[:, val]
    f_val = inputs.data[:, val]
    tau = evalqoi.smoke_threshold(g_val, cfg["beta"])
    rows = []

    def score(pred, tau_, value, r, r_out, theta_norm):
        rep = evalqoi.classification_report(pred, g_val, tau_, cfg["n_thresholds"])
        rows.append({"axis": axis, "value": float(value), "tau": tau_, "r": r, "r_out": r_out,
                     "theta_norm": theta_norm, "auc_median": rep.auc, "iou_median": rep.iou_at_best,
                     "rel_err": evalqoi.relative_frobenius_error(pred, g_val)})

    if axis == "gp_lengthscale":
        b_in, b_out = fit_bases(inputs, outputs, train, cfg["energy"], cfg["rank"], cfg["out_rank"])
        sub = _gp_subsample(train, cfg["subsample"], cfg["seed"])
        x, y = _gp_data(inputs, outputs, sub, cfg["variant"], b_in, b_out)
        x_val, _ = _gp_data(inputs, outputs, val, cfg["variant"], b_in, b_out)
        for ell in grid:
            model = baselines.gp_fit(x, y, ell, cfg["noise"], cfg["variant"])
            score(_gp_fields(model, x_val, cfg["variant"], b_out), tau, ell,
                  b_in.rank, b_out.rank, float(np.linalg.norm(model.alpha)))
        return rows

    if axis == "energy":
        for e in grid:
            b_in, b_out = fit_bases(inputs, outputs, train, e)
            model = fit_operator(b_in, b_out, cfg["kind"], cfg["lam"], cfg["clamp"])
            score(mlop.predict(model, f_val), tau, e, b_in.rank, b_out.rank, float(np.linalg.norm(model.theta)))
        return rows

    b_in, b_out = fit_bases(inputs, outputs, train, cfg["energy"], cfg["rank"], cfg["out_rank"])
    if axis == "lambda":
        for lam in grid:
            model = fit_operator(b_in, b_out, "quadratic", lam, cfg["clamp"])
            score(mlop.predict(model, f_val), tau, lam, b_in.rank, b_out.rank, float(np.linalg.norm(model.theta)))
        return rows

    model = fit_operator(b_in, b_out, cfg["kind"], cfg["lam"], cfg["clamp"])
    pred = mlop.predict(model, f_val)
    for beta in grid:
        score(pred, evalqoi.smoke_threshold(g_val, beta), beta, b_in.rank, b_out.rank,
              float(np.linalg.norm(model.theta)))
    return rows


def cmd_sweep(cfg: dict) -> dict:
    """Refit or rescore on the validation part for every value of one hyperparameter."""
    inputs, outputs = _load(cfg["manifest"])
    split = _split(inputs, cfg)
    out = _start_run("sweep", cfg)
    timer = _Timer()
    with timer("tuning"):
        rows = sweep_rows(inputs, outputs, split, cfg)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([row[k] if isinstance(row[k], str) else repr(row[k]) for k in SWEEP_COLUMNS])
    write_json(out / "timings.json", timer.phases)
    return {"n_rows": len(rows)}


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "qoi": cmd_qoi,
    "sweep": cmd_sweep,
    "gp": cmd_gp,
}


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _flag_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multilinop", description="Multilinear operator surrogates for fire smoke")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        p = sub.add_parser(name, help=(COMMANDS[name].__doc__ or name).strip().split("\n")[0])
        p.add_argument("--config", help="JSON file with settings for this command")
        for key in defaults:
            p.add_argument("--" + key.replace("_", "-"), dest=key, type=_flag_value, default=None,
                           help=f"(default: {json.dumps(defaults[key])})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    try:
        file_cfg = {}
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        cfg = resolve_config(args.command, file_cfg, overrides)
        result = COMMANDS[args.command](cfg)
    except (np.linalg.LinAlgError, reduction.RankError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Gaussian-process regression baseline (posterior mean only).

Uses the squared-exponential kernel ``k(a, b) = exp(-|a - b|^2 / (2 l^2))``
with a zero prior mean. All outputs share one kernel matrix, so a single
Cholesky factorization serves every output dimension.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .tensorio import read_matrix, write_json, write_matrix

MIN_NOISE = 1e-10
MAX_NOISE = 1e-4


@dataclass(frozen=True)
class GpModel:
    train_inputs: np.ndarray  # (D_in, M)
    alpha: np.ndarray         # (M, D_out)
    length_scale: float
    noise: float
    variant: str = "coeffs"


def kernel(a, b, length_scale: float) -> float:
    if length_scale <= 0:
        raise ValueError(f"length scale must be positive, got {length_scale}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.exp(-np.sum((a - b) ** 2) / (2.0 * length_scale**2)))


def kernel_matrix(xa, xb, length_scale: float) -> np.ndarray:
    """Kernel between the columns of ``xa`` (``D x Ma``) and ``xb`` (``D x Mb``)."""
    if length_scale <= 0:
        raise ValueError(f"length scale must be positive, got {length_scale}")
    d2 = cdist(np.asarray(xa, dtype=np.float64).T, np.asarray(xb, dtype=np.float64).T, "sqeuclidean")
    return np.exp(-d2 / (2.0 * length_scale**2))


def gp_fit(x, y, length_scale: float, noise: float = MIN_NOISE, variant: str = "coeffs") -> GpModel:
    """Solve ``(K + noise I) alpha = Y^T``.

    The noise is raised to at least ``1e-10`` and multiplied by ten on every
    failed factorization, up to ``1e-4``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1] or x.shape[1] < 1:
        raise ValueError(f"need D_in x M inputs and D_out x M targets, got {x.shape} and {y.shape}")
    k = kernel_matrix(x, x, length_scale)
    jitter = max(float(noise), MIN_NOISE)
    while True:
        kn = k.copy()
        kn[np.diag_indices_from(kn)] += jitter
        try:
            factor = scipy.linalg.cho_factor(kn, lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            if jitter >= MAX_NOISE:
                raise
            jitter = min(jitter * 10.0, MAX_NOISE)
    alpha = scipy.linalg.cho_solve(factor, y.T, check_finite=False)
    return GpModel(x.copy(), alpha, float(length_scale), jitter, variant)


def gp_predict(model: GpModel, x_query) -> np.ndarray:
    xq = np.asarray(x_query, dtype=np.float64)
    if xq.ndim == 1:
        xq = xq[:, None]
    if xq.shape[0] != model.train_inputs.shape[0]:
        raise ValueError(f"query dimension {xq.shape[0]} != training dimension {model.train_inputs.shape[0]}")
    return (kernel_matrix(xq, model.train_inputs, model.length_scale) @ model.alpha).T


def _rel_err(pred, truth) -> float:
    den = np.linalg.norm(truth)
    return float(np.linalg.norm(pred - truth) / den) if den > 0 else float(np.linalg.norm(pred))


def tune_length_scale(x, y, grid, x_val, y_val, noise: float = MIN_NOISE, error_fn=None):
    """Grid search for the length scale with the lowest validation error.

    Returns ``(best_length_scale, errors)`` where ``errors`` lists the
    validation error for every grid value in order. Ties go to the smaller
    length scale.

    *error_fn(model)* may replace the default error, which is the relative
    Frobenius error of ``gp_predict(model, x_val)`` against ``y_val``.
    """
    grid = [float(g) for g in grid]
    if not grid or any(g <= 0 for g in grid):
        raise ValueError("length-scale grid must be non-empty and positive")
    errors = []
    for ell in grid:
        model = gp_fit(x, y, ell, noise)
        errors.append(error_fn(model) if error_fn else _rel_err(gp_predict(model, x_val), y_val))
    best = min(range(len(grid)), key=lambda i: (errors[i], grid[i]))
    return grid[best], errors


def median_distance(x) -> float:
    """Median pairwise distance between the columns of *x*; a default length-scale unit."""
    d = cdist(np.asarray(x).T, np.asarray(x).T)
    iu = np.triu_indices(d.shape[0], k=1)
    vals = d[iu]
    vals = vals[vals > 0]
    return float(np.median(vals)) if vals.size else 1.0


def save_gp(model: GpModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(model.train_inputs, directory / "train_inputs.mlop")
    write_matrix(model.alpha, directory / "alpha.mlop")
    write_json(directory / "gp.json", {
        "length_scale": model.length_scale,
        "noise": model.noise,
        "variant": model.variant,
    })


def load_gp(directory) -> GpModel:
    directory = Path(directory)
    meta = json.loads((directory / "gp.json").read_text())
    return GpModel(
        read_matrix(directory / "train_inputs.mlop"),
        read_matrix(directory / "alpha.mlop"),
        meta["length_scale"],
        meta["noise"],
        meta["variant"],
    )

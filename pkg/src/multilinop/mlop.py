"""Linear and quadratic multilinear operators between POD coefficient spaces.

The linear operator uses the closed form

    theta = Sigma_out V_out^T V_in Sigma_in^{-1},

valid when both bases were fit on the same training columns in the same order.
:func:`fit_linear_gram` builds and solves the sample Gram system explicitly and
is kept as an independent check of that formula.

The quadratic operator maps the features ``[a_1..a_r | a_k a_l (k <= l)]`` of
the input coefficients to output coefficients through the Tikhonov system

    (F^T F + lam I) theta^T = F^T V_out Sigma_out.

No constant feature is used: an empty input maps to the output mean.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import scipy.linalg

from .reduction import ReducedBasis, decode, encode, load_basis, save_basis
from .tensorio import read_matrix, write_json, write_matrix

COND_LIMIT = 1e12


class SingularSystemError(np.linalg.LinAlgError):
    """The normal equations are singular or too ill-conditioned to trust."""


@dataclass(frozen=True)
class GramSystem:
    G: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class LinearOperatorModel:
    theta: np.ndarray                     # (r_out, r_in)
    input_basis: ReducedBasis | None
    output_basis: ReducedBasis | None
    clamp_nonneg: bool = True

    kind = "linear"

    @property
    def lam(self) -> float:
        return 0.0


@dataclass(frozen=True)
class QuadraticOperatorModel:
    theta: np.ndarray                     # (r_out, r + r(r+1)/2)
    lam: float
    input_basis: ReducedBasis
    output_basis: ReducedBasis
    clamp_nonneg: bool = True

    kind = "quadratic"


OperatorModel = Union[LinearOperatorModel, QuadraticOperatorModel]


def quadratic_feature_count(r: int) -> int:
    return r + r * (r + 1) // 2


def _check_aligned(input_basis: ReducedBasis, output_basis: ReducedBasis):
    if input_basis.n_snapshots != output_basis.n_snapshots:
        raise ValueError(
            f"bases were fit on different training sets ({input_basis.n_snapshots} vs "
            f"{output_basis.n_snapshots} snapshots)"
        )
    for name, b in (("input", input_basis), ("output", output_basis)):
        if not np.all(b.sing_vals > 0):
            raise ValueError(f"{name} basis has a zero singular value")


def fit_linear_closed_form(input_basis: ReducedBasis, output_basis: ReducedBasis, clamp_nonneg: bool = True) -> LinearOperatorModel:
    _check_aligned(input_basis, output_basis)
    # diagonal scalings applied as broadcasts: O(M r r_out) for the one dense product
    cross = output_basis.right_factors.T @ input_basis.right_factors
    theta = output_basis.sing_vals[:, None] * cross / input_basis.sing_vals[None, :]
    return LinearOperatorModel(theta, input_basis, output_basis, clamp_nonneg)


def gram_system(input_coeffs, output_coeffs) -> GramSystem:
    """Sample Gram matrix and right-hand side of the linear operator fit.

    With ``a^(m)`` the columns of *input_coeffs* (``r x M``) and ``b^(m)`` those
    of *output_coeffs* (``r_out x M``)::

        G[j, l] = (1/M) sum_m a_j^(m) a_l^(m)
        y[i, j] = (1/M) sum_m b_i^(m) a_j^(m)

    The rank-one operators ``phi_i <u_j, .>`` have orthonormal output factors,
    so the full ``(r r_out)``-square Gram matrix is ``I kron G`` and only ``G``
    needs to be stored.
    """
    a = np.asarray(input_coeffs, dtype=np.float64)
    b = np.asarray(output_coeffs, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"coefficient matrices must share M columns, got {a.shape} and {b.shape}")
    m = a.shape[1]
    g = np.zeros((a.shape[0], a.shape[0]))
    y = np.zeros((b.shape[0], a.shape[0]))
    for k in range(m):
        g += np.outer(a[:, k], a[:, k])
        y += np.outer(b[:, k], a[:, k])
    return GramSystem(g / m, y / m)


def fit_linear_gram(input_coeffs, output_coeffs, input_basis=None, output_basis=None, clamp_nonneg: bool = True) -> LinearOperatorModel:
    a = np.asarray(input_coeffs, dtype=np.float64)
    if a.shape[1] < a.shape[0]:
        raise SingularSystemError(f"need M >= r, got M={a.shape[1]}, r={a.shape[0]}")
    sys = gram_system(a, output_coeffs)
    cond = np.linalg.cond(sys.G)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularSystemError(f"Gram matrix condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
    # theta G = y with G symmetric  <=>  G theta^T = y^T
    theta = np.linalg.solve(sys.G, sys.y.T).T
    return LinearOperatorModel(theta, input_basis, output_basis, clamp_nonneg)


def build_interaction_matrix(a) -> np.ndarray:
    """Linear and pairwise-product features of the rows of *a* (``M x r``).

    Column order: ``a_1..a_r`` then ``a_k * a_l`` for ``k <= l`` in
    lexicographic order ``(1,1), (1,2), ..., (1,r), (2,2), ..., (r,r)``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    r = a.shape[1]
    if r < 1:
        raise ValueError("need at least one coefficient")
    k, l = np.triu_indices(r)
    return np.hstack([a, a[:, k] * a[:, l]])


def solve_tikhonov(features, targets, lam: float) -> np.ndarray:
    """Return ``theta`` (``r_out x P``) with ``(F^T F + lam I) theta^T = F^T targets``.

    *features* is ``M x P`` and *targets* ``M x r_out``. For ``lam > 0`` the
    system is SPD and solved by Cholesky (on the ``M x M`` dual system when
    there are fewer samples than features). At ``lam == 0`` a rank-revealing
    least-squares solve is used, refusing systems whose normal matrix has
    condition number above ``1e12``.
    """
    f = np.asarray(features, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    n_samples, n_feat = f.shape
    if lam > 0 and n_samples < n_feat:
        # push-through identity: (F^T F + lam I)^-1 F^T = F^T (F F^T + lam I)^-1, an M x M solve
        lhs = f @ f.T
        lhs[np.diag_indices_from(lhs)] += lam
        try:
            factor = scipy.linalg.cho_factor(lhs, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            u, s, vt = np.linalg.svd(f, full_matrices=False)
            return (vt.T @ ((s / (s**2 + lam))[:, None] * (u.T @ t))).T
        return (f.T @ scipy.linalg.cho_solve(factor, t, check_finite=False)).T
    if lam > 0:
        lhs = f.T @ f
        lhs[np.diag_indices_from(lhs)] += lam
        try:
            factor = scipy.linalg.cho_factor(lhs, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            # lam tiny next to ||F||^2: Cholesky breaks down in floating point, the SVD form does not
            u, s, vt = np.linalg.svd(f, full_matrices=False)
            return (vt.T @ ((s / (s**2 + lam))[:, None] * (u.T @ t))).T
        return scipy.linalg.cho_solve(factor, f.T @ t, check_finite=False).T
    if n_samples < n_feat:
        raise SingularSystemError(
            f"unregularised system is singular: {n_samples} samples for {n_feat} features"
        )
    sol, _, rank, sv = np.linalg.lstsq(f, t, rcond=None)
    if rank < n_feat or sv[-1] == 0 or (sv[0] / sv[-1]) ** 2 >= COND_LIMIT:
        cond = np.inf if sv[-1] == 0 else (sv[0] / sv[-1]) ** 2
        raise SingularSystemError(f"normal matrix condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
    return sol.T


def fit_quadratic(input_basis: ReducedBasis, output_basis: ReducedBasis, lam: float = 0.0, clamp_nonneg: bool = True) -> QuadraticOperatorModel:
    _check_aligned(input_basis, output_basis)
    feats = build_interaction_matrix(input_basis.coefficients())
    theta = solve_tikhonov(feats, output_basis.coefficients(), lam)
    return QuadraticOperatorModel(theta, float(lam), input_basis, output_basis, clamp_nonneg)


def features(model: OperatorModel, coeffs) -> np.ndarray:
    """Feature matrix (``P x K``) for input coefficients (``r x K``)."""
    if isinstance(model, QuadraticOperatorModel):
        return build_interaction_matrix(np.asarray(coeffs).T).T
    return np.asarray(coeffs)


def predict_coefficients(model: OperatorModel, input_coeffs) -> np.ndarray:
    return model.theta @ features(model, input_coeffs)


def predict(model: OperatorModel, fields) -> np.ndarray:
    """Encode, map, decode, and optionally clamp at zero (in field space)."""
    if model.input_basis is None or model.output_basis is None:
        raise ValueError("model has no bases attached; use predict_coefficients")
    fields = np.asarray(fields, dtype=np.float64)
    vec = fields.ndim == 1
    if vec:
        fields = fields[:, None]
    out = decode(model.output_basis, predict_coefficients(model, encode(model.input_basis, fields)))
    if model.clamp_nonneg:
        np.maximum(out, 0.0, out=out)
    return out[:, 0] if vec else out


def training_error(model: OperatorModel) -> float:
    """Relative Frobenius error of the fitted map on its own (centred) training coefficients."""
    b_in, b_out = model.input_basis, model.output_basis
    pred = predict_coefficients(model, b_in.coefficients().T)
    truth = b_out.coefficients().T
    return float(np.linalg.norm(pred - truth) / np.linalg.norm(truth))


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def save_model(model: OperatorModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(model.theta, directory / "theta.mlop")
    save_basis(model.input_basis, directory / "input_basis")
    save_basis(model.output_basis, directory / "output_basis")
    write_json(directory / "model.json", {
        "kind": model.kind,
        "r": int(model.input_basis.rank),
        "r_out": int(model.output_basis.rank),
        "lambda": float(model.lam),
        "clamp_nonneg": bool(model.clamp_nonneg),
        "theta": "theta.mlop",
        "input_basis": "input_basis",
        "output_basis": "output_basis",
    })


def load_model(directory) -> OperatorModel:
    directory = Path(directory)
    meta = json.loads((directory / "model.json").read_text())
    theta = read_matrix(directory / meta["theta"])
    b_in = load_basis(directory / meta["input_basis"])
    b_out = load_basis(directory / meta["output_basis"])
    if meta["kind"] == "linear":
        return LinearOperatorModel(theta, b_in, b_out, meta["clamp_nonneg"])
    if meta["kind"] == "quadratic":
        return QuadraticOperatorModel(theta, meta["lambda"], b_in, b_out, meta["clamp_nonneg"])
    raise ValueError(f"unknown model kind {meta['kind']!r}")

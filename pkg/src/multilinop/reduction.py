"""POD / PCA bases from snapshot matrices.

A :class:`ReducedBasis` stores the snapshot mean, the leading left singular
vectors of the mean-centred snapshots and the matching singular values and
right factors. The right factors are what the linear operator fit consumes,
so a basis always remembers which training columns produced it.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensorio import read_matrix, write_json, write_matrix

# below this ratio sigma_r / sigma_1 the eigen-route singular values lose digits
_GRAM_ROUTE_MIN_RATIO = 1e-6
_RANK_TOL = 1e-12


class RankError(ValueError):
    """Requested truncation rank exceeds the numerical rank."""


@dataclass(frozen=True)
class ReducedBasis:
    mean: np.ndarray            # (N,)
    modes: np.ndarray           # (N, r), orthonormal columns
    sing_vals: np.ndarray       # (r,)
    right_factors: np.ndarray   # (M, r), orthonormal columns
    full_sing_vals: np.ndarray  # (min(N, M),)

    @property
    def rank(self) -> int:
        return self.modes.shape[1]

    @property
    def n_points(self) -> int:
        return self.modes.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.right_factors.shape[0]

    def coefficients(self) -> np.ndarray:
        """Training coefficients ``V_r Sigma_r`` as an ``(M, r)`` array."""
        return self.right_factors * self.sing_vals


def mean_center(m):
    """Subtract the row means. Returns ``(centered, mean)``."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] < 1:
        raise ValueError(f"expected an N x M matrix with M >= 1, got shape {m.shape}")
    mean = m.mean(axis=1)
    return m - mean[:, None], mean


def _fix_signs(u, v):
    # largest-magnitude entry of each mode made non-negative; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def _svd_direct(m):
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, vt.T


def _svd_gram(m, r):
    # eigen-decomposition of the M x M Gram matrix; only used when N >> M
    w, v = np.linalg.eigh(m.T @ m)
    w = w[::-1]
    v = v[:, ::-1]
    # eigenvalues below the rounding floor of m^T m carry no information; sqrt would inflate them to ~1e-8 s_0
    w = np.where(w > w.size * np.finfo(float).eps * w[0], w, 0.0)
    s = np.sqrt(w)
    if s[0] == 0.0 or s[r - 1] < _GRAM_ROUTE_MIN_RATIO * s[0]:
        return None
    u = (m @ v[:, :r]) / s[:r]
    # one QR pass restores orthonormality lost to rounding in the division above
    q, rr = np.linalg.qr(u)
    q = q * np.sign(np.diag(rr))
    return q, s, v


def truncated_svd(m, r: int, mean=None) -> ReducedBasis:
    """Rank-``r`` truncated SVD of an already-centred ``N x M`` matrix.

    Parameters
    ----------
    m : array_like, shape (N, M)
        Mean-centred snapshots.
    r : int
        Number of modes to keep.
    mean : array_like, optional
        Mean to store with the basis (zeros if omitted).

    Raises
    ------
    RankError
        If ``r`` is outside ``[1, min(N, M)]`` or ``sigma_r < 1e-12 sigma_1``.
    """
    m = np.asarray(m, dtype=np.float64)
    n_rows, n_cols = m.shape
    r = int(r)
    if not 1 <= r <= min(n_rows, n_cols):
        raise RankError(f"rank {r} outside [1, {min(n_rows, n_cols)}]")

    res = _svd_gram(m, r) if n_cols < n_rows / 4 else None
    if res is None:
        u, s, v = _svd_direct(m)
    else:
        u, s, v = res
    s = s[: min(n_rows, n_cols)]
    if s[0] <= 0 or s[r - 1] < _RANK_TOL * s[0]:
        raise RankError(f"rank {r} exceeds the numerical rank (sigma_r={s[r - 1]:.3e}, sigma_1={s[0]:.3e})")

    u_r, v_r = _fix_signs(u[:, :r], v[:, :r])
    if mean is None:
        mean = np.zeros(n_rows)
    return ReducedBasis(
        mean=np.asarray(mean, dtype=np.float64).copy(),
        modes=np.ascontiguousarray(u_r),
        sing_vals=s[:r].copy(),
        right_factors=np.ascontiguousarray(v_r),
        full_sing_vals=s.copy(),
    )


def choose_rank(sing_vals, fraction: float) -> int:
    """Smallest ``r`` whose leading singular values hold *fraction* of their sum."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    s = np.asarray(sing_vals, dtype=np.float64)
    if s.size == 0 or not np.any(s > 0):
        raise ValueError("need at least one positive singular value")
    csum = np.cumsum(s)
    ratio = csum / csum[-1]
    return int(np.searchsorted(ratio, fraction, side="left")) + 1


def numerical_rank(sing_vals) -> int:
    s = np.asarray(sing_vals)
    return int(np.count_nonzero(s >= _RANK_TOL * s[0])) if s.size and s[0] > 0 else 0


def fit_basis(snapshots, rank: int | None = None, energy: float | None = None, max_rank: int | None = None) -> ReducedBasis:
    """Centre *snapshots* and keep either *rank* modes or enough for *energy*.

    The energy criterion is applied to cumulative singular values, then capped
    at the numerical rank (and at *max_rank* when given).
    """
    if (rank is None) == (energy is None):
        raise ValueError("give exactly one of rank or energy")
    centered, mean = mean_center(snapshots)
    if rank is None:
        s = np.linalg.svd(centered, compute_uv=False)
        rank = min(choose_rank(s, energy), numerical_rank(s))
        if max_rank is not None:
            rank = min(rank, max_rank)
    return truncated_svd(centered, rank, mean=mean)


def _check_points(b: ReducedBasis, n: int):
    if n != b.n_points:
        raise ValueError(f"field length {n} does not match basis length {b.n_points}")


def encode(b: ReducedBasis, fields) -> np.ndarray:
    fields = np.asarray(fields, dtype=np.float64)
    vec = fields.ndim == 1
    if vec:
        fields = fields[:, None]
    _check_points(b, fields.shape[0])
    out = b.modes.T @ (fields - b.mean[:, None])
    return out[:, 0] if vec else out


def decode(b: ReducedBasis, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    vec = coeffs.ndim == 1
    if vec:
        coeffs = coeffs[:, None]
    if coeffs.shape[0] != b.rank:
        raise ValueError(f"{coeffs.shape[0]} coefficients for a rank-{b.rank} basis")
    out = b.mean[:, None] + b.modes @ coeffs
    return out[:, 0] if vec else out


def project(b: ReducedBasis, fields) -> np.ndarray:
    return decode(b, encode(b, fields))


def projection_error(b: ReducedBasis, fields) -> float:
    fields = np.asarray(fields, dtype=np.float64)
    return float(np.linalg.norm(project(b, fields) - fields) / np.linalg.norm(fields))


_BASIS_FILES = ("mean", "modes", "sing_vals", "right_factors", "full_sing_vals")


def save_basis(b: ReducedBasis, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in _BASIS_FILES:
        arr = getattr(b, name)
        write_matrix(arr.reshape(arr.shape[0], -1), directory / f"{name}.mlop")
    write_json(directory / "basis.json", {"r": b.rank, "N": b.n_points, "M": b.n_snapshots})


def load_basis(directory) -> ReducedBasis:
    directory = Path(directory)
    parts = {name: read_matrix(directory / f"{name}.mlop") for name in _BASIS_FILES}
    return ReducedBasis(
        mean=parts["mean"][:, 0],
        modes=parts["modes"],
        sing_vals=parts["sing_vals"][:, 0],
        right_factors=parts["right_factors"],
        full_sing_vals=parts["full_sing_vals"][:, 0],
    )

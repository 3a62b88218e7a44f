"""Smoke-footprint classification metrics and AOD-proxy estimators."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .reduction import ReducedBasis, project
from .tensorio import SnapshotMatrix


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray  # descending; the closing (1, 1) point has threshold -inf
    fpr: np.ndarray
    tpr: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class SnapshotScore:
    auc: float
    iou: float
    best_threshold: float
    degenerate: bool


@dataclass
class ClassificationReport:
    auc: float                 # median over snapshots
    best_threshold: float      # median of per-snapshot best thresholds
    iou_at_best: float         # median over snapshots
    per_snapshot: list[SnapshotScore] = field(default_factory=list)
    curves: list[RocCurve] = field(default_factory=list)

    def aucs(self) -> np.ndarray:
        return np.array([s.auc for s in self.per_snapshot])

    def ious(self) -> np.ndarray:
        return np.array([s.iou for s in self.per_snapshot])

    def summary(self) -> dict:
        a, i = self.aucs(), self.ious()
        return {
            "n_snapshots": len(self.per_snapshot),
            "n_degenerate": int(sum(s.degenerate for s in self.per_snapshot)),
            "auc_median": float(np.median(a)),
            "auc_q25": float(np.quantile(a, 0.25)),
            "auc_q75": float(np.quantile(a, 0.75)),
            "iou_median": float(np.median(i)),
            "iou_q25": float(np.quantile(i, 0.25)),
            "iou_q75": float(np.quantile(i, 0.75)),
        }


@dataclass(frozen=True)
class QoiField:
    grid: object
    values: np.ndarray


def _data(m):
    return m.data if isinstance(m, SnapshotMatrix) else np.asarray(m, dtype=np.float64)


# --------------------------------------------------------------------------
# smoke threshold
# --------------------------------------------------------------------------

def _positive_columns(data):
    cols = []
    for j in range(data.shape[1]):
        pos = np.sort(data[data[:, j] > 0, j])
        if pos.size:
            cols.append(pos)
    return cols


def _mean_fraction_above(cols, t: float) -> float:
    return float(np.mean([(c.size - np.searchsorted(c, t, side="right")) / c.size for c in cols]))


def smoke_threshold(val_outputs, beta: float = 0.95) -> float:
    """Largest tau such that, averaged over snapshots, more than *beta* of each
    snapshot's positive pixels exceed tau.

    Candidates are 0 and every distinct positive pixel value. The averaged
    fraction is non-increasing in tau, so a bisection over the sorted
    candidates finds the exact answer. Snapshots without any positive pixel do
    not enter the average.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    data = _data(val_outputs)
    cols = _positive_columns(data)
    if not cols:
        raise ValueError("every validation snapshot is identically zero")
    cand = np.concatenate([[0.0], np.unique(np.concatenate(cols))])
    # fraction(cand[0]=0) == 1 > beta, so the predicate holds at index 0
    lo, hi = 0, cand.size - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _mean_fraction_above(cols, cand[mid]) > beta:
            lo = mid
        else:
            hi = mid - 1
    return float(cand[lo])


# --------------------------------------------------------------------------
# ROC / AUC / IoU
# --------------------------------------------------------------------------

def _degenerate_curve(top: float) -> RocCurve:
    return RocCurve(np.array([top, -np.inf]), np.array([0.0, 1.0]), np.array([0.0, 1.0]), True)


def roc(pred, obs_mask, n_thresholds: int | None = None) -> RocCurve:
    """ROC of the classifier ``pred > alpha`` against *obs_mask*.

    Thresholds are the distinct prediction values that are ``>= 0`` (plus 0),
    in descending order, so the first point is (0, 0). When there are more
    than *n_thresholds* of them a uniform quantile subsample is used. The curve
    is closed with (1, 1) at threshold ``-inf``.

    An empty or full observation mask, or constant predictions, give the
    degenerate curve ``{(0, 0), (1, 1)}`` flagged as such.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    obs = np.asarray(obs_mask, dtype=bool).ravel()
    if pred.shape != obs.shape:
        raise ValueError(f"prediction length {pred.size} != mask length {obs.size}")
    n_pos = int(obs.sum())
    n_neg = obs.size - n_pos
    top = float(pred.max()) if pred.size else 0.0
    if n_pos == 0 or n_neg == 0 or pred.size == 0 or np.all(pred == pred[0]):
        return _degenerate_curve(top)

    values, inverse = np.unique(pred, return_inverse=True)
    pos_per_value = np.bincount(inverse, weights=obs, minlength=values.size)
    cnt_per_value = np.bincount(inverse, minlength=values.size)
    # number of predictions strictly above values[k]
    tp_above = np.concatenate([np.cumsum(pos_per_value[::-1])[::-1][1:], [0.0]])
    all_above = np.concatenate([np.cumsum(cnt_per_value[::-1])[::-1][1:], [0]])

    keep = values >= 0
    thr = values[keep][::-1]
    tp = tp_above[keep][::-1]
    fp = (all_above[keep] - tp_above[keep])[::-1]
    if thr.size == 0 or thr[-1] > 0:
        # 0 is always a threshold; pred > 0 counts everything strictly positive
        n_gt0 = np.count_nonzero(pred > 0)
        tp0 = np.count_nonzero(obs & (pred > 0))
        thr = np.append(thr, 0.0)
        tp = np.append(tp, tp0)
        fp = np.append(fp, n_gt0 - tp0)

    if n_thresholds is not None and thr.size > n_thresholds:
        idx = np.unique(np.round(np.linspace(0, thr.size - 1, n_thresholds)).astype(int))
        thr, tp, fp = thr[idx], tp[idx], fp[idx]

    thresholds = np.append(thr, -np.inf)
    tpr = np.append(tp / n_pos, 1.0)
    fpr = np.append(fp / n_neg, 1.0)
    return RocCurve(thresholds, fpr, tpr, False)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under TPR as a function of FPR."""
    x, y = curve.fpr, curve.tpr
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) * 0.5))


def confusion(pred_mask, obs_mask) -> tuple[int, int, int, int]:
    """``(TP, FP, FN, TN)`` counts."""
    p = np.asarray(pred_mask, dtype=bool).ravel()
    o = np.asarray(obs_mask, dtype=bool).ravel()
    if p.shape != o.shape:
        raise ValueError(f"mask lengths differ: {p.size} vs {o.size}")
    tp = int(np.count_nonzero(p & o))
    fp = int(np.count_nonzero(p & ~o))
    fn = int(np.count_nonzero(~p & o))
    return tp, fp, fn, p.size - tp - fp - fn


def iou(pred_mask, obs_mask) -> float:
    """TP / (TP + FP + FN), defined as 1 when both masks are empty."""
    tp, fp, fn, _ = confusion(pred_mask, obs_mask)
    den = tp + fp + fn
    return 1.0 if den == 0 else tp / den


def best_threshold(curve: RocCurve) -> float:
    """Threshold of the curve point closest to (0, 1); ties go to the larger threshold."""
    d2 = curve.fpr**2 + (1.0 - curve.tpr) ** 2
    return float(curve.thresholds[int(np.argmin(d2))])


def score_snapshot(pred, obs, tau: float, n_thresholds: int | None = None) -> tuple[SnapshotScore, RocCurve]:
    pred = np.asarray(pred, dtype=np.float64)
    obs_mask = np.asarray(obs) > tau
    curve = roc(pred, obs_mask, n_thresholds)
    alpha = best_threshold(curve)
    score = SnapshotScore(auc(curve), iou(pred > alpha, obs_mask), alpha, curve.degenerate)
    return score, curve


def classification_report(preds, obs, tau: float, n_thresholds: int | None = None) -> ClassificationReport:
    p, o = _data(preds), _data(obs)
    if p.shape != o.shape:
        raise ValueError(f"prediction shape {p.shape} != observation shape {o.shape}")
    scores, curves = [], []
    for j in range(p.shape[1]):
        s, c = score_snapshot(p[:, j], o[:, j], tau, n_thresholds)
        scores.append(s)
        curves.append(c)
    return ClassificationReport(
        auc=float(np.median([s.auc for s in scores])),
        best_threshold=float(np.median([s.best_threshold for s in scores])),
        iou_at_best=float(np.median([s.iou for s in scores])),
        per_snapshot=scores,
        curves=curves,
    )


def relative_frobenius_error(pred, truth) -> float:
    pred, truth = _data(pred), _data(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    den = np.linalg.norm(truth)
    if den == 0:
        raise ValueError("truth has zero norm")
    return float(np.linalg.norm(pred - truth) / den)


# --------------------------------------------------------------------------
# AOD proxy  Q = E[ln(g + 1)]
# --------------------------------------------------------------------------

def log_transform(smoke) -> np.ndarray:
    return np.log1p(_data(smoke))


def _grid_of(m):
    return m.grid if isinstance(m, SnapshotMatrix) else None


def _check_subset(m_prime: int, total: int):
    if not 1 <= m_prime <= total:
        raise ValueError(f"subset size {m_prime} outside [1, {total}]")


def qoi_full_mc(final_smoke, m_prime: int | None = None) -> QoiField:
    """Pixelwise mean of ``ln(g + 1)`` over the first *m_prime* columns."""
    g = _data(final_smoke)
    if np.any(g < 0):
        raise ValueError("smoke fields must be non-negative")
    m_prime = g.shape[1] if m_prime is None else int(m_prime)
    _check_subset(m_prime, g.shape[1])
    return QoiField(_grid_of(final_smoke), np.log1p(g[:, :m_prime]).mean(axis=1))


def qoi_reduced_mc(final_smoke, qoi_basis: ReducedBasis, m_prime: int | None = None) -> QoiField:
    """Mean of the POD projections of ``ln(g + 1)``; *qoi_basis* must be built on log-transformed smoke."""
    g = _data(final_smoke)
    m_prime = g.shape[1] if m_prime is None else int(m_prime)
    _check_subset(m_prime, g.shape[1])
    return QoiField(_grid_of(final_smoke), project(qoi_basis, np.log1p(g[:, :m_prime])).mean(axis=1))


def qoi_surrogate(fires, qoi_model, m_prime: int | None = None) -> QoiField:
    """Mean surrogate prediction of ``ln(g + 1)`` over the first *m_prime* inputs.

    *qoi_model* is an operator fit on log-transformed smoke, or any callable
    mapping an ``N x K`` block of inputs to ``N x K`` log-smoke predictions.
    """
    from .mlop import predict

    f = _data(fires)
    m_prime = f.shape[1] if m_prime is None else int(m_prime)
    _check_subset(m_prime, f.shape[1])
    block = f[:, :m_prime]
    pred = qoi_model(block) if callable(qoi_model) else predict(qoi_model, block)
    return QoiField(_grid_of(fires), np.asarray(pred).mean(axis=1))


def qoi_relative_error(estimate: QoiField, reference: QoiField) -> float:
    return float(np.linalg.norm(estimate.values - reference.values) / np.linalg.norm(reference.values))


QOI_ESTIMATORS = ("full", "reduced", "surrogate")


def qoi_convergence(holdout_inputs, holdout_smoke, schedule: Sequence[int], repetitions: int = 20,
                    seed: int = 0, estimators: Sequence[str] = QOI_ESTIMATORS,
                    qoi_basis: ReducedBasis | None = None, qoi_model=None,
                    reference: QoiField | None = None) -> dict:
    """Relative error of each estimator against the all-holdout full-MC reference.

    Every repetition draws one random permutation of the holdout columns and
    all estimators and subset sizes use its leading columns, so the comparison
    between estimators is paired. Returns ``{name: array (len(schedule), repetitions)}``.
    """
    f, g = _data(holdout_inputs), _data(holdout_smoke)
    if f.shape[1] != g.shape[1]:
        raise ValueError("inputs and smoke must have the same holdout columns")
    unknown = set(estimators) - set(QOI_ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    if "reduced" in estimators and qoi_basis is None:
        raise ValueError("the reduced estimator needs a basis of log-smoke fields")
    if "surrogate" in estimators and qoi_model is None:
        raise ValueError("the surrogate estimator needs a model")
    for mp in schedule:
        _check_subset(int(mp), g.shape[1])
    ref = reference if reference is not None else qoi_full_mc(g)
    rng = np.random.default_rng(seed)
    out = {name: np.empty((len(schedule), repetitions)) for name in estimators}
    for rep in range(repetitions):
        order = rng.permutation(g.shape[1])
        for i, mp in enumerate(schedule):
            pick = order[: int(mp)]
            for name in estimators:
                if name == "full":
                    est = qoi_full_mc(g[:, pick])
                elif name == "reduced":
                    est = qoi_reduced_mc(g[:, pick], qoi_basis)
                else:
                    est = qoi_surrogate(f[:, pick], qoi_model)
                out[name][i, rep] = qoi_relative_error(est, ref)
    return out


# --------------------------------------------------------------------------
# report files
# --------------------------------------------------------------------------

def write_report_csv(path, labels: Sequence, report: ClassificationReport, rel_errs: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fire_id", "time_index", "condition", "auc", "iou", "best_threshold", "degenerate", "rel_err"])
        for lab, s, e in zip(labels, report.per_snapshot, rel_errs):
            w.writerow([lab.fire_id, lab.time_index, lab.condition, repr(s.auc), repr(s.iou),
                        repr(s.best_threshold), int(s.degenerate), repr(float(e))])


def write_roc_csv(path, labels: Sequence, report: ClassificationReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snapshot", "fire_id", "time_index", "threshold", "fpr", "tpr"])
        for j, (lab, c) in enumerate(zip(labels, report.curves)):
            for t, x, y in zip(c.thresholds, c.fpr, c.tpr):
                w.writerow([j, lab.fire_id, lab.time_index, repr(float(t)), repr(float(x)), repr(float(y))])

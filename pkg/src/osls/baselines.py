"""Closed-set label shift estimators used as comparison points.

MLLS fits the target label distribution by EM on classifier posteriors; MAPLS
adds a Dirichlet prior to the M-step. The confusion-matrix estimator solves
the linear system relating predicted-label frequencies across domains (hard
argmax predictions, joint-frequency confusion matrix).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import _kernels
from .core import (
    SIMPLEX_TOL,
    DegenerateSample,
    IllConditioned,
    ProbabilityVector,
    ValidationError,
)

_COND_LIMIT = 1e8
_PIVOT_TOL = 1e-300

ProbsLike = Union[np.ndarray, Sequence]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Joint frequencies p(predicted = i, true = j) from a labeled hold-out."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError("confusion matrix must be square")
        if np.any(arr < 0.0) or abs(float(arr.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValidationError("confusion entries must be >= 0 and sum to 1")
        arr = arr / arr.sum()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_labels(cls, predicted: np.ndarray, true: np.ndarray, k: int) -> "ConfusionMatrix":
        """Build joint frequencies from 1-based predicted and true labels."""
        predicted = np.asarray(predicted, dtype=np.int64)
        true = np.asarray(true, dtype=np.int64)
        if predicted.shape != true.shape or predicted.size == 0:
            raise ValidationError("predicted and true labels must be equal-length, non-empty")
        if np.any(predicted < 1) or np.any(predicted > k) or np.any(true < 1) or np.any(true > k):
            raise ValidationError(f"labels must lie in 1..{k}")
        counts = np.zeros((k, k))
        np.add.at(counts, (predicted - 1, true - 1), 1.0)
        return cls(counts / predicted.size)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def class_marginals(self) -> np.ndarray:
        """Hold-out true-label frequencies (column sums)."""
        return self.entries.sum(axis=0)


def _coerce_prob_rows(target_f: ProbsLike) -> np.ndarray:
    if isinstance(target_f, np.ndarray) and target_f.ndim == 2:
        rows = np.asarray(target_f, dtype=float)
    else:
        items = list(target_f)
        if not items:
            raise ValidationError("empty target set")
        if isinstance(items[0], ProbabilityVector):
            rows = np.stack([p.entries for p in items])
        else:
            rows = np.asarray(items, dtype=float)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValidationError("target posteriors must form a non-empty (N, K) matrix")
    sums = rows.sum(axis=1)
    if np.any(rows < -SIMPLEX_TOL) or np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
        raise ValidationError("each target posterior must be a probability vector")
    rows = np.clip(rows, 0.0, None)
    return np.ascontiguousarray(rows / rows.sum(axis=1, keepdims=True))


def _coerce_source_prior(c, k: int) -> np.ndarray:
    c = c.entries if isinstance(c, ProbabilityVector) else ProbabilityVector(c).entries
    if c.size != k:
        raise ValidationError(f"c has {c.size} entries, expected {k}")
    if np.any(c <= 0.0):
        raise ValidationError("c must be strictly positive")
    return np.ascontiguousarray(c)


def mlls(
    target_f: ProbsLike,
    c,
    max_iters: int = 100,
    *,
    tol: float = 0.0,
    return_trace: bool = False,
):
    """Maximum-likelihood target label distribution from classifier posteriors."""
    f = _coerce_prob_rows(target_f)
    c = _coerce_source_prior(c, f.shape[1])
    pi, obj, iters, _converged, degenerate = _kernels.mlls_fit(f, c, max_iters, tol)
    if degenerate >= 0:
        raise DegenerateSample(int(degenerate))
    result = ProbabilityVector(pi)
    if return_trace:
        return result, np.array(obj[: iters + 1])
    return result


def mapls(
    target_f: ProbsLike,
    c,
    alpha: Union[Sequence[float], np.ndarray],
    max_iters: int = 100,
    *,
    tol: float = 0.0,
    return_trace: bool = False,
):
    """MAP variant of mlls with a per-class Dirichlet prior (alpha >= 1)."""
    f = _coerce_prob_rows(target_f)
    c = _coerce_source_prior(c, f.shape[1])
    alpha = np.ascontiguousarray(np.asarray(alpha, dtype=float))
    if alpha.size != f.shape[1] or np.any(alpha < 1.0):
        raise ValidationError("alpha must have K entries, all >= 1")
    pi, obj, iters, _converged, degenerate = _kernels.mapls_fit(f, c, alpha, max_iters, tol)
    if degenerate >= 0:
        raise DegenerateSample(int(degenerate))
    result = ProbabilityVector(pi)
    if return_trace:
        return result, np.array(obj[: iters + 1])
    return result


def _gauss_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b by Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[pivot, col]) < _PIVOT_TOL:
            raise IllConditioned("singular confusion matrix")
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            b[[col, pivot]] = b[[pivot, col]]
        for row in range(col + 1, n):
            m = a[row, col] / a[col, col]
            a[row, col:] -= m * a[col, col:]
            b[row] -= m * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


def _cond_1(a: np.ndarray) -> float:
    n = a.shape[0]
    inv = np.column_stack([_gauss_solve(a, e) for e in np.eye(n)])
    norm = np.abs(a).sum(axis=0).max()
    inv_norm = np.abs(inv).sum(axis=0).max()
    return float(norm * inv_norm)


def bbse(confusion: ConfusionMatrix, target_pred_freq) -> ProbabilityVector:
    """Target label distribution from the confusion-matrix linear system.

    Solves C w = q for the class importance weights w (q being target
    predicted-label frequencies), clips negative weights to zero, and maps
    back to a distribution via pi_j proportional to w_j * c_j.
    """
    q = target_pred_freq
    q = q.entries if isinstance(q, ProbabilityVector) else ProbabilityVector(q).entries
    if q.size != confusion.k:
        raise ValidationError(f"target frequencies have {q.size} entries, expected {confusion.k}")
    cm = confusion.entries
    cond = _cond_1(cm)
    if cond >= _COND_LIMIT:
        raise IllConditioned(f"confusion matrix condition number {cond:.3g} >= {_COND_LIMIT:.0e}")
    w = _gauss_solve(cm, q)
    pi_unnorm = np.maximum(w, 0.0) * confusion.class_marginals()
    total = pi_unnorm.sum()
    if total <= 0.0:
        raise IllConditioned("all importance weights were non-positive")
    return ProbabilityVector(pi_unnorm / total)


def predicted_class_frequencies(f_rows: ProbsLike, k: Optional[int] = None) -> ProbabilityVector:
    """Empirical frequencies of the argmax class over a set of posteriors."""
    rows = _coerce_prob_rows(f_rows)
    k = k or rows.shape[1]
    pred = rows.argmax(axis=1)
    counts = np.bincount(pred, minlength=k).astype(float)
    return ProbabilityVector(counts / counts.sum())


def argmax_labels(f_rows: ProbsLike) -> np.ndarray:
    """1-based argmax labels, ties broken toward the smallest index."""
    return _coerce_prob_rows(f_rows).argmax(axis=1) + 1

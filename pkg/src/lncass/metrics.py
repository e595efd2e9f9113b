"""Performance measures and posterior summarization.

AUC follows the Mann-Whitney convention (ties count one half); parameter
recovery is scored on absolute posterior medians against the ground-truth
nonzero indicators.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, ModelSpecError


@dataclass(frozen=True)
class RocCurve:
    """ROC curve over all distinct score thresholds, descending."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray

    def area(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))


@dataclass(frozen=True)
class PosteriorSummary:
    """Per-parameter posterior summaries with convergence diagnostics."""

    names: list[str]
    median: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rhat: np.ndarray
    ess: np.ndarray
    interval_mass: float = 0.9

    def __len__(self) -> int:
        return len(self.names)

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "name": name,
            "median": float(self.median[i]),
            "mean": float(self.mean[i]),
            "lower": float(self.lower[i]),
            "upper": float(self.upper[i]),
            "rhat": float(self.rhat[i]),
            "ess": float(self.ess[i]),
        }

    def subset(self, prefix: str) -> "PosteriorSummary":
        """Entries whose name starts with ``prefix``, order preserved."""
        keep = [i for i, n in enumerate(self.names) if n.startswith(prefix)]
        if not keep:
            raise ModelSpecError(f"no parameters with prefix {prefix!r}")
        idx = np.asarray(keep)
        return PosteriorSummary(
            names=[self.names[i] for i in keep],
            median=self.median[idx],
            mean=self.mean[idx],
            lower=self.lower[idx],
            upper=self.upper[idx],
            rhat=self.rhat[idx],
            ess=self.ess[idx],
            interval_mass=self.interval_mass,
        )


def _validate_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(
            f"scores have shape {scores.shape}, labels {labels.shape}"
        )
    if not np.all(np.isin(np.unique(labels), (0.0, 1.0))):
        raise DataError("labels must be binary 0/1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise DataError(
            f"need both classes to score; got {n_pos} positives of {labels.size}"
        )
    return scores, labels, n_pos


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    change = np.nonzero(np.diff(sx))[0] + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [x.size]))
    group_rank = (starts + ends + 1) / 2.0  # average of 1-based ranks in the group
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """P(score_pos > score_neg) over all positive/negative pairs, ties half."""
    scores, labels, n_pos = _validate_scores_labels(scores, labels)
    n_neg = labels.size - n_pos
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels == 1.0].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores, labels) -> RocCurve:
    """Curve over all distinct thresholds; trapezoidal area equals :func:`auc`."""
    scores, labels, n_pos = _validate_scores_labels(scores, labels)
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="mergesort")
    ss = scores[order]
    ll = labels[order]
    last_of_group = np.concatenate((np.nonzero(np.diff(ss))[0], [ss.size - 1]))
    tp = np.cumsum(ll)[last_of_group]
    fp = (last_of_group + 1) - tp
    return RocCurve(
        thresholds=np.concatenate(([np.inf], ss[last_of_group])),
        fpr=np.concatenate(([0.0], fp / n_neg)),
        tpr=np.concatenate(([0.0], tp / n_pos)),
    )


def mae(estimate, truth) -> float:
    """Mean absolute difference between two parameter vectors."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape or estimate.ndim != 1:
        raise DimensionError(
            f"estimate has shape {estimate.shape}, truth {truth.shape}"
        )
    return float(np.mean(np.abs(estimate - truth)))


def recovery_auc(estimates, truth) -> float:
    """AUC of |estimates| against the ground truth's nonzero indicators."""
    estimates = np.asarray(estimates, dtype=float)
    mask = np.asarray(truth.nonzero_mask, dtype=float)
    if estimates.shape != mask.shape:
        raise DimensionError(
            f"estimates have shape {estimates.shape}, truth has {mask.shape}"
        )
    return auc(np.abs(estimates), mask)


def summarize(draws, interval_mass: float = 0.9) -> PosteriorSummary:
    """Pooled-chain medians, means, and central intervals, plus rhat/ess.

    Quantiles use linear interpolation between order statistics.
    """
    from .sampler import ess as _ess
    from .sampler import rhat as _rhat

    if not 0.0 < interval_mass < 1.0:
        raise ModelSpecError(f"interval_mass must be in (0,1), got {interval_mass}")
    arr = draws.array  # (chains, draws, dim)
    if arr.size == 0:
        raise DataError("draws are empty")
    pooled = arr.reshape(-1, arr.shape[2])
    alpha = (1.0 - interval_mass) / 2.0
    qs = np.quantile(pooled, [alpha, 0.5, 1.0 - alpha], axis=0)
    if arr.shape[0] >= 2 and arr.shape[1] >= 4:
        rhats = np.array([_rhat(draws, n) for n in draws.names])
        esses = np.array([_ess(draws, n) for n in draws.names])
    else:  # diagnostics need multiple chains; single-chain runs report NaN
        rhats = np.full(arr.shape[2], np.nan)
        esses = np.full(arr.shape[2], np.nan)
    return PosteriorSummary(
        names=list(draws.names),
        median=qs[1],
        mean=pooled.mean(axis=0),
        lower=qs[0],
        upper=qs[2],
        rhat=rhats,
        ess=esses,
        interval_mass=interval_mass,
    )


def hard_select(summary: PosteriorSummary, k: int) -> np.ndarray:
    """Indices of the k largest |median| entries, ties broken by ascending index."""
    p = len(summary)
    if not 1 <= k <= p:
        raise ModelSpecError(f"k must be in [1, {p}], got {k}")
    order = np.lexsort((np.arange(p), -np.abs(summary.median)))
    return np.sort(order[:k])

"""Dataset ingestion, preprocessing transforms, screening, and CV folds.

Transforms are pure: each returns a new :class:`Dataset` with the applied
step appended to ``provenance``.  Missing values are NaN in ``X`` until
imputed; model fitting rejects non-finite input.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DimensionError, ModelSpecError
from .simulate import rng_from


@dataclass(frozen=True)
class Dataset:
    """Design matrix, response, column names, and preprocessing provenance."""

    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    response: str = "y"
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise DataError(f"X must be 2-d, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DimensionError(
                f"y has length {y.size} but X has {X.shape[0]} rows"
            )
        if len(self.columns) != X.shape[1]:
            raise DimensionError(
                f"{len(self.columns)} column names for {X.shape[1]} columns"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.X).sum())

    def missing_cells(self) -> np.ndarray:
        """(row, column) index pairs of missing entries."""
        return np.argwhere(np.isnan(self.X))

    def is_binary(self) -> bool:
        vals = np.unique(self.y)
        return np.all(np.isin(vals, (0.0, 1.0)))

    def subset_rows(self, idx: np.ndarray) -> "Dataset":
        return replace(self, X=self.X[idx], y=self.y[idx])

    def subset_columns(self, idx: np.ndarray) -> "Dataset":
        cols = [self.columns[i] for i in idx]
        return replace(self, X=self.X[:, idx], columns=cols)

    def with_step(self, step: str, X: np.ndarray | None = None) -> "Dataset":
        return replace(
            self,
            X=self.X if X is None else X,
            provenance=self.provenance + (step,),
        )


@dataclass(frozen=True)
class FoldPlan:
    """Cross-validation folds: held-out sets, training sets, and dropped rows.

    ``assignment[i]`` is the fold in which observation i is held out (-1 if
    never held out).  ``dropped[f]`` lists rows removed from fold f's
    training set for class balancing; they appear in neither side of that
    fold.
    """

    assignment: np.ndarray
    test_sets: tuple[np.ndarray, ...]
    dropped: tuple[np.ndarray, ...]

    @property
    def k(self) -> int:
        return len(self.test_sets)

    def train_set(self, fold: int) -> np.ndarray:
        n = self.assignment.size
        mask = np.ones(n, dtype=bool)
        mask[self.test_sets[fold]] = False
        mask[self.dropped[fold]] = False
        return np.nonzero(mask)[0]

    def to_dict(self) -> dict:
        return {
            "assignment": [int(a) for a in self.assignment],
            "test_sets": [[int(i) for i in t] for t in self.test_sets],
            "dropped": [[int(i) for i in d] for d in self.dropped],
        }


def load_csv(path, response: str | None) -> Dataset:
    """Read a dataset: header row, one observation per row, empty cell = missing.

    With ``response=None`` every column is treated as a covariate and the
    response is left unset (all-NaN), which covers prediction-only inputs.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    if response is None:
        y_col = -1
    elif response not in header:
        raise DataError(f"{path}: response column {response!r} not in header {header}")
    else:
        y_col = header.index(response)
    columns = [h for i, h in enumerate(header) if i != y_col]
    n, p = len(rows), len(columns)
    X = np.empty((n, p))
    y = np.full(n, np.nan)
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {r} has {len(row)} cells, header has {len(header)}"
            )
        c_out = 0
        for c, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                value = np.nan
            else:
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {r}, "
                        f"column {header[c]!r}"
                    ) from None
            if c == y_col:
                y[r] = value
            else:
                X[r, c_out] = value
                c_out += 1
    if response is not None and np.any(np.isnan(y)):
        missing = np.nonzero(np.isnan(y))[0]
        raise DataError(
            f"{path}: response {response!r} missing at rows {missing.tolist()}"
        )
    return Dataset(X=X, y=y, columns=columns, response=response or "")


def save_csv(data: Dataset, path) -> None:
    """Write a dataset back out in the schema :func:`load_csv` reads."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.columns) + [data.response])
        for i in range(data.n):
            row = [
                "" if np.isnan(v) else repr(float(v)) for v in data.X[i]
            ]
            row.append(repr(float(data.y[i])))
            writer.writerow(row)


def log1p_transform(data: Dataset) -> Dataset:
    """Apply log(1 + x) entrywise; entries must be non-negative."""
    if np.nanmin(data.X) < 0:
        bad = np.argwhere(data.X < 0)[:5]
        raise DataError(
            f"log1p requires non-negative entries; negatives at {bad.tolist()}"
        )
    return data.with_step("log1p", np.log1p(data.X))


def standardize(data: Dataset) -> Dataset:
    """Center each column and scale to unit standard deviation (n-1 denominator)."""
    mean = np.nanmean(data.X, axis=0)
    sd = np.nanstd(data.X, axis=0, ddof=1)
    zero = np.nonzero(sd == 0)[0]
    if zero.size:
        names = [data.columns[i] for i in zero]
        raise DataError(f"constant columns cannot be standardized: {names}")
    return data.with_step("standardize", (data.X - mean) / sd)


def scale_unit(data: Dataset) -> Dataset:
    """Affinely map each column onto [0, 1]; required before basis expansion."""
    lo = np.nanmin(data.X, axis=0)
    hi = np.nanmax(data.X, axis=0)
    flat = np.nonzero(hi <= lo)[0]
    if flat.size:
        names = [data.columns[i] for i in flat]
        raise DataError(f"constant columns cannot be unit-scaled: {names}")
    return data.with_step("unit-scale", (data.X - lo) / (hi - lo))


def impute_mean(data: Dataset) -> Dataset:
    """Replace missing entries by the column mean of the observed entries."""
    missing = np.isnan(data.X)
    observed_counts = (~missing).sum(axis=0)
    empty = np.nonzero(observed_counts == 0)[0]
    if empty.size:
        names = [data.columns[i] for i in empty]
        raise DataError(f"fully-missing columns cannot be mean-imputed: {names}")
    if not missing.any():
        return data.with_step("impute")
    means = np.nanmean(data.X, axis=0)
    X = np.where(missing, means[None, :], data.X)
    return data.with_step("impute", X)


def _check_binary(y: np.ndarray) -> None:
    if not np.all(np.isin(np.unique(y), (0.0, 1.0))):
        raise DataError(
            f"response must be binary 0/1, got values {np.unique(y)[:6].tolist()}"
        )
    if np.unique(y).size < 2:
        raise DataError("response has a single class; both classes are required")


def _newton_univariate_logistic(
    x: np.ndarray, y: np.ndarray, max_iter: int = 25, clamp: float = 15.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column logistic fits (intercept + one covariate), vectorized.

    Returns (slope, slope_se, converged).  Coefficients are clamped to
    ``[-clamp, clamp]``; a column counts as converged only if Newton
    settled within ``max_iter`` iterations without an active clamp.
    """
    n, p = x.shape
    a = np.zeros(p)
    b = np.zeros(p)
    active = np.ones(p, dtype=bool)
    yc = y[:, None]
    for _ in range(max_iter):
        if not active.any():
            break
        eta = a[None, :] + x * b[None, :]
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = mu * (1.0 - mu)
        resid = yc - mu
        g_a = resid.sum(axis=0)
        g_b = (x * resid).sum(axis=0)
        h_aa = w.sum(axis=0)
        h_ab = (w * x).sum(axis=0)
        h_bb = (w * x * x).sum(axis=0)
        det = h_aa * h_bb - h_ab * h_ab
        det = np.where(det <= 1e-12, np.nan, det)
        da = (h_bb * g_a - h_ab * g_b) / det
        db = (h_aa * g_b - h_ab * g_a) / det
        da = np.nan_to_num(da, nan=0.0)
        db = np.nan_to_num(db, nan=0.0)
        step = np.where(active, 1.0, 0.0)
        a = np.clip(a + step * da, -clamp, clamp)
        b = np.clip(b + step * db, -clamp, clamp)
        moved = np.maximum(np.abs(da), np.abs(db))
        clamped = (np.abs(a) >= clamp) | (np.abs(b) >= clamp)
        active &= (moved >= 1e-10) | clamped
    converged = ~active & (np.abs(a) < clamp) & (np.abs(b) < clamp)
    # slope standard error from the inverse observed information
    eta = a[None, :] + x * b[None, :]
    mu = 1.0 / (1.0 + np.exp(-eta))
    w = mu * (1.0 - mu)
    h_aa = w.sum(axis=0)
    h_ab = (w * x).sum(axis=0)
    h_bb = (w * x * x).sum(axis=0)
    det = h_aa * h_bb - h_ab * h_ab
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(h_aa / det)
    return b, se, converged


def _score_statistic(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Score-test Z for the slope in a univariate logistic fit under the null."""
    p0 = y.mean()
    u = (x * (y - p0)[:, None]).sum(axis=0)
    xc = x - x.mean(axis=0)
    v = p0 * (1.0 - p0) * (xc * xc).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = u / np.sqrt(v)
    return np.nan_to_num(z, nan=0.0)


def wald_screen(
    data: Dataset, top_k: int
) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Retain the ``top_k`` columns with the largest |Z| from univariate fits.

    Z is coefficient / standard error from a per-column logistic regression
    (intercept + single covariate) fit by Newton iteration.  Columns where
    Newton hits the iteration cap or the coefficient clamp fall back to the
    score statistic; those entries are flagged.  Ties break by ascending
    column index.

    Returns (reduced dataset, selected column indices, z-scores for all
    columns).
    """
    _check_binary(data.y)
    if top_k < 1:
        raise ModelSpecError(f"top_k must be >= 1, got {top_k}")
    if data.n_missing:
        raise DataError("wald_screen requires complete data; impute first")
    top_k = min(top_k, data.p)
    b, se, converged = _newton_univariate_logistic(data.X, data.y)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = b / se
    z_score = _score_statistic(data.X, data.y)
    z = np.where(converged & np.isfinite(z), z, z_score)
    # stable sort on (-|z|, index) breaks ties by ascending index; retained
    # columns come out in descending |z| order
    order = np.lexsort((np.arange(data.p), -np.abs(z)))
    selected = order[:top_k]
    reduced = data.subset_columns(selected).with_step(f"screen[{top_k}]")
    return reduced, selected, z


def wald_screen_flags(data: Dataset) -> np.ndarray:
    """Convergence flags matching :func:`wald_screen`'s z-scores (True = Wald)."""
    _check_binary(data.y)
    _, _, converged = _newton_univariate_logistic(data.X, data.y)
    return converged


def kfold_stratified(labels: np.ndarray, k: int, seed) -> FoldPlan:
    """k folds with per-class counts as equal as integer arithmetic allows."""
    labels = np.asarray(labels, dtype=float)
    _check_binary(labels)
    counts = [int((labels == v).sum()) for v in (0.0, 1.0)]
    if k < 2 or k > min(counts):
        raise ModelSpecError(
            f"k must be in [2, min class count]; got k={k}, class counts {counts}"
        )
    rng = rng_from(seed)
    assignment = np.empty(labels.size, dtype=np.int64)
    for v in (0.0, 1.0):
        idx = np.nonzero(labels == v)[0]
        idx = rng.permutation(idx)
        assignment[idx] = np.arange(idx.size) % k
    test_sets = tuple(np.nonzero(assignment == f)[0] for f in range(k))
    empty = np.empty(0, dtype=np.int64)
    return FoldPlan(
        assignment=assignment,
        test_sets=test_sets,
        dropped=tuple(empty for _ in range(k)),
    )


def loocv_balanced(labels: np.ndarray, seed) -> FoldPlan:
    """Leave-one-out folds that also drop one random opposite-class row.

    Each fold holds out one observation and removes, uniformly at random,
    one training observation of the opposite class, so the training class
    proportions are identical across folds.
    """
    labels = np.asarray(labels, dtype=float)
    _check_binary(labels)
    rng = rng_from(seed)
    n = labels.size
    test_sets = []
    dropped = []
    for i in range(n):
        opposite = np.nonzero(labels != labels[i])[0]
        test_sets.append(np.array([i], dtype=np.int64))
        dropped.append(np.array([rng.choice(opposite)], dtype=np.int64))
    return FoldPlan(
        assignment=np.arange(n, dtype=np.int64),
        test_sets=tuple(test_sets),
        dropped=tuple(dropped),
    )


class Pipeline:
    """Ordered preprocessing steps whose statistics are fit once and reused.

    Fitting computes each step's parameters (column means, min/max, ...) on
    one dataset; ``transform`` replays them on another, which is what keeps
    cross-validation folds and later predictions leakage-free.  Step order
    is fixed: impute, log1p, standardize, unit-scale.
    """

    ORDER = ("impute", "log1p", "standardize", "unit-scale")

    def __init__(self, steps):
        unknown = set(steps) - set(self.ORDER)
        if unknown:
            raise ModelSpecError(f"unknown preprocessing steps: {sorted(unknown)}")
        self.steps = [s for s in self.ORDER if s in steps]
        self.params: dict[str, dict] = {}

    def fit_transform(self, data: Dataset) -> Dataset:
        self.params = {}
        for step in self.steps:
            if step == "impute":
                missing = np.isnan(data.X)
                if missing.all(axis=0).any():
                    raise DataError("fully-missing columns cannot be mean-imputed")
                means = np.nanmean(data.X, axis=0)
                self.params[step] = {"means": means}
                data = data.with_step(step, np.where(missing, means, data.X))
            elif step == "log1p":
                self.params[step] = {}
                data = log1p_transform(data)
            elif step == "standardize":
                mean = data.X.mean(axis=0)
                sd = data.X.std(axis=0, ddof=1)
                if np.any(sd == 0):
                    bad = [data.columns[i] for i in np.nonzero(sd == 0)[0]]
                    raise DataError(f"constant columns cannot be standardized: {bad}")
                self.params[step] = {"mean": mean, "sd": sd}
                data = data.with_step(step, (data.X - mean) / sd)
            else:
                lo = data.X.min(axis=0)
                hi = data.X.max(axis=0)
                if np.any(hi <= lo):
                    bad = [data.columns[i] for i in np.nonzero(hi <= lo)[0]]
                    raise DataError(f"constant columns cannot be unit-scaled: {bad}")
                self.params[step] = {"lo": lo, "hi": hi}
                data = data.with_step(step, (data.X - lo) / (hi - lo))
        return data

    def transform(self, data: Dataset) -> Dataset:
        for step in self.steps:
            p = self.params[step]
            if step == "impute":
                data = data.with_step(step, np.where(np.isnan(data.X), p["means"], data.X))
            elif step == "log1p":
                data = log1p_transform(data)
            elif step == "standardize":
                data = data.with_step(step, (data.X - p["mean"]) / p["sd"])
            else:
                # clip so downstream basis expansion stays on [0, 1]
                scaled = (data.X - p["lo"]) / (p["hi"] - p["lo"])
                data = data.with_step(step, np.clip(scaled, 0.0, 1.0))
        return data

    def to_dict(self) -> dict:
        return {
            "steps": list(self.steps),
            "params": {
                step: {k: [float(x) for x in np.atleast_1d(v)] for k, v in d.items()}
                for step, d in self.params.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pipeline":
        pipe = cls(d["steps"])
        pipe.params = {
            step: {k: np.asarray(v, dtype=float) for k, v in params.items()}
            for step, params in d["params"].items()
        }
        return pipe

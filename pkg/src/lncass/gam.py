"""Piecewise-linear basis for additive models on the unit interval.

Each covariate effect is represented as a combination of hinge functions,
one per knot.  The first knot is pinned at 0 so that the first basis
element is the identity: a fit that uses only the first weight of a
covariate is a purely linear effect, and every representable function
vanishes at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, ModelSpecError


@dataclass(frozen=True)
class KnotGrid:
    """Ordered knot locations ``x_1 < ... < x_M`` with ``x_1 = 0``, all in [0, 1)."""

    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size == 0:
            raise ModelSpecError("knot grid must be a non-empty 1-d sequence")
        if knots[0] != 0.0:
            raise ModelSpecError(f"first knot must be 0, got {knots[0]!r}")
        if np.any(np.diff(knots) <= 0):
            raise ModelSpecError("knots must be strictly increasing")
        if knots[-1] >= 1.0 or knots[0] < 0.0:
            raise ModelSpecError("knots must lie in [0, 1)")
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @classmethod
    def equally_spaced(cls, m: int) -> "KnotGrid":
        """Grid of ``m`` knots at (k-1)/m for k = 1..m."""
        if m < 1:
            raise ModelSpecError(f"knot count must be >= 1, got {m}")
        return cls(np.arange(m, dtype=float) / m)

    @property
    def size(self) -> int:
        return int(self.knots.size)


def phi(x: float, knot: float) -> float:
    """Hinge basis element: 0 for x <= knot, (x - knot) / (1 - knot) above it.

    ``x`` must lie in [0, 1] and ``knot`` in [0, 1); covariates are expected
    to be unit-scaled beforehand (see :func:`lncass.dataprep.scale_unit`).
    """
    if not 0.0 <= x <= 1.0:
        raise DataError(f"basis argument must lie in [0, 1], got {x!r}")
    if not 0.0 <= knot < 1.0:
        raise DataError(f"knot must lie in [0, 1), got {knot!r}")
    if x <= knot:
        return 0.0
    return (x - knot) / (1.0 - knot)


def expand_design(X: np.ndarray, grid: KnotGrid) -> np.ndarray:
    """Expand an n x p design in [0, 1] into the n x (p*M) hinge basis.

    Column order is covariate-major, knot-minor: block i holds
    phi_k(x_i) for k = 1..M.  This ordering is fixed so that parameter
    names are stable across runs.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"design must be 2-d, got shape {X.shape}")
    bad = np.argwhere(~((X >= 0.0) & (X <= 1.0)))
    if bad.size:
        cells = ", ".join(f"({r}, {c})" for r, c in bad[:10])
        more = "" if bad.shape[0] <= 10 else f" and {bad.shape[0] - 10} more"
        raise DataError(
            f"design entries outside [0, 1] at rows/columns {cells}{more}; "
            "unit-scale the covariates first"
        )
    n, p = X.shape
    m = grid.size
    # (n, p, M) hinge evaluations, flattened with covariate blocks contiguous.
    diff = X[:, :, None] - grid.knots[None, None, :]
    out = np.maximum(diff, 0.0) / (1.0 - grid.knots)[None, None, :]
    return out.reshape(n, p * m)


def reconstruct_f(
    weights: np.ndarray, grid: KnotGrid, query_points: np.ndarray
) -> np.ndarray:
    """Evaluate the piecewise-linear effect sum_k w_k * phi_k at the query points."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (grid.size,):
        raise DimensionError(
            f"expected {grid.size} weights for a {grid.size}-knot grid, "
            f"got shape {weights.shape}"
        )
    q = np.asarray(query_points, dtype=float)
    if np.any((q < 0.0) | (q > 1.0)):
        raise DataError("query points must lie in [0, 1]")
    basis = np.maximum(q[:, None] - grid.knots[None, :], 0.0) / (1.0 - grid.knots)
    return basis @ weights

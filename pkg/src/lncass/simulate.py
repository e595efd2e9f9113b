"""Synthetic data for the grouped-regression benchmark.

Three settings (p = 20, 70, 120) share the same recipe: n = 100 design
rows drawn from a unit Latin hypercube, ground-truth coefficients laid
out in contiguous groups of five, and Gaussian-noise linear responses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ModelSpecError

GROUP_SIZE = 5
N_OBS = 100

# Per-case group layout: 1-based group number -> build rule.  Groups not
# listed are zero groups.  "const" is a constant vector, "noisy" adds
# N(0, 0.1^2) perturbations to the base value, "explicit" is verbatim.
_CASE_GROUPS: dict[str, tuple[int, dict[int, tuple]]] = {
    "p20": (4, {2: ("const", 2.0), 4: ("noisy", -1.0)}),
    "p70": (
        14,
        {
            4: ("const", 2.0),
            7: ("const", 2.0),
            8: ("noisy", -1.0),
            14: ("explicit", (-0.5, -0.5, 3.0, -0.5, -0.5)),
        },
    ),
    "p120": (
        24,
        {
            6: ("const", 1.0),
            12: ("noisy", 2.0),
            18: ("explicit", (-1.0, -1.0, -1.0, -2.0, -1.0)),
            19: ("explicit", (0.5, 0.5, 0.5, 2.0, 0.5)),
        },
    ),
}


def rng_from(seed) -> np.random.Generator:
    """Counter-based generator (Philox) used for every seeded draw in the package."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SimCase:
    """One simulation setting: which coefficient table to use, noise level, seed."""

    case: str
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.case not in _CASE_GROUPS:
            raise ModelSpecError(
                f"unknown simulation case {self.case!r}; "
                f"expected one of {sorted(_CASE_GROUPS)}"
            )
        if self.noise_sd <= 0:
            raise ModelSpecError(f"noise_sd must be positive, got {self.noise_sd}")

    @property
    def n_groups(self) -> int:
        return _CASE_GROUPS[self.case][0]

    @property
    def p(self) -> int:
        return self.n_groups * GROUP_SIZE


@dataclass(frozen=True)
class GroundTruth:
    """True coefficient vector with its group map and nonzero indicator."""

    beta: np.ndarray
    groups: np.ndarray
    nonzero_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        groups = np.asarray(self.groups, dtype=int)
        if beta.shape != groups.shape:
            raise DimensionError(
                f"beta has length {beta.size} but groups has length {groups.size}"
            )
        mask = self.nonzero_mask
        if mask is None:
            mask = beta != 0.0
        mask = np.asarray(mask, dtype=bool)
        for name, arr in (("beta", beta), ("groups", groups), ("nonzero_mask", mask)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def p(self) -> int:
        return int(self.beta.size)

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "groups": [int(g) for g in self.groups],
            "nonzero_mask": [bool(m) for m in self.nonzero_mask],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            groups=np.asarray(d["groups"], dtype=int),
            nonzero_mask=np.asarray(d["nonzero_mask"], dtype=bool),
        )


def latin_hypercube(n: int, p: int, seed) -> np.ndarray:
    """n x p unit Latin hypercube: one uniform point per stratum per column.

    Each column partitions [0, 1) into n equal strata; the stratum order is
    permuted independently per column.  Deterministic given the seed.
    """
    if n < 1 or p < 1:
        raise ModelSpecError(f"n and p must be >= 1, got n={n}, p={p}")
    rng = rng_from(seed)
    u = rng.random((n, p))
    strata = np.empty((n, p), dtype=np.int64)
    for j in range(p):
        strata[:, j] = rng.permutation(n)
    return (strata + u) / n


def truth_coefficients(case: SimCase) -> GroundTruth:
    """Ground-truth coefficients for a simulation case, per the benchmark table.

    Noisy groups draw their N(0, 0.1^2) perturbations from the case seed, in
    ascending group order, so the vector is reproducible.
    """
    n_groups, rules = _CASE_GROUPS[case.case]
    rng = rng_from([case.seed, 1])  # keyed off the design/noise streams
    beta = np.zeros(n_groups * GROUP_SIZE)
    for g in range(1, n_groups + 1):
        rule = rules.get(g)
        if rule is None:
            continue
        lo = (g - 1) * GROUP_SIZE
        block = slice(lo, lo + GROUP_SIZE)
        kind = rule[0]
        if kind == "const":
            beta[block] = rule[1]
        elif kind == "noisy":
            beta[block] = rule[1] + rng.normal(0.0, 0.1, size=GROUP_SIZE)
        else:
            beta[block] = np.asarray(rule[1], dtype=float)
    groups = np.repeat(np.arange(n_groups), GROUP_SIZE)
    return GroundTruth(beta=beta, groups=groups)


def simulate_regression(
    X: np.ndarray, truth: GroundTruth, noise_sd: float, seed
) -> np.ndarray:
    """Responses y_i = X_i beta + eps_i with eps_i ~ N(0, noise_sd^2).

    The generating intercept is zero; fitted models still estimate one.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != truth.p:
        raise DimensionError(
            f"design has shape {X.shape} but truth has {truth.p} coefficients"
        )
    rng = rng_from([seed, 2])
    return X @ truth.beta + rng.normal(0.0, noise_sd, size=X.shape[0])


def simulate_case(case: SimCase) -> tuple[np.ndarray, np.ndarray, GroundTruth]:
    """Full dataset for one case: (X, y, truth), all keyed off ``case.seed``."""
    truth = truth_coefficients(case)
    X = latin_hypercube(N_OBS, case.p, [case.seed, 0])
    y = simulate_regression(X, truth, case.noise_sd, case.seed)
    return X, y, truth

"""Log-posterior densities and analytic gradients for every model variant.

All models are expressed in an unconstrained parameterization: inclusion
variables are sampled on the logit scale (the normal variable whose
sigmoid is the inclusion probability), the horseshoe's local scales on
the log scale, and the regression noise scale as log sigma with a
half-normal prior plus the change-of-variables term.  Gradients are
exact and validated against finite differences in the test suite.

Hierarchy layout shared by the shrinkage priors: every coefficient j has
its own inclusion variable, and optionally a parent inclusion variable
(the group's, or the covariate's linear-term one).  The coefficient's
prior standard deviation is the product of its own and parent inclusion
probabilities times the slab scale tau.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataprep import Dataset
from .errors import DataError, DimensionError, ModelSpecError
from .gam import KnotGrid, expand_design

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_HALF_CAUCHY = math.log(2.0 / math.pi)


class Likelihood(str, Enum):
    LINEAR = "linear"  # gaussian noise around the linear predictor
    LOGISTIC = "logistic"  # bernoulli with logit link


class Prior(str, Enum):
    LNCASS = "lncass"
    LNCASS_GROUPED = "lncass-grouped"
    LNCASS_GAM = "lncass-gam"
    HORSESHOE = "horseshoe"


def inv_logit(x):
    """Overflow-safe logistic sigmoid; saturates at 0/1 for extreme inputs."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p):
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    if out.ndim == 0:
        return float(out)
    return out


def _log_inv_logit(x: np.ndarray) -> np.ndarray:
    """log of the sigmoid, computed without underflow to -inf for finite x."""
    return -np.logaddexp(0.0, -x)


@dataclass(frozen=True)
class HyperParams:
    """Shrinkage hyperparameters and the vague priors on non-shrunk parameters.

    ``mu_lambda`` and ``sigma_lambda`` may be scalars (broadcast) or arrays
    matching the prior's full inclusion-variable block (per covariate for
    the basic prior; group entries first for the grouped prior;
    covariate-major for the additive-model prior).
    """

    tau: float = 5.0
    mu_lambda: float | np.ndarray = 0.0
    sigma_lambda: float | np.ndarray = 10.0
    intercept_sd: float = 10.0
    noise_scale_sd: float = 5.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ModelSpecError(f"tau must be positive, got {self.tau}")
        if np.any(np.asarray(self.sigma_lambda) <= 0):
            raise ModelSpecError("sigma_lambda must be positive")
        if self.intercept_sd <= 0 or self.noise_scale_sd <= 0:
            raise ModelSpecError("intercept_sd and noise_scale_sd must be positive")

    @classmethod
    def for_inclusion_prob(cls, a: float, **kwargs) -> "HyperParams":
        """Set the logit-scale location from a prior inclusion probability."""
        if not 0.0 < a < 1.0:
            raise ModelSpecError(f"inclusion probability must be in (0,1), got {a}")
        return cls(mu_lambda=logit(a), **kwargs)


@dataclass(frozen=True)
class ModelSpec:
    """Likelihood family, prior structure, and structural metadata."""

    likelihood: Likelihood
    prior: Prior
    p: int
    groups: np.ndarray | None = None
    knots: KnotGrid | None = None
    hyper: HyperParams = field(default_factory=HyperParams)
    n: int | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ModelSpecError(f"covariate count must be >= 1, got {self.p}")
        object.__setattr__(self, "likelihood", Likelihood(self.likelihood))
        object.__setattr__(self, "prior", Prior(self.prior))
        if self.prior is Prior.LNCASS_GROUPED:
            groups = _normalize_groups(self.groups, self.p)
            object.__setattr__(self, "groups", groups)
        elif self.groups is not None:
            raise ModelSpecError(f"groups are only valid for {Prior.LNCASS_GROUPED}")
        if self.prior is Prior.LNCASS_GAM:
            if self.knots is None:
                raise ModelSpecError("the additive-model prior requires a knot grid")
        elif self.knots is not None:
            raise ModelSpecError(f"knots are only valid for {Prior.LNCASS_GAM}")

    @property
    def has_noise_scale(self) -> bool:
        return self.likelihood is Likelihood.LINEAR

    @property
    def n_groups(self) -> int:
        if self.groups is None:
            raise ModelSpecError("model has no group structure")
        return int(self.groups.max()) + 1


def _normalize_groups(groups, p: int) -> np.ndarray:
    if groups is None:
        raise ModelSpecError("the grouped prior requires a covariate-to-group map")
    if isinstance(groups, dict):
        missing = sorted(set(range(p)) - set(groups))
        if missing:
            raise ModelSpecError(f"covariates missing a group assignment: {missing}")
        arr = np.array([int(groups[i]) for i in range(p)])
    else:
        arr = np.asarray(groups, dtype=int)
    if arr.shape != (p,):
        raise DimensionError(f"group map has shape {arr.shape}, expected ({p},)")
    ids = np.unique(arr)
    if ids[0] != 0 or not np.array_equal(ids, np.arange(ids.size)):
        raise ModelSpecError(
            f"group ids must be 0..G-1 with every group non-empty, got {ids.tolist()}"
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParameterVector:
    """Flat unconstrained parameter values with a bijective name map."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size != len(self.names):
            raise DimensionError(
                f"{values.size} values for {len(self.names)} names"
            )
        if len(set(self.names)) != len(self.names):
            raise ModelSpecError("parameter names must be unique")
        if not np.all(np.isfinite(values)):
            raise DataError("parameter values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


@dataclass(frozen=True)
class LogDensityResult:
    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class ParamLayout:
    """Index structure of the unconstrained vector for one model spec.

    The vector is [coefficients, inclusion variables, intercept, log_sigma?]
    with the two leading blocks equal-length and position-aligned: the
    inclusion variable controlling coefficient j sits at offset j of the
    second block.  ``parent_pos``/``parent_of`` record which coefficients
    additionally inherit a parent inclusion variable.
    """

    kind: str  # "lncass" or "horseshoe"
    d_coef: int
    has_noise: bool
    names: tuple[str, ...]
    parent_pos: np.ndarray
    parent_of: np.ndarray

    @property
    def dim(self) -> int:
        return 2 * self.d_coef + 1 + int(self.has_noise)

    @property
    def intercept_index(self) -> int:
        return 2 * self.d_coef

    def split(self, x: np.ndarray):
        d = self.d_coef
        log_sigma = x[2 * d + 1] if self.has_noise else None
        return x[:d], x[d : 2 * d], x[2 * d], log_sigma


def layout_for(spec: ModelSpec) -> ParamLayout:
    p = spec.p
    empty = np.empty(0, dtype=np.int64)
    if spec.prior is Prior.LNCASS:
        names = [f"theta[{i}]" for i in range(p)]
        names += [f"lambda_tilde[{i}]" for i in range(p)]
        kind, d_coef, parent_pos, parent_of = "lncass", p, empty, empty
    elif spec.prior is Prior.HORSESHOE:
        names = [f"theta[{i}]" for i in range(p)]
        names += [f"log_lambda[{i}]" for i in range(p)]
        kind, d_coef, parent_pos, parent_of = "horseshoe", p, empty, empty
    elif spec.prior is Prior.LNCASS_GROUPED:
        g = spec.n_groups
        names = [f"theta_group[{k}]" for k in range(g)]
        names += [f"theta[{i}]" for i in range(p)]
        names += [f"lambda_tilde_group[{k}]" for k in range(g)]
        names += [f"lambda_tilde[{i}]" for i in range(p)]
        kind, d_coef = "lncass", g + p
        parent_pos = np.arange(g, g + p, dtype=np.int64)
        parent_of = spec.groups.astype(np.int64)
    else:  # LNCASS_GAM, covariate-major / knot-minor flattening
        m = spec.knots.size
        names = [f"omega[{k},{i}]" for i in range(p) for k in range(m)]
        names += [f"lambda_tilde[{k},{i}]" for i in range(p) for k in range(m)]
        kind, d_coef = "lncass", p * m
        flat = np.arange(p * m, dtype=np.int64)
        parent_pos = flat[flat % m != 0]
        parent_of = (parent_pos // m) * m
    names.append("intercept")
    has_noise = spec.has_noise_scale
    if has_noise:
        names.append("log_sigma")
    return ParamLayout(
        kind=kind,
        d_coef=d_coef,
        has_noise=has_noise,
        names=tuple(names),
        parent_pos=parent_pos,
        parent_of=parent_of,
    )


def _broadcast_hyper(value, size: int, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    if arr.shape != (size,):
        raise DimensionError(
            f"{what} has shape {arr.shape}; expected a scalar or length {size}"
        )
    return arr


def _lncass_value_grad(
    coef: np.ndarray,
    lam_tilde: np.ndarray,
    parent_pos: np.ndarray,
    parent_of: np.ndarray,
    mu: np.ndarray,
    sig: np.ndarray,
    tau: float,
):
    """Value and gradient of the shrinkage prior with product-scale hierarchy.

    Coefficient j has prior N(0, (m_j tau)^2) with m_j the product of its
    own inclusion probability and, where present, its parent's; every
    inclusion variable's logit has prior N(mu, sig^2).
    """
    d = coef.size
    log_lam = _log_inv_logit(lam_tilde)
    lam = np.exp(log_lam)
    log_mult = log_lam.copy()
    if parent_pos.size:
        log_mult[parent_pos] += log_lam[parent_of]
    inv_var = np.exp(-2.0 * (log_mult + math.log(tau)))
    q = coef * coef * inv_var
    z = (lam_tilde - mu) / sig
    value = (
        -(log_mult.sum() + d * math.log(tau))
        - 0.5 * d * _LOG_2PI
        - 0.5 * q.sum()
        - np.log(sig).sum()
        - 0.5 * d * _LOG_2PI
        - 0.5 * (z * z).sum()
    )
    grad_coef = -coef * inv_var
    a = q - 1.0
    if parent_pos.size:
        a = a + np.bincount(parent_of, weights=q[parent_pos] - 1.0, minlength=d)
    grad_lt = (1.0 - lam) * a - z / sig
    return value, grad_coef, grad_lt


def _horseshoe_value_grad(
    coef: np.ndarray, log_lam: np.ndarray, tau: float
):
    """Half-Cauchy(0,1) local scales on the log scale, slab scale ``tau``.

    The +log(lambda) change-of-variables term cancels the -log(lambda) of
    the coefficient density, which keeps the expression short.
    """
    d = coef.size
    inv_var = np.exp(-2.0 * (log_lam + math.log(tau)))
    q = coef * coef * inv_var
    lam2 = np.exp(2.0 * log_lam)
    value = (
        -d * math.log(tau)
        - 0.5 * d * _LOG_2PI
        - 0.5 * q.sum()
        + d * _LOG_HALF_CAUCHY
        - np.log1p(lam2).sum()
    )
    grad_coef = -coef * inv_var
    grad_log_lam = q - 2.0 * lam2 / (1.0 + lam2)
    return value, grad_coef, grad_log_lam


def log_prior_lncass_basic(theta, lambda_tilde, hyper: HyperParams) -> float:
    """Independent shrinkage: theta_i ~ N(0, (lambda_i tau)^2) with logit-normal
    inclusion probabilities lambda_i, scored on the unconstrained logit scale."""
    theta = np.asarray(theta, dtype=float)
    lambda_tilde = np.asarray(lambda_tilde, dtype=float)
    if theta.shape != lambda_tilde.shape or theta.ndim != 1:
        raise DimensionError(
            f"theta has shape {theta.shape}, lambda_tilde {lambda_tilde.shape}"
        )
    mu = _broadcast_hyper(hyper.mu_lambda, theta.size, "mu_lambda")
    sig = _broadcast_hyper(hyper.sigma_lambda, theta.size, "sigma_lambda")
    empty = np.empty(0, dtype=np.int64)
    value, _, _ = _lncass_value_grad(
        theta, lambda_tilde, empty, empty, mu, sig, hyper.tau
    )
    return float(value)


def log_prior_lncass_grouped(
    theta_group, lambda_tilde_group, theta, lambda_tilde, groups, hyper: HyperParams
) -> float:
    """Group-then-covariate shrinkage; the effective coefficient is
    beta_i = theta_group[g_i] + theta_i."""
    theta_group = np.asarray(theta_group, dtype=float)
    lambda_tilde_group = np.asarray(lambda_tilde_group, dtype=float)
    theta = np.asarray(theta, dtype=float)
    lambda_tilde = np.asarray(lambda_tilde, dtype=float)
    if theta_group.shape != lambda_tilde_group.shape or theta.shape != lambda_tilde.shape:
        raise DimensionError(
            f"coefficient/inclusion blocks disagree: group {theta_group.shape} vs "
            f"{lambda_tilde_group.shape}, covariate {theta.shape} vs {lambda_tilde.shape}"
        )
    gmap = _normalize_groups(groups, theta.size)
    g = int(gmap.max()) + 1
    if theta_group.size != g:
        raise DimensionError(
            f"{theta_group.size} group coefficients for {g} groups"
        )
    coef = np.concatenate([theta_group, theta])
    lt = np.concatenate([lambda_tilde_group, lambda_tilde])
    mu = _broadcast_hyper(hyper.mu_lambda, coef.size, "mu_lambda")
    sig = _broadcast_hyper(hyper.sigma_lambda, coef.size, "sigma_lambda")
    parent_pos = np.arange(g, g + theta.size, dtype=np.int64)
    value, _, _ = _lncass_value_grad(
        coef, lt, parent_pos, gmap.astype(np.int64), mu, sig, hyper.tau
    )
    return float(value)


def log_prior_lncass_gam(omega, lambda_tilde, hyper: HyperParams) -> float:
    """Linear-then-nonlinear shrinkage on basis weights.

    ``omega`` and ``lambda_tilde`` are M x p matrices indexed [knot,
    covariate]; row 0 is the linear term, whose inclusion probability also
    scales every higher row of its covariate.
    """
    omega = np.asarray(omega, dtype=float)
    lambda_tilde = np.asarray(lambda_tilde, dtype=float)
    if omega.shape != lambda_tilde.shape or omega.ndim != 2:
        raise DimensionError(
            f"omega has shape {omega.shape}, lambda_tilde {lambda_tilde.shape}"
        )
    m, p = omega.shape
    coef = omega.T.reshape(-1)  # covariate-major, knot-minor
    lt = lambda_tilde.T.reshape(-1)
    mu = _broadcast_hyper(hyper.mu_lambda, coef.size, "mu_lambda")
    sig = _broadcast_hyper(hyper.sigma_lambda, coef.size, "sigma_lambda")
    flat = np.arange(p * m, dtype=np.int64)
    parent_pos = flat[flat % m != 0]
    parent_of = (parent_pos // m) * m
    value, _, _ = _lncass_value_grad(
        coef, lt, parent_pos, parent_of, mu, sig, hyper.tau
    )
    return float(value)


def log_prior_horseshoe(theta, aux, hyper: HyperParams) -> float:
    """Horseshoe baseline: N(0, (lambda_i tau)^2) coefficients with
    half-Cauchy(0,1) local scales lambda_i = exp(aux_i), including the
    change-of-variables term for the log parameterization."""
    theta = np.asarray(theta, dtype=float)
    aux = np.asarray(aux, dtype=float)
    if theta.shape != aux.shape or theta.ndim != 1:
        raise DimensionError(f"theta has shape {theta.shape}, aux {aux.shape}")
    value, _, _ = _horseshoe_value_grad(theta, aux, hyper.tau)
    return float(value)


@dataclass(frozen=True)
class FitContext:
    """Precomputed quantities for repeated posterior evaluations on one dataset.

    ``design`` maps the coefficient block to the linear predictor: the raw
    covariates for the basic and horseshoe priors, [group-sums | covariates]
    for the grouped prior, and the hinge-basis expansion for the additive
    model.
    """

    spec: ModelSpec
    layout: ParamLayout
    design: np.ndarray
    y: np.ndarray
    mu: np.ndarray
    sig: np.ndarray

    @property
    def dim(self) -> int:
        return self.layout.dim

    def logp_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        spec, lay = self.spec, self.layout
        d = lay.d_coef
        coef = x[:d]
        scales = x[d : 2 * d]
        intercept = x[2 * d]
        eta = self.design @ coef
        eta += intercept
        grad = np.empty(lay.dim)
        if spec.likelihood is Likelihood.LOGISTIC:
            value = float(self.y @ eta - np.logaddexp(0.0, eta).sum())
            u = self.y - inv_logit(eta)
        else:
            log_sigma = x[2 * d + 1]
            if not -350.0 < log_sigma < 350.0:
                # sigma under/overflows double precision; the sampler treats
                # a non-finite density as a divergent leaf
                return -math.inf, np.zeros(lay.dim)
            sigma2 = math.exp(2.0 * log_sigma)
            resid = self.y - eta
            ssr = float(resid @ resid)
            n = self.y.size
            value = -n * log_sigma - 0.5 * n * _LOG_2PI - 0.5 * ssr / sigma2
            u = resid / sigma2
            nsd = spec.hyper.noise_scale_sd
            # half-normal prior on sigma plus the log-Jacobian of exp
            value += (
                math.log(2.0)
                - math.log(nsd)
                - 0.5 * _LOG_2PI
                - 0.5 * sigma2 / nsd**2
                + log_sigma
            )
            grad[2 * d + 1] = (-n + ssr / sigma2) + (1.0 - sigma2 / nsd**2)
        grad[:d] = u @ self.design
        grad[2 * d] = u.sum()
        if lay.kind == "lncass":
            pv, g_coef, g_scale = _lncass_value_grad(
                coef, scales, lay.parent_pos, lay.parent_of,
                self.mu, self.sig, spec.hyper.tau,
            )
        else:
            pv, g_coef, g_scale = _horseshoe_value_grad(coef, scales, spec.hyper.tau)
        value += pv
        grad[:d] += g_coef
        grad[d : 2 * d] = g_scale
        isd = spec.hyper.intercept_sd
        value += -math.log(isd) - 0.5 * _LOG_2PI - 0.5 * (intercept / isd) ** 2
        grad[2 * d] += -intercept / isd**2
        return value, grad

    def _likelihood_parts(self, eta: np.ndarray, x: np.ndarray, grad: np.ndarray):
        """(log lik + noise hyperprior, d/d eta); fills the log_sigma gradient."""
        spec, lay = self.spec, self.layout
        d = lay.d_coef
        if spec.likelihood is Likelihood.LOGISTIC:
            value = float(self.y @ eta - np.logaddexp(0.0, eta).sum())
            return value, self.y - inv_logit(eta)
        log_sigma = x[2 * d + 1]
        if not -350.0 < log_sigma < 350.0:
            return -math.inf, None
        sigma2 = math.exp(2.0 * log_sigma)
        resid = self.y - eta
        ssr = float(resid @ resid)
        n = self.y.size
        nsd = spec.hyper.noise_scale_sd
        value = (
            -n * log_sigma
            - 0.5 * n * _LOG_2PI
            - 0.5 * ssr / sigma2
            + math.log(2.0)
            - math.log(nsd)
            - 0.5 * _LOG_2PI
            - 0.5 * sigma2 / nsd**2
            + log_sigma
        )
        grad[2 * d + 1] = (-n + ssr / sigma2) + (1.0 - sigma2 / nsd**2)
        return value, resid / sigma2

    def logp_and_grad_noncentered(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Posterior density in the sampling parameterization.

        Coefficients are sampled as unit-normal multipliers of their prior
        scale and inclusion logits as standardized offsets, which removes
        the funnel between coefficients and inclusion variables; the
        intercept and log noise scale are sampled directly.  This is the
        exact pushforward of :meth:`logp_and_grad` under that change of
        variables, so transformed draws target the same posterior.
        """
        spec, lay = self.spec, self.layout
        d = lay.d_coef
        z = x[:d]
        w = x[d : 2 * d]
        intercept = x[2 * d]
        grad = np.empty(lay.dim)
        if lay.kind == "lncass":
            lam_tilde = self.mu + self.sig * w
            log_lam = _log_inv_logit(lam_tilde)
            log_mult = log_lam.copy()
            if lay.parent_pos.size:
                log_mult[lay.parent_pos] += log_lam[lay.parent_of]
            scale = np.exp(log_mult) * spec.hyper.tau
            hier_extra = 0.0
        else:  # horseshoe: local scales on the log scale, half-Cauchy prior
            lam2 = np.exp(2.0 * w)
            scale = np.exp(w) * spec.hyper.tau
            hier_extra = float(
                d * _LOG_HALF_CAUCHY - np.log1p(lam2).sum() + w.sum()
            )
        coef = z * scale
        eta = self.design @ coef
        eta += intercept
        value, u = self._likelihood_parts(eta, x, grad)
        if u is None:
            return -math.inf, np.zeros(lay.dim)
        dll_dcoef = u @ self.design
        grad[:d] = dll_dcoef * scale - z
        e = dll_dcoef * coef
        if lay.kind == "lncass":
            if lay.parent_pos.size:
                e = e + np.bincount(
                    lay.parent_of, weights=e[lay.parent_pos], minlength=d
                )
            lam = np.exp(log_lam)
            grad[d : 2 * d] = self.sig * (1.0 - lam) * e - w
            value += -0.5 * d * _LOG_2PI - 0.5 * float(w @ w)
        else:
            grad[d : 2 * d] = e + 1.0 - 2.0 * lam2 / (1.0 + lam2)
            value += hier_extra
        value += -0.5 * d * _LOG_2PI - 0.5 * float(z @ z)
        isd = spec.hyper.intercept_sd
        value += -math.log(isd) - 0.5 * _LOG_2PI - 0.5 * (intercept / isd) ** 2
        grad[2 * d] = u.sum() - intercept / isd**2
        return value, grad

    def sampling_logp_grad(self):
        """Fastest available callable for the sampling-space density.

        Returns a function x -> (value, gradient) matching
        :meth:`logp_and_grad_noncentered`; uses the compiled kernel when
        numba is present.
        """
        from . import _kernels

        if not _kernels.HAVE_NUMBA:
            return self.logp_and_grad_noncentered
        lay = self.layout
        args = (
            lay.d_coef,
            self.design,
            self.y,
            self.mu,
            self.sig,
            lay.parent_pos,
            lay.parent_of,
            float(self.spec.hyper.tau),
            float(self.spec.hyper.intercept_sd),
            float(self.spec.hyper.noise_scale_sd),
            lay.kind == "lncass",
            self.spec.likelihood is Likelihood.LOGISTIC,
        )
        dim = lay.dim
        kernel = _kernels.nc_logp_grad

        def logp_grad(x: np.ndarray) -> tuple[float, np.ndarray]:
            grad = np.empty(dim)
            value = kernel(x, *args, grad)
            return value, grad

        return logp_grad

    def sampling_leaf(self):
        """Fused leapfrog-plus-density step for the tree base case, or None."""
        from . import _kernels

        if not _kernels.HAVE_NUMBA:
            return None
        lay = self.layout
        args = (
            lay.d_coef,
            self.design,
            self.y,
            self.mu,
            self.sig,
            lay.parent_pos,
            lay.parent_of,
            float(self.spec.hyper.tau),
            float(self.spec.hyper.intercept_sd),
            float(self.spec.hyper.noise_scale_sd),
            lay.kind == "lncass",
            self.spec.likelihood is Likelihood.LOGISTIC,
        )
        kernel = _kernels.nc_leaf

        def leaf(q, p, grad, eps, inv_mass):
            return kernel(q, p, grad, eps, inv_mass, *args)

        return leaf

    def constrain(self, z_draws: np.ndarray) -> np.ndarray:
        """Map sampling-space draws (rows) to the reported parameterization."""
        z_draws = np.atleast_2d(z_draws)
        d = self.layout.d_coef
        out = z_draws.copy()
        w = z_draws[:, d : 2 * d]
        if self.layout.kind == "lncass":
            lam_tilde = self.mu[None, :] + self.sig[None, :] * w
            log_lam = _log_inv_logit(lam_tilde)
            log_mult = log_lam.copy()
            if self.layout.parent_pos.size:
                log_mult[:, self.layout.parent_pos] += log_lam[:, self.layout.parent_of]
            out[:, d : 2 * d] = lam_tilde
            out[:, :d] = z_draws[:, :d] * np.exp(log_mult) * self.spec.hyper.tau
        else:
            out[:, :d] = z_draws[:, :d] * np.exp(w) * self.spec.hyper.tau
        return out


def build_context(spec: ModelSpec, data: Dataset) -> FitContext:
    """Validate data against the spec and precompute the fitting design."""
    X = np.asarray(data.X, dtype=float)
    y = np.asarray(data.y, dtype=float)
    if X.shape[1] != spec.p:
        raise DimensionError(f"data has {X.shape[1]} covariates, spec expects {spec.p}")
    if spec.n is not None and X.shape[0] != spec.n:
        raise DimensionError(f"data has {X.shape[0]} rows, spec expects {spec.n}")
    if not np.all(np.isfinite(X)):
        raise DataError("design contains non-finite entries; preprocess first")
    if not np.all(np.isfinite(y)):
        raise DataError("response contains non-finite entries")
    if spec.likelihood is Likelihood.LOGISTIC:
        values = np.unique(y)
        if not np.all(np.isin(values, (0.0, 1.0))):
            raise DataError(
                f"logistic likelihood requires a 0/1 response, got {values[:6].tolist()}"
            )
    layout = layout_for(spec)
    if spec.prior is Prior.LNCASS_GROUPED:
        g = spec.n_groups
        group_sums = np.zeros((X.shape[0], g))
        for k in range(g):
            group_sums[:, k] = X[:, spec.groups == k].sum(axis=1)
        design = np.ascontiguousarray(np.concatenate([group_sums, X], axis=1))
    elif spec.prior is Prior.LNCASS_GAM:
        design = np.ascontiguousarray(expand_design(X, spec.knots))
    else:
        design = np.ascontiguousarray(X)
    if layout.kind == "lncass":
        mu = _broadcast_hyper(spec.hyper.mu_lambda, layout.d_coef, "mu_lambda")
        sig = _broadcast_hyper(spec.hyper.sigma_lambda, layout.d_coef, "sigma_lambda")
    else:
        mu = np.empty(0)
        sig = np.empty(0)
    return FitContext(spec=spec, layout=layout, design=design, y=y, mu=mu, sig=sig)


def log_likelihood(spec: ModelSpec, data: Dataset, params) -> float:
    """Log-likelihood of the data under the spec at the given parameters."""
    ctx = build_context(spec, data)
    x = _as_values(ctx, params)
    lay = ctx.layout
    d = lay.d_coef
    eta = ctx.design @ x[:d] + x[2 * d]
    if spec.likelihood is Likelihood.LOGISTIC:
        return float(ctx.y @ eta - np.logaddexp(0.0, eta).sum())
    log_sigma = x[2 * d + 1]
    sigma2 = math.exp(2.0 * log_sigma)
    resid = ctx.y - eta
    n = ctx.y.size
    return float(-n * log_sigma - 0.5 * n * _LOG_2PI - 0.5 * (resid @ resid) / sigma2)


def log_posterior_with_gradient(
    spec: ModelSpec, data: Dataset, params
) -> LogDensityResult:
    """Unnormalized log posterior and its exact gradient."""
    ctx = build_context(spec, data)
    x = _as_values(ctx, params)
    value, grad = ctx.logp_and_grad(x)
    return LogDensityResult(value=float(value), gradient=grad)


def _as_values(ctx: FitContext, params) -> np.ndarray:
    if isinstance(params, ParameterVector):
        if params.names != ctx.layout.names:
            raise DimensionError(
                f"parameter names do not match the spec layout "
                f"({len(params.names)} given, {ctx.dim} expected)"
            )
        return params.values
    x = np.asarray(params, dtype=float)
    if x.shape != (ctx.dim,):
        raise DimensionError(f"parameters have shape {x.shape}, expected ({ctx.dim},)")
    return x


def parameter_vector(spec: ModelSpec, values) -> ParameterVector:
    """Wrap raw values in a named vector laid out for the spec."""
    return ParameterVector(values=np.asarray(values, dtype=float),
                           names=layout_for(spec).names)


def beta_draws(spec: ModelSpec, coef_draws: np.ndarray) -> np.ndarray:
    """Effective regression coefficients from coefficient-block draws.

    For the grouped prior beta_i = theta_group[g_i] + theta_i; otherwise the
    coefficient block already is beta.  Not defined for the additive model.
    """
    coef_draws = np.atleast_2d(np.asarray(coef_draws, dtype=float))
    if spec.prior is Prior.LNCASS_GROUPED:
        g = spec.n_groups
        return coef_draws[:, g + np.arange(spec.p)] + coef_draws[:, spec.groups]
    if spec.prior is Prior.LNCASS_GAM:
        raise ModelSpecError("the additive model has per-basis weights, not a beta")
    return coef_draws[:, : spec.p]


def predict_eta(
    spec: ModelSpec, X: np.ndarray, coef_draws: np.ndarray, intercept_draws: np.ndarray
) -> np.ndarray:
    """Linear predictor draws (n_obs x n_draws) on new covariates."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != spec.p:
        raise DimensionError(f"X has {X.shape[1]} covariates, spec expects {spec.p}")
    if spec.prior is Prior.LNCASS_GAM:
        design = expand_design(np.clip(X, 0.0, 1.0), spec.knots)
        return design @ coef_draws.T + intercept_draws[None, :]
    if spec.prior is Prior.LNCASS_GROUPED:
        betas = beta_draws(spec, coef_draws)
    else:
        betas = coef_draws[:, : spec.p]
    return X @ betas.T + intercept_draws[None, :]

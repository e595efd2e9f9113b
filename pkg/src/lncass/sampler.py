"""Gradient-based MCMC: leapfrog, no-U-turn trajectories, adaptation, diagnostics.

The transition kernel builds a binary trajectory tree doubling in a random
direction each level, selects the proposal multinomially by density weight,
and stops on the no-U-turn criterion or an energy error above the
divergence threshold.  Warmup adapts the step size by dual averaging
toward a target acceptance statistic and a diagonal mass matrix over
expanding memory windows.  Chains own independent counter-based PRNG
streams (Philox) spawned from the seed, so runs are reproducible and
independent of how chains are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import HAVE_NUMBA
from ._kernels import uturn as _uturn_jit
from .errors import DimensionError, ModelSpecError, SamplingError

_DIVERGENCE_THRESHOLD = 1000.0
_GENERATOR_NAME = "philox"


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("chains", "warmup", "draws", "max_tree_depth"):
            if getattr(self, name) < 1:
                raise ModelSpecError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.target_accept < 1.0:
            raise ModelSpecError(
                f"target_accept must be in (0,1), got {self.target_accept}"
            )


@dataclass(frozen=True)
class PosteriorDraws:
    """Post-warmup draws (chains x draws x dim) with per-chain statistics."""

    array: np.ndarray
    names: tuple[str, ...]
    divergences: np.ndarray
    accept_rate: np.ndarray
    step_size: np.ndarray
    seed: int
    generator: str = _GENERATOR_NAME

    def __post_init__(self):
        if self.array.ndim != 3 or self.array.shape[2] != len(self.names):
            raise DimensionError(
                f"draws have shape {self.array.shape} for {len(self.names)} names"
            )
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def n_chains(self) -> int:
        return self.array.shape[0]

    @property
    def n_draws(self) -> int:
        return self.array.shape[1]

    def index(self, param: str) -> int:
        try:
            return self.names.index(param)
        except ValueError:
            raise ModelSpecError(f"unknown parameter {param!r}") from None

    def get(self, param: str) -> np.ndarray:
        """(chains, draws) array for one parameter."""
        return self.array[:, :, self.index(param)]

    def pooled(self, param: str) -> np.ndarray:
        return self.get(param).reshape(-1)

    def with_derived(self, names, values: np.ndarray) -> "PosteriorDraws":
        """Append derived per-draw quantities (chains x draws x k) as new columns."""
        if values.shape[:2] != self.array.shape[:2] or values.shape[2] != len(names):
            raise DimensionError(
                f"derived values have shape {values.shape}; expected "
                f"{self.array.shape[:2]} x {len(names)}"
            )
        return PosteriorDraws(
            array=np.concatenate([self.array, values], axis=2),
            names=tuple(self.names) + tuple(names),
            divergences=self.divergences,
            accept_rate=self.accept_rate,
            step_size=self.step_size,
            seed=self.seed,
            generator=self.generator,
        )


def leapfrog(position, momentum, stepsize, steps, grad, mass_diag):
    """Run ``steps`` leapfrog updates of H = -log pi(q) + p' M^-1 p / 2.

    ``grad`` maps a position to the gradient of log pi; ``mass_diag`` is the
    diagonal of M.  Non-finite gradients are not raised here: they surface
    as non-finite state, which the sampler flags as a divergence.
    """
    if stepsize <= 0:
        raise ModelSpecError(f"stepsize must be positive, got {stepsize}")
    if steps < 1:
        raise ModelSpecError(f"steps must be >= 1, got {steps}")
    q = np.array(position, dtype=float)
    p = np.array(momentum, dtype=float)
    inv_mass = 1.0 / np.asarray(mass_diag, dtype=float)
    p = p + 0.5 * stepsize * grad(q)
    for step in range(steps):
        q = q + stepsize * (inv_mass * p)
        g = grad(q)
        p = p + (stepsize if step < steps - 1 else 0.5 * stepsize) * g
    return q, p


class _TreeState:
    """One built subtree: endpoints, multinomial proposal, and stop flags."""

    __slots__ = (
        "q_minus", "p_minus", "g_minus", "q_plus", "p_plus", "g_plus",
        "q_prop", "logp_prop", "g_prop", "log_w", "alpha", "n_alpha",
        "stop", "diverged",
    )


class _NutsKernel:
    """Single-chain transition kernel with mutable step size and metric."""

    def __init__(self, logp_grad, dim, max_tree_depth, rng, leaf_fn=None):
        self.logp_grad = logp_grad
        self.dim = dim
        self.max_tree_depth = max_tree_depth
        self.rng = rng
        self.leaf_fn = leaf_fn
        self.inv_mass = np.ones(dim)
        self.mom_std = np.ones(dim)
        self.eps = 1.0

    def set_inv_mass(self, inv_mass: np.ndarray) -> None:
        self.inv_mass = inv_mass
        self.mom_std = 1.0 / np.sqrt(inv_mass)

    def _kinetic(self, p: np.ndarray) -> float:
        return 0.5 * float(p @ (self.inv_mass * p))

    def _leaf(self, q, p, grad, direction, h0):
        eps = direction * self.eps
        if self.leaf_fn is not None:
            q1, p1, g1, logp1, kin = self.leaf_fn(q, p, grad, eps, self.inv_mass)
            h = -logp1 + kin
        else:
            p1 = p + 0.5 * eps * grad
            q1 = q + eps * (self.inv_mass * p1)
            logp1, g1 = self.logp_grad(q1)
            p1 = p1 + 0.5 * eps * g1
            h = -logp1 + self._kinetic(p1)
        energy_error = h - h0  # non-finite state propagates to a NaN/inf error
        t = _TreeState()
        t.q_minus = t.q_plus = t.q_prop = q1
        t.p_minus = t.p_plus = p1
        t.g_minus = t.g_plus = t.g_prop = g1
        t.logp_prop = logp1
        if energy_error <= _DIVERGENCE_THRESHOLD:  # False for NaN
            t.log_w = -energy_error
            t.alpha = 1.0 if energy_error <= 0.0 else math.exp(-energy_error)
            t.diverged = False
        else:
            t.log_w = -math.inf
            t.alpha = 0.0
            t.diverged = True
        t.n_alpha = 1
        t.stop = False
        return t

    if HAVE_NUMBA:

        def _uturn(self, q_minus, q_plus, p_minus, p_plus) -> bool:
            return _uturn_jit(q_minus, q_plus, p_minus, p_plus, self.inv_mass)

    else:

        def _uturn(self, q_minus, q_plus, p_minus, p_plus) -> bool:
            dq = q_plus - q_minus
            return (
                dq @ (self.inv_mass * p_minus) < 0.0
                or dq @ (self.inv_mass * p_plus) < 0.0
            )

    def _build(self, q, p, grad, direction, depth, h0):
        if depth == 0:
            return self._leaf(q, p, grad, direction, h0)
        t = self._build(q, p, grad, direction, depth - 1, h0)
        if t.stop or t.diverged:
            return t
        if direction < 0:
            t2 = self._build(t.q_minus, t.p_minus, t.g_minus, direction, depth - 1, h0)
            t.q_minus, t.p_minus, t.g_minus = t2.q_minus, t2.p_minus, t2.g_minus
        else:
            t2 = self._build(t.q_plus, t.p_plus, t.g_plus, direction, depth - 1, h0)
            t.q_plus, t.p_plus, t.g_plus = t2.q_plus, t2.p_plus, t2.g_plus
        t.alpha += t2.alpha
        t.n_alpha += t2.n_alpha
        t.diverged = t.diverged or t2.diverged
        if not t2.diverged:
            total = np.logaddexp(t.log_w, t2.log_w)
            if t2.log_w > -math.inf and self.rng.random() < math.exp(
                t2.log_w - total
            ):
                t.q_prop, t.logp_prop, t.g_prop = t2.q_prop, t2.logp_prop, t2.g_prop
            t.log_w = total
        t.stop = t2.stop or self._uturn(t.q_minus, t.q_plus, t.p_minus, t.p_plus)
        return t

    def transition(self, q, logp, grad):
        """One trajectory; returns (q', logp', grad', accept_stat, diverged, depth)."""
        p0 = self.rng.standard_normal(self.dim) * self.mom_std
        h0 = -logp + self._kinetic(p0)
        q_minus = q_plus = q
        p_minus = p_plus = p0
        g_minus = g_plus = grad
        q_prop, logp_prop, g_prop = q, logp, grad
        log_w = 0.0
        alpha_sum = 0.0
        n_alpha = 0
        diverged = False
        depth = 0
        while depth < self.max_tree_depth:
            if self.rng.random() < 0.5:
                direction = 1
                t = self._build(q_plus, p_plus, g_plus, direction, depth, h0)
            else:
                direction = -1
                t = self._build(q_minus, p_minus, g_minus, direction, depth, h0)
            alpha_sum += t.alpha
            n_alpha += t.n_alpha
            if t.diverged:
                diverged = True
                break
            if t.stop:
                break
            if direction < 0:
                q_minus, p_minus, g_minus = t.q_minus, t.p_minus, t.g_minus
            else:
                q_plus, p_plus, g_plus = t.q_plus, t.p_plus, t.g_plus
            # biased progressive sampling favors the newer half-trajectory
            if t.log_w > -math.inf:
                p_swap = 1.0 if t.log_w >= log_w else math.exp(t.log_w - log_w)
                if self.rng.random() < p_swap:
                    q_prop, logp_prop, g_prop = t.q_prop, t.logp_prop, t.g_prop
            log_w = np.logaddexp(log_w, t.log_w)
            depth += 1
            if self._uturn(q_minus, q_plus, p_minus, p_plus):
                break
        accept_stat = alpha_sum / max(n_alpha, 1)
        return q_prop, logp_prop, g_prop, accept_stat, diverged, depth

    def find_reasonable_stepsize(self, q, logp, grad) -> float:
        """Double or halve the step size until the one-step accept ratio crosses 1/2."""
        eps = 1.0
        p0 = self.rng.standard_normal(self.dim) * self.mom_std
        h0 = -logp + self._kinetic(p0)

        def energy_after(eps):
            p1 = p0 + 0.5 * eps * grad
            q1 = q + eps * (self.inv_mass * p1)
            logp1, g1 = self.logp_grad(q1)
            if not (math.isfinite(logp1) and np.all(np.isfinite(g1))):
                return math.inf
            p1 = p1 + 0.5 * eps * g1
            return -logp1 + self._kinetic(p1)

        log_ratio = h0 - energy_after(eps)
        direction = 1.0 if log_ratio > math.log(0.5) else -1.0
        for _ in range(100):
            if direction * log_ratio <= -direction * math.log(2.0):
                break
            eps *= 2.0**direction
            if not 1e-10 < eps < 1e7:
                break
            log_ratio = h0 - energy_after(eps)
        return eps


class _DualAveraging:
    """Step-size adaptation toward a target acceptance statistic."""

    GAMMA = 0.05
    T0 = 10.0
    KAPPA = 0.75

    def __init__(self, eps0: float, target: float):
        self.target = target
        self.reset(eps0)

    def reset(self, eps0: float) -> None:
        self.mu = math.log(10.0 * eps0)
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.m = 0

    def update(self, accept_stat: float) -> float:
        self.m += 1
        frac = 1.0 / (self.m + self.T0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.m) / self.GAMMA * self.h_bar
        w = self.m**-self.KAPPA
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    def adapted(self) -> float:
        return math.exp(self.log_eps_bar)


def _adaptation_windows(warmup: int) -> tuple[int, list[int]]:
    """(first mass-window start, window end iterations) for a warmup length.

    Follows the staged schedule: a step-size-only opening buffer, expanding
    mass-estimation windows, and a terminal step-size buffer.
    """
    init_buf, term_buf, base = 75, 50, 25
    if init_buf + term_buf + base > warmup:
        init_buf = max(1, int(0.15 * warmup))
        term_buf = max(1, int(0.10 * warmup))
        base = warmup - init_buf - term_buf
        if base < 5:
            return warmup, []  # too short to estimate a metric
    ends = []
    start, size = init_buf, base
    while start + size <= warmup - term_buf:
        end = start + size
        if end + 2 * size > warmup - term_buf:
            end = warmup - term_buf
        ends.append(end)
        start, size = end, size * 2
    return init_buf, ends


def _regularized_variance(samples: list[np.ndarray]) -> np.ndarray:
    arr = np.asarray(samples)
    n = arr.shape[0]
    var = arr.var(axis=0, ddof=1) if n > 1 else np.ones(arr.shape[1])
    var = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
    return np.maximum(var, 1e-10)


def _run_chain(logp_grad, dim, config: SamplerConfig, seed_seq, leaf_fn=None):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _run_chain_inner(logp_grad, dim, config, seed_seq, leaf_fn)


def _run_chain_inner(logp_grad, dim, config: SamplerConfig, seed_seq, leaf_fn=None):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    q = rng.uniform(-2.0, 2.0, dim)
    logp, grad = logp_grad(q)
    for _ in range(100):
        if math.isfinite(logp) and np.all(np.isfinite(grad)):
            break
        q = rng.uniform(-2.0, 2.0, dim)
        logp, grad = logp_grad(q)
    else:
        raise SamplingError(
            "could not find a finite-density initial point in 100 jittered tries"
        )
    kernel = _NutsKernel(logp_grad, dim, config.max_tree_depth, rng, leaf_fn)
    kernel.eps = kernel.find_reasonable_stepsize(q, logp, grad)
    dual = _DualAveraging(kernel.eps, config.target_accept)
    mass_start, window_ends = _adaptation_windows(config.warmup)
    window_buffer: list[np.ndarray] = []
    divergent_warmup = 0
    for it in range(config.warmup):
        q, logp, grad, accept, diverged, _ = kernel.transition(q, logp, grad)
        divergent_warmup += diverged
        kernel.eps = dual.update(accept)
        if it + 1 > mass_start:
            window_buffer.append(q)
        if it + 1 in window_ends:
            kernel.set_inv_mass(_regularized_variance(window_buffer))
            window_buffer = []
            kernel.eps = kernel.find_reasonable_stepsize(q, logp, grad)
            dual.reset(kernel.eps)
    if divergent_warmup == config.warmup:
        raise SamplingError(
            "every warmup transition diverged; lower target_accept pressure by "
            "reducing the step size (higher target_accept) or check the model "
            "parameterization"
        )
    kernel.eps = dual.adapted()
    draws = np.empty((config.draws, dim))
    divergences = 0
    accept_sum = 0.0
    for it in range(config.draws):
        q, logp, grad, accept, diverged, _ = kernel.transition(q, logp, grad)
        draws[it] = q
        divergences += diverged
        accept_sum += accept
    return draws, divergences, accept_sum / config.draws, kernel.eps


def sample_logdensity(
    logp_grad,
    dim: int,
    config: SamplerConfig,
    names=None,
    threads: int = 1,
    leaf_fn=None,
) -> PosteriorDraws:
    """Sample an arbitrary differentiable log density.

    ``logp_grad(x)`` must return (log density, gradient).  Chains are
    deterministic functions of (seed, chain index), so any ``threads``
    value produces identical output.
    """
    if dim < 1:
        raise ModelSpecError(f"dimension must be >= 1, got {dim}")
    if names is None:
        names = tuple(f"x[{i}]" for i in range(dim))
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)

    def runner(s):
        return _run_chain(logp_grad, dim, config, s, leaf_fn)
    if threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(runner, seeds))
    else:
        results = [runner(s) for s in seeds]
    return PosteriorDraws(
        array=np.stack([r[0] for r in results]),
        names=tuple(names),
        divergences=np.array([r[1] for r in results]),
        accept_rate=np.array([r[2] for r in results]),
        step_size=np.array([r[3] for r in results]),
        seed=config.seed,
    )


def sample(spec, data, config: SamplerConfig, threads: int = 1) -> PosteriorDraws:
    """Fit a model spec to a dataset; returns named posterior draws.

    Sampling runs in the non-centered parameterization (unit-normal
    coefficient multipliers, standardized inclusion logits), which removes
    the shrinkage funnel; draws are mapped back to the reported
    coefficient/logit space before being returned.
    """
    from .model import build_context

    ctx = build_context(spec, data)
    raw = sample_logdensity(
        ctx.sampling_logp_grad(),
        ctx.dim,
        config,
        names=ctx.layout.names,
        threads=threads,
        leaf_fn=ctx.sampling_leaf(),
    )
    chains, n_draws, dim = raw.array.shape
    constrained = ctx.constrain(raw.array.reshape(-1, dim)).reshape(
        chains, n_draws, dim
    )
    return PosteriorDraws(
        array=constrained,
        names=raw.names,
        divergences=raw.divergences,
        accept_rate=raw.accept_rate,
        step_size=raw.step_size,
        seed=raw.seed,
    )


def _split_chains(arr: np.ndarray) -> np.ndarray:
    half = arr.shape[1] // 2
    return np.concatenate([arr[:, :half], arr[:, arr.shape[1] - half :]], axis=0)


def _as_chain_array(draws, param) -> np.ndarray:
    if isinstance(draws, PosteriorDraws):
        if param is None:
            raise ModelSpecError("a parameter name is required with PosteriorDraws")
        arr = draws.get(param)
    else:
        arr = np.asarray(draws, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"expected (chains, draws), got shape {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 4:
        raise ModelSpecError(
            f"diagnostics need >= 2 chains and >= 4 draws, got {arr.shape}"
        )
    return arr


def rhat(draws, param=None) -> float:
    """Split-chain potential scale reduction factor."""
    arr = _as_chain_array(draws, param)
    split = _split_chains(arr)
    n = split.shape[1]
    within = split.var(axis=1, ddof=1).mean()
    between = n * split.mean(axis=1).var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else math.inf
    var_plus = (n - 1.0) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def _autocov_rows(arr: np.ndarray) -> np.ndarray:
    """Biased per-row autocovariance via FFT."""
    m, n = arr.shape
    centered = arr - arr.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    fft = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(fft * np.conjugate(fft), n=size, axis=1)[:, :n]
    return acov / n


def ess(draws, param=None) -> float:
    """Effective sample size with Geyer initial-monotone truncation."""
    arr = _as_chain_array(draws, param)
    total = float(arr.size)
    split = _split_chains(arr)
    m, n = split.shape
    if np.all(split == split.ravel()[0]):
        return total
    acov = _autocov_rows(split)
    mean_acov = acov.mean(axis=0)
    within = acov[:, 0].mean() * n / (n - 1.0)
    var_plus = within * (n - 1.0) / n + split.mean(axis=1).var(ddof=1)
    if var_plus == 0.0:
        return total
    rho = np.zeros(n)
    rho[0] = 1.0
    rho[1:] = 1.0 - (within - mean_acov[1:]) / var_plus
    # Geyer initial positive sequence: keep lag pairs while their sum is positive
    even, odd = rho[0], rho[1]
    rho_kept = np.zeros(n)
    rho_kept[0], rho_kept[1] = even, odd
    t = 1
    while t < n - 3 and even + odd > 0.0:
        even, odd = rho[t + 1], rho[t + 2]
        if even + odd >= 0.0:
            rho_kept[t + 1], rho_kept[t + 2] = even, odd
        t += 2
    max_t = t - 2
    if even > 0.0:
        rho_kept[max_t + 1] = even
    # monotone decrease over pair sums
    t = 1
    while t <= max_t - 2:
        if rho_kept[t + 1] + rho_kept[t + 2] > rho_kept[t - 1] + rho_kept[t]:
            rho_kept[t + 1] = (rho_kept[t - 1] + rho_kept[t]) / 2.0
            rho_kept[t + 2] = rho_kept[t + 1]
        t += 2
    tau = -1.0 + 2.0 * rho_kept[: max_t + 1].sum() + rho_kept[max_t + 1]
    tau = max(tau, 1.0 / math.log10(m * n))
    return float(m * n / tau)

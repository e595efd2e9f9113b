"""Compiled inner loop for posterior evaluation in the sampling space.

The sampler evaluates the non-centered log density and gradient millions
of times per fit; this module compiles that computation with numba when
available.  The arithmetic mirrors the reference implementation in
:mod:`lncass.model` term for term (strict IEEE mode, no fastmath), so
results are deterministic.  Without numba the package falls back to the
numpy implementation.
"""
from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


_LOG_2PI = math.log(2.0 * math.pi)
_LOG_HALF_CAUCHY = math.log(2.0 / math.pi)


@njit(cache=True)
def nc_logp_grad(
    x,
    d,
    design,
    y,
    mu,
    sig,
    parent_pos,
    parent_of,
    tau,
    isd,
    nsd,
    is_lncass,
    is_logistic,
    grad,
):
    """Non-centered posterior value; gradient written into ``grad``."""
    n = y.size
    z = x[:d]
    w = x[d : 2 * d]
    b0 = x[2 * d]
    scale = np.empty(d)
    log_lam = np.empty(d)
    if is_lncass:
        for j in range(d):
            lt = mu[j] + sig[j] * w[j]
            if lt > 0.0:
                log_lam[j] = -math.log1p(math.exp(-lt))
            else:
                log_lam[j] = lt - math.log1p(math.exp(lt))
        log_mult = log_lam.copy()
        for k in range(parent_pos.size):
            log_mult[parent_pos[k]] += log_lam[parent_of[k]]
        for j in range(d):
            scale[j] = math.exp(log_mult[j]) * tau
    else:
        for j in range(d):
            scale[j] = math.exp(w[j]) * tau
    coef = z * scale
    eta = np.dot(design, coef)
    value = 0.0
    u = np.empty(n)
    if is_logistic:
        for i in range(n):
            e = eta[i] + b0
            if e > 0.0:
                sp = e + math.log1p(math.exp(-e))
            else:
                sp = math.log1p(math.exp(e))
            value += y[i] * e - sp
            u[i] = y[i] - 1.0 / (1.0 + math.exp(-e))
    else:
        ls = x[2 * d + 1]
        if ls <= -350.0 or ls >= 350.0:
            grad[:] = 0.0
            return -math.inf
        sigma2 = math.exp(2.0 * ls)
        ssr = 0.0
        for i in range(n):
            r = y[i] - (eta[i] + b0)
            ssr += r * r
            u[i] = r / sigma2
        value += (
            -n * ls
            - 0.5 * n * _LOG_2PI
            - 0.5 * ssr / sigma2
            + math.log(2.0)
            - math.log(nsd)
            - 0.5 * _LOG_2PI
            - 0.5 * sigma2 / (nsd * nsd)
            + ls
        )
        grad[2 * d + 1] = (-n + ssr / sigma2) + (1.0 - sigma2 / (nsd * nsd))
    dll = np.dot(u, design)
    zz = 0.0
    for j in range(d):
        grad[j] = dll[j] * scale[j] - z[j]
        zz += z[j] * z[j]
    e = dll * coef
    if is_lncass:
        for k in range(parent_pos.size):
            e[parent_of[k]] += dll[parent_pos[k]] * coef[parent_pos[k]]
        ww = 0.0
        for j in range(d):
            lam = math.exp(log_lam[j])
            grad[d + j] = sig[j] * (1.0 - lam) * e[j] - w[j]
            ww += w[j] * w[j]
        value += -0.5 * d * _LOG_2PI - 0.5 * ww
    else:
        hier = 0.0
        for j in range(d):
            lam2 = math.exp(2.0 * w[j])
            grad[d + j] = e[j] + 1.0 - 2.0 * lam2 / (1.0 + lam2)
            hier += _LOG_HALF_CAUCHY - math.log1p(lam2) + w[j]
        value += hier
    value += -0.5 * d * _LOG_2PI - 0.5 * zz
    usum = 0.0
    for i in range(n):
        usum += u[i]
    value += -math.log(isd) - 0.5 * _LOG_2PI - 0.5 * (b0 / isd) ** 2
    grad[2 * d] = usum - b0 / (isd * isd)
    return value


@njit(cache=True)
def nc_leaf(
    q,
    p,
    grad,
    eps,
    inv_mass,
    d,
    design,
    y,
    mu,
    sig,
    parent_pos,
    parent_of,
    tau,
    isd,
    nsd,
    is_lncass,
    is_logistic,
):
    """One leapfrog step fused with the density evaluation.

    Returns (q1, p1, g1, logp1, kinetic1) for the no-U-turn tree's base
    case; ``eps`` carries the integration direction in its sign.
    """
    dim = q.size
    p1 = np.empty(dim)
    q1 = np.empty(dim)
    for i in range(dim):
        ph = p[i] + 0.5 * eps * grad[i]
        p1[i] = ph
        q1[i] = q[i] + eps * inv_mass[i] * ph
    g1 = np.empty(dim)
    logp1 = nc_logp_grad(
        q1, d, design, y, mu, sig, parent_pos, parent_of,
        tau, isd, nsd, is_lncass, is_logistic, g1,
    )
    kin = 0.0
    for i in range(dim):
        pf = p1[i] + 0.5 * eps * g1[i]
        p1[i] = pf
        kin += pf * inv_mass[i] * pf
    return q1, p1, g1, logp1, 0.5 * kin


@njit(cache=True)
def uturn(q_minus, q_plus, p_minus, p_plus, inv_mass):
    """No-U-turn termination: either end's velocity opposes the span."""
    a = 0.0
    b = 0.0
    for i in range(q_minus.size):
        dq = q_plus[i] - q_minus[i]
        a += dq * inv_mass[i] * p_minus[i]
        b += dq * inv_mass[i] * p_plus[i]
    return a < 0.0 or b < 0.0

"""Independent reference implementations used only to cross-check results."""

import numpy as np


def em_fit_1d(values, k, iters=2000, tol=1e-12):
    """Plain maximum-likelihood EM for a 1-D Gaussian mixture.

    Quantile initialization, no priors, no component pruning. Kept free of
    any code from the package under test.
    """
    x = np.asarray(values, dtype=float)
    means = np.quantile(x, np.linspace(0.05, 0.95, k))
    stds = np.full(k, x.std())
    weights = np.full(k, 1.0 / k)
    prev_ll = -np.inf
    for _ in range(iters):
        log_comp = (
            np.log(weights)[None, :]
            - 0.5 * ((x[:, None] - means[None, :]) / stds[None, :]) ** 2
            - np.log(stds)[None, :]
            - 0.5 * np.log(2 * np.pi)
        )
        m = log_comp.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_comp - m).sum(axis=1))
        resp = np.exp(log_comp - log_norm[:, None])
        ll = log_norm.mean()
        nk = resp.sum(axis=0)
        weights = nk / len(x)
        means = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        stds = np.sqrt(np.maximum(var, 1e-12))
        if ll - prev_ll < tol:
            break
        prev_ll = ll
    return weights, means, stds


def em_posterior_1d(value, weights, means, stds):
    """Posterior component responsibilities of one value under an EM fit."""
    log_comp = (
        np.log(weights)
        - 0.5 * ((value - means) / stds) ** 2
        - np.log(stds)
    )
    log_comp -= log_comp.max()
    p = np.exp(log_comp)
    return p / p.sum()


def central_difference_grad(fn, params, eps=1e-5):
    """Finite-difference gradient of a scalar function of a flat vector."""
    p = np.asarray(params, dtype=float)
    grad = np.zeros_like(p)
    for i in range(p.size):
        hi = p.copy()
        lo = p.copy()
        hi[i] += eps
        lo[i] -= eps
        grad[i] = (fn(hi) - fn(lo)) / (2 * eps)
    return grad

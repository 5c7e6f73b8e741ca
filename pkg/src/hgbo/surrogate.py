"""Gaussian-process surrogate: ARD Matern 5/2 kernel and expected improvement.

Hyperparameters are fitted by maximizing the log marginal likelihood with
multi-start L-BFGS over log-hyperparameters. Targets are standardized
internally; reported hyperparameters are in the units of the data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.special import ndtr

log = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


class ConditioningError(np.linalg.LinAlgError):
    """Kernel matrix stayed singular after the full jitter ladder."""


class ParameterError(ValueError):
    pass


def _check_positive(lengthscales, signal_var):
    ls = np.asarray(lengthscales, dtype=float)
    if np.any(ls <= 0) or signal_var <= 0:
        raise ParameterError("kernel hyperparameters must be strictly positive")
    return ls


def matern52(x, x2, lengthscales, signal_var: float) -> float:
    """ARD Matern 5/2 covariance between two points."""
    ls = _check_positive(lengthscales, signal_var)
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape or x.shape != ls.shape:
        raise ValueError("dimension mismatch between points and lengthscales")
    r = math.sqrt(float(np.sum(((x - x2) / ls) ** 2)))
    return float(signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * math.exp(-SQRT5 * r))


def _scaled_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


def matern52_matrix(X, X2, lengthscales, signal_var: float) -> np.ndarray:
    ls = _check_positive(lengthscales, signal_var)
    r = _scaled_dist(np.asarray(X, float) / ls, np.asarray(X2, float) / ls)
    return signal_var * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-SQRT5 * r)


def _cholesky(K: np.ndarray, scale: float) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    for j in JITTER_LADDER:
        try:
            A = K + (j * scale) * np.eye(n) if j else K
            return np.linalg.cholesky(A), j * scale
        except np.linalg.LinAlgError:
            continue
    raise ConditioningError("kernel matrix not positive definite after jitter 1e-4")


@dataclass(frozen=True, eq=False)
class GpModel:
    xs: np.ndarray
    ys: np.ndarray
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    chol: np.ndarray
    mean: float
    alpha: np.ndarray
    jitter: float = 0.0
    log_likelihood: float = float("nan")

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def hyperparameters(self) -> dict:
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "signal_var": float(self.signal_var),
            "noise_var": float(self.noise_var),
            "mean": float(self.mean),
        }


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def condition(xs, ys, lengthscales, signal_var: float, noise_var: float, mean: float | None = None) -> GpModel:
    """GP posterior for fixed hyperparameters (constant mean = empirical mean by default)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float).ravel()
    ls = _check_positive(lengthscales, signal_var)
    if noise_var < 0:
        raise ParameterError("noise variance must be non-negative")
    if xs.shape[0] != ys.shape[0]:
        raise ValueError("xs and ys have different lengths")
    mu = float(np.mean(ys)) if mean is None else float(mean)
    K = matern52_matrix(xs, xs, ls, signal_var)
    K[np.diag_indices_from(K)] += noise_var
    L, jit = _cholesky(K, signal_var)
    alpha = cho_solve((L, True), ys - mu)
    return GpModel(xs, ys, ls, float(signal_var), float(noise_var), L, mu, alpha, jit)


def predict_many(model: GpModel, X) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise ValueError(f"point dimension {X.shape[1]} != model dimension {model.dim}")
    Ks = matern52_matrix(X, model.xs, model.lengthscales, model.signal_var)
    mean = model.mean + Ks @ model.alpha
    v = solve_triangular(model.chol, Ks.T, lower=True)
    var = model.signal_var - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def predict(model: GpModel, x) -> Posterior:
    """Predictive mean and latent variance at a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise ValueError(f"point shape {x.shape} does not match model dimension {model.dim}")
    m, v = predict_many(model, x[None, :])
    return Posterior(float(m[0]), float(v[0]))


def ei_array(mean, variance, best_y: float) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    imp = mean - best_y
    out = np.maximum(imp, 0.0)
    pos = sd > 0
    if np.any(pos):
        s = sd[pos] if sd.ndim else sd
        i = imp[pos] if imp.ndim else imp
        z = i / s
        val = i * ndtr(z) + s * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        if out.ndim:
            out[pos] = np.maximum(val, 0.0)
        else:
            out = np.maximum(val, 0.0)
    return out


def expected_improvement(post: Posterior, best_y: float) -> float:
    """Maximization-form EI; ``max(0, mean - best_y)`` when variance is zero."""
    return float(ei_array(post.mean, post.variance, best_y))


# ---------------------------------------------------------------------------
# hyperparameter fitting


@dataclass(frozen=True)
class HyperBounds:
    """Box on hyperparameters.

    Lengthscales are in input units. Variance bounds are relative to the
    empirical variance of the targets.
    """

    lengthscale: tuple[float, float] = (1e-2, 20.0)
    signal_var: tuple[float, float] = (1e-2, 20.0)
    noise_var: tuple[float, float] = (1e-6, 2.0)


def _neg_lml(theta: np.ndarray, X: np.ndarray, y: np.ndarray):
    d = X.shape[1]
    ls = np.exp(theta[:d])
    sf2 = math.exp(theta[d])
    sn2 = math.exp(theta[d + 1])
    Xs = X / ls
    r = _scaled_dist(Xs, Xs)
    e = np.exp(-SQRT5 * r)
    Kf = sf2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e
    n = len(y)
    K = Kf + sn2 * np.eye(n)
    try:
        L = np.linalg.cholesky(K + 1e-10 * sf2 * np.eye(n))
    except np.linalg.LinAlgError:
        return 1e10, np.zeros_like(theta)
    alpha = cho_solve((L, True), y)
    nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * n * math.log(2 * math.pi)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    G = sf2 * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e
    Q = W * G
    q = Q.sum(1)
    grad_ls = 0.5 * 2.0 * (q @ (Xs * Xs) - np.sum((Q @ Xs) * Xs, axis=0))
    grad = np.empty_like(theta)
    grad[:d] = grad_ls
    grad[d] = 0.5 * np.sum(W * Kf)
    grad[d + 1] = 0.5 * sn2 * np.trace(W)
    return nll, -grad


def fit(
    xs,
    ys,
    bounds: HyperBounds | None = None,
    restarts: int = 8,
    rng: np.random.Generator | None = None,
    init: dict | None = None,
    maxiter: int = 200,
) -> GpModel:
    """Fit ARD Matern 5/2 hyperparameters by maximum marginal likelihood.

    ``restarts`` local searches are run: one from ``init`` (or a neutral
    default) and the rest from uniform draws in log-hyperparameter space.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=float).ravel()
    n, d = xs.shape
    if n < 2:
        raise ValueError("fit needs at least two observations")
    bounds = bounds or HyperBounds()
    rng = rng if rng is not None else np.random.default_rng(0)

    mu = float(np.mean(ys))
    scale = float(np.std(ys))
    if not scale > 1e-12:
        scale = 1.0
    y = (ys - mu) / scale

    lo = np.r_[np.full(d, math.log(bounds.lengthscale[0])), math.log(bounds.signal_var[0]), math.log(bounds.noise_var[0])]
    hi = np.r_[np.full(d, math.log(bounds.lengthscale[1])), math.log(bounds.signal_var[1]), math.log(bounds.noise_var[1])]

    if init is not None:
        t0 = np.r_[
            np.log(np.asarray(init["lengthscales"], float)),
            math.log(init["signal_var"] / scale**2),
            math.log(init["noise_var"] / scale**2),
        ]
    else:
        t0 = np.r_[np.full(d, math.log(0.5)), 0.0, math.log(1e-2)]
    starts = [np.clip(t0, lo, hi)]
    for _ in range(max(restarts, 1) - 1):
        starts.append(rng.uniform(lo, hi))

    best = None
    for t in starts:
        try:
            res = minimize(
                _neg_lml, t, args=(xs, y), jac=True, method="L-BFGS-B",
                bounds=list(zip(lo, hi)), options={"maxiter": maxiter},
            )
        except (np.linalg.LinAlgError, ValueError) as err:
            log.debug("restart failed: %s", err)
            continue
        if np.isfinite(res.fun) and res.fun < 1e10 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise ConditioningError("no hyperparameter restart produced a usable kernel matrix")

    th = best.x
    model = condition(
        xs, ys,
        np.exp(th[:d]),
        math.exp(th[d]) * scale**2,
        math.exp(th[d + 1]) * scale**2,
        mean=mu,
    )
    object.__setattr__(model, "log_likelihood", float(-best.fun - n * math.log(scale)))
    return model

"""Surrogate regressors: an input-warped GP with Monte Carlo hyperparameters,
and a bagged random forest.

Both expose ``predict(X) -> (mean, var)``.  For the GP the arrays carry a
leading axis over hyperparameter samples; the RF returns 1-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from sklearn.ensemble import RandomForestRegressor

from .transform import kumaraswamy_cdf

N_MC = 10
SUBSAMPLE_CAP = 200
N_TREES = 50
MIN_SAMPLES_SPLIT = 2
RF_VAR_FLOOR = 1e-8
GP_VAR_FLOOR = 1e-12
NOISE_FLOOR = 1e-8
JITTERS = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

# log-normal priors as (log-mean, log-std)
LENGTHSCALE_PRIOR = (0.0, 1.0)
VARIANCE_PRIOR = (0.0, 1.0)
NOISE_PRIOR = (-4.0, 1.0)
WARP_PRIOR = (0.0, 0.5)

SQRT3 = np.sqrt(3.0)


class ModelFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class GPHyperSample:
    warp_a: np.ndarray
    warp_b: np.ndarray
    lengthscales: np.ndarray
    matern_variance: float
    linear_variance: float
    noise_variance: float

    def warp(self, X):
        return kumaraswamy_cdf(X, self.warp_a, self.warp_b)


def sample_hypers(n_dims, rng, n=N_MC, warping=True):
    """Draw ``n`` hyperparameter sets from the log-normal priors."""
    out = []
    for _ in range(n):
        a = rng.lognormal(*WARP_PRIOR, size=n_dims)
        b = rng.lognormal(*WARP_PRIOR, size=n_dims)
        if not warping:
            a = np.ones(n_dims)
            b = np.ones(n_dims)
        out.append(GPHyperSample(
            warp_a=a,
            warp_b=b,
            lengthscales=rng.lognormal(*LENGTHSCALE_PRIOR, size=n_dims),
            matern_variance=float(rng.lognormal(*VARIANCE_PRIOR)),
            linear_variance=float(rng.lognormal(*VARIANCE_PRIOR)),
            noise_variance=max(float(rng.lognormal(*NOISE_PRIOR)), NOISE_FLOOR),
        ))
    return out


def kernel(h: GPHyperSample, A, B, warped=False):
    """Linear plus ARD Matern-3/2 covariance between rows of ``A`` and ``B``."""
    if not warped:
        A, B = h.warp(A), h.warp(B)
    lin = h.linear_variance * (A @ B.T)
    As, Bs = A / h.lengthscales, B / h.lengthscales
    d2 = (As**2).sum(1)[:, None] + (Bs**2).sum(1)[None, :] - 2.0 * As @ Bs.T
    r = SQRT3 * np.sqrt(np.maximum(d2, 0.0))
    return lin + h.matern_variance * (1.0 + r) * np.exp(-r)


def kernel_diag(h: GPHyperSample, A, warped=False):
    if not warped:
        A = h.warp(A)
    return h.linear_variance * (A**2).sum(1) + h.matern_variance


class FittedGP:
    family = "gp"

    def __init__(self, X, y, hypers):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if len(X) != len(y):
            raise ValueError("X and y lengths differ")
        self.X, self.y, self.hypers = X, y, list(hypers)
        self._states = [self._factor(h) for h in self.hypers]

    def _factor(self, h):
        W = h.warp(self.X)
        K = kernel(h, W, W, warped=True)
        n = len(K)
        for jitter in JITTERS:
            try:
                L = cholesky(K + (h.noise_variance + jitter) * np.eye(n), lower=True)
            except np.linalg.LinAlgError:
                continue
            alpha = cho_solve((L, True), self.y)
            return W, L, alpha
        raise ModelFitError("kernel matrix not positive definite after jitter escalation")

    @property
    def n_features(self):
        return self.X.shape[1]

    def predict(self, Xs):
        """Per-sample posterior means and latent variances, each (n_samples, n)."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        if Xs.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {Xs.shape[1]}")
        means = np.empty((len(self.hypers), len(Xs)))
        vars_ = np.empty_like(means)
        for s, (h, (W, L, alpha)) in enumerate(zip(self.hypers, self._states)):
            Ws = h.warp(Xs)
            Ks = kernel(h, Ws, W, warped=True)
            means[s] = Ks @ alpha
            v = solve_triangular(L, Ks.T, lower=True)
            vars_[s] = kernel_diag(h, Ws, warped=True) - (v**2).sum(0)
        return means, np.maximum(vars_, GP_VAR_FLOOR)

    def predict_samples(self, x):
        """List of ``(mean, var)`` pairs, one per hyperparameter sample, at one point."""
        m, v = self.predict(np.asarray(x, dtype=float)[None, :])
        return list(zip(m[:, 0].tolist(), v[:, 0].tolist()))


def fit_gp(X, y, rng, n_samples=N_MC, warping=True, hypers=None) -> FittedGP:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) < 1:
        raise ValueError("GP needs at least one training point")
    if hypers is None:
        hypers = sample_hypers(X.shape[1], rng, n_samples, warping)
    return FittedGP(X, y, hypers)


class FittedRF:
    family = "rf"

    def __init__(self, forest):
        self.forest = forest

    @property
    def n_features(self):
        return self.forest.n_features_in_

    def tree_predictions(self, Xs):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        if Xs.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {Xs.shape[1]}")
        return np.stack([t.predict(Xs) for t in self.forest.estimators_])

    def predict(self, Xs):
        P = self.tree_predictions(Xs)
        return P.mean(0), np.maximum(P.var(0, ddof=1), RF_VAR_FLOOR)


def fit_rf(X, y, rng) -> FittedRF:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    forest = RandomForestRegressor(
        n_estimators=N_TREES,
        min_samples_split=MIN_SAMPLES_SPLIT,
        bootstrap=True,
        random_state=int(rng.integers(2**31 - 1)),
        n_jobs=1,
    )
    return FittedRF(forest.fit(X, y))


def predict_gp(m: FittedGP, x):
    return m.predict_samples(x)


def predict_rf(m: FittedRF, x):
    mu, var = m.predict(np.asarray(x, dtype=float)[None, :])
    return float(mu[0]), float(var[0])

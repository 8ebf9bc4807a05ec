"""Output power transforms and the Kumaraswamy input warp."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

STD_FLOOR = 1e-12
SKEW_TIE = 1e-9
BOX_COX_MARGIN = 1e-6


@dataclass(frozen=True)
class PowerTransform:
    kind: str = "identity"
    lam: float = 1.0
    shift: float = 0.0
    mean: float = 0.0
    std: float = 1.0

    def _forward(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "identity":
            return v
        if self.kind == "box_cox":
            u = v + self.shift
            if np.any(u <= 0):
                raise ValueError("box-cox input must exceed -shift")
            return _box_cox(u, self.lam)
        if self.kind == "yeo_johnson":
            return _yeo_johnson(v, self.lam)
        raise ValueError(f"unknown transform kind {self.kind!r}")

    def _backward(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "identity":
            return z
        if self.kind == "box_cox":
            return _box_cox_inv(z, self.lam) - self.shift
        return _yeo_johnson_inv(z, self.lam)

    def apply(self, v):
        out = (self._forward(v) - self.mean) / self.std
        return float(out) if np.ndim(out) == 0 else out

    def invert(self, v):
        out = self._backward(np.asarray(v, dtype=float) * self.std + self.mean)
        return float(out) if np.ndim(out) == 0 else out


def _box_cox(u, lam):
    if abs(lam) < 1e-12:
        return np.log(u)
    return np.expm1(lam * np.log(u)) / lam


def _box_cox_inv(z, lam):
    if abs(lam) < 1e-12:
        return np.exp(z)
    return np.exp(np.log1p(lam * z) / lam)


def _yeo_johnson(v, lam):
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    pos = v >= 0
    if abs(lam) < 1e-12:
        out[pos] = np.log1p(v[pos])
    else:
        out[pos] = np.expm1(lam * np.log1p(v[pos])) / lam
    if abs(lam - 2) < 1e-12:
        out[~pos] = -np.log1p(-v[~pos])
    else:
        out[~pos] = -np.expm1((2 - lam) * np.log1p(-v[~pos])) / (2 - lam)
    return out


def _yeo_johnson_inv(z, lam):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    pos = z >= 0
    if abs(lam) < 1e-12:
        out[pos] = np.expm1(z[pos])
    else:
        out[pos] = np.expm1(np.log1p(lam * z[pos]) / lam)
    if abs(lam - 2) < 1e-12:
        out[~pos] = -np.expm1(-z[~pos])
    else:
        out[~pos] = -np.expm1(np.log1p(-(2 - lam) * z[~pos]) / (2 - lam))
    return out


def _standardized(kind, lam, shift, z):
    mean = float(np.mean(z))
    std = float(np.std(z))
    if not std >= STD_FLOOR:
        std = 1.0
    return PowerTransform(kind, lam, shift, mean, std)


def fit_standardize(y) -> PowerTransform:
    """Identity transform with standardization only."""
    y = _check(y)
    return _standardized("identity", 1.0, 0.0, y)


def fit_power_transform(y) -> PowerTransform:
    """Fit Box-Cox and Yeo-Johnson by maximum likelihood; keep the less skewed one.

    Box-Cox is fitted after shifting the data so its minimum is ``1e-6``
    when the data is not strictly positive.  Fewer than two distinct values
    give an identity transform.  Ties in absolute skewness go to Yeo-Johnson.
    """
    y = _check(y)
    if len(np.unique(y)) < 2:
        return _standardized("identity", 1.0, 0.0, y)

    shift = BOX_COX_MARGIN - float(y.min()) if y.min() <= 0 else 0.0
    candidates = []
    with np.errstate(all="ignore"):
        try:
            lam_bc = float(stats.boxcox_normmax(y + shift, method="mle"))
            z_bc = _box_cox(y + shift, lam_bc)
            if np.all(np.isfinite(z_bc)):
                candidates.append(("box_cox", lam_bc, shift, z_bc))
        except (ValueError, FloatingPointError):
            pass
        lam_yj = float(stats.yeojohnson_normmax(y))
        z_yj = _yeo_johnson(y, lam_yj)
        if np.all(np.isfinite(z_yj)):
            candidates.append(("yeo_johnson", lam_yj, 0.0, z_yj))
    if not candidates:
        return _standardized("identity", 1.0, 0.0, y)
    kind, lam, sh, z = select_by_skew(candidates)
    return _standardized(kind, lam, sh, z)


def select_by_skew(candidates):
    """Pick the candidate ``(kind, lam, shift, z)`` with the smallest |skew(z)|."""
    best, best_skew = None, math.inf
    for cand in candidates:
        s = abs(_skew(cand[3]))
        if best is None or s < best_skew - SKEW_TIE or (
            abs(s - best_skew) <= SKEW_TIE and cand[0] == "yeo_johnson"
        ):
            best, best_skew = cand, min(s, best_skew)
    return best


def _skew(z):
    z = np.asarray(z, dtype=float)
    sd = z.std()
    if sd < STD_FLOOR:
        return 0.0
    return float(np.mean((z - z.mean()) ** 3) / sd**3)


def _check(y):
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("power transform inputs must be finite")
    if y.size == 0:
        raise ValueError("power transform needs at least one value")
    return y


def kumaraswamy_cdf(x, a, b):
    """``1 - (1 - x**a)**b`` with ``x`` clamped to [0, 1]; broadcasts."""
    x = np.clip(x, 0.0, 1.0)
    return 1.0 - (1.0 - x**a) ** b

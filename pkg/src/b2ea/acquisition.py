"""EI / PI / UCB acquisition under minimization, and the diversified
surrogate pool.

All acquisitions are to be maximized.  ``y_best`` is the lowest observed
(transformed) objective value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

EPSILON = 1e-4
KAPPA = 2.0
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

ACQUISITIONS = ("EI", "PI", "UCB")
FAMILIES = ("gp", "rf")


@dataclass(frozen=True)
class AcquisitionKind:
    name: str
    epsilon: float = EPSILON
    kappa: float = KAPPA

    def __post_init__(self):
        if self.name not in ACQUISITIONS:
            raise ValueError(f"unknown acquisition {self.name!r}")
        if self.epsilon < 0 or self.kappa <= 0:
            raise ValueError("need epsilon >= 0 and kappa > 0")


@dataclass(frozen=True)
class SurrogateSpec:
    model: str
    acquisition: AcquisitionKind

    @property
    def name(self) -> str:
        return f"{self.model.upper()}-{self.acquisition.name}"

    @classmethod
    def parse(cls, name: str, epsilon=EPSILON, kappa=KAPPA) -> "SurrogateSpec":
        model, _, acq = name.partition("-")
        if model.lower() not in FAMILIES:
            raise ValueError(f"unknown surrogate family in {name!r}")
        return cls(model.lower(), AcquisitionKind(acq.upper(), epsilon, kappa))

    def __str__(self):
        return self.name


DEFAULT_POOL = tuple(
    SurrogateSpec.parse(n) for n in ("GP-EI", "GP-PI", "GP-UCB", "RF-EI", "RF-PI", "RF-UCB")
)


def acq_value(kind: AcquisitionKind, mean, var, y_best):
    """Acquisition value; broadcasts over ``mean`` and ``var``."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise ValueError("variance must be non-negative")
    sigma = np.sqrt(var)
    gap = y_best - kind.epsilon - mean
    if kind.name == "UCB":
        out = -mean + kind.kappa * sigma
    else:
        pos = sigma > 0
        safe = np.where(pos, sigma, 1.0)
        z = gap / safe
        if kind.name == "EI":
            out = np.where(pos, safe * (z * ndtr(z) + INV_SQRT_2PI * np.exp(-0.5 * z * z)),
                           np.maximum(gap, 0.0))
        else:
            out = np.where(pos, ndtr(z), (gap > 0).astype(float))
    return float(out) if out.ndim == 0 else out


def score(spec: SurrogateSpec, model, X, y_best):
    """Acquisition of ``spec`` at rows of ``X``; GP values are averaged over
    hyperparameter samples."""
    if model.family != spec.model:
        raise ValueError(f"{spec.name} cannot score a {model.family} model")
    mean, var = model.predict(X)
    vals = acq_value(spec.acquisition, mean, var, y_best)
    if model.family == "gp":
        vals = np.mean(vals, axis=0)
    return vals


def pick_first(pool, n: int):
    """Round-robin: entry ``n mod len(pool)`` (0-based) of the pool."""
    if n < 1:
        raise ValueError("iteration index starts at 1")
    return pool[n % len(pool)]


def pick_second(pool, first, rng):
    """Uniform draw from the pool entries other than ``first``."""
    others = [s for s in pool if s != first]
    if not others:
        return first
    return others[int(rng.integers(len(others)))]

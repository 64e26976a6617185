"""Unnormalized target densities with declared tail behaviour.

All built-in families are isotropic: the log-density depends on ``x`` only
through ``||x||``. Norms are evaluated in log space so that states far out
in the tail (``||x||`` up to ~1e300) do not overflow before the density is
formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateStateError, DimensionError, ParameterError, UnsupportedOperationError

__all__ = [
    "TailClass",
    "TargetDensity",
    "StudentLike",
    "Gaussian",
    "GenExponential",
    "custom_target",
    "make_target",
    "log_norm",
    "log_density",
    "grad_log_density",
    "curvature_statistic",
    "regular_variation_limit",
    "FAMILY_CODES",
    "log_norm_rows",
    "log_density_batch",
]

REGULARLY_VARYING = "regularly_varying"
RAPIDLY_VARYING = "rapidly_varying"
OTHER = "other"

# integer codes shared with the chain engine
FAMILY_CODES = {"student": 0, "gaussian": 1, "genexp": 2}


@dataclass(frozen=True)
class TailClass:
    kind: str
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (REGULARLY_VARYING, RAPIDLY_VARYING, OTHER):
            raise ParameterError(f"unknown tail class {self.kind!r}")
        if self.kind == REGULARLY_VARYING and self.alpha is None:
            raise ParameterError("regularly varying tail needs alpha")

    @classmethod
    def regularly_varying(cls, alpha):
        return cls(REGULARLY_VARYING, float(alpha))

    @classmethod
    def rapidly_varying(cls):
        return cls(RAPIDLY_VARYING)

    @property
    def is_regular(self):
        return self.kind == REGULARLY_VARYING


def log_norm(x) -> float:
    """``log||x||`` without forming ``||x||**2`` (safe for huge or tiny x)."""
    x = np.asarray(x, dtype=float)
    m = float(np.max(np.abs(x))) if x.size else 0.0
    if m == 0.0:
        return -math.inf
    if not math.isfinite(m):
        return math.inf
    y = x / m
    return math.log(m) + 0.5 * math.log(float(np.dot(y, y)))


_BIG = 1e300


def _sq_norm(x) -> float:
    """``||x||^2``, or ``inf`` once it leaves double range."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return float(np.dot(x, x))


@dataclass(frozen=True)
class TargetDensity:
    """Unnormalized density on ``R^d``.

    ``family`` and ``params`` identify a built-in family (used by the compiled
    chain engine and by the analytic moment criteria); custom targets carry
    ``family="custom"`` and only the callables.
    """

    dim: int
    log_pi: Callable[[np.ndarray], float] = field(repr=False, compare=False)
    grad_log_pi: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False, compare=False
    )
    tail: TailClass = field(default_factory=lambda: TailClass(OTHER))
    family: str = "custom"
    params: tuple = ()
    isotropic: bool = False

    def __post_init__(self):
        if int(self.dim) < 2:
            raise DimensionError(f"targets need d >= 2, got {self.dim}")

    @property
    def has_gradient(self):
        return self.grad_log_pi is not None

    def descriptor(self) -> dict:
        names = {"student": ("alpha",), "gaussian": ("sigma",), "genexp": ("c", "p")}
        out = {"family": self.family, "dim": int(self.dim)}
        out.update(zip(names.get(self.family, ()), map(float, self.params)))
        return out


def StudentLike(d: int, alpha: float) -> TargetDensity:
    """``log pi(x) = -(alpha/2) log(1 + ||x||^2)``; regularly varying with index alpha."""
    alpha = float(alpha)
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")

    def log_pi(x):
        r2 = _sq_norm(x)
        if r2 < _BIG:
            return -0.5 * alpha * math.log1p(r2)
        # log(1 + ||x||^2) = logaddexp(0, 2 log||x||)
        return -0.5 * alpha * float(np.logaddexp(0.0, 2.0 * log_norm(x)))

    def grad(x):
        x = np.asarray(x, dtype=float)
        return -alpha * x / (1.0 + float(np.dot(x, x)))

    return TargetDensity(
        int(d), log_pi, grad, TailClass.regularly_varying(alpha), "student", (alpha,), True
    )


def Gaussian(d: int, sigma: float = 1.0) -> TargetDensity:
    """``log pi(x) = -||x||^2 / (2 sigma^2)``; rapidly varying."""
    sigma = float(sigma)
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    inv2s2 = 0.5 / sigma**2

    def log_pi(x):
        return -inv2s2 * _sq_norm(x)

    def grad(x):
        return -np.asarray(x, dtype=float) / sigma**2

    return TargetDensity(
        int(d), log_pi, grad, TailClass.rapidly_varying(), "gaussian", (sigma,), True
    )


def GenExponential(d: int, c: float = 1.0, p: float = 1.0) -> TargetDensity:
    """``log pi(x) = -c ||x||^p`` with ``p >= 1``; rapidly varying."""
    c, p = float(c), float(p)
    if not c > 0:
        raise ParameterError(f"c must be positive, got {c}")
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")

    def log_pi(x):
        r2 = _sq_norm(x)
        if r2 < _BIG:
            try:
                return -c * r2 ** (0.5 * p)
            except OverflowError:
                return -math.inf
        t = p * log_norm(x)
        return -c * math.exp(t) if t < 709.0 else -math.inf

    def grad(x):
        x = np.asarray(x, dtype=float)
        r = math.exp(log_norm(x))
        if r == 0.0:
            if p > 1:
                return np.zeros_like(x)
            raise DegenerateStateError("gradient of -c||x|| is undefined at the origin")
        return -c * p * r ** (p - 2.0) * x

    return TargetDensity(
        int(d), log_pi, grad, TailClass.rapidly_varying(), "genexp", (c, p), True
    )


def custom_target(d, log_pi, grad_log_pi=None, tail=None, isotropic=False) -> TargetDensity:
    """Wrap user callables; runs only on the generic (per-step Python) path."""
    return TargetDensity(int(d), log_pi, grad_log_pi, tail or TailClass(OTHER), "custom", (), isotropic)


_FACTORIES = {
    "student": (StudentLike, ("alpha",)),
    "gaussian": (Gaussian, ("sigma",)),
    "genexp": (GenExponential, ("c", "p")),
}


def make_target(family: str, dim: int, **params) -> TargetDensity:
    """Build a built-in family by name (``student``, ``gaussian``, ``genexp``)."""
    family = family.lower().replace("-", "").replace("_", "")
    aliases = {"studentlike": "student", "t": "student", "normal": "gaussian",
               "genexponential": "genexp"}
    family = aliases.get(family, family)
    if family not in _FACTORIES:
        raise ParameterError(f"unknown target family {family!r}; choose from {sorted(_FACTORIES)}")
    factory, names = _FACTORIES[family]
    unknown = set(params) - set(names)
    if unknown:
        raise ParameterError(f"unexpected parameters for {family}: {sorted(unknown)}")
    return factory(dim, **params)


def _as_state(t: TargetDensity, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != t.dim:
        raise DimensionError(f"state has shape {x.shape}, target dimension is {t.dim}")
    return x


def log_density(t: TargetDensity, x) -> float:
    return float(t.log_pi(_as_state(t, x)))


def grad_log_density(t: TargetDensity, x) -> np.ndarray:
    if t.grad_log_pi is None:
        raise UnsupportedOperationError("target has no gradient")
    return np.asarray(t.grad_log_pi(_as_state(t, x)), dtype=float)


def curvature_statistic(t: TargetDensity, x) -> float:
    """Cosine between the position and the log-density gradient at ``x``."""
    x = _as_state(t, x)
    g = grad_log_density(t, x)
    nx = float(np.linalg.norm(x))
    ng = float(np.linalg.norm(g))
    if nx == 0.0:
        raise DegenerateStateError("curvature statistic undefined at the origin")
    if ng == 0.0 or not math.isfinite(ng):
        raise DegenerateStateError(f"degenerate gradient at x (norm {ng})")
    return float(np.clip(np.dot(x / nx, g / ng), -1.0, 1.0))


def regular_variation_limit(t: TargetDensity, x, r: float) -> float:
    """``pi(r x) / pi(r u)`` with ``u`` the unit diagonal, formed in log space."""
    if not t.tail.is_regular:
        raise UnsupportedOperationError("regular_variation_limit needs a regularly varying target")
    x = _as_state(t, x)
    if not np.any(x):
        raise DegenerateStateError("x must be nonzero")
    if not r > 0:
        raise ParameterError(f"r must be positive, got {r}")
    u = np.full(t.dim, 1.0 / math.sqrt(t.dim))
    return math.exp(t.log_pi(r * x) - t.log_pi(r * u))


def log_norm_rows(X) -> np.ndarray:
    """Row-wise ``log||x||``, overflow-safe."""
    X = np.asarray(X, dtype=float)
    m = np.max(np.abs(X), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        Y = X / np.where(m > 0, m, 1.0)[:, None]
        return np.log(m) + 0.5 * np.log(np.einsum("ij,ij->i", Y, Y))


def log_density_batch(t: TargetDensity, X) -> np.ndarray:
    """``log pi`` for each row of ``X``; vectorized for the built-in families."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != t.dim:
        raise DimensionError(f"states have shape {X.shape}, target dimension is {t.dim}")
    if t.family == "custom":
        return np.array([t.log_pi(x) for x in X], dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        r2 = np.einsum("ij,ij->i", X, X)
        big = ~(r2 < _BIG)
        if t.family == "gaussian":
            return -(0.5 / t.params[0] ** 2) * r2
        if t.family == "student":
            out = -0.5 * t.params[0] * np.log1p(r2)
            if big.any():
                out[big] = -0.5 * t.params[0] * np.logaddexp(0.0, 2.0 * log_norm_rows(X[big]))
            return out
        c, p = t.params
        out = -c * r2 ** (0.5 * p)
        if big.any():
            out[big] = -c * np.exp(p * log_norm_rows(X[big]))
        return out

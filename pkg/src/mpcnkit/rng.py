"""Seedable random primitives shared by kernels and diagnostics.

Every stream is a Philox (counter-based) bit generator keyed by
``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`, so
chains indexed by ``stream_id`` get disjoint, reproducible streams with
no coordination between workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError

__all__ = [
    "RngStream",
    "GammaParams",
    "sample_std_normal_vector",
    "sample_gamma",
    "sample_xi",
    "sample_xi_batch",
]


class RngStream:
    """Single-owner random stream identified by ``(seed, stream_id)``.

    Not safe to share between threads; hand each worker its own stream.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise ParameterError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, offset: int) -> "RngStream":
        """Fresh stream with the same seed and ``stream_id + offset``."""
        return RngStream(self.seed, (self.stream_id + int(offset)) % 2**64)

    # thin pass-throughs used by the samplers below
    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def standard_gamma(self, shape, size=None):
        return self.generator.standard_gamma(shape, size)

    def uniform(self, size=None):
        return self.generator.random(size)


@dataclass(frozen=True)
class GammaParams:
    """Gamma law with density proportional to ``x**(shape-1) * exp(-rate*x)``."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ParameterError(f"gamma shape must be positive, got {self.shape}")
        if not (np.isfinite(self.rate) and self.rate > 0):
            raise ParameterError(f"gamma rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate


def sample_std_normal_vector(d: int, rng: RngStream) -> np.ndarray:
    """Draw ``w ~ N_d(0, I_d)``."""
    if int(d) < 1:
        raise DimensionError(f"dimension must be >= 1, got {d}")
    return rng.standard_normal(int(d))


def sample_gamma(p: GammaParams, rng: RngStream, size=None):
    """Draw from Gamma(shape, rate).

    numpy's ``standard_gamma`` is the Marsaglia-Tsang squeeze/rejection
    sampler with the ``U**(1/shape)`` boost for shapes below one; the rate
    is applied by division.
    """
    if not isinstance(p, GammaParams):
        raise ParameterError("expected GammaParams")
    return rng.standard_gamma(p.shape, size) / p.rate


def _check_xi_args(d, rho):
    if int(d) < 2:
        raise DimensionError(f"xi is defined for d >= 2, got {d}")
    if not (0.0 < rho < 1.0):
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")


def sample_xi_batch(d: int, rho: float, n: int, rng: RngStream) -> np.ndarray:
    """``n`` draws of the MpCN log-radius increment.

    Each draw is ``log||sqrt(rho) v + sqrt(1-rho) w||^2 - log||v||^2`` with
    ``v, w`` independent standard normal vectors in ``R^d``.
    """
    _check_xi_args(d, rho)
    d = int(d)
    v = rng.standard_normal((n, d))
    w = rng.standard_normal((n, d))
    y = np.sqrt(rho) * v + np.sqrt(1.0 - rho) * w
    return np.log(np.einsum("ij,ij->i", y, y)) - np.log(np.einsum("ij,ij->i", v, v))


def sample_xi(d: int, rho: float, rng: RngStream) -> float:
    """One draw of the MpCN log-radius increment (see :func:`sample_xi_batch`)."""
    return float(sample_xi_batch(d, rho, 1, rng)[0])

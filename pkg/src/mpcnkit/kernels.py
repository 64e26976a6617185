"""Metropolis-Hastings kernels with reversible proposals: RWM, pCN, MpCN.

The acceptance ratio of an MH kernel whose proposal is reversible with
respect to a reference density ``pi_ref`` is

    min{1, pi(y) pi_ref(x) / (pi(x) pi_ref(y))},

i.e. a function of ``log pi - log pi_ref`` alone. For MpCN the reference is
``||x||^{-d}`` so that difference is ``log q(x) = log pi(x) + d log||x||``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from . import engine
from .errors import DegenerateStateError, DimensionError, ParameterError
from .rng import GammaParams, RngStream, sample_gamma, sample_std_normal_vector
from .targets import FAMILY_CODES, TargetDensity, log_density_batch, log_norm, log_norm_rows

__all__ = [
    "ReferenceMeasure",
    "ProposalKernel",
    "MpcnDraw",
    "MhKernel",
    "DEFAULT_RHO",
    "propose_rwm",
    "propose_pcn",
    "propose_mpcn",
    "mpcn_proposal_log_density",
    "log_q",
    "log_acceptance_ratio",
    "mh_step",
    "log_q_batch",
    "propose_batch",
    "BatchResult",
    "simulate",
]

DEFAULT_RHO = 0.8


@dataclass(frozen=True)
class ReferenceMeasure:
    """Measure the proposal is reversible against: lebesgue, std_normal or radial_power."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("lebesgue", "std_normal", "radial_power"):
            raise ParameterError(f"unknown reference measure {self.kind!r}")

    def log_density(self, x) -> float:
        """Log density up to an additive constant (constants cancel in every ratio)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "lebesgue":
            return 0.0
        if self.kind == "std_normal":
            return -0.5 * float(np.dot(x, x))
        # ||x||^{-d}: +inf at the origin
        return -x.shape[0] * log_norm(x)

    def log_density_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.kind == "lebesgue":
            return np.zeros(X.shape[0])
        if self.kind == "std_normal":
            return -0.5 * np.einsum("ij,ij->i", X, X)
        return -X.shape[1] * log_norm_rows(X)


_REFERENCE = {
    "rwm": ReferenceMeasure("lebesgue"),
    "pcn": ReferenceMeasure("std_normal"),
    "mpcn": ReferenceMeasure("radial_power"),
}


def _check_rho(rho):
    if not (0.0 < rho < 1.0):
        raise ParameterError(f"rho must lie in (0, 1), got {rho}")


@dataclass(frozen=True)
class ProposalKernel:
    """Proposal of an MH kernel.

    ``kind`` is ``"rwm"`` (``scale`` and ``increment`` in {"gaussian", "ball"}),
    ``"pcn"`` or ``"mpcn"`` (``rho``).
    """

    kind: str
    scale: Optional[float] = None
    rho: Optional[float] = None
    increment: str = "gaussian"

    def __post_init__(self):
        if self.kind not in _REFERENCE:
            raise ParameterError(f"unknown proposal kind {self.kind!r}")
        if self.kind == "rwm":
            if self.scale is None or not self.scale > 0:
                raise ParameterError(f"RWM scale must be positive, got {self.scale}")
            if self.increment not in ("gaussian", "ball"):
                raise ParameterError(f"unknown RWM increment law {self.increment!r}")
        else:
            if self.rho is None:
                raise ParameterError(f"{self.kind} needs rho")
            _check_rho(self.rho)

    @classmethod
    def rwm(cls, scale=1.0, increment="gaussian"):
        return cls("rwm", scale=float(scale), increment=increment)

    @classmethod
    def pcn(cls, rho=DEFAULT_RHO):
        return cls("pcn", rho=float(rho))

    @classmethod
    def mpcn(cls, rho=DEFAULT_RHO):
        return cls("mpcn", rho=float(rho))

    @property
    def reference(self) -> ReferenceMeasure:
        return _REFERENCE[self.kind]

    def descriptor(self) -> dict:
        if self.kind == "rwm":
            return {"kind": "rwm", "scale": self.scale, "increment": self.increment}
        return {"kind": self.kind, "rho": self.rho}


@dataclass(frozen=True)
class MpcnDraw:
    r: float
    w: np.ndarray
    proposal: np.ndarray


@dataclass(frozen=True)
class MhKernel:
    target: TargetDensity
    proposal: ProposalKernel

    @classmethod
    def rwm(cls, target, scale=1.0, increment="gaussian"):
        return cls(target, ProposalKernel.rwm(scale, increment))

    @classmethod
    def pcn(cls, target, rho=DEFAULT_RHO):
        return cls(target, ProposalKernel.pcn(rho))

    @classmethod
    def mpcn(cls, target, rho=DEFAULT_RHO):
        return cls(target, ProposalKernel.mpcn(rho))

    @property
    def dim(self):
        return self.target.dim

    @property
    def kind(self):
        return self.proposal.kind

    def descriptor(self) -> dict:
        return {"proposal": self.proposal.descriptor(), "target": self.target.descriptor()}

    def propose(self, x, rng: RngStream) -> np.ndarray:
        p = self.proposal
        if p.kind == "rwm":
            return propose_rwm(x, p.scale, rng, p.increment)
        if p.kind == "pcn":
            return propose_pcn(x, p.rho, rng)
        return propose_mpcn(x, p.rho, rng).proposal


def _state(x, d=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (d is not None and x.shape[0] != d):
        raise DimensionError(f"bad state shape {x.shape}")
    return x


def _ball_increment(d, rng):
    g = sample_std_normal_vector(d, rng)
    u = rng.uniform()
    return g / np.linalg.norm(g) * u ** (1.0 / d)


def propose_rwm(x, scale: float, rng: RngStream, increment: str = "gaussian") -> np.ndarray:
    """``x + scale * w`` with ``w`` standard normal or uniform on the unit ball."""
    x = _state(x)
    if not scale > 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    if increment == "gaussian":
        w = sample_std_normal_vector(x.shape[0], rng)
    elif increment == "ball":
        w = _ball_increment(x.shape[0], rng)
    else:
        raise ParameterError(f"unknown increment law {increment!r}")
    return x + scale * w


def propose_pcn(x, rho: float, rng: RngStream) -> np.ndarray:
    x = _state(x)
    _check_rho(rho)
    w = sample_std_normal_vector(x.shape[0], rng)
    return math.sqrt(rho) * x + math.sqrt(1.0 - rho) * w


def propose_mpcn(x, rho: float, rng: RngStream) -> MpcnDraw:
    """Draw ``r ~ Gamma(d/2, ||x||^2/2)``, ``w ~ N(0, I)`` and return the proposal."""
    x = _state(x)
    _check_rho(rho)
    r2 = float(np.dot(x, x))
    if r2 == 0.0:
        raise DegenerateStateError("MpCN proposal is undefined at the origin")
    d = x.shape[0]
    r = float(sample_gamma(GammaParams(0.5 * d, 0.5 * r2), rng))
    w = sample_std_normal_vector(d, rng)
    y = math.sqrt(rho) * x + math.sqrt(1.0 - rho) / math.sqrt(r) * w
    return MpcnDraw(r, w, y)


def mpcn_proposal_log_density(x, y, rho: float) -> float:
    """Log density of the MpCN proposal ``x -> y`` w.r.t. Lebesgue measure.

    Integrating the Gaussian over the Gamma precision gives a multivariate
    Cauchy-type law:

        log q = log C + d log||x|| - d log(||x||^2 + ||y - sqrt(rho) x||^2 / (1 - rho))

    with ``C = Gamma(d) / (Gamma(d/2) (pi (1 - rho))^{d/2})``.
    """
    x = _state(x)
    y = _state(y, x.shape[0])
    _check_rho(rho)
    r2 = float(np.dot(x, x))
    if r2 == 0.0:
        raise DegenerateStateError("MpCN proposal density is undefined at x = 0")
    d = x.shape[0]
    diff = y - math.sqrt(rho) * x
    log_c = gammaln(d) - gammaln(0.5 * d) - 0.5 * d * math.log(math.pi * (1.0 - rho))
    return float(log_c + 0.5 * d * math.log(r2) - d * math.log(r2 + float(np.dot(diff, diff)) / (1.0 - rho)))


def log_q(k: MhKernel, x) -> float:
    """``log pi(x) - log pi_ref(x)``; for MpCN this is ``log pi(x) + d log||x||``."""
    x = _state(x, k.dim)
    return float(k.target.log_pi(x)) - k.proposal.reference.log_density(x)


def log_acceptance_ratio(k: MhKernel, x, y) -> float:
    """``log[pi(y) pi_ref(x) / (pi(x) pi_ref(y))]`` before taking ``min{0, .}``."""
    out = log_q(k, y) - log_q(k, x)
    if math.isnan(out):
        # inf - inf: both states outside the support numerically
        return -math.inf
    return out


def log_q_batch(k: MhKernel, X) -> np.ndarray:
    """Row-wise :func:`log_q`."""
    return log_density_batch(k.target, X) - k.proposal.reference.log_density_batch(X)


def propose_batch(k: MhKernel, x, n: int, rng: RngStream) -> np.ndarray:
    """``n`` independent proposals from the single state ``x``, shape ``(n, d)``."""
    x = _state(x, k.dim)
    p = k.proposal
    d = k.dim
    if p.kind == "mpcn" and not np.any(x):
        raise DegenerateStateError("MpCN proposal is undefined at the origin")
    W, S, _ = draw_noise(p, n, 1, d, rng)
    W = W[:, 0, :]
    if p.kind == "rwm":
        return x + p.scale * W
    if p.kind == "pcn":
        return math.sqrt(p.rho) * x + math.sqrt(1.0 - p.rho) * W
    norm = math.exp(log_norm(x))
    return math.sqrt(p.rho) * x + (math.sqrt(1.0 - p.rho) * norm * S[:, 0])[:, None] * W


def mh_step(k: MhKernel, x, rng: RngStream):
    """One MH transition; returns ``(state, accepted)``."""
    x = _state(x, k.dim)
    y = k.propose(x, rng)
    la = log_acceptance_ratio(k, x, y)
    if math.log1p(-rng.uniform()) <= min(0.0, la):
        return y, True
    return x, False


# --------------------------------------------------------------------------
# batched simulation on the chain engine

_KIND_CODES = {"rwm": 0, "pcn": 1, "mpcn": 2}


def _engine_params(t: TargetDensity):
    if t.family == "student":
        return FAMILY_CODES["student"], 0.5 * t.params[0], 0.0
    if t.family == "gaussian":
        return FAMILY_CODES["gaussian"], 0.5 / t.params[0] ** 2, 0.0
    if t.family == "genexp":
        return FAMILY_CODES["genexp"], t.params[0], 0.5 * t.params[1]
    return None


def block_size(m, d, budget=1 << 17):
    """Steps per noise block; a pure function of the batch shape."""
    return max(1, min(4096, budget // max(1, m * d)))


def draw_noise(p: ProposalKernel, n, m, d, rng: RngStream):
    """Noise for ``n`` steps of ``m`` chains, drawn in a fixed order."""
    W = rng.standard_normal((n, m, d))
    if p.kind == "rwm" and p.increment == "ball":
        u = rng.uniform((n, m))
        W *= (u ** (1.0 / d) / np.sqrt(np.einsum("nmd,nmd->nm", W, W)))[..., None]
    if p.kind == "mpcn":
        # r^{-1/2} = ||x|| / sqrt(2 G) with G ~ Gamma(d/2, 1)
        S = 1.0 / np.sqrt(2.0 * rng.standard_gamma(0.5 * d, (n, m)))
    else:
        S = np.zeros((n, m))
    logu = np.log1p(-rng.uniform((n, m)))
    return W, S, logu


def _advance_generic(k: MhKernel, X, lp, W, S, logu, acc, active, hit_r2, t0, hit_at, out):
    """Per-step Python path for targets the engine cannot evaluate."""
    p = k.proposal
    n, m, _ = W.shape
    record = out.shape[0] == n and n > 0
    for i in range(n):
        for j in range(m):
            if active[j]:
                x = X[j]
                if p.kind == "rwm":
                    y = x + p.scale * W[i, j]
                elif p.kind == "pcn":
                    y = math.sqrt(p.rho) * x + math.sqrt(1.0 - p.rho) * W[i, j]
                else:
                    coef = math.sqrt(1.0 - p.rho) * (math.sqrt(float(np.dot(x, x))) * S[i, j])
                    y = math.sqrt(p.rho) * x + coef * W[i, j]
                if logu[i, j] <= log_acceptance_ratio(k, x, y):
                    X[j] = y
                    acc[j] += 1
                if hit_r2 >= 0 and float(np.dot(X[j], X[j])) <= hit_r2:
                    hit_at[j] = t0 + i + 1
                    active[j] = 0
            if record:
                out[i, j] = X[j]
    lp[:] = [k.target.log_pi(x) for x in X]


@dataclass
class BatchResult:
    states: np.ndarray
    accepted: np.ndarray
    hit_at: np.ndarray
    n_steps: int

    @property
    def acceptance_rate(self):
        return self.accepted / max(self.n_steps, 1)


def simulate(
    k: MhKernel,
    x0,
    n_steps: int,
    rng: RngStream,
    sink: Optional[Callable[[np.ndarray, int], None]] = None,
    hit_radius: Optional[float] = None,
    backend: Optional[str] = None,
) -> BatchResult:
    """Advance a batch of chains ``x0`` (shape ``(m, d)`` or ``(d,)``) by ``n_steps``.

    ``sink(block, t0)`` receives every block of post-step states
    (``block[i]`` is the state after step ``t0 + i + 1``). With
    ``hit_radius`` set, each chain freezes at its first step with
    ``||x|| <= hit_radius``; ``hit_at`` is -1 for chains that never hit and
    0 for chains that start inside.
    """
    X = np.array(x0, dtype=float, ndmin=2, copy=True)
    if X.ndim != 2 or X.shape[1] != k.dim:
        raise DimensionError(f"initial states have shape {X.shape}, kernel dimension {k.dim}")
    if n_steps < 0:
        raise ParameterError("n_steps must be non-negative")
    m, d = X.shape
    if k.kind == "mpcn" and np.any(np.einsum("ij,ij->i", X, X) == 0.0):
        raise DegenerateStateError("MpCN chains cannot start at the origin")
    lp = np.array([k.target.log_pi(x) for x in X], dtype=float)
    acc = np.zeros(m, dtype=np.int64)
    active = np.ones(m, dtype=np.uint8)
    hit_at = np.full(m, -1, dtype=np.int64)
    hit_r2 = -1.0
    if hit_radius is not None:
        hit_r2 = float(hit_radius) ** 2
        inside = np.einsum("ij,ij->i", X, X) <= hit_r2
        hit_at[inside] = 0
        active[inside] = 0

    params = _engine_params(k.target)
    if params is not None:
        advance = engine.get_advance(backend)
        fam, a, b = params
        tau = k.proposal.scale if k.kind == "rwm" else k.proposal.rho
        kind = _KIND_CODES[k.kind]

    B = block_size(m, d)
    empty = np.zeros((0, m, d))
    t0 = 0
    while t0 < n_steps:
        if not active.any() and sink is None:
            break
        n = min(B, n_steps - t0)
        W, S, logu = draw_noise(k.proposal, n, m, d, rng)
        out = np.empty((n, m, d)) if sink is not None else empty
        if params is None:
            _advance_generic(k, X, lp, W, S, logu, acc, active, hit_r2, t0, hit_at, out)
        else:
            advance(kind, fam, a, b, tau, X, lp, W, S, logu, acc, active, hit_r2, t0, hit_at, out)
        if sink is not None:
            sink(out, t0)
        t0 += n
    return BatchResult(X, acc, hit_at, n_steps)

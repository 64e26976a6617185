"""MH kernels (RWM, pCN, MpCN) and executable geometric-ergodicity diagnostics."""
from .engine import BACKEND
from .errors import (
    ConfigError,
    CorruptTraceError,
    DegenerateStateError,
    DimensionError,
    MpcnError,
    ParameterError,
    UnsupportedOperationError,
)
from .kernels import MhKernel, ProposalKernel, log_acceptance_ratio, mh_step, simulate
from .rng import GammaParams, RngStream
from .targets import GenExponential, Gaussian, StudentLike, make_target

__version__ = "0.1.0"

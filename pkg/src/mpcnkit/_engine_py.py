"""Pure-numpy chain engine (fallback when the compiled core is unavailable).

Semantics are identical to ``_engine.pyx``: advance ``m`` chains by
``n`` MH steps on pre-drawn noise. Vectorized over chains, looped over
steps.
"""
import numpy as np

RWM, PCN, MPCN = 0, 1, 2
STUDENT, GAUSSIAN, GENEXP = 0, 1, 2


def log_density_r2(family, a, b, r2):
    if family == STUDENT:
        return -a * np.log1p(r2)
    if family == GAUSSIAN:
        return -a * r2
    return -a * r2**b


def advance(kind, family, a, b, tau, X, lp, W, S, logu, acc, active,
            hit_r2, t0, hit_at, out):
    """Advance chains in place.

    Parameters
    ----------
    kind : int
        0 RWM (``tau`` is the step scale), 1 pCN, 2 MpCN (``tau`` is rho).
    family, a, b
        Built-in log-density: student ``-a log1p(r2)``, gaussian ``-a r2``,
        genexp ``-a r2**b``.
    X, lp : ndarray
        ``(m, d)`` states and ``(m,)`` cached log-densities, updated in place.
    W, S, logu : ndarray
        ``(n, m, d)`` increments, ``(n, m)`` MpCN scale factors
        ``1/sqrt(chi2_d)`` and ``(n, m)`` log-uniforms.
    acc, active, hit_at : ndarray
        Per-chain accept counts, run mask and hitting step (in place).
    hit_r2 : float
        Chains stop once ``||x||^2 <= hit_r2``; negative disables.
    out : ndarray
        ``(n, m, d)`` buffer receiving every post-step state, or a
        zero-length array to skip recording.
    """
    n = W.shape[0]
    record = out.shape[0] == n and n > 0
    hitting = hit_r2 >= 0.0
    mask = active.astype(bool)
    dim = X.shape[1]
    if kind != RWM:
        sr = np.sqrt(tau)
        s1r = np.sqrt(1.0 - tau)
    for i in range(n):
        if not mask.any():
            if record:
                out[i:] = X
            break
        w = W[i]
        if kind == RWM:
            Y = X + tau * w
        elif kind == PCN:
            Y = sr * X + s1r * w
        else:
            r2x = np.einsum("ij,ij->i", X, X)
            coef = s1r * (np.sqrt(r2x) * S[i])
            Y = sr * X + coef[:, None] * w
        r2y = np.einsum("ij,ij->i", Y, Y)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            lpy = log_density_r2(family, a, b, r2y)
            if kind == RWM:
                ratio = lpy - lp
            elif kind == PCN:
                r2x = np.einsum("ij,ij->i", X, X)
                ratio = (lpy + 0.5 * r2y) - (lp + 0.5 * r2x)
            else:
                half_d = 0.5 * dim
                ratio = (lpy + half_d * np.log(r2y)) - (lp + half_d * np.log(r2x))
        ok = mask & (logu[i] <= ratio)
        X[ok] = Y[ok]
        lp[ok] = lpy[ok]
        acc += ok
        if record:
            out[i] = X
        if hitting:
            r2 = np.einsum("ij,ij->i", X, X)
            hit = mask & (r2 <= hit_r2)
            if hit.any():
                hit_at[hit] = t0 + i + 1
                mask &= ~hit
    active[:] = mask

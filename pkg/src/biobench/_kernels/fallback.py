"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via
BIOBENCH_FORCE_NUMPY=1).  Must stay numerically interchangeable with
``_core``: same update order, same tie-breaking.
"""

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))


def stage_loglik(Z, mu, sd):
    """Per-subject, per-stage Gaussian log-likelihood.

    Z  : (n, d) observed z-scores
    mu : (S, d) expected z per stage
    sd : (d,)   observation noise SD
    returns (n, S) with entry [i, s] = sum_j log N(Z[i,j]; mu[s,j], sd[j]).
    """
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    sd = np.ascontiguousarray(sd, dtype=np.float64)
    w = 1.0 / (sd * sd)
    t1 = (Z * Z) @ w
    t2 = Z @ (mu * w).T
    t3 = (mu * mu) @ w
    const = -0.5 * (_LOG_2PI * Z.shape[1]) - np.log(sd).sum()
    return -0.5 * (t1[:, None] - 2.0 * t2 + t3[None, :]) + const


def smo_solve(K, y, cap, tol, max_iter, alpha, grad):
    """Pairwise (SMO-style) solver for the weighted soft-margin SVM dual.

    minimize  0.5 a' Qbar a - sum(a)   s.t.  0 <= a_i <= cap_i,  sum(y a) = 0
    with Qbar_ij = y_i y_j K_ij.  ``alpha`` and ``grad`` are updated in
    place; ``grad`` must equal y * (K @ (y * alpha)) - 1 on entry.
    Most-violating-pair selection, first index wins ties.

    Returns (n_iter, gap, b).
    """
    n = K.shape[0]
    minus_ygrad = np.empty(n)
    b = 0.0
    gap = np.inf
    it = 0
    for it in range(1, int(max_iter) + 1):
        np.multiply(y, grad, out=minus_ygrad)
        np.negative(minus_ygrad, out=minus_ygrad)
        up = ((y > 0) & (alpha < cap)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < cap))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, minus_ygrad, -np.inf)))
        j = int(np.argmin(np.where(low, minus_ygrad, np.inf)))
        m = minus_ygrad[i]
        M = minus_ygrad[j]
        gap = m - M
        b = 0.5 * (m + M)
        if gap <= tol:
            return it - 1, gap, b
        a = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if a <= 1e-12:
            a = 1e-12
        d = gap / a
        # clip so both multipliers stay inside their boxes
        if y[i] > 0:
            d = min(d, cap[i] - alpha[i])
        else:
            d = min(d, alpha[i])
        if y[j] > 0:
            d = min(d, alpha[j])
        else:
            d = min(d, cap[j] - alpha[j])
        alpha[i] += y[i] * d
        alpha[j] -= y[j] * d
        grad += (d * y) * (K[:, i] - K[:, j])
    return it, gap, b

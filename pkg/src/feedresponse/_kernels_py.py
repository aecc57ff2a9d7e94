"""Pure-Python numerical kernels.

Reference implementations of the hot inner loops: the terminating Gauss
hypergeometric series, the response-count pmf built on it, per-user
log-likelihood terms, and the visibility sum over feed positions. The
compiled extension in ``_kernels.pyx`` mirrors these function for
function; ``_backend`` picks whichever is importable.

All routines assume arguments already validated by the public API.
"""

import math

import numpy as np

# Rescale threshold for streaming sums kept in linear space. 1e280 leaves
# headroom below the float64 overflow point while letting most sums finish
# without any rescale at all.
_RESCALE = 1e280
_RESCALE_LOG = 280.0 * math.log(10.0)


def log_hyp2f1_neg_int_b(a: float, K: int, c: float, z: float) -> float:
    """log 2F1(a, -K; c; z) for integer K >= 0, 0 <= z <= 1, c > a > 0.

    The defining series alternates and cancels catastrophically for large
    K, so we evaluate the Pfaff transform instead:

        2F1(a, -K; c; z) = (1-z)^K * 2F1(c-a, -K; c; z/(z-1))
                         = (1-z)^K * sum_{k=0}^{K} [K]_k (c-a)_k / ((c)_k k!) * w^k

    with w = z/(1-z) >= 0 and [K]_k = K!/(K-k)!. Every term is positive
    when c > a, so the sum accumulates without cancellation. At z == 1 the
    series collapses to the Chu-Vandermonde value (c-a)_K / (c)_K.
    """
    if K == 0 or z == 0.0:
        return 0.0
    alpha = c - a
    if z == 1.0:
        return (math.lgamma(alpha + K) - math.lgamma(alpha)
                + math.lgamma(c) - math.lgamma(c + K))
    w = z / (1.0 - z)
    term = 1.0
    total = 1.0
    offset = 0.0
    for k in range(K):
        term *= w * (K - k) * (alpha + k) / ((c + k) * (k + 1.0))
        total += term
        if total > _RESCALE:
            total /= _RESCALE
            term /= _RESCALE
            offset += _RESCALE_LOG
    return offset + math.log(total) + K * math.log1p(-z)


def hyp2f1_terminating(a: float, K: int, c: float, z: float) -> float:
    """2F1(a, -K; c; z) in linear space, integer K >= 0, 0 <= z <= 1.

    Routes through the positive Pfaff series whenever it applies
    (c > a and c > 0); otherwise falls back to the direct terminating
    sum, which is exact for small K and the best available when the
    transformed series would not have a fixed sign.
    """
    if K == 0 or z == 0.0:
        return 1.0
    if c > a and c > 0.0:
        return math.exp(log_hyp2f1_neg_int_b(a, K, c, z))
    term = 1.0
    total = 1.0
    for k in range(K):
        term *= z * (a + k) * (-K + k) / ((c + k) * (k + 1.0))
        total += term
    return total


def log_response_pmf(M: int, m: int, n: int, N: int, A: float) -> float:
    """log P(M responses | m, n, N, A); -inf where the pmf is zero.

    P(M) = C(M+m, m) C(N, M) / C(M+n+1, M)
           * A^M * 2F1(m+M+1, M-N; M+n+2; A)
    """
    if A == 0.0:
        return 0.0 if M == 0 else -math.inf
    log_choose_mm = (math.lgamma(M + m + 1.0) - math.lgamma(m + 1.0)
                     - math.lgamma(M + 1.0))
    log_choose_nm = (math.lgamma(N + 1.0) - math.lgamma(M + 1.0)
                     - math.lgamma(N - M + 1.0))
    log_choose_den = (math.lgamma(M + n + 2.0) - math.lgamma(M + 1.0)
                      - math.lgamma(n + 2.0))
    log_f = log_hyp2f1_neg_int_b(m + M + 1.0, N - M, M + n + 2.0, A)
    return (log_choose_mm + log_choose_nm - log_choose_den
            + M * math.log(A) + log_f)


def response_logpmf_vector(m: int, n: int, N: int, A: float) -> np.ndarray:
    """log pmf of the response count at every M in 0..N."""
    out = np.empty(N + 1, dtype=np.float64)
    for M in range(N + 1):
        out[M] = log_response_pmf(M, m, n, N, A)
    return out


def loglik_terms(M_arr, m_arr, n_arr, N: int, A_arr) -> np.ndarray:
    """Per-user log-likelihood terms, parameter-dependent factors only.

    term_u = M_u log A_u + log 2F1(m_u+M_u+1, M_u-N; M_u+n_u+2; A_u)

    The combinatorial prefactor of the pmf does not depend on the model
    parameters, so it is dropped; sums of these terms differ from the
    full log-likelihood by a constant.
    """
    M_arr = np.ascontiguousarray(M_arr, dtype=np.int64)
    m_arr = np.ascontiguousarray(m_arr, dtype=np.int64)
    n_arr = np.ascontiguousarray(n_arr, dtype=np.int64)
    A_arr = np.ascontiguousarray(A_arr, dtype=np.float64)
    out = np.empty(len(M_arr), dtype=np.float64)
    for i in range(len(M_arr)):
        M = int(M_arr[i])
        A = float(A_arr[i])
        if A == 0.0:
            out[i] = 0.0 if M == 0 else -math.inf
            continue
        mi = int(m_arr[i])
        ni = int(n_arr[i])
        out[i] = M * math.log(A) + log_hyp2f1_neg_int_b(
            mi + M + 1.0, N - M, M + ni + 2.0, A)
    return out


def p_visible_from_rho(rho: float, view_tail, tail_tol: float) -> float:
    """P(advocate post is seen) = sum_L P(L | rho) * p_view(L).

    ``view_tail[L]`` is p_view at feed position L; positions beyond the
    table carry zero view probability, so the sum there is exact. The
    loop stops early once the remaining geometric mass (g_L * rho after
    adding position L) cannot move the result by more than tail_tol.
    """
    if rho == 0.0:
        return float(view_tail[0])
    if math.isinf(rho):
        return 0.0
    q = rho / (1.0 + rho)
    g = 1.0 / (1.0 + rho)
    total = 0.0
    for L in range(len(view_tail)):
        total += g * float(view_tail[L])
        if g * rho < tail_tol:
            break
        g *= q
    return min(total, 1.0)


def p_visible_many(rhos, view_tail, tail_tol: float) -> np.ndarray:
    """Vector form of p_visible_from_rho."""
    rhos = np.ascontiguousarray(rhos, dtype=np.float64)
    out = np.empty(len(rhos), dtype=np.float64)
    for i in range(len(rhos)):
        out[i] = p_visible_from_rho(float(rhos[i]), view_tail, tail_tol)
    return out

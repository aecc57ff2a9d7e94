# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels.

Function-for-function mirror of ``_kernels_py``; see that module for the
algorithm notes. Kept free of the numpy C-API (typed memoryviews only) so
the build needs nothing beyond a C compiler.
"""

import numpy as np

from libc.math cimport INFINITY, exp, lgamma, log, log1p

cdef double _RESCALE = 1e280
cdef double _RESCALE_LOG = 280.0 * log(10.0)


cdef double _log2f1(double a, long K, double c, double z) noexcept nogil:
    # Positive-term Pfaff series; requires c > a, c > 0, 0 <= z <= 1.
    cdef double alpha, w, term, total, offset
    cdef long k
    if K == 0 or z == 0.0:
        return 0.0
    alpha = c - a
    if z == 1.0:
        return lgamma(alpha + K) - lgamma(alpha) + lgamma(c) - lgamma(c + K)
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
    return offset + log(total) + K * log1p(-z)


def log_hyp2f1_neg_int_b(double a, long K, double c, double z):
    """log 2F1(a, -K; c; z) for integer K >= 0, 0 <= z <= 1, c > a > 0."""
    return _log2f1(a, K, c, z)


def hyp2f1_terminating(double a, long K, double c, double z):
    """2F1(a, -K; c; z) in linear space, integer K >= 0, 0 <= z <= 1."""
    cdef double term, total
    cdef long k
    if K == 0 or z == 0.0:
        return 1.0
    if c > a and c > 0.0:
        return exp(_log2f1(a, K, c, z))
    term = 1.0
    total = 1.0
    for k in range(K):
        term *= z * (a + k) * (-K + k) / ((c + k) * (k + 1.0))
        total += term
    return total


cdef double _log_response_pmf(long M, long m, long n, long N,
                              double A) noexcept nogil:
    cdef double log_choose_mm, log_choose_nm, log_choose_den, log_f
    if A == 0.0:
        return 0.0 if M == 0 else -INFINITY
    log_choose_mm = (lgamma(M + m + 1.0) - lgamma(m + 1.0)
                     - lgamma(M + 1.0))
    log_choose_nm = (lgamma(N + 1.0) - lgamma(M + 1.0)
                     - lgamma(N - M + 1.0))
    log_choose_den = (lgamma(M + n + 2.0) - lgamma(M + 1.0)
                      - lgamma(n + 2.0))
    log_f = _log2f1(m + M + 1.0, N - M, M + n + 2.0, A)
    return (log_choose_mm + log_choose_nm - log_choose_den
            + M * log(A) + log_f)


def log_response_pmf(long M, long m, long n, long N, double A):
    """log P(M responses | m, n, N, A); -inf where the pmf is zero."""
    return _log_response_pmf(M, m, n, N, A)


def response_logpmf_vector(long m, long n, long N, double A):
    """log pmf of the response count at every M in 0..N."""
    out = np.empty(N + 1, dtype=np.float64)
    cdef double[::1] ov = out
    cdef long M
    with nogil:
        for M in range(N + 1):
            ov[M] = _log_response_pmf(M, m, n, N, A)
    return out


def loglik_terms(M_arr, m_arr, n_arr, long N, A_arr):
    """Per-user log-likelihood terms, parameter-dependent factors only."""
    cdef const long[::1] Mv = np.ascontiguousarray(M_arr, dtype=np.int64)
    cdef const long[::1] mv = np.ascontiguousarray(m_arr, dtype=np.int64)
    cdef const long[::1] nv = np.ascontiguousarray(n_arr, dtype=np.int64)
    cdef const double[::1] Av = np.ascontiguousarray(A_arr, dtype=np.float64)
    out = np.empty(Mv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef long M
    cdef double A
    with nogil:
        for i in range(Mv.shape[0]):
            M = Mv[i]
            A = Av[i]
            if A == 0.0:
                ov[i] = 0.0 if M == 0 else -INFINITY
            else:
                ov[i] = M * log(A) + _log2f1(
                    mv[i] + M + 1.0, N - M, nv[i] + M + 2.0, A)
    return out


cdef double _p_visible(double rho, const double[::1] view_tail,
                       double tail_tol) noexcept nogil:
    cdef double q, g, total
    cdef Py_ssize_t L
    if rho == 0.0:
        return view_tail[0]
    if rho == INFINITY:
        return 0.0
    q = rho / (1.0 + rho)
    g = 1.0 / (1.0 + rho)
    total = 0.0
    for L in range(view_tail.shape[0]):
        total += g * view_tail[L]
        if g * rho < tail_tol:
            break
        g *= q
    return total if total < 1.0 else 1.0


def p_visible_from_rho(double rho, view_tail, double tail_tol):
    """P(advocate post is seen) = sum_L P(L | rho) * p_view(L)."""
    cdef const double[::1] vt = np.ascontiguousarray(view_tail,
                                                     dtype=np.float64)
    return _p_visible(rho, vt, tail_tol)


def p_visible_many(rhos, view_tail, double tail_tol):
    """Vector form of p_visible_from_rho."""
    cdef const double[::1] rv = np.ascontiguousarray(rhos, dtype=np.float64)
    cdef const double[::1] vt = np.ascontiguousarray(view_tail,
                                                     dtype=np.float64)
    out = np.empty(rv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(rv.shape[0]):
            ov[i] = _p_visible(rv[i], vt, tail_tol)
    return out

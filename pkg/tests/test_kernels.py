"""Kernel-level checks: the compiled and pure-Python backends must agree
with each other and with high-precision references."""

import math
import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest

from feedresponse import core

kpy = pytest.importorskip("feedresponse._kernels_py")
kc = pytest.importorskip("feedresponse._kernels")

mpmath.mp.dps = 60

HYP_CASES = [
    # (a, K, c, z); b = -K, and c > a as in every in-model call
    (3.5, 4, 7.2, 0.3),
    (222.0, 429, 273.0, 0.9),      # large terminating series
    (10.0, 50, 12.0, 0.99),
    (2.0, 5, 9.0, 1.0),            # z = 1 closed form
    (1.0, 0, 5.0, 0.7),            # empty series
    (40.0, 200, 45.0, 0.0),
    (120.5, 300, 200.25, 0.65),
]


def mp_log_hyp(a, K, c, z):
    v = mpmath.hyp2f1(a, -K, c, z)
    return float(mpmath.log(v))


class TestTerminatingHyp2f1:
    @pytest.mark.parametrize("a,K,c,z", HYP_CASES)
    def test_log_matches_mpmath(self, a, K, c, z):
        want = mp_log_hyp(a, K, c, z)
        got = kpy.log_hyp2f1_neg_int_b(a, K, c, z)
        assert got == pytest.approx(want, rel=1e-11, abs=1e-11)

    def test_hand_value(self):
        # 2F1(4, -3; 6; 1/2) summed by hand: 1 - 1 + 5/14 - 5/112 = 5/16
        assert kpy.hyp2f1_terminating(4.0, 3, 6.0, 0.5) == \
            pytest.approx(0.3125, rel=1e-12)

    def test_empty_and_zero_argument(self):
        assert kpy.log_hyp2f1_neg_int_b(3.0, 0, 5.0, 0.8) == 0.0
        assert kpy.log_hyp2f1_neg_int_b(3.0, 7, 5.0, 0.0) == 0.0

    def test_direct_route_handles_alternating_terms(self):
        # c < a leaves the transformed series unsigned, so the linear
        # form falls back to the direct sum; K is small enough that
        # cancellation costs little
        want = float(mpmath.hyp2f1(5.0, -3, 2.5, 0.4))
        assert kpy.hyp2f1_terminating(5.0, 3, 2.5, 0.4) == \
            pytest.approx(want, rel=1e-10)
        assert kc.hyp2f1_terminating(5.0, 3, 2.5, 0.4) == \
            pytest.approx(want, rel=1e-10)

    def test_huge_series_does_not_overflow(self):
        # intermediate terms overflow float64 without rescaling
        got = kpy.log_hyp2f1_neg_int_b(500.0, 2000, 600.0, 0.97)
        want = mp_log_hyp(500.0, 2000, 600.0, 0.97)
        assert got == pytest.approx(want, rel=1e-11)


class TestResponseLogPmf:
    CASES = [(0, 0, 0, 1), (1, 1, 1, 3), (3, 5, 10, 40), (3, 5, 3, 391),
             (14, 14, 40, 120), (150, 200, 250, 500)]

    @pytest.mark.parametrize("m,n,M,N", CASES)
    @pytest.mark.parametrize("A", [1e-4, 0.05, 0.5, 1.0])
    def test_normalizes(self, m, n, M, N, A):
        logp = kpy.response_logpmf_vector(m, n, N, A)
        assert np.exp(logp).sum() == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("m,n,M,N", CASES)
    def test_scalar_matches_vector(self, m, n, M, N):
        logp = kpy.response_logpmf_vector(m, n, N, 0.3)
        assert kpy.log_response_pmf(M, m, n, N, 0.3) == \
            pytest.approx(float(logp[M]), rel=1e-13, abs=1e-13)

    @pytest.mark.parametrize("m,n,N,A", [(3, 5, 40, 0.05), (0, 0, 10, 0.9),
                                         (7, 7, 391, 0.001)])
    def test_mean_identity(self, m, n, N, A):
        logp = kpy.response_logpmf_vector(m, n, N, A)
        mean = float(np.exp(logp) @ np.arange(N + 1))
        assert mean == pytest.approx(N * A * (m + 1) / (n + 2), rel=1e-9)

    def test_zero_scale_is_point_mass(self):
        assert kpy.log_response_pmf(0, 3, 5, 40, 0.0) == 0.0
        assert kpy.log_response_pmf(1, 3, 5, 40, 0.0) == -math.inf

    def test_loglik_terms_differ_from_pmf_by_constant(self):
        # the dropped combinatorial prefactor has no parameter dependence
        M = np.array([0, 2, 7, 40])
        m = np.array([1, 3, 5, 14])
        n = np.array([2, 5, 9, 14])
        N = 60
        for A1, A2 in [(0.02, 0.3), (0.5, 0.97)]:
            t1 = kpy.loglik_terms(M, m, n, N, np.full(4, A1))
            t2 = kpy.loglik_terms(M, m, n, N, np.full(4, A2))
            for i in range(4):
                d_full = (kpy.log_response_pmf(int(M[i]), int(m[i]),
                                               int(n[i]), N, A1)
                          - kpy.log_response_pmf(int(M[i]), int(m[i]),
                                                 int(n[i]), N, A2))
                assert t1[i] - t2[i] == pytest.approx(d_full, abs=1e-10)


class TestVisibilityKernel:
    def test_limits(self):
        tail = core.surfing_stop_table(14.0, 14.0).view_tail
        assert kpy.p_visible_from_rho(0.0, tail, 1e-12) == 1.0
        assert kpy.p_visible_from_rho(math.inf, tail, 1e-12) == 0.0

    def test_matches_untruncated_sum(self):
        tail = core.surfing_stop_table(14.0, 14.0).view_tail
        for rho in (0.3, 3.0, 40.0):
            q = rho / (1.0 + rho)
            full = sum((1.0 - q) * q ** L * t
                       for L, t in enumerate(tail))
            got = kpy.p_visible_from_rho(rho, tail, 1e-12)
            assert got == pytest.approx(full, abs=2e-12, rel=1e-10)

    def test_monotone_in_rho(self):
        tail = core.surfing_stop_table(14.0, 14.0).view_tail
        rhos = np.array([0.0, 0.1, 1.0, 5.0, 50.0, 1e4])
        vals = kpy.p_visible_many(rhos, tail, 1e-12)
        assert np.all(np.diff(vals) < 0)

    def test_many_matches_scalar(self):
        tail = core.surfing_stop_table(14.0, 14.0).view_tail
        rhos = np.array([0.0, 0.7, 12.0, math.inf])
        vals = kpy.p_visible_many(rhos, tail, 1e-12)
        for rho, v in zip(rhos, vals):
            assert v == kpy.p_visible_from_rho(float(rho), tail, 1e-12)


class TestBackendParity:
    """The compiled extension and the fallback must agree closely."""

    @pytest.mark.parametrize("a,K,c,z", HYP_CASES)
    def test_hyp_parity(self, a, K, c, z):
        assert kc.log_hyp2f1_neg_int_b(a, K, c, z) == \
            pytest.approx(kpy.log_hyp2f1_neg_int_b(a, K, c, z),
                          rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("m,n,N", [(0, 0, 1), (3, 5, 40), (14, 14, 120),
                                       (150, 200, 500)])
    @pytest.mark.parametrize("A", [0.0, 1e-4, 0.3, 1.0])
    def test_pmf_vector_parity(self, m, n, N, A):
        a = kc.response_logpmf_vector(m, n, N, A)
        b = kpy.response_logpmf_vector(m, n, N, A)
        finite = np.isfinite(b)
        assert np.array_equal(finite, np.isfinite(a))
        np.testing.assert_allclose(a[finite], b[finite],
                                   rtol=1e-10, atol=1e-10)

    def test_loglik_terms_parity(self):
        M = np.array([0, 2, 7, 40, 0])
        m = np.array([1, 3, 5, 14, 0])
        n = np.array([2, 5, 9, 14, 0])
        A = np.array([0.02, 0.3, 0.9, 1e-5, 0.0])
        a = kc.loglik_terms(M, m, n, 60, A)
        b = kpy.loglik_terms(M, m, n, 60, A)
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)

    def test_visibility_parity(self):
        tail = core.surfing_stop_table(14.0, 14.0).view_tail
        rhos = np.array([0.0, 1e-6, 0.5, 7.0, 300.0, 1e8, math.inf])
        np.testing.assert_allclose(kc.p_visible_many(rhos, tail, 1e-12),
                                   kpy.p_visible_many(rhos, tail, 1e-12),
                                   rtol=1e-12, atol=0)


class TestBackendSelection:
    def _backend_for(self, value):
        env = dict(os.environ, FEEDRESPONSE_BACKEND=value)
        return subprocess.run(
            [sys.executable, "-c",
             "import feedresponse; print(feedresponse.BACKEND)"],
            capture_output=True, text=True, env=env)

    def test_forced_python(self):
        r = self._backend_for("python")
        assert r.returncode == 0 and r.stdout.strip() == "python"

    def test_forced_compiled(self):
        r = self._backend_for("compiled")
        assert r.returncode == 0 and r.stdout.strip() == "compiled"

    def test_unknown_value_fails_import(self):
        r = self._backend_for("turbo")
        assert r.returncode != 0
        assert "FEEDRESPONSE_BACKEND" in r.stderr

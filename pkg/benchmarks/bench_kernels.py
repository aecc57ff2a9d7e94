"""Compare the compiled kernels against the pure-Python fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_kernels.py

Times the four hot kernels on representative workloads and prints the
median over repeated runs for each backend plus the speedup. The
compiled extension must be importable; if it is not, build it first
(pip install -e . --no-build-isolation).
"""

import time

import numpy as np

from feedresponse import core
from feedresponse import _kernels_py

try:
    from feedresponse import _kernels
except ImportError:
    raise SystemExit("compiled extension not built; run "
                     "pip install -e . --no-build-isolation first")


def median_time(fn, repeats=9):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return float(np.median(samples))


def workloads():
    rng = np.random.default_rng(12)
    n_users = 5000
    N = 391
    m_arr = rng.integers(0, 30, n_users)
    n_arr = m_arr + rng.integers(0, 30, n_users)
    M_arr = rng.integers(0, 12, n_users)
    A_arr = rng.uniform(1e-4, 0.2, n_users)
    rhos = rng.uniform(0.0, 200.0, n_users)
    view_tail = core.surfing_stop_table(14.0, 14.0).view_tail

    def hyp(k):
        def run():
            for i in range(2000):
                a = 4.0 + (i % 9)
                k.log_hyp2f1_neg_int_b(a, 380, a + 1.0 + (i % 7), 0.04)
        return run

    def pmf_vector(k):
        return lambda: k.response_logpmf_vector(3, 5, N, 0.05)

    def loglik(k):
        return lambda: k.loglik_terms(M_arr, m_arr, n_arr, N, A_arr)

    def visibility(k):
        return lambda: k.p_visible_many(rhos, view_tail, 1e-12)

    return [("log_hyp2f1_neg_int_b x2000", hyp),
            ("response_logpmf_vector (N=391)", pmf_vector),
            (f"loglik_terms ({n_users} users)", loglik),
            (f"p_visible_many ({n_users} rhos)", visibility)]


def main():
    rows = []
    for name, make in workloads():
        t_py = median_time(make(_kernels_py))
        t_c = median_time(make(_kernels))
        rows.append((name, t_py, t_c, t_py / t_c))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'python':>10}  {'compiled':>10}  "
          f"{'speedup':>8}")
    for name, t_py, t_c, gain in rows:
        print(f"{name:<{width}}  {t_py * 1e3:>8.3f}ms  {t_c * 1e3:>8.3f}ms  "
              f"{gain:>7.1f}x")


if __name__ == "__main__":
    main()

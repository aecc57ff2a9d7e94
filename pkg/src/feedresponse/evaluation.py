"""Rank statistics and model-vs-baseline evaluation.

Small-sample code paths are exact (permutation Spearman p, Fisher's
exact test via full enumeration); larger samples use the standard t
approximation. The model/baseline comparison is a paired bootstrap on
the difference of Spearman correlations.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr

from .errors import ModelDomainError, UndefinedStatisticError
from .inference import classify_top_responders, precision_recall_points
from .types import _check, _finite

_EXACT_PERMUTATION_MAX = 8
_REL_SLACK = 1e-12  # tie slack when comparing statistics to the observed one


def _as_1d(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    _check(arr.ndim == 1, f"{name} must be one-dimensional", ModelDomainError)
    _check(bool(np.all(np.isfinite(arr))), f"{name} must be finite",
           ModelDomainError)
    return arr


def midranks(x) -> np.ndarray:
    """Ranks 1..n with tied values sharing their average rank."""
    x = _as_1d(x, "x")
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    xs = x[order]
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    ac = a - a.mean()
    bc = b - b.mean()
    denom = math.sqrt(float(ac @ ac) * float(bc @ bc))
    if denom == 0.0:
        raise UndefinedStatisticError(
            "correlation undefined: an input is constant")
    return float(ac @ bc) / denom


@dataclass(frozen=True)
class SpearmanResult:
    """Rank correlation with a two-sided p-value and how it was obtained."""

    rho: float
    p_value: float
    n: int
    p_method: str


def spearman_rho(x, y) -> SpearmanResult:
    """Spearman correlation with midranks for ties.

    Two-sided p-value: exact over all n! permutations for n <= 8,
    otherwise the t approximation with n-2 degrees of freedom.
    """
    x = _as_1d(x, "x")
    y = _as_1d(y, "y")
    _check(len(x) == len(y), "x and y must have equal length",
           ModelDomainError)
    _check(len(x) >= 3, "need at least 3 pairs", ModelDomainError)
    rx = midranks(x)
    ry = midranks(y)
    rho = _pearson(rx, ry)
    n = len(x)
    if n <= _EXACT_PERMUTATION_MAX:
        p = _exact_permutation_p(rx, ry, rho)
        method = "exact permutation"
    else:
        p = _t_approximation_p(rho, n)
        method = "t approximation"
    return SpearmanResult(rho=rho, p_value=p, n=n, p_method=method)


def _exact_permutation_p(rx: np.ndarray, ry: np.ndarray,
                         rho_obs: float) -> float:
    # rho is monotone in sum(rx * permuted ry), and ranks are permuted
    # along with the values, so enumerating index permutations suffices.
    n = len(rx)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    sums = ry[perms] @ rx
    mean_term = n * rx.mean() * ry.mean()
    sx = math.sqrt(float(((rx - rx.mean()) ** 2).sum()))
    sy = math.sqrt(float(((ry - ry.mean()) ** 2).sum()))
    rhos = (sums - mean_term) / (sx * sy)
    hits = np.abs(rhos) >= abs(rho_obs) - _REL_SLACK
    return float(hits.sum()) / len(perms)


def _t_approximation_p(rho: float, n: int) -> float:
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return float(2.0 * stdtr(n - 2, -abs(t)))


def fisher_exact(table) -> float:
    """Two-sided Fisher exact p for a 2x2 contingency table.

    Sums hypergeometric probabilities of all tables (at fixed margins)
    no more likely than the observed one. A zero margin makes the test
    vacuous: warns and returns 1.
    """
    t = np.asarray(table)
    _check(t.shape == (2, 2), "table must be 2x2", ModelDomainError)
    _check(bool(np.all(t == np.floor(t))) and bool(np.all(t >= 0)),
           "table entries must be nonnegative integers", ModelDomainError)
    a, b = int(t[0, 0]), int(t[0, 1])
    c, d = int(t[1, 0]), int(t[1, 1])
    r1, r2, c1, c2 = a + b, c + d, a + c, b + d
    if 0 in (r1, r2, c1, c2):
        warnings.warn("fisher_exact: a margin is zero; the table carries "
                      "no information (p = 1)")
        return 1.0
    n = r1 + r2

    def log_p(k: int) -> float:
        # P(X = k) for X hypergeometric with these margins.
        return (math.lgamma(r1 + 1) - math.lgamma(k + 1)
                - math.lgamma(r1 - k + 1)
                + math.lgamma(r2 + 1) - math.lgamma(c1 - k + 1)
                - math.lgamma(r2 - c1 + k + 1)
                - math.lgamma(n + 1) + math.lgamma(c1 + 1)
                + math.lgamma(n - c1 + 1))

    k_min = max(0, c1 - r2)
    k_max = min(r1, c1)
    p_obs = math.exp(log_p(a))
    total = 0.0
    for k in range(k_min, k_max + 1):
        p_k = math.exp(log_p(k))
        # 1e-12 slack: covers lgamma rounding on true ties yet stays far
        # below the smallest exact probability gap of modest tables.
        if p_k <= p_obs * (1.0 + _REL_SLACK):
            total += p_k
    return min(total, 1.0)


@dataclass(frozen=True)
class CorrelationDifferenceResult:
    """Paired bootstrap test of rho(x, y_a) - rho(x, y_b)."""

    observed_difference: float
    p_value: float
    n: int
    n_resamples: int
    n_effective_resamples: int
    seed: int


def correlation_difference_test(x, y_a, y_b, n_resamples: int = 10000,
                                seed: int = 0) -> CorrelationDifferenceResult:
    """Two-sided paired bootstrap for a Spearman correlation difference.

    Resamples user indices with replacement, recomputing both
    correlations on each resample; resamples where a correlation is
    undefined (a constant slice) are dropped. The add-one p-value
    convention keeps p > 0. Swapping y_a and y_b with the same seed
    negates the difference and leaves p unchanged.
    """
    x = _as_1d(x, "x")
    y_a = _as_1d(y_a, "y_a")
    y_b = _as_1d(y_b, "y_b")
    n = len(x)
    _check(len(y_a) == n and len(y_b) == n,
           "inputs must have equal length", ModelDomainError)
    _check(n >= 10, "need at least 10 pairs", ModelDomainError)
    _check(n_resamples >= 1, "n_resamples must be >= 1", ModelDomainError)
    d_obs = (spearman_rho(x, y_a).rho - spearman_rho(x, y_b).rho)

    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed & ((1 << 64) - 1), 0x626f6f74], dtype=np.uint64)))
    n_le = 0
    n_ge = 0
    kept = 0
    for _ in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        try:
            d = (_pearson(midranks(x[idx]), midranks(y_a[idx]))
                 - _pearson(midranks(x[idx]), midranks(y_b[idx])))
        except UndefinedStatisticError:
            continue
        kept += 1
        if d <= 0.0:
            n_le += 1
        if d >= 0.0:
            n_ge += 1
    p = 2.0 * min((1 + n_le) / (1 + kept), (1 + n_ge) / (1 + kept))
    return CorrelationDifferenceResult(
        observed_difference=d_obs, p_value=min(p, 1.0), n=n,
        n_resamples=n_resamples, n_effective_resamples=kept, seed=seed)


def error_uncertainty_correlation(predictions) -> SpearmanResult:
    """Spearman correlation of |prediction error| with predicted spread.

    A positive, significant value means the model knows when it is
    unsure: bigger claimed spread, bigger actual miss.
    """
    predictions = list(predictions)
    _check(len(predictions) >= 3, "need at least 3 predictions",
           ModelDomainError)
    err = np.array([p.abs_error for p in predictions])
    std = np.array([p.predicted_std for p in predictions])
    return spearman_rho(err, std)


@dataclass(frozen=True)
class ModelEvaluation:
    """Evaluation block for one prediction source."""

    label: str
    spearman: SpearmanResult
    classification: object
    fisher_p: float
    pr_points: tuple


@dataclass(frozen=True)
class EvaluationReport:
    """Side-by-side evaluation of the model and an optional baseline."""

    n_users: int
    fraction: float
    model: ModelEvaluation
    baseline: ModelEvaluation | None
    correlation_difference: CorrelationDifferenceResult | None
    error_uncertainty: SpearmanResult | None


def _evaluate_one(label: str, predictions, pop, fraction: float
                  ) -> ModelEvaluation:
    observed = np.array([p.observed for p in predictions], dtype=float)
    predicted = np.array([p.predicted_mean for p in predictions])
    sp = spearman_rho(predicted, observed)
    cls = classify_top_responders(predictions, pop, fraction=fraction)
    fisher_p = fisher_exact(cls.contingency)
    pr = precision_recall_points(predictions, pop, fraction=fraction)
    return ModelEvaluation(label=label, spearman=sp, classification=cls,
                           fisher_p=fisher_p, pr_points=pr)


def evaluate_predictions(model_predictions, baseline_predictions=None,
                         pop=None, fraction: float = 0.25,
                         n_resamples: int = 10000,
                         seed: int = 0) -> EvaluationReport:
    """Full comparison: rank correlation, top-fraction classification
    with Fisher significance, PR sweep, and (with a baseline) the paired
    bootstrap correlation-difference test.

    Baseline predictions must cover exactly the same users. The
    error/uncertainty correlation is reported for the model only (the
    baseline carries no spread).
    """
    model_predictions = list(model_predictions)
    model = _evaluate_one("model", model_predictions, pop, fraction)
    baseline = None
    corr_diff = None
    if baseline_predictions is not None:
        baseline_predictions = list(baseline_predictions)
        by_id = {p.user_id: p for p in baseline_predictions}
        if (len(by_id) != len(model_predictions)
                or any(p.user_id not in by_id for p in model_predictions)):
            raise ModelDomainError(
                "baseline predictions must cover exactly the same users")
        aligned = [by_id[p.user_id] for p in model_predictions]
        baseline = _evaluate_one("baseline", aligned, pop, fraction)
        observed = np.array([p.observed for p in model_predictions],
                            dtype=float)
        corr_diff = correlation_difference_test(
            observed,
            np.array([p.predicted_mean for p in model_predictions]),
            np.array([p.predicted_mean for p in aligned]),
            n_resamples=n_resamples, seed=seed)
    try:
        err_unc = error_uncertainty_correlation(model_predictions)
    except UndefinedStatisticError:
        err_unc = None
    return EvaluationReport(n_users=len(model_predictions),
                            fraction=fraction, model=model,
                            baseline=baseline,
                            correlation_difference=corr_diff,
                            error_uncertainty=err_unc)

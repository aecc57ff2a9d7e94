"""Per-user predictions, top-responder classification, and interest
posteriors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .errors import ModelDomainError
from .types import (ModelParams, PopulationParams, UserRecord, _check,
                    _finite)


@dataclass(frozen=True)
class PredictionRecord:
    """Predicted response count for one user, next to the observed one."""

    user_id: str
    observed: int
    predicted_mean: float
    predicted_std: float
    abs_error: float

    def __post_init__(self):
        _check(_finite(self.predicted_mean) and self.predicted_mean >= 0,
               "predicted_mean must be finite and >= 0", ModelDomainError)
        _check(_finite(self.predicted_std) and self.predicted_std >= 0,
               "predicted_std must be finite and >= 0", ModelDomainError)


def predict_user(user: UserRecord, pop: PopulationParams,
                 params: ModelParams) -> PredictionRecord:
    """Mean and spread of the user's response distribution."""
    dist = core.response_distribution(user, pop, params)
    return PredictionRecord(user_id=user.user_id, observed=user.responses,
                            predicted_mean=dist.mean,
                            predicted_std=dist.std,
                            abs_error=abs(dist.mean - user.responses))


def predict_population(users, pop: PopulationParams,
                       params: ModelParams) -> list:
    """Predictions for every user, in input order."""
    return [predict_user(u, pop, params) for u in users]


def _top_set(scored, target: int):
    """ids of the ``target`` largest scores.

    Ties at the cut value are broken by ascending user id so the set is
    deterministic and exactly ``target`` strong; returns the full tie
    group alongside whenever the cut actually splits one.
    """
    order = sorted(scored, key=lambda t: (-t[1], t[0]))
    threshold = order[target - 1][1]
    above = [uid for uid, s in order if s > threshold]
    ties = [uid for uid, s in order if s == threshold]
    need = target - len(above)
    selected = above + ties[:need]
    trimmed = tuple(ties) if need < len(ties) else ()
    return frozenset(selected), trimmed, threshold


def _target_size(n_users: int, fraction: float) -> int:
    # Nearest-rank rule: members at or above the (1-fraction) percentile.
    return n_users - math.ceil((1.0 - fraction) * n_users) + 1


def _post_counts(predictions, pop):
    """Per-user advocate post totals used to turn counts into fractions.

    ``pop`` may be a single PopulationParams (every user saw the same N),
    a mapping user_id -> N for pooled sets that span advocates with
    different post counts, or None (rank raw counts; the ordering is the
    same whenever N is shared).
    """
    if pop is None:
        return {p.user_id: 1.0 for p in predictions}
    if isinstance(pop, PopulationParams):
        n = float(pop.advocate_post_count)
        return {p.user_id: n for p in predictions}
    counts = {}
    for p in predictions:
        if p.user_id not in pop:
            raise ModelDomainError(
                f"no advocate post count supplied for user {p.user_id!r}")
        n = pop[p.user_id]
        n = n.advocate_post_count if isinstance(n, PopulationParams) else n
        _check(isinstance(n, int) and not isinstance(n, bool) and n >= 1,
               f"post count for user {p.user_id!r} must be a positive "
               "integer", ModelDomainError)
        counts[p.user_id] = float(n)
    return counts


@dataclass(frozen=True)
class ClassificationResult:
    """Predicted-top vs observed-top confusion for one model.

    ``predicted_tie_group``/``observed_tie_group`` list the user ids
    tied at the cut when the deterministic id-order trim had to split a
    tie (empty otherwise). Set sizes match, so precision equals recall.
    """

    fraction: float
    target_size: int
    n_users: int
    predicted_top: frozenset
    observed_top: frozenset
    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int
    precision: float
    recall: float
    error_fraction: float
    predicted_tie_group: tuple
    observed_tie_group: tuple

    @property
    def contingency(self):
        return ((self.true_positives, self.false_positives),
                (self.false_negatives, self.true_negatives))


def classify_top_responders(predictions, pop=None, fraction: float = 0.25
                            ) -> ClassificationResult:
    """Compare the predicted top ``fraction`` of users to the observed one.

    Users are scored by the fraction of advocate posts responded to
    (``pop`` supplies the post totals, see ``_post_counts``), so pooled
    sets spanning advocates with different N rank comparably. Both sides
    use the same nearest-rank percentile rule, with ties at the cut
    trimmed by ascending user id to the exact target size.
    """
    predictions = list(predictions)
    _check(len(predictions) >= 1, "predictions must be nonempty",
           ModelDomainError)
    _check(_finite(fraction) and 0.0 < fraction < 1.0,
           "fraction must lie in (0, 1)", ModelDomainError)
    ids = [p.user_id for p in predictions]
    _check(len(set(ids)) == len(ids), "duplicate user ids in predictions",
           ModelDomainError)
    n = len(predictions)
    target = _target_size(n, fraction)
    posts = _post_counts(predictions, pop)
    pred_top, pred_ties, _ = _top_set(
        [(p.user_id, p.predicted_mean / posts[p.user_id])
         for p in predictions], target)
    obs_top, obs_ties, _ = _top_set(
        [(p.user_id, p.observed / posts[p.user_id]) for p in predictions],
        target)
    tp = len(pred_top & obs_top)
    fp = len(pred_top - obs_top)
    fn = len(obs_top - pred_top)
    tn = n - tp - fp - fn
    return ClassificationResult(
        fraction=fraction, target_size=target, n_users=n,
        predicted_top=pred_top, observed_top=obs_top,
        true_positives=tp, false_positives=fp, false_negatives=fn,
        true_negatives=tn,
        precision=tp / target, recall=tp / target,
        error_fraction=(fp + fn) / n,
        predicted_tie_group=pred_ties, observed_tie_group=obs_ties)


@dataclass(frozen=True)
class PRPoint:
    """One point of the precision-recall sweep: top-k by predicted mean."""

    k: int
    precision: float
    recall: float


def precision_recall_points(predictions, pop=None, fraction: float = 0.25):
    """Precision/recall against the observed top set at every cutoff k.

    Users are ranked by predicted response fraction (ties by ascending
    id); the positive class is the observed top ``fraction`` under the
    same rule as ``classify_top_responders``.
    """
    predictions = list(predictions)
    _check(len(predictions) >= 2, "need at least 2 predictions",
           ModelDomainError)
    _check(_finite(fraction) and 0.0 < fraction < 1.0,
           "fraction must lie in (0, 1)", ModelDomainError)
    n = len(predictions)
    target = _target_size(n, fraction)
    posts = _post_counts(predictions, pop)
    obs_top, _, _ = _top_set(
        [(p.user_id, p.observed / posts[p.user_id]) for p in predictions],
        target)
    ranked = sorted(
        predictions,
        key=lambda p: (-p.predicted_mean / posts[p.user_id], p.user_id))
    points = []
    tp = 0
    for k, p in enumerate(ranked, start=1):
        if p.user_id in obs_top:
            tp += 1
        points.append(PRPoint(k=k, precision=tp / k, recall=tp / target))
    return tuple(points)


@dataclass(frozen=True)
class InterestPosterior:
    """Topic-interest density before and after seeing the response count."""

    user_id: str
    grid: np.ndarray = field(repr=False)
    prior_density: np.ndarray = field(repr=False)
    posterior_density: np.ndarray = field(repr=False)
    prior_mean: float
    posterior_mean: float

    def __post_init__(self):
        for name in ("grid", "prior_density", "posterior_density"):
            getattr(self, name).setflags(write=False)


def posterior_interest(user: UserRecord, pop: PopulationParams,
                       params: ModelParams,
                       grid_size: int = 1001) -> InterestPosterior:
    """Update the beta interest prior with the user's response count.

    The likelihood of M responses out of N posts given interest p is
    binomial with per-post probability A p (A = p_visible * p_act), so
    users whose A is zero keep their prior exactly. Both densities are
    normalized on the evaluation grid by the trapezoid rule.
    """
    if not isinstance(grid_size, int) or grid_size < 101:
        raise ModelDomainError("grid_size must be an integer >= 101")
    core._check_response_args(user, pop)
    N = pop.advocate_post_count
    M = user.responses
    A = core.user_response_scale(user, pop, params)
    if A == 0.0 and M > 0:
        raise ModelDomainError(
            f"user {user.user_id}: recorded responses are impossible "
            "(response scale is zero for this user)")

    grid = np.linspace(0.0, 1.0, grid_size)
    prior = core.topic_prior_density(grid, user.topic_posts,
                                     user.total_posts)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_prior = np.log(prior)
        log_lik = np.zeros_like(grid)
        if M > 0:
            log_lik += M * np.log(A * grid)
        if N - M > 0:
            log_lik += (N - M) * np.log1p(-A * grid)
    log_post = log_prior + log_lik
    log_post[np.isnan(log_post)] = -np.inf
    peak = float(log_post.max())
    if not math.isfinite(peak):
        raise ModelDomainError(
            f"user {user.user_id}: posterior carries no mass on the grid")
    post = np.exp(log_post - peak)
    post /= np.trapezoid(post, grid)
    prior_norm = prior / np.trapezoid(prior, grid)
    return InterestPosterior(
        user_id=user.user_id, grid=grid, prior_density=prior_norm,
        posterior_density=post,
        prior_mean=float(np.trapezoid(grid * prior_norm, grid)),
        posterior_mean=float(np.trapezoid(grid * post, grid)))

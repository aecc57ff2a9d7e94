"""Probability laws of feed visibility and follower response.

The chain: a follower receives posts from everyone they follow at
``receive_rate`` and visits their feed at ``visit_rate``; an advocate
post sits at some feed position L when the follower next visits
(``list_position_pmf``); the visit reads down the feed for a random
number of items drawn from the law of surfing (``surfing_stop_pmf``),
so the post is seen with probability ``p_view(L)``. Marginalizing L
gives ``p_visible``. A seen on-topic post draws a response with
probability P_topic * p_act, where P_topic has the beta prior
``topic_prior_density`` implied by the user's posting record; summing
over the advocate's N posts yields the closed-form ``response_pmf``
built on a terminating Gauss hypergeometric series.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import ModelDomainError, ZeroLikelihoodError
from .types import (DerivedUserRates, ModelParams, PopulationParams,
                    ResponseDistribution, Stance, UserRecord)

# Continuous surfing mass allowed beyond the truncated support.
SURF_TAIL_EPS = 1e-14
# Geometric feed-position mass below which the visibility sum stops.
VISIBILITY_TAIL_TOL = 1e-12
# Largest surfing support we will tabulate before declaring the
# parameters impractical.
_MAX_SURF_SUPPORT = 1 << 26


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ModelDomainError(message)


def _as_float(x, name: str) -> float:
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise ModelDomainError(f"{name} must be a real number") from None
    _require(math.isfinite(v), f"{name} must be finite")
    return v


def _as_int(x, name: str) -> int:
    if isinstance(x, bool) or not isinstance(x, (int, np.integer)):
        # Accept exact-integer floats; reject everything else.
        if isinstance(x, float) and x.is_integer():
            return int(x)
        raise ModelDomainError(f"{name} must be an integer")
    return int(x)


def surfing_stop_pmf(m_items: int, mu: float, lam: float) -> float:
    """Law of surfing: density of stopping after m_items feed items.

    Inverse Gaussian with mean mu and shape lam, evaluated at integer
    m_items >= 1:

        f(m) = exp(-lam (m - mu)^2 / (2 m mu^2)) * sqrt(lam / (2 pi m^3))

    This is the raw continuous density; the discretized law the feed
    computations use (normalized over the integer support) is exposed
    by ``surfing_stop_table``.
    """
    m = _as_int(m_items, "m_items")
    mu = _as_float(mu, "mu")
    lam = _as_float(lam, "lam")
    _require(m >= 1, "m_items must be >= 1")
    _require(mu > 0, "mu must be > 0")
    _require(lam > 0, "lam must be > 0")
    log_f = (-lam * (m - mu) ** 2 / (2.0 * m * mu * mu)
             + 0.5 * (math.log(lam) - math.log(2.0 * math.pi))
             - 1.5 * math.log(m))
    return math.exp(log_f)


def _surf_support_size(mu: float, lam: float) -> int:
    """Smallest M with continuous tail mass beyond M under SURF_TAIL_EPS.

    For x >= 2 mu, (m-mu)^2/m >= m - 2 mu, so

        int_x^inf f(m) dm <= sqrt(lam/(2 pi x^3)) * (2 mu^2 / lam)
                             * exp(-lam (x - 2 mu) / (2 mu^2)).
    """
    def bound(x: float) -> float:
        return (math.sqrt(lam / (2.0 * math.pi * x ** 3))
                * (2.0 * mu * mu / lam)
                * math.exp(-lam * (x - 2.0 * mu) / (2.0 * mu * mu)))

    hi = max(64, 2 * math.ceil(mu) + 16)
    while bound(hi) >= SURF_TAIL_EPS:
        hi *= 2
        if hi > _MAX_SURF_SUPPORT:
            raise ModelDomainError(
                f"surfing law with mu={mu}, lam={lam} needs a support "
                f"beyond {_MAX_SURF_SUPPORT} items")
    lo = max(1, 2 * math.ceil(mu))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if bound(mid) < SURF_TAIL_EPS:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class SurfingTable:
    """Discretized law of surfing on the integer support 1..m_max.

    ``pmf[i]`` is P(stop after i+1 items); ``view_tail[L]`` is
    P(stop after more than L items), i.e. p_view at feed position L.
    Positions at or beyond m_max are never reached.
    """

    mu: float
    lam: float
    m_max: int
    pmf: np.ndarray = field(repr=False)
    view_tail: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.pmf.setflags(write=False)
        self.view_tail.setflags(write=False)


@functools.lru_cache(maxsize=32)
def surfing_stop_table(mu: float, lam: float) -> SurfingTable:
    """Build (and cache) the discretized surfing law for (mu, lam)."""
    mu = _as_float(mu, "mu")
    lam = _as_float(lam, "lam")
    _require(mu > 0, "mu must be > 0")
    _require(lam > 0, "lam must be > 0")
    m_max = _surf_support_size(mu, lam)
    m = np.arange(1, m_max + 1, dtype=np.float64)
    log_f = (-lam * (m - mu) ** 2 / (2.0 * m * mu * mu)
             + 0.5 * (math.log(lam) - math.log(2.0 * math.pi))
             - 1.5 * np.log(m))
    f = np.exp(log_f)
    # Reverse cumulative sum: tail[L] = sum of f over items > L. Using
    # tail[0] as the normalizer makes view_tail[0] exactly 1.
    tail = np.cumsum(f[::-1])[::-1]
    total = tail[0]
    return SurfingTable(mu=mu, lam=lam, m_max=m_max,
                        pmf=f / total, view_tail=tail / total)


def p_view(list_position: int, mu: float, lam: float) -> float:
    """Probability a feed visit reads past position ``list_position``.

    Position 0 is the top of the feed and is always seen.
    """
    L = _as_int(list_position, "list_position")
    _require(L >= 0, "list_position must be >= 0")
    table = surfing_stop_table(mu, lam)
    if L >= table.m_max:
        return 0.0
    return float(table.view_tail[L])


def receive_rate(friend_count: int, typical_friend_rate: float) -> float:
    """Posts per day arriving in the user's feed from followed accounts."""
    fc = _as_int(friend_count, "friend_count")
    rate = _as_float(typical_friend_rate, "typical_friend_rate")
    _require(fc >= 0, "friend_count must be >= 0")
    _require(rate > 0, "typical_friend_rate must be > 0")
    return fc * rate


def visit_rate(posting_rate: float, views_per_post: float) -> float:
    """Feed visits per day, proportional to the user's own posting rate."""
    pr = _as_float(posting_rate, "posting_rate")
    v = _as_float(views_per_post, "views_per_post")
    _require(pr >= 0, "posting_rate must be >= 0")
    _require(v > 0, "views_per_post must be > 0")
    return pr * v


def list_position_pmf(list_position: int, rho: float) -> float:
    """P(advocate post sits at feed position L at the next visit).

    Geometric with mean rho = receive_rate / visit_rate:
    P(L) = (1/(1+rho)) (rho/(1+rho))^L.
    """
    L = _as_int(list_position, "list_position")
    rho = _as_float(rho, "rho")
    _require(L >= 0, "list_position must be >= 0")
    _require(rho >= 0, "rho must be >= 0")
    if rho == 0.0:
        return 1.0 if L == 0 else 0.0
    return (1.0 / (1.0 + rho)) * (rho / (1.0 + rho)) ** L


def derive_user_rates(user: UserRecord, pop: PopulationParams,
                      params: ModelParams) -> DerivedUserRates:
    """Receive/visit rates, feed-position mean rho, and p_visible."""
    rr = receive_rate(user.friend_count, pop.typical_friend_rate)
    vr = visit_rate(user.posting_rate, params.views_per_post)
    if vr == 0.0:
        # Never visits the feed: nothing is ever visible.
        return DerivedUserRates(user_id=user.user_id, receive_rate=rr,
                                visit_rate=0.0, rho=math.inf if rr > 0 else 0.0,
                                p_visible=0.0, degenerate=True)
    rho = rr / vr
    table = surfing_stop_table(params.mu, params.lam)
    pv = float(kernels.p_visible_from_rho(rho, table.view_tail,
                                          VISIBILITY_TAIL_TOL))
    return DerivedUserRates(user_id=user.user_id, receive_rate=rr,
                            visit_rate=vr, rho=rho, p_visible=pv,
                            degenerate=False)


def p_visible(user: UserRecord, pop: PopulationParams,
              params: ModelParams) -> float:
    """P(one advocate post is seen by this user) = sum_L P(L) p_view(L)."""
    return derive_user_rates(user, pop, params).p_visible


def user_response_scale(user: UserRecord, pop: PopulationParams,
                        params: ModelParams) -> float:
    """Per-post response scale A = p_visible * p_act; 0 for opponents."""
    if user.stance is Stance.OPPONENT:
        return 0.0
    return p_visible(user, pop, params) * params.p_act


def response_scales(users, pop: PopulationParams,
                    params: ModelParams) -> np.ndarray:
    """Vector of per-post response scales A_u over ``users``."""
    rhos = np.empty(len(users), dtype=np.float64)
    degenerate = np.zeros(len(users), dtype=bool)
    for i, u in enumerate(users):
        rr = receive_rate(u.friend_count, pop.typical_friend_rate)
        vr = visit_rate(u.posting_rate, params.views_per_post)
        if vr == 0.0:
            degenerate[i] = True
            rhos[i] = 0.0
        else:
            rhos[i] = rr / vr
    table = surfing_stop_table(params.mu, params.lam)
    pv = kernels.p_visible_many(rhos, table.view_tail, VISIBILITY_TAIL_TOL)
    pv[degenerate] = 0.0
    opponent = np.array([u.stance is Stance.OPPONENT for u in users])
    scales = pv * params.p_act
    scales[opponent] = 0.0
    return scales


def topic_prior_density(p, topic_posts: int, total_posts: int):
    """Beta density of the user's unknown on-topic posting probability.

    With m on-topic posts out of n total,
    Prob(p) = (n+1) C(n, m) p^m (1-p)^(n-m), i.e. Beta(m+1, n-m+1).
    Accepts a scalar or an array of p values in [0, 1].
    """
    m = _as_int(topic_posts, "topic_posts")
    n = _as_int(total_posts, "total_posts")
    _require(0 <= m <= n, "need 0 <= topic_posts <= total_posts")
    arr = np.asarray(p, dtype=np.float64)
    _require(bool(np.all(np.isfinite(arr))), "p must be finite")
    _require(bool(np.all((arr >= 0.0) & (arr <= 1.0))),
             "p must lie in [0, 1]")
    log_norm = (math.log(n + 1.0) + math.lgamma(n + 1.0)
                - math.lgamma(m + 1.0) - math.lgamma(n - m + 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # x log x -> 0 as x -> 0; drop vanishing-exponent factors so the
        # endpoints come out exact instead of nan.
        term_m = m * np.log(arr) if m > 0 else np.zeros_like(arr)
        term_nm = (n - m) * np.log1p(-arr) if n - m > 0 \
            else np.zeros_like(arr)
    out = np.exp(log_norm + term_m + term_nm)
    out = np.where(np.isnan(out), 0.0, out)
    if np.isscalar(p) or np.ndim(p) == 0:
        return float(out)
    return out


def hyp2f1_terminating(a: float, b: float, c: float, z: float) -> float:
    """Gauss 2F1(a, b; c; z) for nonpositive-integer b and z in [0, 1].

    The series terminates after 1-b terms. Rejects inputs where it would
    not terminate (b not a nonpositive integer) or where a series
    denominator vanishes (c a nonpositive integer exceeding b).
    """
    a = _as_float(a, "a")
    b_f = _as_float(b, "b")
    c = _as_float(c, "c")
    z = _as_float(z, "z")
    b_round = round(b_f)
    _require(abs(b_f - b_round) <= 1e-9 and b_round <= 0,
             "b must be a nonpositive integer (terminating series)")
    K = -int(b_round)
    if c <= 0 and abs(c - round(c)) <= 1e-9 and round(c) > b_round:
        raise ModelDomainError(
            "c is a nonpositive integer exceeding b: series denominator "
            "vanishes before the series terminates")
    _require(0.0 <= z <= 1.0, "z must lie in [0, 1]")
    return float(kernels.hyp2f1_terminating(a, K, c, z))


def _check_response_args(user: UserRecord, pop: PopulationParams) -> None:
    if user.responses > pop.advocate_post_count:
        raise ModelDomainError(
            f"user {user.user_id}: responses ({user.responses}) exceed "
            f"advocate_post_count ({pop.advocate_post_count})")


def response_pmf(M: int, user: UserRecord, pop: PopulationParams,
                 params: ModelParams) -> float:
    """P(user responds to exactly M of the advocate's N posts).

    Closed form of the beta-mixed binomial response chain:

        P(M) = C(M+m, m) C(N, M) / C(M+n+1, M)
               * A^M * 2F1(m+M+1, M-N; M+n+2; A)

    with A = p_visible * p_act (0 for opponents, collapsing the pmf
    onto M = 0).
    """
    M = _as_int(M, "M")
    N = pop.advocate_post_count
    _require(0 <= M <= N, f"M must lie in 0..{N}")
    _check_response_args(user, pop)
    A = user_response_scale(user, pop, params)
    return math.exp(kernels.log_response_pmf(
        M, user.topic_posts, user.total_posts, N, A))


def response_distribution(user: UserRecord, pop: PopulationParams,
                          params: ModelParams) -> ResponseDistribution:
    """Full response-count distribution for one user over 0..N."""
    _check_response_args(user, pop)
    N = pop.advocate_post_count
    A = user_response_scale(user, pop, params)
    log_pmf = kernels.response_logpmf_vector(
        user.topic_posts, user.total_posts, N, A)
    return ResponseDistribution.from_pmf(user.user_id, np.exp(log_pmf))


def log_likelihood_terms(users, pop: PopulationParams,
                         params: ModelParams) -> np.ndarray:
    """Per-user log-likelihood terms (parameter-dependent factors only).

    Entries are -inf for users whose observed responses are impossible
    under ``params``; ``log_likelihood`` turns those into an error.
    """
    users = list(users)
    _require(len(users) > 0, "users must be nonempty")
    pop.check_users(users)
    N = pop.advocate_post_count
    M_arr = np.array([u.responses for u in users], dtype=np.int64)
    m_arr = np.array([u.topic_posts for u in users], dtype=np.int64)
    n_arr = np.array([u.total_posts for u in users], dtype=np.int64)
    A_arr = response_scales(users, pop, params)
    return kernels.loglik_terms(M_arr, m_arr, n_arr, N, A_arr)


def log_likelihood(users, pop: PopulationParams,
                   params: ModelParams) -> float:
    """Sum of per-user response log-likelihood terms.

    Raises ZeroLikelihoodError when any user's observed count is
    impossible under ``params`` (e.g. an opponent with responses, or a
    non-visiting user with responses).
    """
    users = list(users)
    terms = log_likelihood_terms(users, pop, params)
    bad = ~np.isfinite(terms)
    if bad.any():
        raise ZeroLikelihoodError([users[i].user_id
                                   for i in np.flatnonzero(bad)])
    return math.fsum(terms.tolist())

"""Synthetic populations and generative sampling of the response chain.

Every draw goes through a counter-based generator (Philox) keyed by a
master seed plus a purpose label, so each user gets an independent
substream and results do not depend on user order or on how many other
users exist.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .errors import ModelDomainError
from .types import (ModelParams, PopulationParams, Stance, UserRecord,
                    _check, _finite)

_U64 = (1 << 64) - 1


def _substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for (seed, label): Philox keyed by a hash."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    word = int.from_bytes(digest, "little")
    key = np.array([seed & _U64, word], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class LogNormalSpec:
    """Log-normal law: exp of a Normal(log_mean, log_sd) draw."""

    log_mean: float
    log_sd: float

    def __post_init__(self):
        _check(_finite(self.log_mean), "log_mean must be finite",
               ModelDomainError)
        _check(_finite(self.log_sd) and self.log_sd >= 0,
               "log_sd must be finite and >= 0", ModelDomainError)


@dataclass(frozen=True)
class BetaSpec:
    """Beta(alpha, beta) law on [0, 1]."""

    alpha: float
    beta: float

    def __post_init__(self):
        _check(_finite(self.alpha) and self.alpha > 0,
               "alpha must be finite and > 0", ModelDomainError)
        _check(_finite(self.beta) and self.beta > 0,
               "beta must be finite and > 0", ModelDomainError)

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


@dataclass(frozen=True)
class StanceMix:
    """Population fractions by stance; must sum to 1."""

    supporter: float
    opponent: float
    neutral: float

    def __post_init__(self):
        for name in ("supporter", "opponent", "neutral"):
            v = getattr(self, name)
            _check(_finite(v) and 0 <= v <= 1,
                   f"{name} fraction must lie in [0, 1]", ModelDomainError)
        total = self.supporter + self.opponent + self.neutral
        _check(abs(total - 1.0) <= 1e-9, "stance fractions must sum to 1",
               ModelDomainError)


@dataclass(frozen=True)
class PopulationConfig:
    """Recipe for a synthetic follower population.

    ``topic_fraction_law`` is each user's true probability of engaging
    with on-topic material; the default uniform law makes the beta
    posting prior exactly consistent with how (topic_posts, total_posts)
    are generated.
    """

    user_count: int
    advocate_post_count: int
    typical_friend_rate: float
    posting_rate_law: LogNormalSpec = LogNormalSpec(0.3, 1.0)
    friend_count_law: LogNormalSpec = LogNormalSpec(4.5, 1.0)
    topic_fraction_law: BetaSpec = BetaSpec(1.0, 1.0)
    stance_mix: StanceMix = StanceMix(0.6, 0.15, 0.25)
    observation_days: float = 60.0
    advocate_id: str = "advocate"

    def __post_init__(self):
        _check(isinstance(self.user_count, int) and self.user_count >= 1,
               "user_count must be an integer >= 1", ModelDomainError)
        _check(isinstance(self.advocate_post_count, int)
               and self.advocate_post_count >= 1,
               "advocate_post_count must be an integer >= 1",
               ModelDomainError)
        _check(_finite(self.typical_friend_rate)
               and self.typical_friend_rate > 0,
               "typical_friend_rate must be finite and > 0",
               ModelDomainError)
        _check(_finite(self.observation_days) and self.observation_days > 0,
               "observation_days must be finite and > 0", ModelDomainError)

    def population_params(self) -> PopulationParams:
        return PopulationParams(advocate_id=self.advocate_id,
                                advocate_post_count=self.advocate_post_count,
                                typical_friend_rate=self.typical_friend_rate)


@dataclass(frozen=True)
class SimTrace:
    """Ground truth behind a simulated population."""

    user_ids: tuple
    true_p_topic: np.ndarray = field(repr=False)
    true_p_visible: np.ndarray = field(repr=False)
    true_response_scale: np.ndarray = field(repr=False)
    observed_responses: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("true_p_topic", "true_p_visible",
                     "true_response_scale", "observed_responses"):
            arr = getattr(self, name)
            arr.setflags(write=False)


def generate_population(config: PopulationConfig, seed: int):
    """Draw user records (responses left at 0) and their true interests.

    Returns (users, true_p_topic). Each user's attributes come from a
    substream keyed by their id, so records are stable under changes to
    user_count.
    """
    mix = config.stance_mix
    users = []
    p_topic = np.empty(config.user_count, dtype=np.float64)
    for i in range(config.user_count):
        uid = f"u{i:06d}"
        g = _substream(seed, f"population:{uid}")
        rate = float(g.lognormal(config.posting_rate_law.log_mean,
                                 config.posting_rate_law.log_sd))
        friends = int(round(g.lognormal(config.friend_count_law.log_mean,
                                        config.friend_count_law.log_sd)))
        p = float(g.beta(config.topic_fraction_law.alpha,
                         config.topic_fraction_law.beta))
        u = g.random()
        if u < mix.supporter:
            stance = Stance.SUPPORTER
        elif u < mix.supporter + mix.opponent:
            stance = Stance.OPPONENT
        else:
            stance = Stance.NEUTRAL
        n = int(g.poisson(rate * config.observation_days))
        m = int(g.binomial(n, p)) if n > 0 else 0
        users.append(UserRecord(user_id=uid, posting_rate=rate,
                                friend_count=max(friends, 1), stance=stance,
                                topic_posts=m, total_posts=n, responses=0))
        p_topic[i] = p
    return users, p_topic


def _response_chain(g: np.random.Generator, shape, rho: float,
                    view_tail: np.ndarray, act_prob) -> np.ndarray:
    """Simulate the per-post chain: feed position, view, act.

    ``shape`` is (replicates, N); ``act_prob`` is scalar or a column of
    per-replicate response probabilities given a view. Returns response
    counts per replicate.
    """
    if rho == 0.0:
        position = np.zeros(shape, dtype=np.int64)
    else:
        # numpy's geometric counts trials to first success (support 1..),
        # so subtract 1 to get the number of newer posts above ours.
        position = g.geometric(1.0 / (1.0 + rho), size=shape) - 1
    p_seen = np.where(position < len(view_tail),
                      view_tail[np.minimum(position, len(view_tail) - 1)],
                      0.0)
    viewed = g.random(shape) < p_seen
    acted = g.random(shape) < act_prob
    return (viewed & acted).sum(axis=1)


def simulate_responses(users, p_topic, pop: PopulationParams,
                       params: ModelParams, seed: int) -> np.ndarray:
    """Observed response counts for each user given true interests.

    Simulates every advocate post through the position/view/act chain
    with the user's fixed true p_topic. Opponents and users who never
    visit produce 0.
    """
    p_topic = np.asarray(p_topic, dtype=np.float64)
    if len(p_topic) != len(users):
        raise ModelDomainError("p_topic must align with users")
    table = core.surfing_stop_table(params.mu, params.lam)
    N = pop.advocate_post_count
    out = np.zeros(len(users), dtype=np.int64)
    for i, u in enumerate(users):
        rates = core.derive_user_rates(u, pop, params)
        if (u.stance is Stance.OPPONENT or rates.degenerate
                or params.p_act == 0.0):
            continue
        g = _substream(seed, f"responses:{u.user_id}")
        out[i] = _response_chain(g, (1, N), rates.rho, table.view_tail,
                                 p_topic[i] * params.p_act)[0]
    return out


def simulate_population(config: PopulationConfig, params: ModelParams,
                        seed: int):
    """Generate a population and its observed responses in one pass.

    Returns (users, pop_params, trace) where users carry the simulated
    response counts.
    """
    base, p_topic = generate_population(config, seed)
    pop = config.population_params()
    responses = simulate_responses(base, p_topic, pop, params, seed)
    users = []
    p_vis = np.empty(len(base), dtype=np.float64)
    scale = np.empty(len(base), dtype=np.float64)
    for i, u in enumerate(base):
        users.append(UserRecord(user_id=u.user_id,
                                posting_rate=u.posting_rate,
                                friend_count=u.friend_count, stance=u.stance,
                                topic_posts=u.topic_posts,
                                total_posts=u.total_posts,
                                responses=int(responses[i])))
        p_vis[i] = core.p_visible(u, pop, params)
        scale[i] = core.user_response_scale(u, pop, params)
    trace = SimTrace(user_ids=tuple(u.user_id for u in base),
                     true_p_topic=p_topic.copy(), true_p_visible=p_vis,
                     true_response_scale=scale,
                     observed_responses=responses.astype(np.int64))
    return users, pop, trace


def replicate_user_responses(user: UserRecord, pop: PopulationParams,
                             params: ModelParams, seed: int,
                             n_replicates: int) -> np.ndarray:
    """Response counts over many replays of one user's chain.

    Each replicate redraws the user's interest from the beta law implied
    by their posting record, then runs every advocate post through the
    position/view/act chain; the histogram of the result is the
    generative mirror of ``response_pmf``.
    """
    if not isinstance(n_replicates, int) or n_replicates < 1:
        raise ModelDomainError("n_replicates must be an integer >= 1")
    table = core.surfing_stop_table(params.mu, params.lam)
    rates = core.derive_user_rates(user, pop, params)
    N = pop.advocate_post_count
    g = _substream(seed, f"replicates:{user.user_id}")
    out = np.empty(n_replicates, dtype=np.int64)
    if (user.stance is Stance.OPPONENT or rates.degenerate
            or params.p_act == 0.0):
        out[:] = 0
        return out
    a = user.topic_posts + 1.0
    b = user.total_posts - user.topic_posts + 1.0
    chunk = max(1, int(2_000_000 // max(N, 1)))
    done = 0
    while done < n_replicates:
        k = min(chunk, n_replicates - done)
        p = g.beta(a, b, size=(k, 1))
        out[done:done + k] = _response_chain(
            g, (k, N), rates.rho, table.view_tail, p * params.p_act)
        done += k
    return out


@dataclass(frozen=True)
class EventStreamResult:
    """Empirical feed-position law measured from simulated event times."""

    user_id: str
    rho: float
    n_samples: int
    position_counts: np.ndarray = field(repr=False)
    mean_position: float

    def __post_init__(self):
        self.position_counts.setflags(write=False)

    @property
    def empirical_pmf(self) -> np.ndarray:
        return self.position_counts / self.n_samples


def simulate_event_stream(user: UserRecord, pop: PopulationParams,
                          params: ModelParams, duration_days: float,
                          n_samples: int, seed: int) -> EventStreamResult:
    """Measure the feed-position law from raw event times.

    Draws the receive and visit streams as Poisson processes over the
    window and probes them at ``n_samples`` uniform advocate-post times
    (a Poisson process conditioned on its count): for each probe, the
    position is the number of receives between the post and the user's
    next visit. Probes after the last visit are dropped.
    """
    rates = core.derive_user_rates(user, pop, params)
    if rates.receive_rate <= 0 or rates.visit_rate <= 0:
        raise ModelDomainError(
            "event-stream simulation needs receive_rate > 0 and "
            "visit_rate > 0")
    duration = float(duration_days)
    if not math.isfinite(duration) or duration <= 0:
        raise ModelDomainError("duration_days must be finite and > 0")
    if duration * rates.visit_rate < 1e4:
        raise ModelDomainError(
            "window too short: need at least 1e4 expected visit events")
    if not isinstance(n_samples, int) or n_samples < 1:
        raise ModelDomainError("n_samples must be an integer >= 1")

    g = _substream(seed, f"events:{user.user_id}")
    n_recv = int(g.poisson(rates.receive_rate * duration))
    n_vis = int(g.poisson(rates.visit_rate * duration))
    receives = np.sort(g.random(n_recv)) * duration
    visits = np.sort(g.random(n_vis)) * duration
    probes = g.random(n_samples) * duration

    next_visit_idx = np.searchsorted(visits, probes, side="right")
    keep = next_visit_idx < len(visits)
    probes = probes[keep]
    next_visit = visits[next_visit_idx[keep]]
    upto_visit = np.searchsorted(receives, next_visit, side="right")
    upto_probe = np.searchsorted(receives, probes, side="right")
    positions = upto_visit - upto_probe
    counts = np.bincount(positions)
    return EventStreamResult(user_id=user.user_id, rho=rates.rho,
                             n_samples=int(keep.sum()),
                             position_counts=counts,
                             mean_position=float(positions.mean()))


def position_law_tv(result: EventStreamResult) -> float:
    """Total-variation distance of the measured law from the model's.

    Compares the empirical feed-position frequencies to the geometric
    law at the same rho; model mass beyond the largest observed position
    counts in full.
    """
    emp = result.empirical_pmf
    model = np.array([core.list_position_pmf(L, result.rho)
                      for L in range(len(emp))])
    tail = max(0.0, 1.0 - float(model.sum()))
    return 0.5 * (float(np.abs(emp - model).sum()) + tail)

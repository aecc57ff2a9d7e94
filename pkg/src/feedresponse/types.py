"""Core data types shared across the package."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError, ModelDomainError


class Stance(enum.Enum):
    """Declared position of a follower toward the advocated issue."""

    SUPPORTER = "supporter"
    OPPONENT = "opponent"
    NEUTRAL = "neutral"

    @classmethod
    def parse(cls, text: str) -> "Stance":
        try:
            return cls(text.strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise DataValidationError(
                f"unknown stance {text!r}; expected one of: {valid}"
            ) from None


def _check(cond: bool, message: str, exc=DataValidationError) -> None:
    if not cond:
        raise exc(message)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


@dataclass(frozen=True)
class UserRecord:
    """One follower of the advocate account.

    ``topic_posts`` of the user's ``total_posts`` are on the advocated
    topic; ``responses`` counts this user's responses to the advocate's
    posts over the observation window.
    """

    user_id: str
    posting_rate: float  # posts per day
    friend_count: int
    stance: Stance
    topic_posts: int
    total_posts: int
    responses: int

    def __post_init__(self):
        _check(isinstance(self.user_id, str) and self.user_id != "",
               "user_id must be a nonempty string")
        _check(_finite(self.posting_rate) and self.posting_rate >= 0,
               f"user {self.user_id}: posting_rate must be finite and >= 0")
        _check(isinstance(self.friend_count, int) and self.friend_count >= 0,
               f"user {self.user_id}: friend_count must be an integer >= 0")
        _check(isinstance(self.stance, Stance),
               f"user {self.user_id}: stance must be a Stance")
        _check(isinstance(self.topic_posts, int) and self.topic_posts >= 0,
               f"user {self.user_id}: topic_posts must be an integer >= 0")
        _check(isinstance(self.total_posts, int) and self.total_posts >= 0,
               f"user {self.user_id}: total_posts must be an integer >= 0")
        _check(self.topic_posts <= self.total_posts,
               f"user {self.user_id}: topic_posts exceeds total_posts")
        _check(isinstance(self.responses, int) and self.responses >= 0,
               f"user {self.user_id}: responses must be an integer >= 0")


@dataclass(frozen=True)
class PopulationParams:
    """Observation-window facts about the advocate and its followers."""

    advocate_id: str
    advocate_post_count: int  # N: posts the advocate made in the window
    typical_friend_rate: float  # median posts/day of a followed account

    def __post_init__(self):
        _check(isinstance(self.advocate_id, str) and self.advocate_id != "",
               "advocate_id must be a nonempty string")
        _check(isinstance(self.advocate_post_count, int)
               and self.advocate_post_count >= 1,
               "advocate_post_count must be an integer >= 1")
        _check(_finite(self.typical_friend_rate)
               and self.typical_friend_rate > 0,
               "typical_friend_rate must be finite and > 0")

    def check_users(self, users) -> None:
        """Raise if any record's responses exceed the advocate's post count."""
        for u in users:
            _check(u.responses <= self.advocate_post_count,
                   f"user {u.user_id}: responses ({u.responses}) exceed "
                   f"advocate_post_count ({self.advocate_post_count})")


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the visibility-and-response model.

    mu, lam: mean and shape of the law of surfing (items viewed per visit).
    views_per_post: V, feed views a user makes per post of their own.
    p_act: probability a supporter acts on a viewed on-topic post.
    """

    mu: float
    lam: float
    views_per_post: float
    p_act: float

    def __post_init__(self):
        _check(_finite(self.mu) and self.mu > 0,
               "mu must be finite and > 0", ModelDomainError)
        _check(_finite(self.lam) and self.lam > 0,
               "lam must be finite and > 0", ModelDomainError)
        _check(_finite(self.views_per_post) and self.views_per_post > 0,
               "views_per_post must be finite and > 0", ModelDomainError)
        _check(_finite(self.p_act) and 0 <= self.p_act <= 1,
               "p_act must lie in [0, 1]", ModelDomainError)


@dataclass(frozen=True)
class DerivedUserRates:
    """Per-user rates implied by a parameter set.

    ``rho`` is receive_rate / visit_rate (may be inf when the user never
    visits but still receives). ``degenerate`` marks users whose visit
    rate is zero, for whom nothing is ever visible.
    """

    user_id: str
    receive_rate: float
    visit_rate: float
    rho: float
    p_visible: float
    degenerate: bool

    def __post_init__(self):
        _check(_finite(self.receive_rate) and self.receive_rate >= 0,
               "receive_rate must be finite and >= 0", ModelDomainError)
        _check(_finite(self.visit_rate) and self.visit_rate >= 0,
               "visit_rate must be finite and >= 0", ModelDomainError)
        _check(self.rho >= 0, "rho must be >= 0", ModelDomainError)
        _check(0 <= self.p_visible <= 1,
               "p_visible must lie in [0, 1]", ModelDomainError)


@dataclass(frozen=True)
class ResponseDistribution:
    """Distribution of a user's response count over 0..N."""

    user_id: str
    pmf: np.ndarray = field(repr=False)
    mean: float
    std: float

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)
        _check(pmf.ndim == 1 and len(pmf) >= 1,
               "pmf must be a 1-d array over 0..N", ModelDomainError)
        _check(bool(np.all(pmf >= 0)), "pmf entries must be >= 0",
               ModelDomainError)
        _check(abs(float(pmf.sum()) - 1.0) <= 1e-9,
               "pmf must sum to 1 within 1e-9", ModelDomainError)

    @classmethod
    def from_pmf(cls, user_id: str, pmf: np.ndarray) -> "ResponseDistribution":
        pmf = np.asarray(pmf, dtype=float)
        support = np.arange(len(pmf), dtype=float)
        mean = float(support @ pmf)
        var = float(((support - mean) ** 2) @ pmf)
        return cls(user_id=user_id, pmf=pmf, mean=mean,
                   std=math.sqrt(max(var, 0.0)))

    @property
    def max_responses(self) -> int:
        return len(self.pmf) - 1

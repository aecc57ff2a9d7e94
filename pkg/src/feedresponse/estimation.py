"""Parameter estimation: model MLE with profile intervals, and the
activity-only logistic baseline.

The model fit maximizes the response log-likelihood over transformed
coordinates (log views_per_post, logit p_act, and optionally log mu
with the surfing shape tied to the mean). A fixed coarse grid seeds a
small number of Nelder-Mead starts, so the whole procedure is
deterministic: same data in any order, same result.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import core
from ._backend import kernels
from .errors import EstimationError, ModelDomainError, SeparationError
from .types import ModelParams, PopulationParams, Stance, _check, _finite

# Half the 95% quantile of chi-square(1): likelihood drop defining the
# profile interval edge.
_CHI2_95_HALF = 1.9207372793404767
_Z_95 = 1.959963984540054


def _sigmoid(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the MLE procedure. Defaults suit populations of 100+.

    ``fit_surfing_mean`` adds mu as a third free parameter with the
    shape tied (lam = mu); otherwise mu, lam are held at the given
    values.
    """

    mu: float = 14.0
    lam: float = 14.0
    fit_surfing_mean: bool = False
    v_grid: tuple = (2.0, 8.0, 30.0, 120.0, 500.0)
    p_act_grid: tuple = (0.02, 0.06, 0.15, 0.4, 0.8)
    mu_grid: tuple = (4.0, 14.0, 50.0)
    n_starts: int = 3
    xatol: float = 1e-6
    fatol: float = 1e-8
    max_iter: int = 2000
    gradient_tolerance: float = 0.5
    profile_step: float = 0.35
    profile_span: float = 60.0
    profile_bisect_tol: float = 3e-4
    compute_cis: bool = True  # skip for point-estimate-only sweeps

    def __post_init__(self):
        _check(_finite(self.mu) and self.mu > 0, "mu must be > 0",
               EstimationError)
        _check(_finite(self.lam) and self.lam > 0, "lam must be > 0",
               EstimationError)
        for name in ("v_grid", "p_act_grid", "mu_grid"):
            grid = getattr(self, name)
            _check(len(grid) > 0 and all(_finite(g) and g > 0 for g in grid),
                   f"{name} must hold positive numbers", EstimationError)
        _check(all(p < 1 for p in self.p_act_grid),
               "p_act_grid must lie in (0, 1)", EstimationError)
        _check(self.n_starts >= 1, "n_starts must be >= 1", EstimationError)


@dataclass(frozen=True)
class FitResult:
    """Outcome of a model fit.

    ``confidence_intervals`` maps parameter names to 95% bounds in
    natural units; ``ci_methods`` records how each interval was
    obtained (profile, curvature, or a boundary/unidentified note).
    ``boundary`` marks a fit pinned at p_act = 0 because no included
    user responded.
    """

    params: ModelParams
    log_likelihood: float
    converged: bool
    gradient_norm: float
    confidence_intervals: dict
    ci_methods: dict
    excluded_users: tuple
    n_users_used: int
    boundary: bool
    n_evaluations: int
    grid_best_loglik: float

    def __post_init__(self):
        for name, (lo, hi) in self.confidence_intervals.items():
            skipped = math.isnan(lo) and math.isnan(hi)
            _check(skipped or lo <= hi,
                   f"{name}: interval bounds out of order", EstimationError)


class _Objective:
    """Negative response log-likelihood over transformed parameters."""

    PARAM_NAMES = ("views_per_post", "p_act", "mu")

    def __init__(self, users, pop: PopulationParams, config: FitConfig):
        users = list(users)
        _check(len(users) > 0, "users must be nonempty", EstimationError)
        pop.check_users(users)
        self.pop = pop
        self.config = config
        self.dim = 3 if config.fit_surfing_mean else 2

        included, excluded = [], []
        for u in users:
            if u.posting_rate == 0:
                reason = "zero posting rate (never visits the feed)"
                if u.responses > 0:
                    reason += "; recorded responses are impossible"
                excluded.append((u.user_id, reason))
            elif u.stance is Stance.OPPONENT and u.responses > 0:
                excluded.append(
                    (u.user_id,
                     "opponent with recorded responses "
                     "(zero probability under the model)"))
            else:
                included.append(u)
        if excluded:
            warnings.warn(
                f"{len(excluded)} user(s) excluded from the fit: "
                + "; ".join(f"{uid} ({why})" for uid, why in excluded[:3])
                + ("; ..." if len(excluded) > 3 else ""))
        self.included = included
        self.excluded = tuple(excluded)
        self.opponent = np.array([u.stance is Stance.OPPONENT
                                  for u in included])
        informative = int((~self.opponent).sum())
        _check(informative >= 10,
               f"need at least 10 non-opponent users with a positive "
               f"posting rate, got {informative}", EstimationError)

        self.N = pop.advocate_post_count
        self.M = np.array([u.responses for u in included], dtype=np.int64)
        self.m = np.array([u.topic_posts for u in included], dtype=np.int64)
        self.n = np.array([u.total_posts for u in included], dtype=np.int64)
        self.recv = np.array(
            [core.receive_rate(u.friend_count, pop.typical_friend_rate)
             for u in included])
        self.rate = np.array([u.posting_rate for u in included])
        self.any_response = bool((self.M[~self.opponent] > 0).any())
        self.n_eval = 0

    def unpack(self, theta) -> ModelParams:
        v = math.exp(float(theta[0]))
        p = _sigmoid(float(theta[1]))
        if self.config.fit_surfing_mean:
            mu = math.exp(float(theta[2]))
            lam = mu
        else:
            mu, lam = self.config.mu, self.config.lam
        return ModelParams(mu=mu, lam=lam, views_per_post=v, p_act=p)

    def pack(self, params: ModelParams) -> np.ndarray:
        theta = [math.log(params.views_per_post), _logit(params.p_act)]
        if self.config.fit_surfing_mean:
            theta.append(math.log(params.mu))
        return np.array(theta)

    def scales(self, params: ModelParams) -> np.ndarray:
        rho = self.recv / (self.rate * params.views_per_post)
        table = core.surfing_stop_table(params.mu, params.lam)
        pv = kernels.p_visible_many(rho, table.view_tail,
                                    core.VISIBILITY_TAIL_TOL)
        a = pv * params.p_act
        a[self.opponent] = 0.0
        return a

    def neg_loglik(self, theta) -> float:
        self.n_eval += 1
        try:
            params = self.unpack(theta)
        except (OverflowError, ModelDomainError):
            return math.inf
        terms = kernels.loglik_terms(self.M, self.m, self.n, self.N,
                                     self.scales(params))
        if not np.all(np.isfinite(terms)):
            return math.inf
        # fsum: exactly rounded, so the objective is invariant under any
        # reordering of the users.
        return -math.fsum(terms.tolist())


def _grid_points(obj: _Objective):
    cfg = obj.config
    pts = []
    for v in cfg.v_grid:
        for p in cfg.p_act_grid:
            if cfg.fit_surfing_mean:
                for mu in cfg.mu_grid:
                    pts.append(np.array([math.log(v), _logit(p),
                                         math.log(mu)]))
            else:
                pts.append(np.array([math.log(v), _logit(p)]))
    return pts


def _nelder_mead(fun, x0, config: FitConfig):
    return minimize(fun, x0, method="Nelder-Mead",
                    options=dict(xatol=config.xatol, fatol=config.fatol,
                                 maxiter=config.max_iter,
                                 maxfev=config.max_iter))


def _gradient_norm(obj: _Objective, theta: np.ndarray) -> float:
    f = obj.neg_loglik
    grad = np.empty(len(theta))
    for j in range(len(theta)):
        h = 1e-5 * max(1.0, abs(float(theta[j])))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (f(up) - f(dn)) / (2.0 * h)
    return float(np.linalg.norm(grad))


def _boundary_result(obj: _Objective) -> FitResult:
    """All included non-opponents have zero responses: p_act sits at 0.

    The likelihood is flat in views_per_post there, so it is reported at
    the grid's geometric center with an unbounded interval.
    """
    cfg = obj.config
    v = math.exp(sum(math.log(g) for g in cfg.v_grid) / len(cfg.v_grid))
    params = ModelParams(mu=cfg.mu, lam=cfg.lam, views_per_post=v,
                         p_act=0.0)
    cis = {"views_per_post": (0.0, math.inf), "p_act": (0.0, 1.0)}
    methods = {"views_per_post": "unidentified (no responses)",
               "p_act": "boundary (flat likelihood at zero responses)"}
    if cfg.fit_surfing_mean:
        cis["mu"] = (0.0, math.inf)
        methods["mu"] = "unidentified (no responses)"
    return FitResult(params=params, log_likelihood=0.0, converged=True,
                     gradient_norm=0.0, confidence_intervals=cis,
                     ci_methods=methods, excluded_users=obj.excluded,
                     n_users_used=len(obj.included), boundary=True,
                     n_evaluations=obj.n_eval,
                     grid_best_loglik=0.0)


def fit_mle(users, pop: PopulationParams,
            config: FitConfig | None = None) -> FitResult:
    """Maximum-likelihood fit of (views_per_post, p_act[, mu]).

    Users with zero posting rate, and opponents with recorded
    responses, are excluded (with a warning) and listed in the result.
    Needs at least 10 non-opponent users with a positive posting rate.
    """
    config = config or FitConfig()
    obj = _Objective(users, pop, config)
    if not obj.any_response:
        return _boundary_result(obj)

    grid = [(obj.neg_loglik(t), i, t) for i, t in enumerate(_grid_points(obj))]
    grid.sort(key=lambda g: (g[0], g[1]))
    grid_best = grid[0][0]

    best = None
    for _, _, start in grid[:config.n_starts]:
        res = _nelder_mead(obj.neg_loglik, start, config)
        if best is None or res.fun < best.fun:
            best = res
    theta_hat = np.asarray(best.x, dtype=float)
    f_hat = float(best.fun)
    if f_hat > grid_best:  # never worse than the best probed grid point
        theta_hat = grid[0][2]
        f_hat = grid_best

    gnorm = _gradient_norm(obj, theta_hat)
    converged = bool(best.success) and gnorm <= config.gradient_tolerance
    params = obj.unpack(theta_hat)
    if config.compute_cis:
        cis, methods = _compute_cis(obj, theta_hat, f_hat)
    else:
        names = _Objective.PARAM_NAMES[:obj.dim]
        cis = {n: (math.nan, math.nan) for n in names}
        methods = {n: "not computed" for n in names}
    return FitResult(params=params, log_likelihood=-f_hat,
                     converged=converged, gradient_norm=gnorm,
                     confidence_intervals=cis, ci_methods=methods,
                     excluded_users=obj.excluded,
                     n_users_used=len(obj.included), boundary=False,
                     n_evaluations=obj.n_eval,
                     grid_best_loglik=-grid_best)


def _natural(obj: _Objective, j: int, psi: float) -> float:
    if j == 1:
        return _sigmoid(psi)
    return math.exp(psi)


def _domain_edge(j: int, direction: int) -> float:
    if j == 1:
        return 0.0 if direction < 0 else 1.0
    return 0.0 if direction < 0 else math.inf


def _profile_value(obj: _Objective, j: int, psi: float, inner_start,
                   config: FitConfig):
    """Profile objective at coordinate j pinned to psi; inner re-opt."""
    if obj.dim == 1:
        return obj.neg_loglik(np.array([psi])), inner_start

    def f(rest):
        return obj.neg_loglik(np.insert(rest, j, psi))

    res = _nelder_mead(f, inner_start, config)
    return float(res.fun), np.asarray(res.x)


def _profile_bound(obj: _Objective, theta_hat, f_hat: float, j: int,
                   direction: int, config: FitConfig):
    """One side of the profile interval; None when the profile never
    rises enough before the search span ends (unbounded side)."""
    target = f_hat + _CHI2_95_HALF
    inner = np.delete(theta_hat, j)
    psi0 = float(theta_hat[j])
    offset = config.profile_step
    prev = psi0
    crossing = None
    while offset <= config.profile_span:
        psi = psi0 + direction * offset
        val, inner = _profile_value(obj, j, psi, inner, config)
        if val >= target:
            crossing = (prev, psi)
            break
        if val < f_hat - 1e-6:
            raise EstimationError("profile found a better optimum")
        prev = psi
        offset *= 2.0
    if crossing is None:
        return None
    lo, hi = crossing
    while abs(hi - lo) > config.profile_bisect_tol:
        mid = 0.5 * (lo + hi)
        val, inner = _profile_value(obj, j, mid, inner, config)
        if val >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _curvature_cis(obj: _Objective, theta_hat, names):
    """Wald intervals from the observed information (fallback)."""
    d = len(theta_hat)
    h = 1e-4
    f0 = obj.neg_loglik(theta_hat)
    H = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = h
            ej[j] = h
            if i == j:
                H[i, i] = (obj.neg_loglik(theta_hat + ei)
                           - 2.0 * f0
                           + obj.neg_loglik(theta_hat - ei)) / h ** 2
            else:
                H[i, j] = H[j, i] = (
                    obj.neg_loglik(theta_hat + ei + ej)
                    - obj.neg_loglik(theta_hat + ei - ej)
                    - obj.neg_loglik(theta_hat - ei + ej)
                    + obj.neg_loglik(theta_hat - ei - ej)) / (4.0 * h ** 2)
    out = {}
    try:
        cov = np.linalg.inv(H)
        ses = np.sqrt(np.diag(cov))
    except np.linalg.LinAlgError:
        ses = np.full(d, math.nan)
    for j, name in enumerate(names):
        se = float(ses[j])
        if math.isfinite(se) and se > 0:
            lo = _natural(obj, j, float(theta_hat[j]) - _Z_95 * se)
            hi = _natural(obj, j, float(theta_hat[j]) + _Z_95 * se)
            out[name] = ((lo, hi), "curvature")
        else:
            out[name] = ((_domain_edge(j, -1), _domain_edge(j, +1)),
                         "curvature (information not invertible)")
    return out


def _compute_cis(obj: _Objective, theta_hat, f_hat: float):
    names = _Objective.PARAM_NAMES[:obj.dim]
    intervals, methods = {}, {}
    curvature = None
    for j, name in enumerate(names):
        bounds = []
        notes = []
        for direction in (-1, +1):
            try:
                psi = _profile_bound(obj, theta_hat, f_hat, j, direction,
                                     obj.config)
            except EstimationError:
                psi = math.nan
            if psi is None:
                bounds.append(_domain_edge(j, direction))
                notes.append("unbounded")
            elif math.isnan(psi):
                bounds.append(math.nan)
                notes.append("failed")
            else:
                bounds.append(_natural(obj, j, psi))
                notes.append("profile")
        if "failed" in notes:
            if curvature is None:
                curvature = _curvature_cis(obj, theta_hat, names)
            intervals[name], methods[name] = curvature[name]
        else:
            lo, hi = bounds
            point = _natural(obj, j, float(theta_hat[j]))
            lo, hi = min(lo, point), max(hi, point)
            intervals[name] = (lo, hi)
            if "unbounded" in notes:
                sides = [s for s, n in zip(("lower", "upper"), notes)
                         if n == "unbounded"]
                methods[name] = f"profile ({' and '.join(sides)} unbounded)"
            else:
                methods[name] = "profile"
    return intervals, methods


def confidence_intervals(users, pop: PopulationParams, fit: FitResult,
                         config: FitConfig | None = None) -> dict:
    """95% intervals for the free parameters of an existing fit.

    Profiles the log-likelihood through the fitted point (so ``config``
    should match the one used to produce ``fit``); falls back to
    curvature-based intervals where profiling fails. Returns the
    name -> (lo, hi) mapping, same as ``fit.confidence_intervals``.
    """
    config = config or FitConfig()
    obj = _Objective(users, pop, config)
    if fit.boundary:
        return dict(fit.confidence_intervals)
    theta_hat = obj.pack(fit.params)
    f_hat = obj.neg_loglik(theta_hat)
    intervals, _ = _compute_cis(obj, theta_hat, f_hat)
    return intervals


@dataclass(frozen=True)
class LogisticFit:
    """Activity-only baseline: response probability vs log posting rate."""

    beta0: float
    beta1: float
    standard_errors: tuple
    n_users: int
    log_likelihood: float
    n_iterations: int

    def __post_init__(self):
        _check(_finite(self.beta0) and _finite(self.beta1),
               "coefficients must be finite", EstimationError)
        _check(len(self.standard_errors) == 2
               and all(_finite(s) and s > 0 for s in self.standard_errors),
               "standard errors must be finite and > 0", EstimationError)


def fit_logistic(users, pop: PopulationParams) -> LogisticFit:
    """Fit P(respond to one post) = sigmoid(b0 + b1 log posting_rate).

    Each user contributes advocate_post_count Bernoulli trials with
    ``responses`` successes. Users with zero posting rate are excluded
    (their activity has no logarithm); raises SeparationError when the
    data admit a perfect separator and the MLE diverges.
    """
    users = [u for u in users if u.posting_rate > 0]
    _check(len(users) >= 10, "need at least 10 users with a positive "
           "posting rate", EstimationError)
    pop.check_users(users)
    N = pop.advocate_post_count
    x = np.log(np.array([u.posting_rate for u in users]))
    M = np.array([u.responses for u in users], dtype=np.float64)
    x_spread = float(x.std()) + 1e-12

    beta = np.zeros(2)
    X = np.column_stack([np.ones_like(x), x])
    for iteration in range(1, 101):
        eta = X @ beta
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        grad = X.T @ (M - N * p)
        W = N * p * (1.0 - p)
        H = X.T @ (X * W[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise SeparationError(
                "logistic information matrix is singular; data are "
                "separated or degenerate") from None
        beta = beta + step
        if abs(beta[0]) + abs(beta[1]) * x_spread > 40.0:
            raise SeparationError(
                "logistic coefficients diverged; data are separated")
        if float(np.max(np.abs(step))) < 1e-10:
            break
    else:
        raise EstimationError("logistic fit did not converge")

    eta = X @ beta
    p = 1.0 / (1.0 + np.exp(-eta))
    W = N * p * (1.0 - p)
    H = X.T @ (X * W[:, None])
    cov = np.linalg.inv(H)
    # log C(N, M) terms omitted: constant in beta.
    ll = float(np.sum(M * eta - N * np.logaddexp(0.0, eta)))
    return LogisticFit(beta0=float(beta[0]), beta1=float(beta[1]),
                       standard_errors=(float(math.sqrt(cov[0, 0])),
                                        float(math.sqrt(cov[1, 1]))),
                       n_users=len(users), log_likelihood=ll,
                       n_iterations=iteration)


def logistic_predict(user, fit: LogisticFit, pop: PopulationParams) -> float:
    """Expected responses under the baseline: N * sigmoid(b0 + b1 log rate).

    A zero posting rate is outside the regression's domain; it predicts
    0 with a warning rather than failing.
    """
    if user.posting_rate <= 0:
        warnings.warn(f"user {user.user_id}: zero posting rate is outside "
                      "the baseline's domain; predicting 0")
        return 0.0
    eta = fit.beta0 + fit.beta1 * math.log(user.posting_rate)
    return pop.advocate_post_count * _sigmoid(eta)

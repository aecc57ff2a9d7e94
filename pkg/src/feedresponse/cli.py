"""Command-line interface.

Every command writes deterministic files into --out-dir (metadata
headers carry the tool version, a digest of the config, and the seed;
never a timestamp), so reruns with the same inputs produce identical
bytes. Exit codes: 0 success, 1 model/estimation failure, 2 bad usage
or bad input data.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__, estimation, inference, io, simulator
from .errors import (ConfigError, DataValidationError, EstimationError,
                     FeedResponseError)


def _load_config(args) -> io.RunConfig:
    if getattr(args, "config", None):
        return io.read_run_config(args.config)
    return io.read_run_config_defaults()


def _need_population(config: io.RunConfig):
    if config.population is None:
        raise ConfigError(
            "this command needs a config file with a population section "
            "(advocate_post_count, typical_friend_rate)")
    return config.population


def _seed(args, config: io.RunConfig) -> int:
    return args.seed if args.seed is not None else config.seed


def _fraction(args, config: io.RunConfig) -> float:
    f = args.fraction if args.fraction is not None else \
        config.evaluate_fraction
    if not (0.0 < f < 1.0):
        raise ConfigError("--fraction must lie in (0, 1)")
    return f


def _model_params(args, config: io.RunConfig):
    if getattr(args, "params", None):
        return io.read_params_file(args.params)
    if config.model is not None:
        return config.model
    raise ConfigError("model parameters required: pass --params or add a "
                      "model section to the config")


def _out(args, name: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _metadata(args, command: str, config: io.RunConfig,
              seed: int | None) -> dict:
    return io.metadata_block(command, seed, config.digest)


def cmd_fit(args) -> None:
    config = _load_config(args)
    pop = _need_population(config)
    users = io.read_users_file(args.users)
    fit = estimation.fit_mle(users, pop, config.fit)
    extra = {"fit": {
        "log_likelihood": fit.log_likelihood,
        "converged": fit.converged,
        "gradient_norm": fit.gradient_norm,
        "boundary": fit.boundary,
        "confidence_intervals": {k: list(v) for k, v
                                 in fit.confidence_intervals.items()},
        "ci_methods": dict(fit.ci_methods),
        "excluded_users": [list(e) for e in fit.excluded_users],
        "n_users_used": fit.n_users_used,
        "n_evaluations": fit.n_evaluations,
    }}
    path = _out(args, "fit.json")
    io.write_params_file(path, fit.params,
                         _metadata(args, "fit", config, None), extra)
    ci = fit.confidence_intervals
    print(f"fit: views_per_post={fit.params.views_per_post:.6g} "
          f"[{ci['views_per_post'][0]:.6g}, {ci['views_per_post'][1]:.6g}] "
          f"p_act={fit.params.p_act:.6g} "
          f"[{ci['p_act'][0]:.6g}, {ci['p_act'][1]:.6g}]")
    print(f"fit: log_likelihood={fit.log_likelihood:.6g} "
          f"converged={fit.converged} users={fit.n_users_used} "
          f"excluded={len(fit.excluded_users)}")
    if not fit.converged:
        raise EstimationError(
            f"fit did not converge (gradient_norm="
            f"{fit.gradient_norm:.3g}); results written to {path}")


def cmd_predict(args) -> None:
    config = _load_config(args)
    pop = _need_population(config)
    params = _model_params(args, config)
    users = io.read_users_file(args.users)
    preds = inference.predict_population(users, pop, params)
    io.write_predictions_file(_out(args, "predictions.csv"), preds,
                              _metadata(args, "predict", config, None))
    by_id = {u.user_id: u for u in users}
    for uid in args.distribution_user:
        if uid not in by_id:
            raise DataValidationError(
                f"user {uid!r} not found in {args.users}")
        from .core import response_distribution
        dist = response_distribution(by_id[uid], pop, params)
        meta = _metadata(args, "predict", config, None)
        meta = dict(meta, user_id=dist.user_id, mean=dist.mean,
                    std=dist.std)
        io.write_table(_out(args, f"distribution_{uid}.csv"),
                       ("responses", "probability"),
                       list(enumerate(dist.pmf)), meta)
    total = sum(p.predicted_mean for p in preds)
    print(f"predict: {len(preds)} users, total predicted responses "
          f"{total:.6g}")


def cmd_classify(args) -> None:
    config = _load_config(args)
    pop = _need_population(config)
    params = _model_params(args, config)
    users = io.read_users_file(args.users)
    fraction = _fraction(args, config)
    preds = inference.predict_population(users, pop, params)
    cls = inference.classify_top_responders(preds, pop, fraction=fraction)
    from .evaluation import fisher_exact
    payload = {
        "metadata": _metadata(args, "classify", config, None),
        "classification": _classification_payload(cls),
        "fisher_p": fisher_exact(cls.contingency),
    }
    io.write_json(_out(args, "classification.json"), payload)
    print(f"classify: top {fraction:.6g} of {cls.n_users} users "
          f"(target {cls.target_size}); precision={cls.precision:.6g} "
          f"recall={cls.recall:.6g} error_fraction="
          f"{cls.error_fraction:.6g}")


def _classification_payload(cls) -> dict:
    return {
        "fraction": cls.fraction,
        "target_size": cls.target_size,
        "n_users": cls.n_users,
        "predicted_top": sorted(cls.predicted_top),
        "observed_top": sorted(cls.observed_top),
        "true_positives": cls.true_positives,
        "false_positives": cls.false_positives,
        "false_negatives": cls.false_negatives,
        "true_negatives": cls.true_negatives,
        "precision": cls.precision,
        "recall": cls.recall,
        "error_fraction": cls.error_fraction,
        "predicted_tie_group": list(cls.predicted_tie_group),
        "observed_tie_group": list(cls.observed_tie_group),
    }


def _spearman_payload(sp) -> dict:
    return {"rho": sp.rho, "p_value": sp.p_value, "n": sp.n,
            "p_method": sp.p_method, "significant_5pct": sp.p_value < 0.05}


def _check_prediction_files_agree(preds_a, preds_b, path_a, path_b) -> None:
    ids_a = {p.user_id for p in preds_a}
    ids_b = {p.user_id for p in preds_b}
    if ids_a != ids_b:
        diff = sorted(ids_a ^ ids_b)
        shown = ", ".join(diff[:10]) + (", ..." if len(diff) > 10 else "")
        raise DataValidationError(
            f"{path_a} and {path_b} cover different users "
            f"({len(diff)} mismatched): {shown}")
    obs_b = {p.user_id: p.observed for p in preds_b}
    bad = sorted(p.user_id for p in preds_a
                 if p.observed != obs_b[p.user_id])
    if bad:
        shown = ", ".join(bad[:10]) + (", ..." if len(bad) > 10 else "")
        raise DataValidationError(
            f"{path_a} and {path_b} disagree on observed responses for "
            f"{len(bad)} user(s): {shown}")


def cmd_evaluate(args) -> None:
    from . import evaluation
    config = _load_config(args)
    fraction = _fraction(args, config)
    seed = _seed(args, config)

    baseline_preds = None
    baseline_error = None
    if args.predictions_a and args.users:
        raise ConfigError("pass either --users or --predictions-a, "
                          "not both")
    if args.predictions_a:
        pop = config.population
        preds = io.read_predictions_file(args.predictions_a)
        if args.predictions_b:
            baseline_preds = io.read_predictions_file(args.predictions_b)
            _check_prediction_files_agree(
                preds, baseline_preds, args.predictions_a,
                args.predictions_b)
        else:
            baseline_error = "no baseline predictions supplied"
    elif args.users:
        pop = _need_population(config)
        params = _model_params(args, config)
        users = io.read_users_file(args.users)
        preds = inference.predict_population(users, pop, params)
        try:
            logistic = estimation.fit_logistic(users, pop)
            baseline_preds = [
                inference.PredictionRecord(
                    user_id=u.user_id, observed=u.responses,
                    predicted_mean=estimation.logistic_predict(
                        u, logistic, pop),
                    predicted_std=0.0,
                    abs_error=abs(estimation.logistic_predict(
                        u, logistic, pop) - u.responses))
                for u in users]
        except EstimationError as e:
            baseline_error = str(e)
    else:
        raise ConfigError("evaluate needs --users (fit a baseline "
                          "internally) or --predictions-a/--predictions-b "
                          "(compare prediction files)")

    report = evaluation.evaluate_predictions(
        preds, baseline_preds, pop, fraction=fraction,
        n_resamples=config.evaluate_resamples, seed=seed)

    payload = {
        "metadata": _metadata(args, "evaluate", config, seed),
        "n_users": report.n_users,
        "fraction": report.fraction,
        "model": {
            "spearman": _spearman_payload(report.model.spearman),
            "classification": _classification_payload(
                report.model.classification),
            "fisher_p": report.model.fisher_p,
        },
        "error_uncertainty": (_spearman_payload(report.error_uncertainty)
                              if report.error_uncertainty else None),
    }
    if report.baseline is not None:
        payload["baseline"] = {
            "spearman": _spearman_payload(report.baseline.spearman),
            "classification": _classification_payload(
                report.baseline.classification),
            "fisher_p": report.baseline.fisher_p,
        }
        cd = report.correlation_difference
        payload["correlation_difference"] = {
            "observed_difference": cd.observed_difference,
            "p_value": cd.p_value,
            "n_resamples": cd.n_resamples,
            "n_effective_resamples": cd.n_effective_resamples,
            "seed": cd.seed,
        }
    else:
        payload["baseline"] = None
        payload["baseline_error"] = baseline_error

    io.write_json(_out(args, "evaluation.json"), payload)
    meta = _metadata(args, "evaluate", config, seed)
    io.write_table(_out(args, "pr_model.csv"),
                  ("k", "precision", "recall"),
                  [(p.k, p.precision, p.recall)
                   for p in report.model.pr_points], meta)
    if report.baseline is not None:
        io.write_table(_out(args, "pr_baseline.csv"),
                      ("k", "precision", "recall"),
                      [(p.k, p.precision, p.recall)
                       for p in report.baseline.pr_points], meta)
    sp = report.model.spearman
    print(f"evaluate: model spearman={sp.rho:.6g} (p={sp.p_value:.3g}), "
          f"classification error={report.model.classification.error_fraction:.6g}")
    if report.baseline is not None:
        bsp = report.baseline.spearman
        cd = report.correlation_difference
        print(f"evaluate: baseline spearman={bsp.rho:.6g} "
              f"(p={bsp.p_value:.3g}); difference="
              f"{cd.observed_difference:.6g} (bootstrap p={cd.p_value:.3g})")
    else:
        print(f"evaluate: baseline unavailable ({baseline_error})")


def cmd_posterior(args) -> None:
    config = _load_config(args)
    pop = _need_population(config)
    params = _model_params(args, config)
    users = io.read_users_file(args.users)
    match = [u for u in users if u.user_id == args.user_id]
    if not match:
        raise DataValidationError(
            f"user {args.user_id!r} not found in {args.users}")
    post = inference.posterior_interest(match[0], pop, params,
                                        config.posterior_grid_size)
    meta = _metadata(args, "posterior", config, None)
    meta = dict(meta, user_id=post.user_id, prior_mean=post.prior_mean,
                posterior_mean=post.posterior_mean)
    rows = [(post.grid[i], post.prior_density[i], post.posterior_density[i])
            for i in range(len(post.grid))]
    io.write_table(_out(args, f"posterior_{post.user_id}.csv"),
                  ("p", "prior_density", "posterior_density"), rows, meta)
    print(f"posterior: user {post.user_id} prior_mean={post.prior_mean:.6g} "
          f"posterior_mean={post.posterior_mean:.6g}")


def cmd_simulate(args) -> None:
    config = _load_config(args)
    if config.simulate is None:
        raise ConfigError("simulate needs a config file with a simulate "
                          "section")
    params = _model_params(args, config)
    seed = _seed(args, config)
    users, pop, trace = simulator.simulate_population(config.simulate,
                                                      params, seed)
    meta = _metadata(args, "simulate", config, seed)
    io.write_users_file(_out(args, "users.csv"), users, meta)
    io.write_truth_file(_out(args, "truth.csv"), trace, meta)
    total = int(trace.observed_responses.sum())
    print(f"simulate: {len(users)} users, {total} responses "
          f"({pop.advocate_post_count} advocate posts)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feedresponse",
        description="Stochastic model of follower response to advocate "
                    "posts in social feeds")
    parser.add_argument("--version", action="version",
                        version=f"feedresponse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, users=True, params=False, user_id=False, fraction=False,
               seed=True):
        if users:
            p.add_argument("--users", required=True,
                           help="user table (CSV)")
        if params:
            p.add_argument("--params", help="model parameter file (JSON); "
                           "falls back to the config's model section")
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--out-dir", default=".",
                       help="directory for output files (default: .)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="seed override (default: config seed)")
        if user_id:
            p.add_argument("--user-id", required=True,
                           help="user to analyze")
        if fraction:
            p.add_argument("--fraction", type=float, default=None,
                           help="top fraction to classify (default 0.25)")

    p = sub.add_parser("fit", help="fit model parameters to a user table")
    common(p, seed=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict per-user response counts")
    common(p, params=True, seed=False)
    p.add_argument("--distribution-user", action="append", default=[],
                   metavar="USER_ID",
                   help="also write the full response distribution for "
                        "this user (repeatable)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("classify",
                       help="classify the predicted top responders")
    common(p, params=True, fraction=True, seed=False)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate",
                       help="evaluate predictions against a baseline")
    common(p, users=False, params=True, fraction=True)
    p.add_argument("--users", help="user table (CSV); predicts from "
                   "--params and fits a logistic baseline internally")
    p.add_argument("--predictions-a",
                   help="model predictions file (CSV) to evaluate")
    p.add_argument("--predictions-b",
                   help="baseline predictions file (CSV) to compare "
                        "against")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("posterior",
                       help="topic-interest posterior for one user")
    common(p, params=True, user_id=True, seed=False)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("simulate", help="generate a synthetic population")
    common(p, users=False, params=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        args.func(args)
    except (ConfigError, DataValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FeedResponseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""File formats: user tables, parameter files, run configuration.

All outputs are deterministic: no timestamps, stable key order, floats
via ``repr`` (shortest round-trip). CSV files carry ``# key: value``
metadata lines above the header; JSON files carry a ``metadata``
object. Non-finite values serialize as null.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass

from . import __version__
from .errors import ConfigError, DataValidationError
from .estimation import FitConfig
from .inference import PredictionRecord
from .simulator import (BetaSpec, LogNormalSpec, PopulationConfig, SimTrace,
                        StanceMix)
from .types import ModelParams, PopulationParams, Stance, UserRecord

USERS_HEADER = ("user_id", "posting_rate", "friend_count", "stance",
                "topic_posts", "total_posts", "responses")
PREDICTIONS_HEADER = ("user_id", "observed", "predicted_mean",
                      "predicted_std", "abs_error")
TRUTH_HEADER = ("user_id", "true_p_topic", "true_p_visible",
                "true_response_scale", "responses")


def config_hash_of(raw: dict | None) -> str:
    """Short stable digest of a raw config mapping ('none' without one)."""
    if raw is None:
        return "none"
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def metadata_block(command: str, seed: int | None,
                   config_digest: str) -> dict:
    meta = {"tool": "feedresponse", "version": __version__,
            "command": command, "config_hash": config_digest}
    if seed is not None:
        meta["seed"] = seed
    return meta


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _metadata_lines(metadata: dict) -> list:
    return [f"# {k}: {_fmt(v)}" for k, v in metadata.items()]


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, frozenset):
        return sorted(x)
    return x


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table(path, header, rows, metadata: dict) -> None:
    """CSV with ``# key: value`` metadata lines above the header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in _metadata_lines(metadata):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _iter_csv_rows(path):
    """Yield (1-based line number, parsed fields), skipping comments."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, next(csv.reader([line]))


def _parse_int(text: str, name: str, row: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise DataValidationError(f"{name} must be an integer, got "
                                  f"{text!r}", row=row) from None


def _parse_float(text: str, name: str, row: int) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise DataValidationError(f"{name} must be a number, got {text!r}",
                                  row=row) from None


def write_users_file(path, users, metadata: dict) -> None:
    rows = [(u.user_id, u.posting_rate, u.friend_count, u.stance.value,
             u.topic_posts, u.total_posts, u.responses) for u in users]
    write_table(path, USERS_HEADER, rows, metadata)


def read_users_file(path) -> list:
    """Parse a user table; every complaint carries its line number."""
    rows = _iter_csv_rows(path)
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise DataValidationError(f"{path}: no header row") from None
    if tuple(h.strip() for h in header) != USERS_HEADER:
        raise DataValidationError(
            f"bad header {header!r}; expected "
            f"{','.join(USERS_HEADER)}", row=header_line)
    users = []
    seen = {}
    for lineno, fields in rows:
        if len(fields) != len(USERS_HEADER):
            raise DataValidationError(
                f"expected {len(USERS_HEADER)} fields, got {len(fields)}",
                row=lineno)
        uid = fields[0].strip()
        if uid in seen:
            raise DataValidationError(
                f"duplicate user_id {uid!r} (first seen on line "
                f"{seen[uid]})", row=lineno)
        seen[uid] = lineno
        try:
            stance = Stance.parse(fields[3])
            user = UserRecord(
                user_id=uid,
                posting_rate=_parse_float(fields[1], "posting_rate", lineno),
                friend_count=_parse_int(fields[2], "friend_count", lineno),
                stance=stance,
                topic_posts=_parse_int(fields[4], "topic_posts", lineno),
                total_posts=_parse_int(fields[5], "total_posts", lineno),
                responses=_parse_int(fields[6], "responses", lineno))
        except DataValidationError as e:
            if e.row is None:
                raise DataValidationError(str(e), row=lineno) from None
            raise
        users.append(user)
    if not users:
        raise DataValidationError(f"{path}: no user records")
    return users


def write_predictions_file(path, predictions, metadata: dict) -> None:
    rows = [(p.user_id, p.observed, p.predicted_mean, p.predicted_std,
             p.abs_error) for p in predictions]
    write_table(path, PREDICTIONS_HEADER, rows, metadata)


def read_predictions_file(path) -> list:
    rows = _iter_csv_rows(path)
    try:
        header_line, header = next(rows)
    except StopIteration:
        raise DataValidationError(f"{path}: no header row") from None
    if tuple(h.strip() for h in header) != PREDICTIONS_HEADER:
        raise DataValidationError(
            f"bad header {header!r}; expected "
            f"{','.join(PREDICTIONS_HEADER)}", row=header_line)
    out = []
    for lineno, fields in rows:
        if len(fields) != len(PREDICTIONS_HEADER):
            raise DataValidationError(
                f"expected {len(PREDICTIONS_HEADER)} fields, got "
                f"{len(fields)}", row=lineno)
        out.append(PredictionRecord(
            user_id=fields[0].strip(),
            observed=_parse_int(fields[1], "observed", lineno),
            predicted_mean=_parse_float(fields[2], "predicted_mean", lineno),
            predicted_std=_parse_float(fields[3], "predicted_std", lineno),
            abs_error=_parse_float(fields[4], "abs_error", lineno)))
    if not out:
        raise DataValidationError(f"{path}: no prediction records")
    return out


def write_truth_file(path, trace: SimTrace, metadata: dict) -> None:
    rows = [(uid, trace.true_p_topic[i], trace.true_p_visible[i],
             trace.true_response_scale[i], int(trace.observed_responses[i]))
            for i, uid in enumerate(trace.user_ids)]
    write_table(path, TRUTH_HEADER, rows, metadata)


def write_params_file(path, params: ModelParams, metadata: dict,
                      extra: dict | None = None) -> None:
    payload = {"metadata": metadata,
               "params": {"mu": params.mu, "lam": params.lam,
                          "views_per_post": params.views_per_post,
                          "p_act": params.p_act}}
    if extra:
        payload.update(extra)
    write_json(path, payload)


def read_params_file(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"{path}: not valid JSON ({e})") \
                from None
    if not isinstance(payload, dict) or "params" not in payload:
        raise DataValidationError(f"{path}: missing 'params' object")
    section = payload["params"]
    allowed = {"mu", "lam", "views_per_post", "p_act"}
    _reject_unknown(section, allowed, "params")
    missing = allowed - set(section)
    if missing:
        raise DataValidationError(
            f"{path}: params missing {sorted(missing)}")
    try:
        return ModelParams(mu=float(section["mu"]),
                           lam=float(section["lam"]),
                           views_per_post=float(section["views_per_post"]),
                           p_act=float(section["p_act"]))
    except (TypeError, ValueError) as e:
        raise DataValidationError(f"{path}: bad params ({e})") from None


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


@dataclass(frozen=True)
class RunConfig:
    """Parsed run configuration. Unknown keys are rejected outright."""

    raw: dict | None
    seed: int
    population: PopulationParams | None
    model: ModelParams | None
    fit: FitConfig
    simulate: PopulationConfig | None
    evaluate_fraction: float
    evaluate_resamples: int
    posterior_grid_size: int

    @property
    def digest(self) -> str:
        return config_hash_of(self.raw)


def _build_population(section: dict) -> PopulationParams:
    _reject_unknown(section, {"advocate_id", "advocate_post_count",
                              "typical_friend_rate"}, "population")
    try:
        return PopulationParams(
            advocate_id=section.get("advocate_id", "advocate"),
            advocate_post_count=section["advocate_post_count"],
            typical_friend_rate=section["typical_friend_rate"])
    except KeyError as e:
        raise ConfigError(f"population section missing {e.args[0]!r}") \
            from None


def _build_model(section: dict) -> ModelParams:
    _reject_unknown(section, {"mu", "lam", "views_per_post", "p_act"},
                    "model")
    try:
        return ModelParams(mu=section["mu"], lam=section["lam"],
                           views_per_post=section["views_per_post"],
                           p_act=section["p_act"])
    except KeyError as e:
        raise ConfigError(f"model section missing {e.args[0]!r}") from None


def _build_fit(section: dict) -> FitConfig:
    allowed = {"mu", "lam", "fit_surfing_mean", "v_grid", "p_act_grid",
               "mu_grid", "n_starts", "xatol", "fatol", "max_iter",
               "gradient_tolerance", "profile_step", "profile_span",
               "profile_bisect_tol"}
    _reject_unknown(section, allowed, "fit")
    kwargs = dict(section)
    for grid in ("v_grid", "p_act_grid", "mu_grid"):
        if grid in kwargs:
            kwargs[grid] = tuple(kwargs[grid])
    return FitConfig(**kwargs)


def _build_law(section: dict, where: str) -> LogNormalSpec:
    _reject_unknown(section, {"log_mean", "log_sd"}, where)
    try:
        return LogNormalSpec(log_mean=section["log_mean"],
                             log_sd=section["log_sd"])
    except KeyError as e:
        raise ConfigError(f"{where} missing {e.args[0]!r}") from None


def _build_simulate(section: dict,
                    population: PopulationParams | None) -> PopulationConfig:
    allowed = {"user_count", "posting_rate_law", "friend_count_law",
               "topic_fraction_law", "stance_mix", "observation_days"}
    _reject_unknown(section, allowed, "simulate")
    if population is None:
        raise ConfigError("simulate needs a population section "
                          "(advocate_post_count, typical_friend_rate)")
    kwargs = {"user_count": section.get("user_count"),
              "advocate_post_count": population.advocate_post_count,
              "typical_friend_rate": population.typical_friend_rate,
              "advocate_id": population.advocate_id}
    if kwargs["user_count"] is None:
        raise ConfigError("simulate section missing 'user_count'")
    if "posting_rate_law" in section:
        kwargs["posting_rate_law"] = _build_law(
            section["posting_rate_law"], "simulate.posting_rate_law")
    if "friend_count_law" in section:
        kwargs["friend_count_law"] = _build_law(
            section["friend_count_law"], "simulate.friend_count_law")
    if "topic_fraction_law" in section:
        sub = section["topic_fraction_law"]
        _reject_unknown(sub, {"alpha", "beta"},
                        "simulate.topic_fraction_law")
        try:
            kwargs["topic_fraction_law"] = BetaSpec(alpha=sub["alpha"],
                                                    beta=sub["beta"])
        except KeyError as e:
            raise ConfigError("simulate.topic_fraction_law missing "
                              f"{e.args[0]!r}") from None
    if "stance_mix" in section:
        sub = section["stance_mix"]
        _reject_unknown(sub, {"supporter", "opponent", "neutral"},
                        "simulate.stance_mix")
        try:
            kwargs["stance_mix"] = StanceMix(supporter=sub["supporter"],
                                             opponent=sub["opponent"],
                                             neutral=sub["neutral"])
        except KeyError as e:
            raise ConfigError(f"simulate.stance_mix missing {e.args[0]!r}") \
                from None
    if "observation_days" in section:
        kwargs["observation_days"] = section["observation_days"]
    return PopulationConfig(**kwargs)


def read_run_config_defaults() -> RunConfig:
    """Configuration used when no config file is given: all defaults."""
    return RunConfig(raw=None, seed=0, population=None, model=None,
                     fit=FitConfig(), simulate=None, evaluate_fraction=0.25,
                     evaluate_resamples=10000, posterior_grid_size=1001)


def read_run_config(path) -> RunConfig:
    """Load and strictly validate a JSON run configuration."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    allowed = {"seed", "population", "model", "fit", "simulate", "evaluate",
               "posterior"}
    _reject_unknown(raw, allowed, "config")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")

    try:
        population = (_build_population(raw["population"])
                      if "population" in raw else None)
        model = _build_model(raw["model"]) if "model" in raw else None
        fit = _build_fit(raw.get("fit", {}))
        simulate = (_build_simulate(raw["simulate"], population)
                    if "simulate" in raw else None)
    except ConfigError:
        raise
    except Exception as e:  # bad values inside a section
        raise ConfigError(f"{path}: {e}") from None

    eval_section = raw.get("evaluate", {})
    _reject_unknown(eval_section, {"fraction", "n_resamples"}, "evaluate")
    fraction = eval_section.get("fraction", 0.25)
    resamples = eval_section.get("n_resamples", 10000)
    if not (isinstance(fraction, (int, float)) and 0 < fraction < 1):
        raise ConfigError("evaluate.fraction must lie in (0, 1)")
    if not (isinstance(resamples, int) and resamples >= 1):
        raise ConfigError("evaluate.n_resamples must be a positive integer")

    post_section = raw.get("posterior", {})
    _reject_unknown(post_section, {"grid_size"}, "posterior")
    grid_size = post_section.get("grid_size", 1001)
    if not (isinstance(grid_size, int) and grid_size >= 101):
        raise ConfigError("posterior.grid_size must be an integer >= 101")

    return RunConfig(raw=raw, seed=seed, population=population, model=model,
                     fit=fit, simulate=simulate,
                     evaluate_fraction=float(fraction),
                     evaluate_resamples=resamples,
                     posterior_grid_size=grid_size)

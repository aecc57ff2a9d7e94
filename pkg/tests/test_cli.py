"""End-to-end command tests driven through main(argv)."""

import dataclasses
import json
import math
import subprocess
import sys

import pytest

from feedresponse import estimation, io
from feedresponse.cli import main


CONFIG = {
    "seed": 4,
    "population": {"advocate_post_count": 60, "typical_friend_rate": 1.61},
    "model": {"mu": 14.0, "lam": 14.0, "views_per_post": 38.0,
              "p_act": 0.12},
    "simulate": {"user_count": 60},
    "evaluate": {"n_resamples": 200},
    "posterior": {"grid_size": 101},
}


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Config plus one simulated population and its predictions."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(CONFIG))
    out = root / "base"
    assert main(["simulate", "--config", str(cfg),
                 "--out-dir", str(out)]) == 0
    users = out / "users.csv"
    assert main(["predict", "--users", str(users), "--config", str(cfg),
                 "--out-dir", str(out)]) == 0
    return {"cfg": str(cfg), "out": out, "users": str(users),
            "preds": str(out / "predictions.csv")}


def test_simulate_is_deterministic(ws, tmp_path, capsys):
    assert main(["simulate", "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 0
    assert "simulate: 60 users" in capsys.readouterr().out
    for name in ("users.csv", "truth.csv"):
        assert (tmp_path / name).read_bytes() == \
            (ws["out"] / name).read_bytes()


def test_simulate_seed_flag_overrides_config(ws, tmp_path):
    assert main(["simulate", "--config", ws["cfg"], "--seed", "5",
                 "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "users.csv").read_bytes() != \
        (ws["out"] / "users.csv").read_bytes()


def test_simulate_needs_simulate_section(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({k: v for k, v in CONFIG.items()
                               if k != "simulate"}))
    assert main(["simulate", "--config", str(cfg),
                 "--out-dir", str(tmp_path)]) == 2
    assert "simulate" in capsys.readouterr().err


def test_fit_writes_params_and_report(ws, tmp_path, capsys):
    assert main(["fit", "--users", ws["users"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "fit: views_per_post=" in out and "converged=True" in out
    params = io.read_params_file(str(tmp_path / "fit.json"))
    assert params.views_per_post > 0 and 0 <= params.p_act <= 1
    payload = json.loads((tmp_path / "fit.json").read_text())
    fit = payload["fit"]
    assert fit["converged"] is True
    assert set(fit["confidence_intervals"]) == {"views_per_post", "p_act"}
    assert fit["n_users_used"] + len(fit["excluded_users"]) <= 60


def test_fit_nonconvergence_exits_1_but_writes_results(
        ws, tmp_path, capsys, monkeypatch):
    stuck = estimation.FitResult(
        params=dataclasses.replace(io.read_run_config(ws["cfg"]).model),
        log_likelihood=-1.0, converged=False, gradient_norm=9.9,
        confidence_intervals={"views_per_post": (1.0, 2.0),
                              "p_act": (0.1, 0.2)},
        ci_methods={}, excluded_users=(), n_users_used=60,
        boundary=False, n_evaluations=1, grid_best_loglik=-1.0)
    monkeypatch.setattr(estimation, "fit_mle",
                        lambda users, pop, config: stuck)
    assert main(["fit", "--users", ws["users"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 1
    assert "did not converge" in capsys.readouterr().err
    assert (tmp_path / "fit.json").exists()   # partial results kept


def test_predict_table_matches_users(ws):
    preds = io.read_predictions_file(ws["preds"])
    users = io.read_users_file(ws["users"])
    assert [p.user_id for p in preds] == [u.user_id for u in users]
    assert all(p.observed == u.responses
               for p, u in zip(preds, users))
    assert all(p.predicted_mean >= 0 and p.predicted_std >= 0
               for p in preds)


def test_predict_distribution_file(ws, tmp_path, capsys):
    assert main(["predict", "--users", ws["users"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path),
                 "--distribution-user", "u000000"]) == 0
    assert "predict: 60 users" in capsys.readouterr().out
    lines = [l for l in
             (tmp_path / "distribution_u000000.csv").read_text().splitlines()
             if l and not l.startswith("#")]
    assert lines[0] == "responses,probability"
    probs = [float(l.split(",")[1]) for l in lines[1:]]
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-9)
    assert [int(l.split(",")[0]) for l in lines[1:]] == \
        list(range(len(probs)))


def test_predict_unknown_distribution_user(ws, tmp_path, capsys):
    assert main(["predict", "--users", ws["users"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path),
                 "--distribution-user", "nobody"]) == 2
    assert "'nobody' not found" in capsys.readouterr().err


def test_classify_report(ws, tmp_path, capsys):
    assert main(["classify", "--users", ws["users"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 0
    assert "classify: top 0.25 of 60 users" in capsys.readouterr().out
    payload = json.loads((tmp_path / "classification.json").read_text())
    cls = payload["classification"]
    assert cls["target_size"] == 16        # smallest count above 0.25 * 60
    assert len(cls["predicted_top"]) == cls["target_size"]
    assert 0.0 <= cls["precision"] <= 1.0
    assert 0.0 <= cls["recall"] <= 1.0
    assert 0.0 < payload["fisher_p"] <= 1.0
    tp, fp = cls["true_positives"], cls["false_positives"]
    fn, tn = cls["false_negatives"], cls["true_negatives"]
    assert tp + fp + fn + tn == 60


def test_classify_rejects_bad_fraction(ws, tmp_path, capsys):
    assert main(["classify", "--users", ws["users"], "--config", ws["cfg"],
                 "--fraction", "1.5", "--out-dir", str(tmp_path)]) == 2
    assert "fraction" in capsys.readouterr().err


def test_evaluate_users_mode(ws, tmp_path, capsys):
    assert main(["evaluate", "--users", ws["users"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 0
    assert "evaluate: model spearman=" in capsys.readouterr().out
    payload = json.loads((tmp_path / "evaluation.json").read_text())
    assert payload["n_users"] == 60
    assert -1.0 <= payload["model"]["spearman"]["rho"] <= 1.0
    assert (tmp_path / "pr_model.csv").exists()
    if payload["baseline"] is None:
        assert isinstance(payload["baseline_error"], str)
    else:
        assert payload["correlation_difference"]["n_resamples"] == 200
        assert (tmp_path / "pr_baseline.csv").exists()


def test_evaluate_self_comparison_is_a_wash(ws, tmp_path):
    assert main(["evaluate", "--predictions-a", ws["preds"],
                 "--predictions-b", ws["preds"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "evaluation.json").read_text())
    cd = payload["correlation_difference"]
    assert cd["observed_difference"] == 0.0
    assert cd["p_value"] == 1.0


def test_evaluate_single_file_reports_missing_baseline(ws, tmp_path):
    assert main(["evaluate", "--predictions-a", ws["preds"],
                 "--config", ws["cfg"], "--out-dir", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "evaluation.json").read_text())
    assert payload["baseline"] is None
    assert payload["baseline_error"] == "no baseline predictions supplied"


def test_evaluate_rejects_both_sources(ws, tmp_path, capsys):
    assert main(["evaluate", "--users", ws["users"],
                 "--predictions-a", ws["preds"], "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 2
    assert "not both" in capsys.readouterr().err


def test_evaluate_needs_a_source(ws, tmp_path, capsys):
    assert main(["evaluate", "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 2
    assert "evaluate needs" in capsys.readouterr().err


def test_evaluate_rejects_mismatched_user_sets(ws, tmp_path, capsys):
    preds = io.read_predictions_file(ws["preds"])
    renamed = [dataclasses.replace(preds[0], user_id="stranger")] \
        + preds[1:]
    other = tmp_path / "other.csv"
    io.write_predictions_file(str(other), renamed,
                              io.metadata_block("predict", None, "none"))
    assert main(["evaluate", "--predictions-a", ws["preds"],
                 "--predictions-b", str(other), "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "cover different users" in err and "stranger" in err


def test_evaluate_rejects_disagreeing_observations(ws, tmp_path, capsys):
    preds = io.read_predictions_file(ws["preds"])
    bumped = [dataclasses.replace(preds[0], observed=preds[0].observed + 1)]\
        + preds[1:]
    other = tmp_path / "other.csv"
    io.write_predictions_file(str(other), bumped,
                              io.metadata_block("predict", None, "none"))
    assert main(["evaluate", "--predictions-a", ws["preds"],
                 "--predictions-b", str(other), "--config", ws["cfg"],
                 "--out-dir", str(tmp_path)]) == 2
    assert "disagree on observed responses" in capsys.readouterr().err


def test_posterior_writes_density_table(ws, tmp_path, capsys):
    assert main(["posterior", "--users", ws["users"], "--config", ws["cfg"],
                 "--user-id", "u000003", "--out-dir", str(tmp_path)]) == 0
    assert "posterior: user u000003" in capsys.readouterr().out
    lines = [l for l in
             (tmp_path / "posterior_u000003.csv").read_text().splitlines()
             if l and not l.startswith("#")]
    assert lines[0] == "p,prior_density,posterior_density"
    assert len(lines) - 1 == CONFIG["posterior"]["grid_size"]
    rows = [tuple(map(float, l.split(","))) for l in lines[1:]]
    assert rows[0][0] == 0.0 and rows[-1][0] == 1.0
    assert all(r[1] >= 0.0 and r[2] >= 0.0 for r in rows)


def test_posterior_unknown_user(ws, tmp_path, capsys):
    assert main(["posterior", "--users", ws["users"], "--config", ws["cfg"],
                 "--user-id", "ghost", "--out-dir", str(tmp_path)]) == 2
    assert "'ghost' not found" in capsys.readouterr().err


def test_params_file_overrides_config_model(ws, tmp_path):
    from feedresponse.types import ModelParams
    silent = tmp_path / "silent.json"
    io.write_params_file(str(silent),
                         ModelParams(14.0, 14.0, 38.0, 0.0),
                         io.metadata_block("fit", None, "none"))
    assert main(["predict", "--users", ws["users"], "--config", ws["cfg"],
                 "--params", str(silent), "--out-dir", str(tmp_path)]) == 0
    preds = io.read_predictions_file(str(tmp_path / "predictions.csv"))
    assert all(p.predicted_mean == 0.0 for p in preds)


def test_missing_users_file(ws, tmp_path, capsys):
    assert main(["fit", "--users", str(tmp_path / "nope.csv"),
                 "--config", ws["cfg"], "--out-dir", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_config_is_usage_error(ws, tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["predict", "--users", ws["users"], "--config", str(cfg),
                 "--out-dir", str(tmp_path)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_commands_without_population_config(ws, tmp_path, capsys):
    assert main(["fit", "--users", ws["users"],
                 "--out-dir", str(tmp_path)]) == 2
    assert "population section" in capsys.readouterr().err


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    from feedresponse import __version__
    assert __version__ in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "feedresponse",
                           "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "feedresponse" in proc.stdout

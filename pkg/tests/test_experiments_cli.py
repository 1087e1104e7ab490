import json

import numpy as np
import pytest

from evshunt.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main
from evshunt.experiments import (
    ShuntingReport,
    ShuntingRun,
    checkpoint_json,
    load_checkpoint,
    run_shunting,
)
from evshunt.marl.learner import ActionGrid, ModelSpec, init_params
from evshunt.scenario import load_scenario, scenario_from_dict, scenario_to_dict


def _read_all(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_shunting_counts_every_arrival():
    report = run_shunting(load_scenario("s1"), 20, True)
    assert len(report.runs) == 20
    assert all(r.n0 + r.n1 + r.rejected == 6 for r in report.runs)


def test_modal_pairs_break_ties_by_pair():
    report = ShuntingReport("x", True, [ShuntingRun(0, 4, 2, 0), ShuntingRun(1, 3, 3, 0), ShuntingRun(2, 5, 1, 0),
                                        ShuntingRun(3, 5, 1, 0)])
    assert report.modal_pairs(3) == [(5, 1), (3, 3), (4, 2)]
    assert report.mean_abs_diff == pytest.approx((2 + 0 + 4 + 4) / 4)


def test_runs_csv_round_trip():
    report = run_shunting(load_scenario("s1"), 15, False)
    back = ShuntingReport.from_csv(report.runs_csv(), "s1", False)
    assert back == report


def test_from_csv_rejects_other_files():
    with pytest.raises(ValueError):
        ShuntingReport.from_csv("a,b\n1,2\n")


def test_checkpoint_round_trip():
    spec = ModelSpec("qmix", 3, 4, 5, (0, 1, 1), hidden=6, mixer_embed=3, hyper_hidden=4)
    params = init_params(spec, np.random.default_rng(0))
    grid = ActionGrid.uniform(5)
    params2, spec2, grid2 = load_checkpoint(checkpoint_json(params, spec, grid))
    assert spec2 == spec and grid2 == grid
    assert params2.keys() == params.keys()
    assert all(np.array_equal(params[k], params2[k]) for k in params)


def test_checkpoint_rejects_unknown_format():
    with pytest.raises(ValueError):
        load_checkpoint(json.dumps({"format": "other", "version": 1}))


def test_shunt_cli_is_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert main(["shunt", "--scenario", "s1", "--runs", "50", "--pricing", "off", "--out", str(tmp_path / d)]) == 0
    a, b = _read_all(tmp_path / "a"), _read_all(tmp_path / "b")
    assert a == b
    assert set(a) == {"shunting_runs.csv", "shunting_histogram.csv", "shunting_summary.json"}
    assert "mean|n0-n1|" in capsys.readouterr().out


def test_train_cli_writes_outputs_and_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["train", "--scenario", "s1", "--algo", "vdn", "--episodes", "3", "--seed", "4",
                     "--out", str(tmp_path / d)]) == EXIT_OK
    a, b = _read_all(tmp_path / "a"), _read_all(tmp_path / "b")
    assert a == b
    assert set(a) == {"rewards.csv", "convergence.json", "checkpoint.json", "trace.csv", "ledger.csv",
                      "scenario.json"}
    summary = json.loads(a["convergence.json"])
    assert summary["episodes"] == 3 and summary["seed"] == 4 and summary["pricing"] == "on"
    assert a["rewards.csv"].decode().count("\n") == 4
    params, spec, _ = load_checkpoint(a["checkpoint.json"].decode())
    assert spec.algorithm == "vdn" and spec.n_agents == 12


def test_default_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("EVSHUNT_OUT", str(tmp_path))
    assert main(["shunt", "--scenario", "s1", "--runs", "3"]) == EXIT_OK
    assert (tmp_path / "shunt" / "shunting_summary.json").exists()


def test_validate_ok(capsys):
    assert main(["validate", "--config", "s2"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok: s2 (12 EVs, 10+14 piles)"


def test_validate_lists_every_problem(tmp_path, capsys):
    data = scenario_to_dict(load_scenario("s1"))
    data["stations"][0]["tariff"] = data["stations"][0]["tariff"][:-1]  # drop the 20-06 band
    data["pricing"]["beta"] = 2.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines == [
        "$.stations[0].tariff: hours 0-6 not covered by any tariff band",
        "$.stations[0].tariff: hours 20-23 not covered by any tariff band",
        "$.pricing.beta: reduction 2.0 must be below the lowest station 1 price 0.4946",
    ]


def test_bad_scenario_exit_code(tmp_path, capsys):
    assert main(["shunt", "--scenario", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["train", "--scenario", "s1", "--episodes", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_divergence_exit_code(tmp_path, capsys):
    data = scenario_to_dict(load_scenario("s1"))
    data["training"].update(episodes=2, hidden=8, lr=1e300, grad_clip=None, reward_scale=1e300)
    path = tmp_path / "wild.json"
    path.write_text(json.dumps(data))
    with np.errstate(all="ignore"):
        assert main(["train", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_DIVERGED
    assert "diverged" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["shunt", "--scenario", "s1", "--pricing", "maybe"])
    assert exc.value.code == 2


def test_zero_weights_on_mirrored_stations_give_swap_symmetric_pairs():
    data = scenario_to_dict(load_scenario("s1"))
    data["stations"][1] = dict(data["stations"][0])
    data["preference"].update(w0=0.0, w1=0.0, w2=0.0, rule="ratio")
    report = run_shunting(scenario_from_dict(data), 1000, True)
    diff = np.array([r.n0 - r.n1 for r in report.runs])
    # station labels are exchangeable, so the signed difference is centred on zero
    assert abs(diff.mean()) < 3 * diff.std() / np.sqrt(len(diff))
    hist = report.histogram
    for (a, b), count in hist.items():
        mirrored = hist.get((b, a), 0)
        assert abs(count - mirrored) < 4 * np.sqrt(count + mirrored) + 1

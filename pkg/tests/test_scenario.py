import copy
import json

import pytest

from evshunt.scenario import (
    ScenarioErrors,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate_config,
)
from evshunt.simcore import PileKind


def _preset_dict(name="s2"):
    return scenario_to_dict(load_scenario(name))


@pytest.mark.parametrize("name, evs, cs0, cs1", [
    ("s1", 6, (3, 2), (4, 3)),
    ("s2", 12, (6, 4), (8, 6)),
    ("s3", 25, (14, 6), (20, 10)),
])
def test_presets(name, evs, cs0, cs1):
    sc = load_scenario(name)
    assert sc.ev_count == evs
    assert (sc.stations[0].fc_count, sc.stations[0].nc_count) == cs0
    assert (sc.stations[1].fc_count, sc.stations[1].nc_count) == cs1
    assert sc.seed == 50
    assert sc.stations[0].tariff.price(8) == 1.0044 and sc.stations[1].tariff.price(8) == 1.2044


def test_preset_station_caps_are_eighty_percent_of_rated_power():
    sc = load_scenario("s1")
    assert sc.stations[0].p_max_station == pytest.approx(0.8 * (3 * 30 + 2 * 6))
    assert sc.stations[1].p_max_station == pytest.approx(0.8 * (4 * 30 + 3 * 6))


def test_round_trip():
    sc = load_scenario("s3")
    assert scenario_from_dict(json.loads(json.dumps(scenario_to_dict(sc)))) == sc


def test_uncovered_hour_is_reported_with_path():
    data = _preset_dict()
    data["stations"][0]["tariff"] = [b for b in data["stations"][0]["tariff"] if b["start"] != 11]
    with pytest.raises(ScenarioErrors) as exc:
        scenario_from_dict(data)
    assert exc.value.errors == ["$.stations[0].tariff: hours 11-13 not covered by any tariff band"]


def test_reduction_not_below_lowest_tariff():
    data = _preset_dict()
    data["pricing"]["alpha"] = 0.5
    with pytest.raises(ScenarioErrors, match=r"\$\.pricing\.alpha"):
        scenario_from_dict(data)


def test_all_problems_reported_at_once():
    data = _preset_dict()
    data["stations"][1]["tariff"][0]["end"] = 11          # overlaps the next band
    data["distributions"]["soc_arrive"]["std"] = 0.0
    data["preference"]["v_norm"] = 0.0
    data["training"]["gamma"] = 1.0
    with pytest.raises(ScenarioErrors) as exc:
        scenario_from_dict(data)
    joined = "\n".join(exc.value.errors)
    for fragment in ("$.stations[1].tariff", "soc_arrive.std", "v_norm", "gamma"):
        assert fragment in joined
    assert len(exc.value.errors) == 4


def test_schema_errors_name_the_field():
    data = _preset_dict()
    del data["ev_count"]
    data["stations"] = data["stations"][:1]
    errors = validate_config_dict(data)
    assert any("ev_count" in e for e in errors)
    assert any(e.startswith("$.stations") for e in errors)


def validate_config_dict(data):
    try:
        scenario_from_dict(data)
    except ScenarioErrors as exc:
        return exc.errors
    return []


def test_validate_config_file(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(_preset_dict("s1")))
    assert validate_config(good).ev_count == 6
    bad = tmp_path / "bad.json"
    data = _preset_dict("s1")
    data["ev_count"] = 0
    bad.write_text(json.dumps(data))
    assert validate_config(bad) != [] and isinstance(validate_config(bad), list)
    assert "cannot read" in validate_config(tmp_path / "missing.json")[0]


def test_custom_piles_change_default_cap():
    data = copy.deepcopy(_preset_dict("s1"))
    for st in data["stations"]:
        del st["p_max_station"]
    data["piles"]["FC"]["p_max"] = 50.0
    data["piles"]["FC"]["p_min"] = -50.0
    sc = scenario_from_dict(data)
    assert sc.piles[PileKind.FC].p_max == 50.0
    assert sc.stations[0].p_max_station == pytest.approx(0.8 * (3 * 50 + 2 * 6))


def test_with_training_overrides_one_field():
    sc = load_scenario("s1").with_training(episodes=7)
    assert sc.training.episodes == 7 and sc.training.gamma == 0.99

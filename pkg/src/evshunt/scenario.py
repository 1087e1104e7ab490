"""Scenario files: loading, up-front validation with field paths, and presets.

A scenario is a JSON object. Only ``name``, ``ev_count`` and ``stations`` are
required; everything else falls back to the defaults below. The full layout is
documented in ``docs/scenario.md`` and mirrored by :data:`SCENARIO_SCHEMA`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .env import WorldConfig
from .marl.train import TrainConfig
from .preference import CHOICE_RULES, PreferenceWeights
from .pricing import PriceAdjustment
from .simcore import (
    COMMUTE_DISTRIBUTIONS,
    DEFAULT_PILES,
    POPULATION_FIELDS,
    ConfigError,
    NormalSpec,
    PileKind,
    PileSpec,
    SocPolicy,
    StationConfig,
    TariffBand,
    TariffSchedule,
    default_station_cap,
    tariff_errors,
)

PRESETS = ("s1", "s2", "s3")

_number = {"type": "number"}
_band = {
    "type": "object",
    "required": ["start", "end", "price"],
    "properties": {"start": {"type": "integer"}, "end": {"type": "integer"}, "price": _number},
    "additionalProperties": False,
}
_station = {
    "type": "object",
    "required": ["fc_count", "nc_count", "tariff"],
    "properties": {
        "fc_count": {"type": "integer", "minimum": 0},
        "nc_count": {"type": "integer", "minimum": 0},
        "tariff": {"type": "array", "items": _band, "minItems": 1},
        "p_max_station": {"type": ["number", "null"]},
    },
    "additionalProperties": False,
}
_normal = {
    "type": "object",
    "required": ["mean", "std", "low", "high"],
    "properties": {"mean": _number, "std": _number, "low": _number, "high": _number, "strict": {"type": "boolean"}},
    "additionalProperties": False,
}
_pile = {
    "type": "object",
    "required": ["p_max", "p_min", "battery_capacity"],
    "properties": {"p_max": _number, "p_min": _number, "battery_capacity": _number},
    "additionalProperties": False,
}


def _obj(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["name", "ev_count", "stations"],
    "properties": {
        "name": {"type": "string"},
        "ev_count": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "stations": {"type": "array", "items": _station, "minItems": 2, "maxItems": 2},
        "piles": _obj({"NC": _pile, "FC": _pile}),
        "distributions": _obj({name: _normal for name in POPULATION_FIELDS}),
        "soc_policy": _obj({k: _number for k in ("soc_need", "soc_min", "soc_max", "soc_th")}),
        "preference": _obj({"w0": _number, "w1": _number, "w2": _number, "t_c": _number, "v_norm": _number,
                            "rule": {"enum": list(CHOICE_RULES)}}),
        "pricing": _obj({"alpha": _number, "beta": _number}),
        "env": _obj({"scale_a": _number, "cap_fraction": _number}),
        "training": _obj({f.name: {} for f in fields(TrainConfig)}),
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    ev_count: int
    stations: tuple[StationConfig, StationConfig]
    piles: dict = field(default_factory=lambda: dict(DEFAULT_PILES))
    distributions: dict = field(default_factory=lambda: dict(COMMUTE_DISTRIBUTIONS))
    soc_policy: SocPolicy = SocPolicy()
    weights: PreferenceWeights = PreferenceWeights()
    choice_rule: str = "ratio"
    v_norm: float = 1.0
    adjustment: PriceAdjustment = PriceAdjustment()
    scale_a: float = 10.0
    training: TrainConfig = TrainConfig()
    seed: int = 50

    def world(self, pricing_enabled: bool = True) -> WorldConfig:
        return WorldConfig(
            stations=self.stations, ev_count=self.ev_count, piles=self.piles, soc_policy=self.soc_policy,
            weights=self.weights, choice_rule=self.choice_rule, adjustment=self.adjustment,
            pricing_enabled=pricing_enabled, scale_a=self.scale_a, v_norm=self.v_norm,
            distributions=self.distributions,
        )

    def with_training(self, **changes) -> "Scenario":
        return replace(self, training=replace(self.training, **changes))


class ScenarioErrors(ConfigError):
    def __init__(self, errors: list[str]) -> None:
        super().__init__("\n".join(errors))
        self.errors = errors


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _collect(errors: list[str], path: str, build):
    """Run a constructor, turning a ConfigError into a recorded error."""
    try:
        return build()
    except (ConfigError, TypeError, ValueError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def scenario_from_dict(data: dict) -> Scenario:
    """Build a :class:`Scenario`, reporting every violated invariant at once.

    Raises:
        ScenarioErrors: listing each problem with its field path.
    """
    validator = jsonschema.Draft7Validator(SCENARIO_SCHEMA)
    errors = [f"{_path(e.absolute_path)}: {e.message}"
              for e in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))]
    if errors:
        raise ScenarioErrors(errors)

    piles = dict(DEFAULT_PILES)
    for kind_name, spec in data.get("piles", {}).items():
        kind = PileKind(kind_name)
        built = _collect(errors, f"$.piles.{kind_name}", lambda: PileSpec(kind, **spec))
        if built is not None:
            piles[kind] = built

    env_cfg = data.get("env", {})
    cap_fraction = env_cfg.get("cap_fraction", 0.8)
    if not cap_fraction > 0:
        errors.append("$.env.cap_fraction: must be positive")

    stations: list[StationConfig | None] = []
    for z, st in enumerate(data["stations"]):
        bands = [TariffBand(b["start"], b["end"], b["price"]) for b in st["tariff"]]
        errors.extend(f"$.stations[{z}].tariff: {msg}" for msg in tariff_errors(bands))
        tariff = None if tariff_errors(bands) else TariffSchedule(tuple(bands))
        cap = st.get("p_max_station")
        if cap is None:
            cap = default_station_cap(st["fc_count"], st["nc_count"], piles, cap_fraction)
        stations.append(None if tariff is None else _collect(errors, f"$.stations[{z}]", lambda: StationConfig(
            z, st["nc_count"], st["fc_count"], tariff, cap)))

    dists = dict(COMMUTE_DISTRIBUTIONS)
    for name, spec in data.get("distributions", {}).items():
        d = NormalSpec(**spec)
        if not d.std > 0:
            errors.append(f"$.distributions.{name}.std: standard deviation must be positive, got {d.std}")
        if not d.low < d.high:
            errors.append(f"$.distributions.{name}: low must be below high")
        dists[name] = d

    soc = _collect(errors, "$.soc_policy", lambda: SocPolicy(**data.get("soc_policy", {})))
    pref = dict(data.get("preference", {}))
    rule = pref.pop("rule", "ratio")
    v_norm = pref.pop("v_norm", 1.0)
    if not v_norm > 0:
        errors.append("$.preference.v_norm: normalized velocity must be positive")
    weights = _collect(errors, "$.preference", lambda: PreferenceWeights(**pref))
    adjustment = _collect(errors, "$.pricing", lambda: PriceAdjustment(**data.get("pricing", {})))
    if adjustment is not None:
        for z, (st, name) in enumerate(zip(stations, ("alpha", "beta"))):
            if st is not None and not adjustment.for_station(z) < st.tariff.min_price:
                errors.append(f"$.pricing.{name}: reduction {adjustment.for_station(z)} must be below the "
                              f"lowest station {z} price {st.tariff.min_price}")
    training = _collect(errors, "$.training", lambda: TrainConfig(**data.get("training", {})))
    if training is not None:
        errors.extend(_training_errors(training))

    if errors:
        raise ScenarioErrors(errors)
    return Scenario(
        name=data["name"], ev_count=data["ev_count"], stations=(stations[0], stations[1]), piles=piles,
        distributions=dists, soc_policy=soc, weights=weights, choice_rule=rule, v_norm=v_norm,
        adjustment=adjustment, scale_a=env_cfg.get("scale_a", 10.0), training=training,
        seed=data.get("seed", 50),
    )


def _training_errors(cfg: TrainConfig) -> list[str]:
    checks = [
        (cfg.episodes > 0, "episodes must be positive"),
        (0.0 <= cfg.gamma < 1.0, "gamma must lie in [0, 1)"),
        (cfg.lr > 0, "lr must be positive"),
        (cfg.batch_size > 0, "batch_size must be positive"),
        (cfg.buffer_size >= cfg.batch_size, "buffer_size must be at least batch_size"),
        (cfg.target_sync > 0, "target_sync must be positive"),
        (0.0 <= cfg.eps_end <= cfg.eps_start <= 1.0, "need 0 <= eps_end <= eps_start <= 1"),
        (cfg.levels >= 2, "levels must be at least 2"),
        (cfg.hidden > 0 and cfg.mixer_embed > 0 and cfg.hyper_hidden > 0, "layer widths must be positive"),
        (cfg.reward_scale > 0, "reward_scale must be positive"),
    ]
    return [f"$.training: {msg}" for ok, msg in checks if not ok]


def load_scenario(source: str | Path) -> Scenario:
    """Load a preset by name (``s1``/``s2``/``s3``) or a scenario JSON file."""
    if str(source) in PRESETS:
        text = resources.files("evshunt.presets").joinpath(f"{source}.json").read_text()
        return scenario_from_dict(json.loads(text))
    path = Path(source)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioErrors([f"{path}: cannot read file ({exc.strerror})"]) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioErrors([f"{path}: invalid JSON ({exc})"]) from exc
    return scenario_from_dict(data)


def validate_config(path: str | Path) -> Scenario | list[str]:
    """Return the scenario, or the complete list of problems found in it."""
    try:
        return load_scenario(path)
    except ScenarioErrors as exc:
        return exc.errors


def scenario_to_dict(sc: Scenario) -> dict:
    """Inverse of :func:`scenario_from_dict` (explicit values for every field)."""
    return {
        "name": sc.name,
        "ev_count": sc.ev_count,
        "seed": sc.seed,
        "stations": [
            {"fc_count": st.fc_count, "nc_count": st.nc_count, "p_max_station": st.p_max_station,
             "tariff": [{"start": b.start, "end": b.end, "price": b.price} for b in st.tariff.bands]}
            for st in sc.stations
        ],
        "piles": {k.value: {"p_max": p.p_max, "p_min": p.p_min, "battery_capacity": p.battery_capacity}
                  for k, p in sc.piles.items()},
        "distributions": {k: asdict(v) for k, v in sc.distributions.items()},
        "soc_policy": asdict(sc.soc_policy),
        "preference": {**asdict(sc.weights), "v_norm": sc.v_norm, "rule": sc.choice_rule},
        "pricing": asdict(sc.adjustment),
        "env": {"scale_a": sc.scale_a},
        "training": asdict(sc.training),
    }

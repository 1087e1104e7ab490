"""Physical world of the dual-station model: tariffs, piles, stations, EVs.

Time is discretised in whole hours (``dt = 1``) over a single day, hours 0-23.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

HOURS_PER_DAY = 24


class ConfigError(ValueError):
    """Raised when a configuration value violates a model invariant."""


class PileKind(str, Enum):
    NC = "NC"
    FC = "FC"


@dataclass(frozen=True)
class TariffBand:
    """Inclusive hour band ``start..end``; wraps past midnight when start > end."""

    start: int
    end: int
    price: float

    def hours(self) -> list[int]:
        if self.start <= self.end:
            return list(range(self.start, self.end + 1))
        return list(range(self.start, HOURS_PER_DAY)) + list(range(0, self.end + 1))


@dataclass(frozen=True)
class TariffSchedule:
    bands: tuple[TariffBand, ...]
    _table: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        errors = tariff_errors(self.bands)
        if errors:
            raise ConfigError("; ".join(errors))
        table = [0.0] * HOURS_PER_DAY
        for band in self.bands:
            for h in band.hours():
                table[h] = band.price
        object.__setattr__(self, "_table", tuple(table))

    @classmethod
    def from_pairs(cls, entries: Sequence[tuple[tuple[int, int], float]]) -> "TariffSchedule":
        return cls(tuple(TariffBand(lo, hi, price) for (lo, hi), price in entries))

    def price(self, hour: int) -> float:
        return tariff_price(self, hour)

    @property
    def min_price(self) -> float:
        return min(b.price for b in self.bands)


def tariff_errors(bands: Sequence[TariffBand]) -> list[str]:
    """List every coverage or positivity violation of a set of tariff bands."""
    errors = []
    cover = [0] * HOURS_PER_DAY
    for i, band in enumerate(bands):
        if not (0 <= band.start < HOURS_PER_DAY and 0 <= band.end < HOURS_PER_DAY):
            errors.append(f"band {i}: hours must lie in 0-23, got {band.start}-{band.end}")
            continue
        if not band.price > 0:
            errors.append(f"band {i}: price must be strictly positive, got {band.price}")
        for h in band.hours():
            cover[h] += 1
    for first, last in _runs(h for h, n in enumerate(cover) if n == 0):
        span = f"hour {first}" if first == last else f"hours {first}-{last}"
        errors.append(f"{span} not covered by any tariff band")
    for first, last in _runs(h for h, n in enumerate(cover) if n > 1):
        span = f"hour {first}" if first == last else f"hours {first}-{last}"
        errors.append(f"{span} covered by more than one tariff band")
    return errors


def _runs(hours) -> list[tuple[int, int]]:
    """Group ascending integers into (first, last) runs of consecutive values."""
    runs: list[list[int]] = []
    for h in hours:
        if runs and h == runs[-1][1] + 1:
            runs[-1][1] = h
        else:
            runs.append([h, h])
    return [(a, b) for a, b in runs]


def tariff_price(schedule: TariffSchedule, hour: int) -> float:
    """Base price (CNY/kWh) in force during ``hour``."""
    if not 0 <= hour < HOURS_PER_DAY:
        raise ConfigError(f"hour must be in 0-23, got {hour}")
    return schedule._table[hour]


# Chinese time-of-use tariff for CS 0 and the uplifted CS 1 variant.
CS0_TARIFF = TariffSchedule.from_pairs(
    [((7, 10), 1.0044), ((11, 13), 0.6950), ((14, 17), 1.0044), ((18, 19), 0.6950), ((20, 6), 0.3946)]
)
CS1_TARIFF = TariffSchedule.from_pairs(
    [((7, 10), 1.2044), ((11, 13), 0.7950), ((14, 17), 1.2044), ((18, 19), 0.7950), ((20, 6), 0.4946)]
)


@dataclass(frozen=True)
class PileSpec:
    kind: PileKind
    p_max: float
    p_min: float
    battery_capacity: float

    def __post_init__(self) -> None:
        if not self.p_min <= 0 <= self.p_max:
            raise ConfigError(f"{self.kind.value} pile needs p_min <= 0 <= p_max")
        if not self.battery_capacity > 0:
            raise ConfigError(f"{self.kind.value} battery capacity must be positive")


NC_PILE = PileSpec(PileKind.NC, p_max=6.0, p_min=-6.0, battery_capacity=24.0)
FC_PILE = PileSpec(PileKind.FC, p_max=30.0, p_min=-30.0, battery_capacity=180.0)
DEFAULT_PILES = {PileKind.NC: NC_PILE, PileKind.FC: FC_PILE}


@dataclass(frozen=True)
class StationConfig:
    station_id: int
    nc_count: int
    fc_count: int
    tariff: TariffSchedule
    p_max_station: float

    def __post_init__(self) -> None:
        if self.nc_count < 0 or self.fc_count < 0 or self.nc_count + self.fc_count == 0:
            raise ConfigError(f"station {self.station_id} needs a positive number of piles")
        if not self.p_max_station > 0:
            raise ConfigError(f"station {self.station_id} power cap must be positive")

    @property
    def n_piles(self) -> int:
        return self.nc_count + self.fc_count

    def pile_kinds(self) -> list[PileKind]:
        """Pile kinds in index order: fast chargers first, then normal."""
        return [PileKind.FC] * self.fc_count + [PileKind.NC] * self.nc_count

    def count(self, kind: PileKind) -> int:
        return self.fc_count if kind is PileKind.FC else self.nc_count


def default_station_cap(fc_count: int, nc_count: int, piles: Mapping[PileKind, PileSpec] = DEFAULT_PILES,
                        fraction: float = 0.8) -> float:
    return fraction * (fc_count * piles[PileKind.FC].p_max + nc_count * piles[PileKind.NC].p_max)


@dataclass(frozen=True)
class SocPolicy:
    soc_need: float = 0.8
    soc_min: float = 0.2
    soc_max: float = 0.9
    soc_th: float = 0.5

    def __post_init__(self) -> None:
        if not self.soc_min < self.soc_th < self.soc_need <= self.soc_max:
            raise ConfigError("SOC policy needs soc_min < soc_th < soc_need <= soc_max")


@dataclass(frozen=True)
class EvProfile:
    ev_id: int
    t_arrive: int
    t_depart: int
    soc_arrive: float
    d_norm_0: float
    d_norm_1: float
    v_norm: float
    pile_kind: PileKind

    def d_norm(self, station_id: int) -> float:
        return self.d_norm_0 if station_id == 0 else self.d_norm_1


@dataclass(frozen=True)
class NormalSpec:
    """Normal law truncated by rejection to ``[low, high]`` (open interval if strict)."""

    mean: float
    std: float
    low: float
    high: float
    strict: bool = False

    def inside(self, x: np.ndarray) -> np.ndarray:
        if self.strict:
            return (x > self.low) & (x < self.high)
        return (x >= self.low) & (x <= self.high)


COMMUTE_DISTRIBUTIONS: dict[str, NormalSpec] = {
    "t_arrive": NormalSpec(9.0, 1.0, 7.0, 11.0),
    "t_depart": NormalSpec(19.0, 1.0, 17.0, 21.0),
    "soc_arrive": NormalSpec(0.4, 0.1, 0.2, 0.6),
    "d_norm_0": NormalSpec(0.5, 0.3, 0.0, 1.0, strict=True),
}
POPULATION_FIELDS = ("t_arrive", "t_depart", "soc_arrive", "d_norm_0")


def _draw_truncated(rng: np.random.Generator, spec: NormalSpec, n: int) -> np.ndarray:
    x = rng.normal(spec.mean, spec.std, size=n)
    bad = ~spec.inside(x)
    while bad.any():
        x[bad] = rng.normal(spec.mean, spec.std, size=int(bad.sum()))
        bad = ~spec.inside(x)
    return x


def sample_population(count: int, distributions: Mapping[str, NormalSpec] = COMMUTE_DISTRIBUTIONS,
                      rng_seed: int | np.random.SeedSequence = 50, nc_share: float = 0.5,
                      v_norm: float = 1.0) -> list[EvProfile]:
    """Draw ``count`` commuting EVs.

    Each field is drawn from its normal law and redrawn until it falls inside its
    boundary; times are then rounded to whole hours. Pile kinds are assigned in
    exact proportion ``nc_share`` (rounded) and shuffled with the same generator.

    Raises:
        ConfigError: on a non-positive count or standard deviation, or empty bounds.
    """
    if count <= 0:
        raise ConfigError(f"population size must be positive, got {count}")
    for name in POPULATION_FIELDS:
        spec = distributions[name]
        if not spec.std > 0:
            raise ConfigError(f"{name}: standard deviation must be positive, got {spec.std}")
        if not spec.low < spec.high:
            raise ConfigError(f"{name}: low must be below high")
    if not 0.0 <= nc_share <= 1.0:
        raise ConfigError(f"nc_share must lie in [0, 1], got {nc_share}")

    rng = np.random.default_rng(rng_seed)
    cols = {name: _draw_truncated(rng, distributions[name], count) for name in POPULATION_FIELDS}
    t_a = np.rint(cols["t_arrive"]).astype(int)
    t_d = np.rint(cols["t_depart"]).astype(int)
    n_nc = int(round(count * nc_share))
    kinds = np.array([PileKind.NC] * n_nc + [PileKind.FC] * (count - n_nc), dtype=object)
    rng.shuffle(kinds)

    return [
        EvProfile(
            ev_id=i,
            t_arrive=int(t_a[i]),
            t_depart=int(t_d[i]),
            soc_arrive=float(cols["soc_arrive"][i]),
            d_norm_0=float(cols["d_norm_0"][i]),
            d_norm_1=1.0 - float(cols["d_norm_0"][i]),
            v_norm=v_norm,
            pile_kind=kinds[i],
        )
        for i in range(count)
    ]


def step_soc(soc: float, power: float, dt: float, capacity: float, policy: SocPolicy) -> tuple[float, float]:
    """Integrate one step of charging, clipping power so SOC stays in bounds.

    Returns:
        ``(new_soc, applied_power)``.
    """
    upper = (policy.soc_max - soc) * capacity / dt
    lower = (policy.soc_min - soc) * capacity / dt
    applied = min(max(power, min(lower, 0.0)), max(upper, 0.0))
    new_soc = soc + applied * dt / capacity
    return min(max(new_soc, policy.soc_min), policy.soc_max), applied

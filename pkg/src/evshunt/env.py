"""Dual-station charging MDP: per-pile agents, capacity punishment, one day per episode."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .preference import ChoiceRule, PreferenceWeights, choose_station
from .pricing import PriceAdjustment, PriceLedger, competitive_price, reclaim_step, record_attraction
from .simcore import (
    COMMUTE_DISTRIBUTIONS,
    DEFAULT_PILES,
    HOURS_PER_DAY,
    EvProfile,
    NormalSpec,
    PileKind,
    PileSpec,
    SocPolicy,
    StationConfig,
    sample_population,
    step_soc,
)

PILE_FIELDS = ("soc", "p_max", "p_min", "t_stay", "occupied")
STATION_FIELDS = ("t_cur", "price", "emergency_total")
OBS_DIM = len(PILE_FIELDS) + len(STATION_FIELDS) + 3


@dataclass(frozen=True)
class PileState:
    soc: float
    p_max: float
    p_min: float
    t_stay: float
    occupied: bool


@dataclass(frozen=True)
class StationState:
    t_cur: int
    price: float
    emergency_total: float


@dataclass(frozen=True)
class RewardBreakdown:
    station_cost: tuple[float, ...]
    punishment: tuple[float, ...]
    total: float
    scale_a: float
    power_totals: tuple[float, ...] = ()


def action_to_power(a: float, p_max: float, p_min: float) -> float:
    if not -1.0 <= a <= 1.0:
        raise ValueError(f"action must lie in [-1, 1], got {a}")
    return (a + 1.0) / 2.0 * (p_max - p_min) + p_min


def emergency(soc: float, soc_need: float, capacity: float, t_stay: float) -> float:
    """Average power (kW) still needed to reach ``soc_need`` before departure."""
    if soc >= soc_need:
        return 0.0
    # an overdue EV must get the whole remainder within the current step
    return (soc_need - soc) * capacity / (t_stay if t_stay > 0 else 1.0)


def station_power_total(applied_powers: Sequence[float]) -> float:
    return math.fsum(applied_powers)


def step_reward(powers: Sequence[Sequence[float]], prices: Sequence[Sequence[float]],
                p_max_stations: Sequence[float], scale_a: float, dt: float) -> RewardBreakdown:
    """Reward of one step: negated charging cost plus scaled capacity punishment.

    Args:
        powers: per station, the applied power of every attached EV.
        prices: per station, the effective price each of those EVs pays.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    costs, punish, totals = [], [], []
    for p_z, c_z, cap in zip(powers, prices, p_max_stations):
        total = station_power_total(p_z)
        costs.append(math.fsum(p * c * dt for p, c in zip(p_z, c_z)))
        punish.append(cap - total if total > cap else 0.0)
        totals.append(total)
    reward = math.fsum(-c for c in costs) + scale_a * math.fsum(punish)
    return RewardBreakdown(tuple(costs), tuple(punish), reward, scale_a, tuple(totals))


@dataclass(frozen=True)
class JointState:
    """Per-agent raw state rows plus per-station state; agents ordered by (station, pile)."""

    t_cur: int
    pile: np.ndarray          # (n_agents, 5) in PILE_FIELDS order
    station: np.ndarray       # (2, 3) in STATION_FIELDS order
    agent_station: np.ndarray
    agent_index: np.ndarray
    agent_kind: np.ndarray    # 1 for FC, 0 for NC
    station_caps: np.ndarray

    @property
    def n_agents(self) -> int:
        return len(self.pile)

    @property
    def mask(self) -> np.ndarray:
        return self.pile[:, 4] > 0

    def pile_state(self, i: int) -> PileState:
        soc, p_max, p_min, t_stay, occ = self.pile[i]
        return PileState(float(soc), float(p_max), float(p_min), float(t_stay), bool(occ))

    def station_state(self, z: int) -> StationState:
        t, price, eme = self.station[z]
        return StationState(int(t), float(price), float(eme))

    def tuples(self) -> np.ndarray:
        """Raw (pile ++ station) tuple per agent; unoccupied piles are zeroed."""
        rows = np.concatenate([self.pile, self.station[self.agent_station]], axis=1)
        return rows * self.mask[:, None]

    def observations(self, p_ref: float = 30.0) -> np.ndarray:
        """Scaled network inputs: the masked tuple followed by pile identity features."""
        t = self.tuples()
        caps = self.station_caps[self.agent_station]
        scaled = np.stack([
            t[:, 0], t[:, 1] / p_ref, t[:, 2] / p_ref, t[:, 3] / HOURS_PER_DAY, t[:, 4],
            t[:, 5] / HOURS_PER_DAY, t[:, 6], t[:, 7] / caps,
        ], axis=1)
        n_per_station = np.bincount(self.agent_station, minlength=2)[self.agent_station]
        ident = np.stack([self.agent_station.astype(float), self.agent_index / n_per_station,
                          self.agent_kind.astype(float)], axis=1)
        return np.concatenate([scaled, ident], axis=1)


@dataclass(frozen=True)
class WorldConfig:
    """Everything an environment needs to simulate one day."""

    stations: tuple[StationConfig, StationConfig]
    ev_count: int
    piles: Mapping[PileKind, PileSpec] = field(default_factory=lambda: dict(DEFAULT_PILES))
    soc_policy: SocPolicy = SocPolicy()
    weights: PreferenceWeights = PreferenceWeights()
    choice_rule: ChoiceRule = "ratio"
    adjustment: PriceAdjustment = PriceAdjustment()
    pricing_enabled: bool = True
    scale_a: float = 10.0
    dt: float = 1.0
    v_norm: float = 1.0
    distributions: Mapping[str, NormalSpec] = field(default_factory=lambda: dict(COMMUTE_DISTRIBUTIONS))

    @property
    def nc_share(self) -> float:
        nc = sum(s.nc_count for s in self.stations)
        return nc / sum(s.n_piles for s in self.stations)


@dataclass
class BillingRecord:
    hour: int
    station_id: int
    ev_id: int
    applied_power: float
    price: float


class ChargingEnv:
    """Hourly simulation of both stations; one episode is one day."""

    def __init__(self, world: WorldConfig, horizon: int = HOURS_PER_DAY) -> None:
        self.world = world
        self.horizon = horizon
        kinds, stations, index = [], [], []
        for st in world.stations:
            for i, kind in enumerate(st.pile_kinds()):
                kinds.append(kind)
                stations.append(st.station_id)
                index.append(i)
        self.pile_kinds = kinds
        self.agent_station = np.array(stations, dtype=int)
        self.agent_index = np.array(index, dtype=float)
        self.agent_kind = np.array([k is PileKind.FC for k in kinds], dtype=int)
        self.station_caps = np.array([st.p_max_station for st in world.stations], dtype=float)
        self.n_agents = len(kinds)
        self.population: list[EvProfile] = []

    # -- episode lifecycle -------------------------------------------------

    def reset(self, population_seed, choice_seed=None, population: list[EvProfile] | None = None) -> JointState:
        w = self.world
        if population is None:
            population = sample_population(w.ev_count, w.distributions, population_seed,
                                           nc_share=w.nc_share, v_norm=w.v_norm)
        self.population = population
        self.rng = np.random.default_rng(choice_seed if choice_seed is not None else population_seed)
        self.t = 0
        self.ledger = PriceLedger()
        self.occupant = [-1] * self.n_agents
        self.soc = np.zeros(self.n_agents)
        self.arrived = [0, 0]
        self.rejected: list[int] = []
        self.assignment: dict[int, int] = {}
        self.billing: list[BillingRecord] = []
        self.trace: list[dict] = []
        self._occupancy_prev = (0, 0)
        self._begin_hour(0)
        return self.state()

    def _free_piles(self) -> list[dict[PileKind, int]]:
        free = [{PileKind.NC: 0, PileKind.FC: 0}, {PileKind.NC: 0, PileKind.FC: 0}]
        for i, ev in enumerate(self.occupant):
            if ev < 0:
                free[self.agent_station[i]][self.pile_kinds[i]] += 1
        return free

    def occupancy(self) -> tuple[int, int]:
        n = [0, 0]
        for i, ev in enumerate(self.occupant):
            if ev >= 0:
                n[self.agent_station[i]] += 1
        return n[0], n[1]

    def _begin_hour(self, t: int) -> None:
        """Post prices for hour ``t``, release departures, seat arrivals, settle prices."""
        w = self.world
        bases = [st.tariff.price(t) for st in w.stations]
        if w.pricing_enabled:
            offer0, offer1, discounted = competitive_price(*self._occupancy_prev, bases[0], bases[1], w.adjustment)
        else:
            offer0, offer1, discounted = bases[0], bases[1], None
        self.posted = (offer0, offer1)
        self.bases = tuple(bases)

        for i, ev_id in enumerate(self.occupant):
            if ev_id >= 0 and self.population[ev_id].t_depart <= t:
                self.occupant[i] = -1

        for ev in self.population:
            if ev.t_arrive != t:
                continue
            z = choose_station(ev, w.stations, self.posted, w.weights, w.soc_policy, self.rng,
                               free_piles=self._free_piles(), rule=w.choice_rule)
            if z is None:
                self.rejected.append(ev.ev_id)
                continue
            pile = next(i for i, occ in enumerate(self.occupant)
                        if occ < 0 and self.agent_station[i] == z and self.pile_kinds[i] is ev.pile_kind)
            self.occupant[pile] = ev.ev_id
            self.soc[pile] = ev.soc_arrive
            self.arrived[z] += 1
            self.assignment[ev.ev_id] = z
            if discounted == z:
                record_attraction(self.ledger, ev.ev_id, z, w.adjustment.for_station(z), t, bases[z])

        self.prices: list[dict[int, float]] = []
        for z in (0, 1):
            present = [ev for i, ev in enumerate(self.occupant) if ev >= 0 and self.agent_station[i] == z]
            if t >= 1:
                prices, _ = reclaim_step(self.ledger, z, bases[z], t, present)
            else:
                prices = {ev: bases[z] for ev in present}
            for ev_id, entry in self.ledger.attracted_at(z, t).items():
                prices[ev_id] = entry.discounted_price
            self.prices.append(prices)
        self._occupancy_prev = self.occupancy()

    def state(self) -> JointState:
        w = self.world
        t = self.t
        pile = np.zeros((self.n_agents, len(PILE_FIELDS)))
        eme_total = [0.0, 0.0]
        for i, ev_id in enumerate(self.occupant):
            if ev_id < 0:
                continue
            ev = self.population[ev_id]
            spec = w.piles[self.pile_kinds[i]]
            t_stay = ev.t_depart - t
            pile[i] = (self.soc[i], spec.p_max, spec.p_min, t_stay, 1.0)
            eme_total[self.agent_station[i]] += emergency(self.soc[i], w.soc_policy.soc_need,
                                                          spec.battery_capacity, t_stay)
        station = np.array([[t, self.posted[z], eme_total[z]] for z in (0, 1)], dtype=float)
        return JointState(t, pile, station, self.agent_station, self.agent_index, self.agent_kind,
                          self.station_caps)

    def step(self, actions: Sequence[float]) -> tuple[JointState, RewardBreakdown, bool]:
        """Apply one action per agent for the current hour and advance the clock.

        Actions of unoccupied piles are ignored.
        """
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(actions)}")
        if self.t >= self.horizon:
            raise RuntimeError("episode is over; call reset()")
        w = self.world
        powers: list[list[float]] = [[], []]
        prices: list[list[float]] = [[], []]
        for i, ev_id in enumerate(self.occupant):
            if ev_id < 0:
                continue
            spec = w.piles[self.pile_kinds[i]]
            requested = action_to_power(float(actions[i]), spec.p_max, spec.p_min)
            self.soc[i], applied = step_soc(self.soc[i], requested, w.dt, spec.battery_capacity, w.soc_policy)
            z = self.agent_station[i]
            price = self.prices[z][ev_id]
            powers[z].append(applied)
            prices[z].append(price)
            self.billing.append(BillingRecord(self.t, int(z), ev_id, applied, price))
        reward = step_reward(powers, prices, self.station_caps, w.scale_a, w.dt)
        occ = self.occupancy()
        self.trace.append({
            "hour": self.t, "occupancy0": occ[0], "occupancy1": occ[1],
            "price0": self.posted[0], "price1": self.posted[1],
            "p_total0": reward.power_totals[0], "p_total1": reward.power_totals[1],
            "cost0": reward.station_cost[0], "cost1": reward.station_cost[1],
            "punish0": reward.punishment[0], "punish1": reward.punishment[1],
            "reward": reward.total,
        })
        self.t += 1
        done = self.t >= self.horizon
        if not done:
            self._begin_hour(self.t)
        return self.state(), reward, done

    def trace_csv(self) -> str:
        return rows_to_csv(self.trace, TRACE_COLUMNS)


TRACE_COLUMNS = ("hour", "occupancy0", "occupancy1", "price0", "price1", "p_total0", "p_total1",
                 "cost0", "cost1", "punish0", "punish1", "reward")


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[Mapping], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()

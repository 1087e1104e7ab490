"""EV-user station preference: attractiveness, utility and selection probability.

Two choice rules are available. ``"ratio"`` samples a station with probability
proportional to its floored utility. ``"max"`` is a utility-maximising user who
takes the station with the larger raw utility and splits exact ties evenly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np

from .simcore import ConfigError, EvProfile, PileKind, SocPolicy, StationConfig

U_FLOOR = 1e-6

ChoiceRule = Literal["ratio", "max", "hybrid"]
CHOICE_RULES = ("ratio", "max", "hybrid")


@dataclass(frozen=True)
class PreferenceWeights:
    w0: float = 0.25
    w1: float = 3.8
    w2: float = 0.7
    t_c: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w0, self.w1, self.w2) < 0:
            raise ConfigError("preference weights must be non-negative")
        if not self.t_c > 0:
            raise ConfigError("average charging time t_c must be positive")


@dataclass(frozen=True)
class AttractionInputs:
    n_piles: int
    price_at_arrival: float
    d_norm: float
    soc_arrive: float
    soc_th: float


def normalize_distance(d0: float, d1: float) -> tuple[float, float]:
    if not (d0 > 0 and d1 > 0):
        raise ValueError(f"distances must be positive, got {d0}, {d1}")
    total = d0 + d1
    return d0 / total, d1 / total


def attractiveness(inputs: AttractionInputs, w: PreferenceWeights) -> float:
    """Linear station score; the distance term is offset by spare SOC above threshold."""
    return (w.w0 * inputs.n_piles
            - w.w1 * inputs.price_at_arrival
            - w.w2 * (inputs.d_norm + inputs.soc_th - inputs.soc_arrive))


def travel_time(d_norm: float, v_norm: float) -> float:
    if not v_norm > 0:
        raise ValueError(f"normalized velocity must be positive, got {v_norm}")
    return d_norm / v_norm


def raw_utility(att: float, t_c: float, t_travel: float) -> float:
    return att / (t_c + t_travel)


def utility(att: float, t_c: float, t_travel: float) -> float:
    """Attractiveness per unit of closeness, floored at ``U_FLOOR``."""
    return max(raw_utility(att, t_c, t_travel), U_FLOOR)


def selection_probability(u0: float, u1: float) -> tuple[float, float]:
    if not (u0 > 0 and u1 > 0):
        raise ValueError(f"utilities must be positive, got {u0}, {u1}")
    pr0 = u0 / (u0 + u1)
    return pr0, 1.0 - pr0


def station_utilities(ev: EvProfile, stations: Sequence[StationConfig], live_prices: Sequence[float],
                      w: PreferenceWeights, policy: SocPolicy) -> tuple[float, float]:
    """Unfloored utilities of both stations for one arriving EV."""
    out = []
    for st, price in zip(stations, live_prices):
        d = ev.d_norm(st.station_id)
        att = attractiveness(AttractionInputs(st.n_piles, price, d, ev.soc_arrive, policy.soc_th), w)
        out.append(raw_utility(att, w.t_c, travel_time(d, ev.v_norm)))
    return out[0], out[1]


def choice_probabilities(u0: float, u1: float, rule: ChoiceRule = "ratio") -> tuple[float, float]:
    """Probability of picking each station given raw (unfloored) utilities.

    ``ratio`` applies the utility ratio to floored utilities, ``max`` always picks
    the higher utility (ties split evenly), and ``hybrid`` uses the ratio when
    both utilities are positive and the higher utility otherwise, where the
    ratio of floored values would degenerate to a coin flip.
    """
    if rule == "hybrid":
        rule = "ratio" if (u0 > 0 and u1 > 0) else "max"
    if rule == "ratio":
        return selection_probability(max(u0, U_FLOOR), max(u1, U_FLOOR))
    if rule == "max":
        if u0 > u1:
            return 1.0, 0.0
        if u0 < u1:
            return 0.0, 1.0
        return 0.5, 0.5
    raise ConfigError(f"unknown choice rule {rule!r}")


def choose_station(ev: EvProfile, stations: Sequence[StationConfig], live_prices: Sequence[float],
                   w: PreferenceWeights, policy: SocPolicy, rng: np.random.Generator,
                   free_piles: Sequence[Mapping[PileKind, int]] | None = None,
                   rule: ChoiceRule = "ratio") -> int | None:
    """Pick the station an arriving EV attaches to.

    The preferred station is sampled from the choice probabilities. If it has no
    free pile of the EV's kind the other station is taken; if neither has one the
    EV is rejected and ``None`` is returned.
    """
    if min(live_prices) <= 0:
        raise ValueError("live prices must be positive")
    pr0, _ = choice_probabilities(*station_utilities(ev, stations, live_prices, w, policy), rule=rule)
    # one draw per arrival keeps the random stream independent of the rule outcome
    pick = 0 if rng.random() < pr0 else 1
    if free_piles is None:
        return pick
    for z in (pick, 1 - pick):
        if free_piles[z].get(ev.pile_kind, 0) > 0:
            return z
    return None

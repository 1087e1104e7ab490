"""Real-time price competition between the two stations and next-step reclaim.

The emptier station posts a discounted price for one step. Every EV that
attaches to it during that step is written to a :class:`PriceLedger`, and on the
following step pays the earlier base price plus the same discount.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable

from .simcore import ConfigError, TariffSchedule


class LedgerError(RuntimeError):
    """Raised on double discounting of the same EV."""


@dataclass(frozen=True)
class PriceAdjustment:
    alpha: float = 0.1
    beta: float = 0.1

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("price reductions must be non-negative")

    def for_station(self, station_id: int) -> float:
        return self.alpha if station_id == 0 else self.beta

    def check_against(self, tariffs: tuple[TariffSchedule, TariffSchedule]) -> list[str]:
        errors = []
        for z, name in ((0, "alpha"), (1, "beta")):
            lowest = tariffs[z].min_price
            if not self.for_station(z) < lowest:
                errors.append(f"{name}={self.for_station(z)} must be below the minimum CS {z} price {lowest}")
        return errors


def competitive_price(n0: int, n1: int, base0: float, base1: float,
                      adj: PriceAdjustment) -> tuple[float, float, int | None]:
    """Offers for the next step given current occupancy.

    Returns:
        ``(offer0, offer1, discounted_station)``; the last is ``None`` when balanced.
    """
    if n0 < 0 or n1 < 0:
        raise ValueError("occupancy counts must be non-negative")
    if n0 < n1:
        if not adj.alpha < base0:
            raise ConfigError(f"alpha={adj.alpha} would make the CS 0 price non-positive")
        return base0 - adj.alpha, base1, 0
    if n0 > n1:
        if not adj.beta < base1:
            raise ConfigError(f"beta={adj.beta} would make the CS 1 price non-positive")
        return base0, base1 - adj.beta, 1
    return base0, base1, None


@dataclass(frozen=True)
class LedgerEntry:
    ev_id: int
    station_id: int
    discount: float
    step_applied: int
    base_price: float
    reclaim_step: int | None = None
    surcharge: float | None = None

    @property
    def reclaimed(self) -> bool:
        return self.reclaim_step is not None

    @property
    def discounted_price(self) -> float:
        return self.base_price - self.discount

    @property
    def reclaim_price(self) -> float:
        return self.base_price + self.discount


@dataclass
class PriceLedger:
    entries: list[LedgerEntry]

    def __init__(self, entries: Iterable[LedgerEntry] = ()) -> None:
        self.entries = list(entries)

    def open_entries(self) -> list[LedgerEntry]:
        return [e for e in self.entries if not e.reclaimed]

    def closed_entries(self) -> list[LedgerEntry]:
        return [e for e in self.entries if e.reclaimed]

    def attracted_at(self, station_id: int, step: int) -> dict[int, LedgerEntry]:
        return {e.ev_id: e for e in self.entries if e.station_id == station_id and e.step_applied == step}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["ev_id", "station", "step", "discount", "reclaim_step"])
        for e in self.entries:
            writer.writerow([e.ev_id, e.station_id, e.step_applied, repr(e.discount),
                             "" if e.reclaim_step is None else e.reclaim_step])
        return buf.getvalue()


def record_attraction(ledger: PriceLedger, ev_id: int, station_id: int, discount: float, step: int,
                      base_price: float) -> PriceLedger:
    """Append an open discount entry for an EV attracted at ``step``."""
    if not discount > 0:
        raise ValueError(f"discount must be positive, got {discount}")
    if any(e.ev_id == ev_id for e in ledger.open_entries()):
        raise LedgerError(f"EV {ev_id} already carries an open discount")
    ledger.entries.append(LedgerEntry(ev_id, station_id, discount, step, base_price))
    return ledger


def reclaim_step(ledger: PriceLedger, station_id: int, base_price_now: float, step: int,
                 present: Iterable[int] = ()) -> tuple[dict[int, float], PriceLedger]:
    """Surcharge the EVs discounted at ``step - 1`` and close their entries.

    Returns:
        Effective price per EV id: reclaimed EVs pay the discount-step base plus
        the discount, every other EV in ``present`` pays ``base_price_now``.
    """
    if step < 1:
        raise ValueError("reclaim needs step >= 1")
    prices = {ev: base_price_now for ev in present}
    for i, e in enumerate(ledger.entries):
        if e.station_id == station_id and not e.reclaimed and e.step_applied == step - 1:
            prices[e.ev_id] = e.reclaim_price
            ledger.entries[i] = replace(e, reclaim_step=step, surcharge=e.discount)
    return prices, ledger

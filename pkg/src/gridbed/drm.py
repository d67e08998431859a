"""Centralised demand-response controller.

Peak shaving picks the least-inconvenient set of flexible loads that covers
the excess over the threshold, and restores them one per control tick once
demand has fallen back below ``threshold - hysteresis``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .premises import Unit
from .simcore import MS_PER_DAY, MS_PER_MIN, MS_PER_S

EXACT_LIMIT = 15
_REL_EPS = 1e-9


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _REL_EPS * max(1.0, abs(a), abs(b))


class ReserveClass(str, Enum):
    PRIMARY = "Primary"
    SECONDARY = "Secondary"
    TERTIARY = "Tertiary"
    UNSUITABLE = "Unsuitable"


PRIMARY_LIMIT_MS = 30 * MS_PER_S
SECONDARY_LIMIT_MS = 15 * MS_PER_MIN


class Action(str, Enum):
    SWITCH_OFF = "SwitchOff"
    SWITCH_ON = "SwitchOn"


@dataclass
class DrmPolicy:
    threshold_kw: float
    control_period_s: int = 60
    restore_hysteresis_kw: Optional[float] = None
    tick_offset_ms: int = 1000
    command_timeout_s: int = 900

    def __post_init__(self):
        if self.threshold_kw <= 0:
            raise ValueError("threshold_kw must be > 0")
        if self.control_period_s <= 0:
            raise ValueError("control_period_s must be > 0")
        if self.restore_hysteresis_kw is None:
            self.restore_hysteresis_kw = 0.05 * self.threshold_kw
        if not 0 <= self.restore_hysteresis_kw < self.threshold_kw:
            raise ValueError("restore_hysteresis_kw must be in [0, threshold_kw)")


@dataclass
class ControlCommand:
    appliance_id: str
    action: Action
    issued_at: int
    applied_at: Optional[int] = None


@dataclass(frozen=True)
class PriceSignal:
    effective_at: int
    price_sgd_per_kwh: float

    def __post_init__(self):
        if self.price_sgd_per_kwh <= 0:
            raise ValueError("price must be > 0")


@dataclass
class ShedSelection:
    appliances: Tuple[str, ...]
    shed_kw: float
    total_inconvenience: float
    insufficient: bool = False


Candidate = Tuple[str, float, float]  # (id, power_kw, inconvenience weight)


def _better(a: Tuple[float, float, Tuple[str, ...]], b: Optional[Tuple[float, float, Tuple[str, ...]]]) -> bool:
    """Order: inconvenience, then shed power, then lexicographic id tuple."""
    if b is None:
        return True
    if not _close(a[0], b[0]):
        return a[0] < b[0]
    if not _close(a[1], b[1]):
        return a[1] < b[1]
    return a[2] < b[2]


def select_shed_set(flexible_on: Sequence[Candidate], required_kw: float) -> ShedSelection:
    """Minimum-inconvenience subset whose power covers ``required_kw``.

    Exact branch-and-bound up to ``EXACT_LIMIT`` candidates, greedy by
    weight per kW with local repair beyond that.
    """
    if required_kw <= 0:
        raise ValueError("required_kw must be > 0")
    cands = sorted(flexible_on, key=lambda c: c[0])
    available = math.fsum(c[1] for c in cands)
    if available < required_kw and not _close(available, required_kw):
        return ShedSelection(
            tuple(c[0] for c in cands), available, math.fsum(c[2] for c in cands), insufficient=True
        )
    if len(cands) <= EXACT_LIMIT:
        chosen = _exact(cands, required_kw)
    else:
        chosen = _greedy(cands, required_kw)
    sel = [cands[i] for i in sorted(chosen)]
    return ShedSelection(
        tuple(c[0] for c in sel), math.fsum(c[1] for c in sel), math.fsum(c[2] for c in sel)
    )


def _covers(power: float, required: float) -> bool:
    return power >= required or _close(power, required)


def _exact(cands: List[Candidate], required: float) -> List[int]:
    n = len(cands)
    suffix_power = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix_power[i] = suffix_power[i + 1] + cands[i][1]
    best: Optional[tuple] = None
    best_idx: List[int] = []
    picked: List[int] = []

    def dfs(i: int, power: float, weight: float):
        nonlocal best, best_idx
        if best is not None and weight > best[0] and not _close(weight, best[0]):
            return
        if _covers(power, required):
            key = (weight, power, tuple(cands[j][0] for j in picked))
            if _better(key, best):
                best, best_idx = key, list(picked)
            # adding more items only adds inconvenience and power
            return
        if i == n or not _covers(power + suffix_power[i], required):
            return
        picked.append(i)
        dfs(i + 1, power + cands[i][1], weight + cands[i][2])
        picked.pop()
        dfs(i + 1, power, weight)

    dfs(0, 0.0, 0.0)
    return best_idx


def _greedy(cands: List[Candidate], required: float) -> List[int]:
    order = sorted(range(len(cands)), key=lambda i: (cands[i][2] / cands[i][1], cands[i][0]))
    chosen: List[int] = []
    power = 0.0
    for i in order:
        if _covers(power, required):
            break
        chosen.append(i)
        power += cands[i][1]
    return _repair(cands, set(chosen), required)


def _repair(cands: List[Candidate], chosen: set, required: float) -> List[int]:
    def score(s):
        return (
            math.fsum(cands[i][2] for i in s),
            math.fsum(cands[i][1] for i in s),
            tuple(sorted(cands[i][0] for i in s)),
        )

    def feasible(s):
        return _covers(math.fsum(cands[i][1] for i in s), required)

    improved = True
    while improved:
        improved = False
        current = score(chosen)
        # drop a redundant item, most inconvenient first
        for i in sorted(chosen, key=lambda i: (-cands[i][2], cands[i][0])):
            trial = chosen - {i}
            if feasible(trial) and _better(score(trial), current):
                chosen, improved = trial, True
                break
        if improved:
            continue
        # swap one selected item for one unselected item
        best_trial, best_score = None, current
        for i in sorted(chosen):
            for j in range(len(cands)):
                if j in chosen:
                    continue
                trial = (chosen - {i}) | {j}
                if feasible(trial):
                    s = score(trial)
                    if _better(s, best_score):
                        best_trial, best_score = trial, s
        if best_trial is not None:
            chosen, improved = best_trial, True
    return sorted(chosen)


def classify_reserve(latency_p95_ms: float) -> ReserveClass:
    if latency_p95_ms < 0 or math.isnan(latency_p95_ms):
        raise ValueError("latency must be >= 0")
    if latency_p95_ms < PRIMARY_LIMIT_MS:
        return ReserveClass.PRIMARY
    if latency_p95_ms < SECONDARY_LIMIT_MS:
        return ReserveClass.SECONDARY
    return ReserveClass.TERTIARY


def aggregate_flexible_capacity(units: Iterable[Unit], at: int) -> float:
    """Sum of rated power of flexible appliances that are On at ``at``, in kW."""
    return math.fsum(
        app.rated_power_kw for unit in units for app in unit.appliances if app.flexible and app.is_on(at)
    )


@dataclass(frozen=True)
class Flat:
    price: float


@dataclass(frozen=True)
class TwoTier:
    day_price: float
    night_price: float
    # (start, end) offsets within a day, in ms
    day_window: Tuple[int, int]


def price_schedule(kind: Union[Flat, TwoTier], horizon_ms: int) -> List[PriceSignal]:
    """Price change points covering [0, horizon_ms)."""
    if horizon_ms <= 0:
        return []
    if isinstance(kind, Flat):
        return [PriceSignal(0, kind.price)]
    start, end = kind.day_window
    if not 0 <= start < end <= MS_PER_DAY:
        raise ValueError(f"invalid day window {kind.day_window}")
    # validate prices up front
    PriceSignal(0, kind.day_price), PriceSignal(0, kind.night_price)
    out: List[PriceSignal] = []
    day = 0
    while day * MS_PER_DAY < horizon_ms:
        base = day * MS_PER_DAY
        for t, p in ((base, kind.night_price), (base + start, kind.day_price), (base + end, kind.night_price)):
            if t < horizon_ms and (not out or out[-1].price_sgd_per_kwh != p):
                if out and out[-1].effective_at == t:
                    out[-1] = PriceSignal(t, p)
                else:
                    out.append(PriceSignal(t, p))
        day += 1
    return out


def price_at(signals: Sequence[PriceSignal], t_ms: int) -> float:
    current = signals[0].price_sgd_per_kwh
    for sig in signals:
        if sig.effective_at > t_ms:
            break
        current = sig.price_sgd_per_kwh
    return current


# -- controller ----------------------------------------------------------------


@dataclass
class MeterReading:
    unit: str
    sampled_at: int
    kw: float
    flexible_on: Tuple[str, ...] = ()


@dataclass
class _ShedEntry:
    issued_at: int
    acked: bool = False


@dataclass
class FlexInfo:
    power_kw: float
    weight: float


@dataclass
class TickDecision:
    at: int
    perceived_kw: float
    adjusted_kw: float
    commands: List[ControlCommand] = field(default_factory=list)
    insufficient: bool = False


class Controller:
    """IES-side peak shaver acting on the latest delivered meter readings.

    Readings may be stale. Appliances with an outstanding SwitchOff that a
    reading still reports On are discounted from perceived demand, so the
    controller does not re-shed while its own commands are in flight; an
    un-acknowledged SwitchOff expires after ``command_timeout_s``.
    """

    def __init__(self, policy: DrmPolicy, flexible: Dict[str, FlexInfo]):
        self.policy = policy
        self.flexible = flexible
        self.readings: Dict[str, MeterReading] = {}
        self.shed: Dict[str, _ShedEntry] = {}

    def on_reading(self, reading: MeterReading) -> None:
        prev = self.readings.get(reading.unit)
        if prev is None or reading.sampled_at >= prev.sampled_at:
            self.readings[reading.unit] = reading

    def on_ack(self, appliance_id: str, action: Action) -> None:
        entry = self.shed.get(appliance_id)
        if entry is not None and action == Action.SWITCH_OFF:
            entry.acked = True

    def perceived_kw(self) -> float:
        return math.fsum(r.kw for r in self.readings.values())

    def _reported_on(self) -> set:
        on = set()
        for r in self.readings.values():
            on.update(r.flexible_on)
        return on

    def tick(self, at: int) -> TickDecision:
        pol = self.policy
        timeout = pol.command_timeout_s * MS_PER_S
        for app_id in [a for a, e in self.shed.items() if not e.acked and at - e.issued_at >= timeout]:
            del self.shed[app_id]
        reported_on = self._reported_on()
        perceived = self.perceived_kw()
        in_flight = [a for a in self.shed if a in reported_on]
        adjusted = perceived - math.fsum(self.flexible[a].power_kw for a in in_flight)
        decision = TickDecision(at, perceived, adjusted)

        if adjusted > pol.threshold_kw and not _close(adjusted, pol.threshold_kw):
            candidates = [
                (a, self.flexible[a].power_kw, self.flexible[a].weight)
                for a in sorted(reported_on)
                if a in self.flexible and a not in self.shed
            ]
            if not candidates:
                decision.insufficient = True
                return decision
            sel = select_shed_set(candidates, adjusted - pol.threshold_kw)
            decision.insufficient = sel.insufficient
            for app_id in sel.appliances:
                self.shed[app_id] = _ShedEntry(at)
                decision.commands.append(ControlCommand(app_id, Action.SWITCH_OFF, at))
        elif adjusted < pol.threshold_kw - pol.restore_hysteresis_kw and self.shed:
            limit = pol.threshold_kw - pol.restore_hysteresis_kw
            fits = [
                a for a in self.shed if adjusted + self.flexible[a].power_kw <= limit + 1e-12
            ]
            if fits:
                app_id = min(fits, key=lambda a: (-self.flexible[a].weight, a))
                del self.shed[app_id]
                decision.commands.append(ControlCommand(app_id, Action.SWITCH_ON, at))
        return decision


def controller_tick(controller: Controller, at: int) -> List[ControlCommand]:
    return controller.tick(at).commands

"""Occupancy inference, wastage accounting, appliance identification and DRM impairment metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .premises import (
    Appliance,
    ApplianceLabel,
    LoadProfile,
    OccupancyTrace,
    SensorSample,
    appliance_power_trace,
)
from .simcore import MS_PER_HOUR, MS_PER_S

DEFAULT_IDLE_WINDOW_S = 900
DEFAULT_TARIFF_SGD_PER_KWH = 0.2328
KWH_DECIMALS = 9
NO_ACTIVITY = "no-activity"


class TraceError(ValueError):
    pass


# -- occupancy -------------------------------------------------------------------


def infer_occupancy(
    samples: Iterable[SensorSample],
    idle_window_s: int = DEFAULT_IDLE_WINDOW_S,
    noise_threshold_db: float = 37.5,
    start_ms: int = 0,
    end_ms: Optional[int] = None,
) -> OccupancyTrace:
    """Idle-window occupancy detector.

    A sample with motion or noise at/above the threshold is a trigger. The
    room counts as occupied until ``idle_window_s`` after the latest trigger
    (the trace start acts as an initial trigger) and unoccupied from then
    until the next trigger.
    """
    if idle_window_s <= 0:
        raise ValueError("idle_window_s must be positive")
    window = idle_window_s * MS_PER_S
    spans: List[Tuple[int, int]] = []
    last_t = None
    span_start, span_end = start_ms, start_ms + window
    for s in samples:
        if last_t is not None and s.at < last_t:
            raise ValueError(f"samples out of order at t={s.at}")
        last_t = s.at
        if not (s.motion or s.noise_db >= noise_threshold_db):
            continue
        if s.at <= span_end:
            span_end = max(span_end, s.at + window)
        else:
            spans.append((span_start, span_end))
            span_start, span_end = s.at, s.at + window
    spans.append((span_start, span_end))
    if end_ms is None:
        end_ms = max(last_t if last_t is not None else start_ms, spans[-1][1])
    clipped = [(max(a, start_ms), min(b, end_ms)) for a, b in spans if min(b, end_ms) > max(a, start_ms)]
    trace = OccupancyTrace.from_occupied_spans([(a - start_ms, b - start_ms) for a, b in clipped], end_ms - start_ms)
    if start_ms:
        trace = OccupancyTrace([(a + start_ms, b + start_ms, o) for a, b, o in trace.intervals])
    return trace


# -- wastage ---------------------------------------------------------------------


@dataclass
class WastageRecord:
    room_id: str
    lights_kwh: float
    acs_kwh: float
    window: Tuple[int, int]

    def __post_init__(self):
        if self.lights_kwh < 0 or self.acs_kwh < 0:
            raise ValueError("wastage must be >= 0")

    @property
    def total_kwh(self) -> float:
        return float(_dec(self.lights_kwh) + _dec(self.acs_kwh))


@dataclass
class WastageSummary:
    records: List[WastageRecord]
    mean_lights_kwh: float
    mean_acs_kwh: float
    total_lights_kwh: float
    total_acs_kwh: float

    @property
    def mean_record(self) -> WastageRecord:
        window = self.records[0].window if self.records else (0, 0)
        return WastageRecord("mean", self.mean_lights_kwh, self.mean_acs_kwh, window)


def _dec(x: float) -> Decimal:
    # shortest round-trip repr, so 6.376 stays 6.376
    return Decimal(repr(float(x)))


def _round_kwh(x: float) -> float:
    return round(x, KWH_DECIMALS)


def energy_in_spans(
    appliance: Appliance, spans: Sequence[Tuple[int, int]], end_ms: int
) -> float:
    """Exact energy (kWh) an appliance drew inside the given time spans."""
    total = 0.0
    for on_start, on_end in appliance.on_intervals(end_ms):
        t = on_start
        for duration_s, power_w in appliance.signature:
            phase_end = on_end if duration_s is None else min(on_end, t + int(round(duration_s * MS_PER_S)))
            if power_w:
                for lo, hi in spans:
                    a, b = max(lo, t), min(hi, phase_end)
                    if b > a:
                        total += power_w * (b - a)
            t = phase_end
            if t >= on_end:
                break
    return total / 1000.0 / MS_PER_HOUR


def compute_wastage(
    rooms: Sequence[str],
    occupancy: Mapping[str, OccupancyTrace],
    appliances: Mapping[str, Sequence[Appliance]],
    window: Tuple[int, int],
) -> WastageSummary:
    """Light and ACS energy drawn while each room was unoccupied.

    Energies are integrated exactly from switch history and signatures and
    reported to 1e-9 kWh; aggregates use decimal arithmetic on the reported
    values so stated averages reproduce without binary rounding noise.
    """
    start, end = window
    records = []
    for room in rooms:
        occ = occupancy.get(room)
        if occ is None:
            raise ValueError(f"no occupancy trace for room {room}")
        if not occ.intervals or occ.intervals[0][0] > start or occ.intervals[-1][1] < end:
            raise ValueError(f"occupancy for room {room} does not cover window {window}")
        spans = occ.unoccupied_spans(start, end)
        lights = acs = 0.0
        for app in appliances.get(room, ()):
            if app.label == ApplianceLabel.LIGHT:
                lights += energy_in_spans(app, spans, end)
            elif app.label == ApplianceLabel.ACS:
                acs += energy_in_spans(app, spans, end)
        records.append(WastageRecord(room, _round_kwh(lights), _round_kwh(acs), window))
    return summarize_wastage(records)


def summarize_wastage(records: Sequence[WastageRecord]) -> WastageSummary:
    n = len(records)
    tot_l = sum((_dec(r.lights_kwh) for r in records), Decimal(0))
    tot_a = sum((_dec(r.acs_kwh) for r in records), Decimal(0))
    mean_l = float(tot_l / n) if n else 0.0
    mean_a = float(tot_a / n) if n else 0.0
    return WastageSummary(list(records), mean_l, mean_a, float(tot_l), float(tot_a))


def extrapolate_campus_wastage(
    mean_record: WastageRecord, room_count: int, tariff_sgd_per_kwh: float = DEFAULT_TARIFF_SGD_PER_KWH
) -> Tuple[float, float]:
    """Scale a per-room mean to ``room_count`` rooms; returns (kWh, SGD).

    Decimal arithmetic on the shortest repr of each input, so
    ``(6.376 + 232.025) * 200`` is exactly 47680.2.
    """
    if room_count < 0:
        raise ValueError("room_count must be >= 0")
    if tariff_sgd_per_kwh <= 0:
        raise ValueError("tariff must be positive")
    total = (_dec(mean_record.lights_kwh) + _dec(mean_record.acs_kwh)) * room_count
    return float(total), float(total * _dec(tariff_sgd_per_kwh))


def wastage_cost_sgd(record: WastageRecord, tariff_sgd_per_kwh: float) -> float:
    return float((_dec(record.lights_kwh) + _dec(record.acs_kwh)) * _dec(tariff_sgd_per_kwh))


# -- appliance identification ------------------------------------------------------


def render_signature(signature, resolution_s: int, length: Optional[int] = None) -> np.ndarray:
    """Average power (W) per step of a signature played from t=0."""
    app = Appliance("sig", ApplianceLabel.OTHER, 1.0, signature=list(signature))
    finite = sum(d for d, _ in signature if d is not None)
    sustained = any(d is None for d, _ in signature)
    if length is None:
        length = max(1, math.ceil(finite / resolution_s)) + (1 if sustained else 0)
    end = length * resolution_s * MS_PER_S
    app.history = [(0, True)]
    return appliance_power_trace(app, (0, end), resolution_s).values_kw * 1000.0


def identify_appliance(
    trace: LoadProfile,
    library: Sequence[Tuple[str, Sequence]],
    on_threshold_w: float = 20.0,
) -> Tuple[str, float]:
    """Nearest library signature (L2, aligned at switch-on) to a power trace.

    The active part of ``trace`` starts at the first step whose power
    exceeds ``on_threshold_w``. Each signature is rendered at the trace's
    resolution and both are compared over the longer of the two lengths,
    zero-padded. Sustained signatures are extended to the trace length.
    Returns ``(NO_ACTIVITY, nan)`` for a trace that never switches on.
    """
    if not library:
        raise ValueError("empty signature library")
    watts = np.asarray(trace.values_kw, dtype=float) * 1000.0
    active_idx = np.flatnonzero(watts > on_threshold_w)
    if active_idx.size == 0:
        return NO_ACTIVITY, math.nan
    active = watts[active_idx[0]:]
    best_label, best_dist = None, math.inf
    for label, signature in library:
        sustained = any(d is None for d, _ in signature)
        ref = render_signature(signature, trace.resolution_s, len(active) if sustained else None)
        n = max(len(ref), len(active))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(active)] = active
        b[: len(ref)] = ref
        dist = float(np.sqrt(np.sum((a - b) ** 2)))
        if dist < best_dist:
            best_label, best_dist = label, dist
    return best_label, best_dist


DEFAULT_SIGNATURES: List[Tuple[str, list]] = [
    (ApplianceLabel.LIGHT.value, [(None, 300.0)]),
    (ApplianceLabel.ACS.value, [(300, 1800.0), (None, 1200.0)]),
    (ApplianceLabel.FRIDGE.value, [(900, 150.0), (900, 0.0), (900, 150.0), (900, 0.0)]),
    (ApplianceLabel.KETTLE.value, [(120, 2000.0)]),
    (ApplianceLabel.OTHER.value, [(600, 100.0)]),
]


# -- impairment ----------------------------------------------------------------------


@dataclass
class Excursion:
    start: int
    end: int

    @property
    def duration_ms(self) -> int:
        return self.end - self.start


@dataclass
class ImpairmentReport:
    time_above_threshold_s: float
    overshoot_kwh: float
    commands_sent: int
    commands_lost: int
    mean_command_latency_ms: float
    p95_command_latency_ms: float
    uncontrolled_time_above_threshold_s: float
    uncontrolled_overshoot_kwh: float
    max_excursion_s: float
    excursions: List[Excursion] = field(default_factory=list)
    uncontrolled_excursions: List[Excursion] = field(default_factory=list)

    def __post_init__(self):
        if self.commands_lost > self.commands_sent:
            raise ValueError("commands_lost cannot exceed commands_sent")

    def to_dict(self) -> dict:
        return {
            "time_above_threshold_s": self.time_above_threshold_s,
            "overshoot_kwh": self.overshoot_kwh,
            "commands_sent": self.commands_sent,
            "commands_lost": self.commands_lost,
            "mean_command_latency_ms": _nan_to_none(self.mean_command_latency_ms),
            "p95_command_latency_ms": _nan_to_none(self.p95_command_latency_ms),
            "uncontrolled_time_above_threshold_s": self.uncontrolled_time_above_threshold_s,
            "uncontrolled_overshoot_kwh": self.uncontrolled_overshoot_kwh,
            "max_excursion_s": self.max_excursion_s,
            "excursions": [[e.start, e.end] for e in self.excursions],
            "uncontrolled_excursions": [[e.start, e.end] for e in self.uncontrolled_excursions],
        }


def _nan_to_none(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def above_threshold(
    series: Sequence[Tuple[int, float]], threshold_kw: float, end_ms: int
) -> Tuple[float, float, List[Excursion]]:
    """Time above threshold (s), energy above threshold (kWh) and excursion spans.

    ``series`` is a step function given as (time, kW) change points.
    """
    # several changes can land on the same instant; only the last one holds
    collapsed: List[Tuple[int, float]] = []
    for t, kw in series:
        if collapsed and collapsed[-1][0] == t:
            collapsed[-1] = (t, kw)
        else:
            collapsed.append((t, kw))
    series = collapsed
    time_ms = 0
    energy = 0.0
    excursions: List[Excursion] = []
    open_start = None
    for i, (t, kw) in enumerate(series):
        nxt = series[i + 1][0] if i + 1 < len(series) else end_ms
        above = kw > threshold_kw
        if above and open_start is None:
            open_start = t
        elif not above and open_start is not None:
            excursions.append(Excursion(open_start, t))
            open_start = None
        if above and nxt > t:
            time_ms += nxt - t
            energy += (kw - threshold_kw) * (nxt - t)
    if open_start is not None:
        excursions.append(Excursion(open_start, end_ms))
    return time_ms / MS_PER_S, energy / MS_PER_HOUR, excursions


def impairment_report(trace_events: Sequence[dict], threshold_kw: float, end_ms: int) -> ImpairmentReport:
    """Compute DRM metrics from trace events (dicts as written to the JSONL trace)."""
    controlled: List[Tuple[int, float]] = []
    uncontrolled: List[Tuple[int, float]] = []
    sent = lost = 0
    latencies = []
    for ev in trace_events:
        cat = ev["category"]
        if cat == "Demand" and ev.get("kind") == "total":
            controlled.append((ev["at"], ev["controlled_kw"]))
            uncontrolled.append((ev["at"], ev["uncontrolled_kw"]))
        elif cat == "Message" and ev["msg_kind"] == "ControlCommand":
            if ev["status"] == "lost":
                lost += 1
            else:
                latencies.append(ev["at"] - ev["created_at"])
        elif cat == "Command" and ev.get("phase") == "issued":
            sent += 1
    t_above, overshoot, exc = above_threshold(controlled, threshold_kw, end_ms)
    u_above, u_overshoot, u_exc = above_threshold(uncontrolled, threshold_kw, end_ms)
    if latencies:
        arr = np.asarray(latencies, dtype=float)
        mean_lat, p95_lat = float(arr.mean()), float(np.percentile(arr, 95))
    else:
        mean_lat = p95_lat = math.nan
    return ImpairmentReport(
        time_above_threshold_s=t_above,
        overshoot_kwh=overshoot,
        commands_sent=sent,
        commands_lost=lost,
        mean_command_latency_ms=mean_lat,
        p95_command_latency_ms=p95_lat,
        uncontrolled_time_above_threshold_s=u_above,
        uncontrolled_overshoot_kwh=u_overshoot,
        max_excursion_s=max((e.duration_ms for e in exc), default=0) / MS_PER_S,
        excursions=exc,
        uncontrolled_excursions=u_exc,
    )

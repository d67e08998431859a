"""Analytics over a completed trace.

``build_report`` is the single source of report content: ``gridbed run``
calls it on the trace it just wrote and ``gridbed report`` calls it on a
trace read back from disk, so both produce the same document.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import analytics, drm
from .experiment import build_units, price_kind
from .network import build_topology
from .premises import SensorModel, SensorSample
from .scenario import ScenarioSpec, validate_raw
from .scheduler import (
    Infeasible,
    MeetingRequest,
    RoomResource,
    solve_exact,
    solve_heuristic,
    within_exact_bounds,
)
from .simcore import MS_PER_HOUR
from .tracefile import Trace

REPORT_SCHEMA_VERSION = 1


def demand_series(events: Sequence[dict]) -> List[Tuple[int, float, float, float]]:
    """(t_ms, base_kw, uncontrolled_kw, controlled_kw) change points, one per instant."""
    out: List[Tuple[int, float, float, float]] = []
    for ev in events:
        if ev["category"] == "Demand" and ev.get("kind") == "total":
            row = (ev["at"], ev["base_kw"], ev["uncontrolled_kw"], ev["controlled_kw"])
            if out and out[-1][0] == row[0]:
                out[-1] = row
            else:
                out.append(row)
    return out


def energy_and_cost(
    series: Sequence[Tuple[int, float]], end_ms: int, prices: Sequence[drm.PriceSignal]
) -> Tuple[float, Optional[float]]:
    """Energy (kWh) of a step series and its cost under a price schedule."""
    cuts = sorted({t for t, _ in series} | {p.effective_at for p in prices if p.effective_at < end_ms})
    kwh = 0.0
    sgd = 0.0
    j = 0
    for i, t in enumerate(cuts):
        nxt = cuts[i + 1] if i + 1 < len(cuts) else end_ms
        while j + 1 < len(series) and series[j + 1][0] <= t:
            j += 1
        if not series or series[j][0] > t:
            continue
        e = series[j][1] * (nxt - t) / MS_PER_HOUR
        kwh += e
        if prices:
            sgd += e * drm.price_at(prices, t)
    return kwh, (sgd if prices else None)


def _drm_section(spec: ScenarioSpec, events: Sequence[dict], series) -> dict:
    policy = drm.DrmPolicy(
        spec.drm.threshold_kw,
        spec.drm.control_period_s,
        spec.drm.restore_hysteresis_kw,
        spec.drm.tick_offset_ms,
        spec.drm.command_timeout_s,
    )
    imp = analytics.impairment_report(events, policy.threshold_kw, spec.horizon_ms)
    p95 = imp.p95_command_latency_ms
    reserve = None if math.isnan(p95) else drm.classify_reserve(p95).value
    kind = price_kind(spec)
    prices = drm.price_schedule(kind, spec.horizon_ms) if kind is not None else []
    ctl_kwh, ctl_sgd = energy_and_cost([(r[0], r[3]) for r in series], spec.horizon_ms, prices)
    unc_kwh, unc_sgd = energy_and_cost([(r[0], r[2]) for r in series], spec.horizon_ms, prices)
    ticks = [ev for ev in events if ev["category"] == "Shed"]
    return {
        "threshold_kw": policy.threshold_kw,
        "control_period_s": policy.control_period_s,
        "restore_hysteresis_kw": policy.restore_hysteresis_kw,
        "impairment": imp.to_dict(),
        "reserve_class": reserve,
        "peak_controlled_kw": max((r[3] for r in series), default=0.0),
        "peak_uncontrolled_kw": max((r[2] for r in series), default=0.0),
        "energy_controlled_kwh": ctl_kwh,
        "energy_uncontrolled_kwh": unc_kwh,
        "cost_controlled_sgd": ctl_sgd,
        "cost_uncontrolled_sgd": unc_sgd,
        "insufficient_ticks": sum(1 for ev in ticks if ev["insufficient"]),
    }


def _appliances_with_history(spec: ScenarioSpec, events: Sequence[dict]):
    units = build_units(spec)
    by_id = {a.id: a for u in units for a in u.appliances}
    for ev in events:
        if ev["category"] == "Demand" and ev.get("kind") == "appliance":
            by_id[ev["appliance"]].switch(ev["at"], ev["on"])
    return units


def _records(summary: analytics.WastageSummary, tariff: float) -> List[dict]:
    return [
        {
            "room": r.room_id,
            "lights_kwh": r.lights_kwh,
            "acs_kwh": r.acs_kwh,
            "sgd": analytics.wastage_cost_sgd(r, tariff),
        }
        for r in summary.records
    ]


def _wastage_section(spec: ScenarioSpec, events: Sequence[dict]) -> Optional[dict]:
    units = _appliances_with_history(spec, events)
    if not any(u.occupancy is not None for u in units):
        return None
    if not any(a.label.value in ("Light", "ACS") for u in units for a in u.appliances):
        return None
    an = spec.analytics
    window = (0, spec.horizon_ms)
    rooms = [u.id for u in units if u.occupancy is not None]
    apps = {u.id: u.appliances for u in units}
    truth = analytics.compute_wastage(rooms, {u.id: u.occupancy for u in units}, apps, window)
    campus_rooms = an.campus_rooms if an.campus_rooms is not None else len(rooms)
    total_kwh, total_sgd = analytics.extrapolate_campus_wastage(
        truth.mean_record, campus_rooms, an.tariff_sgd_per_kwh
    )
    out = {
        "window_ms": list(window),
        "tariff_sgd_per_kwh": an.tariff_sgd_per_kwh,
        "rooms": _records(truth, an.tariff_sgd_per_kwh),
        "mean_lights_kwh": truth.mean_lights_kwh,
        "mean_acs_kwh": truth.mean_acs_kwh,
        "total_lights_kwh": truth.total_lights_kwh,
        "total_acs_kwh": truth.total_acs_kwh,
        "campus_rooms": campus_rooms,
        "campus_total_kwh": total_kwh,
        "campus_total_sgd": total_sgd,
        "detector": None,
    }
    if spec.sensors is not None:
        sens = spec.sensors
        threshold = an.noise_threshold_db
        if threshold is None:
            threshold = SensorModel(
                noise_occupied=tuple(sens.noise_occupied), noise_unoccupied=tuple(sens.noise_unoccupied)
            ).noise_threshold_db
        samples: Dict[str, List[SensorSample]] = {r: [] for r in rooms}
        for ev in events:
            if ev["category"] == "Sensor" and ev["unit"] in samples:
                samples[ev["unit"]].append(
                    SensorSample(
                        ev["mpn"], ev["at"], ev["motion"], ev["noise_db"], ev["temp_c"], ev["humidity_pct"], ev["lux"]
                    )
                )
        inferred = {
            r: analytics.infer_occupancy(samples[r], an.idle_window_s, threshold, 0, spec.horizon_ms) for r in rooms
        }
        seen = analytics.compute_wastage(rooms, inferred, apps, window)
        out["detector"] = {
            "idle_window_s": an.idle_window_s,
            "noise_threshold_db": threshold,
            "rooms": _records(seen, an.tariff_sgd_per_kwh),
            "mean_lights_kwh": seen.mean_lights_kwh,
            "mean_acs_kwh": seen.mean_acs_kwh,
        }
    return out


def _scheduler_section(spec: ScenarioSpec) -> Optional[dict]:
    sc = spec.scheduler
    if sc is None:
        return None
    requests = [MeetingRequest(q.id, q.duration_slots, q.earliest_slot, q.latest_slot, q.attendees) for q in sc.requests]
    rooms = [RoomResource(r.id, r.capacity, r.active_power_kw, sc.slot_length_min) for r in sc.rooms]
    out: dict = {"objective": sc.objective}
    heur = solve_heuristic(requests, rooms, sc.prices, sc.objective)
    out["heuristic"] = heur.to_dict()
    if within_exact_bounds(requests, rooms, sc.prices):
        try:
            out["exact"] = solve_exact(requests, rooms, sc.prices, sc.objective).to_dict()
        except Infeasible as exc:
            out["exact"] = {"infeasible": str(exc)}
    else:
        out["exact"] = None
    return out


def build_report(trace: Trace) -> dict:
    spec = validate_raw(trace.scenario)
    events = trace.events
    topo = build_topology(spec)
    series = demand_series(events)
    categories: Dict[str, int] = {}
    for ev in events:
        categories[ev["category"]] = categories.get(ev["category"], 0) + 1
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": spec.name,
        "seed": trace.header["seed"],
        "horizon_ms": spec.horizon_ms,
        "final_time": trace.end["final_time"],
        "trace_sha256": trace.sha256,
        "event_counts": dict(sorted(categories.items())),
        "topology": {"counts": topo.counts(), "nodes": topo.echo()},
        "threshold_kw": spec.drm.threshold_kw if spec.drm is not None else None,
        "series": {
            "columns": ["t_ms", "base_kw", "uncontrolled_kw", "controlled_kw"],
            "rows": [list(r) for r in series],
        },
        "drm": _drm_section(spec, events, series) if spec.drm is not None and spec.drm.enabled else None,
        "wastage": _wastage_section(spec, events),
        "scheduler": _scheduler_section(spec),
    }
    return report


# -- tabular extracts ----------------------------------------------------------------


def write_series_csv(report: dict, path: Path) -> None:
    threshold = report.get("threshold_kw")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ms", "hours", "base_kw", "uncontrolled_kw", "controlled_kw", "threshold_kw"])
        for t, base, unc, ctl in report["series"]["rows"]:
            w.writerow([t, f"{t / MS_PER_HOUR:.6f}", base, unc, ctl, "" if threshold is None else threshold])


def write_wastage_csv(report: dict, path: Path) -> None:
    wst = report["wastage"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["room", "lights_kwh", "acs_kwh", "sgd"])
        for r in wst["rooms"]:
            w.writerow([r["room"], r["lights_kwh"], r["acs_kwh"], f"{r['sgd']:.4f}"])
        w.writerow(["mean", wst["mean_lights_kwh"], wst["mean_acs_kwh"], ""])

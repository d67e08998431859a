"""Scenario file schema, loading, ``--set`` overrides and validation.

Scenarios are JSON documents with ``schema_version: 1``. Structural checks
come from the pydantic models (unknown fields are rejected); referential
and temporal checks run afterwards and report dotted field paths.
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .network import LinkKind, TopologyError, build_topology

SCHEMA_VERSION = 1
BUNDLED = ("fig4_peakshave", "wastage_office")


class ScenarioError(ValueError):
    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CongestionSpec(_Model):
    start_ms: int = Field(ge=0)
    end_ms: int = Field(gt=0)
    latency_multiplier: float = Field(1.0, ge=0)
    loss_multiplier: float = Field(1.0, ge=0)
    extra_loss_prob: float = Field(0.0, ge=0, le=1)


class LinkParams(_Model):
    base_latency_ms: Optional[int] = Field(None, ge=0)
    jitter_ms: Optional[int] = Field(None, ge=0)
    loss_prob: Optional[float] = Field(None, ge=0, le=1)
    congestion: Optional[List[CongestionSpec]] = None


class NetworkSpec(_Model):
    links: Dict[LinkKind, LinkParams] = {}
    link_overrides: Dict[str, LinkParams] = {}
    remove_links: List[str] = []
    meter_period_s: int = Field(60, gt=0)


class TopologySpec(_Model):
    template: Literal["hostel", "office_section"]
    units: Optional[int] = Field(None, ge=0)
    rooms: Optional[int] = Field(None, ge=0)
    units_per_block: int = Field(10, gt=0)
    mpns_per_unit: int = Field(4, ge=0)
    ble_sensors_per_unit: int = Field(0, ge=0)
    mpns_per_relay: int = Field(5, gt=0)

    @property
    def count(self) -> Optional[int]:
        return self.units if self.template == "hostel" else self.rooms


class BaseLoadSpec(_Model):
    model: Literal["none", "constant", "nems"] = "none"
    kw: Optional[float] = Field(None, ge=0)
    peak_kw: Optional[float] = Field(None, gt=0)
    resolution_s: int = Field(60, gt=0)
    variation: float = Field(0.05, ge=0, lt=1)


class UnitSpec(_Model):
    id: str
    kind: Optional[Literal["Hostel", "Office"]] = None
    occupancy: Optional[List[Tuple[int, int, bool]]] = None


class ApplianceSpec(_Model):
    id: str
    unit: str
    label: Literal["Light", "ACS", "Fridge", "Kettle", "Other"]
    rated_power_w: float = Field(gt=0)
    flexible: bool = False
    inconvenience_weight: float = Field(1.0, gt=0)
    signature: Optional[List[Tuple[Optional[float], float]]] = None
    schedule: List[Tuple[int, int]] = []


class DrmSpec(_Model):
    enabled: bool = True
    threshold_kw: float = Field(gt=0)
    control_period_s: int = Field(60, gt=0)
    restore_hysteresis_kw: Optional[float] = Field(None, ge=0)
    tick_offset_ms: int = Field(1000, ge=0)
    command_timeout_s: int = Field(900, gt=0)


class PricingSpec(_Model):
    kind: Literal["flat", "two_tier"] = "flat"
    price: Optional[float] = Field(None, gt=0)
    day_price: Optional[float] = Field(None, gt=0)
    night_price: Optional[float] = Field(None, gt=0)
    day_start_h: float = Field(8.0, ge=0, le=24)
    day_end_h: float = Field(20.0, ge=0, le=24)


class SensorSpec(_Model):
    period_s: int = Field(30, gt=0)
    p_motion_when_occupied: float = Field(0.3, ge=0, le=1)
    noise_occupied: Tuple[float, float] = (45.0, 5.0)
    noise_unoccupied: Tuple[float, float] = (30.0, 3.0)


class AnalyticsSpec(_Model):
    idle_window_s: int = Field(900, gt=0)
    tariff_sgd_per_kwh: float = Field(0.2328, gt=0)
    campus_rooms: Optional[int] = Field(None, ge=0)
    noise_threshold_db: Optional[float] = None


class SchedRoomSpec(_Model):
    id: str
    capacity: int = Field(ge=1)
    active_power_kw: float = Field(gt=0)


class SchedRequestSpec(_Model):
    id: str
    duration_slots: int = Field(ge=1)
    earliest_slot: int = Field(ge=0)
    latest_slot: int = Field(ge=0)
    attendees: int = Field(1, ge=1)


class SchedulerSpec(_Model):
    slot_length_min: int = Field(60, gt=0)
    prices: List[float]
    rooms: List[SchedRoomSpec]
    requests: List[SchedRequestSpec]
    objective: Literal["cost", "energy"] = "cost"


class OutputSpec(_Model):
    dir: str = "out"
    figures: bool = True


class ScenarioSpec(_Model):
    schema_version: Literal[1] = 1
    name: str
    description: str = ""
    horizon_ms: int = Field(gt=0)
    seed: int = Field(0, ge=0, lt=2**64)
    topology: TopologySpec
    network: NetworkSpec = NetworkSpec()
    base_load: BaseLoadSpec = BaseLoadSpec()
    units: List[UnitSpec] = []
    appliances: List[ApplianceSpec] = []
    drm: Optional[DrmSpec] = None
    pricing: Optional[PricingSpec] = None
    sensors: Optional[SensorSpec] = None
    analytics: AnalyticsSpec = AnalyticsSpec()
    scheduler: Optional[SchedulerSpec] = None
    output: OutputSpec = OutputSpec()


# -- loading ---------------------------------------------------------------------


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("gridbed") / "scenarios" / f"{name}.json"))


def resolve_path(ref: Union[str, Path]) -> Path:
    """A file path, or the name of a bundled scenario."""
    p = Path(ref)
    if p.exists():
        return p
    if str(ref) in BUNDLED:
        return bundled_path(str(ref))
    raise ScenarioError([f"{ref}: no such file or bundled scenario"])


def read_raw(ref: Union[str, Path]) -> Dict[str, Any]:
    path = resolve_path(ref)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    if not isinstance(raw, dict):
        raise ScenarioError([f"{path}: top level must be a JSON object"])
    return raw


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply ``dotted.path=value`` assignments; values parse as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ScenarioError([f"override {item!r}: expected key=value"])
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node: Any = out
        for depth, part in enumerate(parts):
            last = depth == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                    node[idx]
                except (ValueError, IndexError):
                    raise ScenarioError([f"override {key}: bad list index {part!r}"]) from None
                if last:
                    node[idx] = _parse_value(value)
                else:
                    node = node[idx]
            elif isinstance(node, dict):
                if last:
                    node[part] = _parse_value(value)
                else:
                    if node.get(part) is None:
                        node[part] = {}
                    node = node[part]
            else:
                raise ScenarioError([f"override {key}: {'.'.join(parts[:depth])} is not a container"])
    return out


def _loc(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += f".{part}" if out else str(part)
    return out or "<root>"


def _num(v) -> str:
    return str(int(v)) if isinstance(v, float) and v.is_integer() else str(v)


def _format_pydantic(exc: ValidationError) -> List[str]:
    msgs = []
    for err in exc.errors():
        path = _loc(err["loc"])
        field_name = next((p for p in reversed(err["loc"]) if isinstance(p, str)), path)
        ctx = err.get("ctx", {})
        kind = err["type"]
        if kind == "greater_than":
            text = f"{field_name} must be > {_num(ctx['gt'])}"
        elif kind == "greater_than_equal":
            text = f"{field_name} must be >= {_num(ctx['ge'])}"
        elif kind == "less_than_equal":
            text = f"{field_name} must be <= {_num(ctx['le'])}"
        elif kind == "less_than":
            text = f"{field_name} must be < {_num(ctx['lt'])}"
        elif kind == "extra_forbidden":
            text = f"unknown field {field_name!r}"
        else:
            text = err["msg"]
        msgs.append(f"{path}: {text}")
    return msgs


def _check_references(s: ScenarioSpec) -> List[str]:
    errs: List[str] = []
    H = s.horizon_ms

    unit_ids = [u.id for u in s.units]
    seen = set()
    for i, uid in enumerate(unit_ids):
        if uid in seen:
            errs.append(f"units[{i}].id: duplicate unit id {uid!r}")
        seen.add(uid)
    count = s.topology.count
    if count is not None and s.units and count != len(s.units):
        what = "units" if s.topology.template == "hostel" else "rooms"
        errs.append(f"topology.{what}: {count} does not match {len(s.units)} unit definitions")
    if count == 0 or (count is None and not s.units):
        errs.append("topology: no premises")

    for i, u in enumerate(s.units):
        if u.occupancy is None:
            continue
        t = 0
        for j, (a, b, _occ) in enumerate(u.occupancy):
            if a != t:
                errs.append(f"units[{i}].occupancy[{j}]: gap or overlap at t={t} ms")
                break
            if b <= a:
                errs.append(f"units[{i}].occupancy[{j}]: empty interval")
                break
            t = b
        else:
            if t < H:
                errs.append(f"units[{i}].occupancy: covers only [0, {t}) of horizon {H}")

    app_ids = set()
    known_units = set(unit_ids)
    for i, a in enumerate(s.appliances):
        if a.id in app_ids:
            errs.append(f"appliances[{i}].id: duplicate appliance id {a.id!r}")
        app_ids.add(a.id)
        if a.unit not in known_units:
            errs.append(f"appliances[{i}].unit: unknown unit {a.unit!r}")
        last = 0
        for j, (on, off) in enumerate(a.schedule):
            if on < last or off <= on:
                errs.append(f"appliances[{i}].schedule[{j}]: intervals must be increasing and non-empty")
                break
            if off > H:
                errs.append(f"appliances[{i}].schedule[{j}]: ends after horizon {H}")
                break
            last = off
        if a.signature is not None:
            for j, (dur, pw) in enumerate(a.signature):
                if dur is not None and dur <= 0:
                    errs.append(f"appliances[{i}].signature[{j}]: duration must be > 0 or null")
                if pw < 0:
                    errs.append(f"appliances[{i}].signature[{j}]: power must be >= 0")

    bl = s.base_load
    if bl.model == "constant" and bl.kw is None:
        errs.append("base_load.kw: required for model 'constant'")
    if bl.model == "nems" and bl.peak_kw is None:
        errs.append("base_load.peak_kw: required for model 'nems'")

    if s.drm is not None and s.drm.enabled:
        if s.topology.template != "hostel":
            errs.append("drm: peak shaving needs smart meters (hostel template)")
        hyst = s.drm.restore_hysteresis_kw
        if hyst is not None and hyst >= s.drm.threshold_kw:
            errs.append("drm.restore_hysteresis_kw: must be < threshold_kw")

    if s.pricing is not None:
        p = s.pricing
        if p.kind == "flat" and p.price is None:
            errs.append("pricing.price: required for kind 'flat'")
        if p.kind == "two_tier":
            if p.day_price is None or p.night_price is None:
                errs.append("pricing: two_tier needs day_price and night_price")
            if not p.day_start_h < p.day_end_h:
                errs.append("pricing.day_end_h: day window is inverted")

    for key, params in s.network.link_overrides.items():
        if ":" not in key:
            errs.append(f"network.link_overrides.{key}: expected '<Kind>:<a>--<b>'")
    for key, params in list(s.network.links.items()) + list(s.network.link_overrides.items()):
        for j, w in enumerate(params.congestion or []):
            if w.end_ms <= w.start_ms:
                errs.append(f"network.links.{getattr(key, 'value', key)}.congestion[{j}]: end_ms must be > start_ms")

    if s.sensors is not None:
        for i, u in enumerate(s.units):
            if u.occupancy is None:
                errs.append(f"units[{i}].occupancy: required when sensors are enabled")

    if s.scheduler is not None:
        sc = s.scheduler
        n_slots = len(sc.prices)
        if any(p <= 0 for p in sc.prices):
            errs.append("scheduler.prices: must be > 0")
        rids = set()
        for i, r in enumerate(sc.rooms):
            if r.id in rids:
                errs.append(f"scheduler.rooms[{i}].id: duplicate room id {r.id!r}")
            rids.add(r.id)
        qids = set()
        for i, q in enumerate(sc.requests):
            if q.id in qids:
                errs.append(f"scheduler.requests[{i}].id: duplicate request id {q.id!r}")
            qids.add(q.id)
            if q.latest_slot >= n_slots:
                errs.append(f"scheduler.requests[{i}].latest_slot: beyond last slot {n_slots - 1}")
    return errs


def validate_raw(raw: Dict[str, Any]) -> ScenarioSpec:
    try:
        spec = ScenarioSpec.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError(_format_pydantic(exc)) from None
    spec = normalize(spec)
    errs = _check_references(spec)
    if errs:
        raise ScenarioError(errs)
    return spec


def normalize(spec: ScenarioSpec) -> ScenarioSpec:
    """Fill template-derived defaults (auto-generated unit ids and kinds)."""
    spec = spec.model_copy(deep=True)
    tpl = spec.topology
    kind = "Hostel" if tpl.template == "hostel" else "Office"
    if not spec.units:
        prefix = "unit" if tpl.template == "hostel" else "room"
        spec.units = [UnitSpec(id=f"{prefix}{i + 1:02d}") for i in range(tpl.count or 0)]
    for u in spec.units:
        if u.kind is None:
            u.kind = kind
    if tpl.count is None and spec.units:
        if tpl.template == "hostel":
            tpl.units = len(spec.units)
        else:
            tpl.rooms = len(spec.units)
    return spec


def load_scenario(
    ref: Union[str, Path], overrides: Optional[List[str]] = None, seed: Optional[int] = None
) -> Tuple[ScenarioSpec, Dict[str, Any]]:
    """Read, override and validate a scenario; returns (spec, effective raw dict)."""
    raw = read_raw(ref)
    raw = apply_overrides(raw, overrides or [])
    if seed is not None:
        raw["seed"] = seed
    return validate_raw(raw), raw


def validate(ref: Union[str, Path]) -> List[str]:
    """Empty list when the scenario is valid, otherwise error strings with field paths."""
    try:
        spec, _ = load_scenario(ref)
        try:
            build_topology(spec)
        except TopologyError as exc:
            return [f"topology: {exc}"]
    except ScenarioError as exc:
        return exc.errors
    return []

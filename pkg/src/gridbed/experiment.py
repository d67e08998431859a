"""Assemble a scenario into a running simulation and collect its trace events."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from . import drm
from .network import (
    Delivered,
    MessageKind,
    NetworkTopology,
    NodeKind,
    Transport,
    build_topology,
    meter_id,
    mpn_id,
    plug_id,
    uhg_id,
)
from .premises import (
    Appliance,
    LoadProfile,
    OccupancyTrace,
    SensorModel,
    SensorSample,
    Unit,
    emit_sensor_samples,
    synthesize_nems_base,
)
from .scenario import ScenarioSpec
from .simcore import (
    CONTROLLER_TICK,
    LOAD_CHANGE,
    MESSAGE_DELIVERY,
    MS_PER_DAY,
    MS_PER_HOUR,
    MS_PER_S,
    PRICE_UPDATE,
    SENSOR_TICK,
    Engine,
    RunSummary,
)

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1
_MSG_SIZES = {
    MessageKind.METER_READING: 48,
    MessageKind.SENSOR_SAMPLE: 40,
    MessageKind.CONTROL_COMMAND: 32,
    MessageKind.PRICE_SIGNAL: 24,
    MessageKind.ACK: 16,
}


def build_units(spec: ScenarioSpec) -> List[Unit]:
    """Premises objects for a scenario: appliances attached, base load synthesized."""
    n = len(spec.units)
    bl = spec.base_load
    days = -(-spec.horizon_ms // MS_PER_DAY)
    steps = -(-spec.horizon_ms // (bl.resolution_s * MS_PER_S))
    if bl.model == "nems":
        profiles: List[Optional[LoadProfile]] = list(
            synthesize_nems_base(n, bl.peak_kw, spec.seed, bl.resolution_s, days, bl.variation)
        )
    elif bl.model == "constant":
        profiles = [LoadProfile(bl.resolution_s, [bl.kw] * steps) for _ in range(n)]
    else:
        profiles = [None] * n
    by_unit: Dict[str, List[Appliance]] = {u.id: [] for u in spec.units}
    for a in spec.appliances:
        by_unit[a.unit].append(
            Appliance(
                id=a.id,
                label=a.label,
                rated_power_w=a.rated_power_w,
                flexible=a.flexible,
                inconvenience_weight=a.inconvenience_weight,
                signature=[tuple(p) for p in a.signature] if a.signature else None,
                unit=a.unit,
            )
        )
    units = []
    for u, prof in zip(spec.units, profiles):
        occ = OccupancyTrace([tuple(iv) for iv in u.occupancy]) if u.occupancy is not None else None
        units.append(Unit(u.id, u.kind, by_unit[u.id], prof, occ))
    return units


def price_kind(spec: ScenarioSpec):
    p = spec.pricing
    if p is None:
        return None
    if p.kind == "flat":
        return drm.Flat(p.price)
    return drm.TwoTier(
        p.day_price,
        p.night_price,
        (int(round(p.day_start_h * MS_PER_HOUR)), int(round(p.day_end_h * MS_PER_HOUR))),
    )


@dataclass
class _Plug:
    """Smart-plug-side state of one appliance: user intent plus remote override."""

    appliance: Appliance
    shadow: Appliance
    desired: bool = False
    remote_off: bool = False
    phase_events: list = field(default_factory=list)
    shadow_events: list = field(default_factory=list)


class Simulation:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.horizon = spec.horizon_ms
        self.engine = Engine(seed=spec.seed, horizon=spec.horizon_ms)
        self.topology: NetworkTopology = build_topology(spec)
        self.transport = Transport(self.topology, self.engine)
        self.units = build_units(spec)
        self.events: List[dict] = []
        self._seq = 0
        self._last_demand: Optional[tuple] = None
        self.plugs: Dict[str, _Plug] = {}
        for unit in self.units:
            for app in unit.appliances:
                shadow = Appliance(app.id, app.label, app.rated_power_w, signature=list(app.signature))
                self.plugs[app.id] = _Plug(app, shadow)
        self.cloud = self.topology.cloud
        self.controller: Optional[drm.Controller] = None
        if spec.drm is not None and spec.drm.enabled:
            d = spec.drm
            self.policy = drm.DrmPolicy(
                d.threshold_kw, d.control_period_s, d.restore_hysteresis_kw, d.tick_offset_ms, d.command_timeout_s
            )
            flex = {
                a.id: drm.FlexInfo(a.rated_power_kw, a.inconvenience_weight)
                for u in self.units
                for a in u.appliances
                if a.flexible
            }
            self.controller = drm.Controller(self.policy, flex)
        else:
            self.policy = None
        self.prices: List[drm.PriceSignal] = []
        kind = price_kind(spec)
        if kind is not None:
            self.prices = drm.price_schedule(kind, self.horizon)
        self.engine.on(LOAD_CHANGE, self._call_payload)
        self.engine.on(SENSOR_TICK, self._call_payload)
        self.engine.on(CONTROLLER_TICK, self._call_payload)
        self.engine.on(PRICE_UPDATE, self._call_payload)
        self.engine.on(MESSAGE_DELIVERY, self._on_message)

    # -- trace ----------------------------------------------------------------

    def emit(self, category: str, **fields) -> None:
        ev = {"at": self.engine.now, "seq": self._seq, "category": category}
        ev.update(fields)
        self._seq += 1
        self.events.append(ev)

    @staticmethod
    def _call_payload(event) -> None:
        event.payload()

    # -- demand ----------------------------------------------------------------

    def base_kw(self, t: int) -> float:
        return sum(u.base_kw(t) for u in self.units)

    def unit_kw(self, unit: Unit, t: int) -> float:
        return unit.base_kw(t) + sum(a.power_kw(t) for a in unit.appliances)

    def _record_demand(self) -> None:
        t = self.engine.now
        base = self.base_kw(t)
        controlled = base + sum(p.appliance.power_kw(t) for p in self.plugs.values())
        uncontrolled = base + sum(p.shadow.power_kw(t) for p in self.plugs.values())
        key = (round(base, 12), round(controlled, 12), round(uncontrolled, 12))
        if key == self._last_demand:
            return
        self._last_demand = key
        self.emit(
            "Demand",
            kind="total",
            base_kw=round(base, 12),
            controlled_kw=round(controlled, 12),
            uncontrolled_kw=round(uncontrolled, 12),
        )

    def _schedule_phases(self, app: Appliance, store: list) -> None:
        for ev in store:
            ev.cancel()
        store.clear()
        if app.state:
            now = self.engine.now
            for off in app.phase_boundaries_ms():
                if now + off <= self.horizon:
                    store.append(self.engine.at(now + off, LOAD_CHANGE, self._record_demand))

    def _set_actual(self, plug: _Plug, on: bool, cause: str) -> None:
        app = plug.appliance
        before = app.state
        app.switch(self.engine.now, on)
        if app.state != before:
            self.emit("Demand", kind="appliance", appliance=app.id, on=app.state, cause=cause)
            self._schedule_phases(app, plug.phase_events)

    def _user_switch(self, plug: _Plug, on: bool) -> None:
        plug.desired = on
        if not on:
            # user switching off takes the appliance back from remote control
            plug.remote_off = False
        plug.shadow.switch(self.engine.now, on)
        self._schedule_phases(plug.shadow, plug.shadow_events)
        self._set_actual(plug, on and not plug.remote_off, "user")
        self._record_demand()

    # -- setup -----------------------------------------------------------------

    def _schedule_user_events(self) -> None:
        pending = []
        for a in self.spec.appliances:
            for on, off in a.schedule:
                pending.append((on, a.id, True))
                pending.append((off, a.id, False))
        pending.sort(key=lambda x: (x[0], x[1], x[2]))
        for t, app_id, on in pending:
            plug = self.plugs[app_id]
            self.engine.at(t, LOAD_CHANGE, lambda p=plug, o=on: self._user_switch(p, o))

    def _schedule_base_steps(self) -> None:
        profiles = [u.base_profile for u in self.units if u.base_profile is not None]
        if not profiles:
            return
        res = profiles[0].resolution_ms
        for t in range(res, self.horizon, res):
            self.engine.at(t, LOAD_CHANGE, self._record_demand)

    def _schedule_meters(self) -> None:
        if not self.topology.nodes_of(NodeKind.SMART_METER):
            return
        period = self.spec.network.meter_period_s * MS_PER_S

        def sample():
            t = self.engine.now
            for unit in self.units:
                reading = drm.MeterReading(
                    unit.id,
                    t,
                    round(self.unit_kw(unit, t), 12),
                    tuple(a.id for a in unit.appliances if a.flexible and a.state),
                )
                msg = self.transport.new_message(
                    meter_id(unit.id), self.cloud, MessageKind.METER_READING, reading,
                    _MSG_SIZES[MessageKind.METER_READING],
                )
                self.transport.send(msg)
            if t + period <= self.horizon:
                self.engine.at(t + period, SENSOR_TICK, sample)

        self.engine.at(0, SENSOR_TICK, sample)

    def _schedule_controller(self) -> None:
        if self.controller is None:
            return
        period = self.policy.control_period_s * MS_PER_S
        first = self.policy.tick_offset_ms

        def tick():
            t = self.engine.now
            decision = self.controller.tick(t)
            self.emit(
                "Shed",
                perceived_kw=round(decision.perceived_kw, 12),
                adjusted_kw=round(decision.adjusted_kw, 12),
                true_kw=round(self.base_kw(t) + sum(p.appliance.power_kw(t) for p in self.plugs.values()), 12),
                switch_off=[c.appliance_id for c in decision.commands if c.action == drm.Action.SWITCH_OFF],
                switch_on=[c.appliance_id for c in decision.commands if c.action == drm.Action.SWITCH_ON],
                insufficient=decision.insufficient,
            )
            for cmd in decision.commands:
                msg = self.transport.new_message(
                    self.cloud, plug_id(cmd.appliance_id), MessageKind.CONTROL_COMMAND, cmd,
                    _MSG_SIZES[MessageKind.CONTROL_COMMAND],
                )
                self.emit("Command", phase="issued", appliance=cmd.appliance_id, action=cmd.action.value, msg=msg.id)
                self.transport.send(msg)
            if t + period <= self.horizon:
                self.engine.at(t + period, CONTROLLER_TICK, tick)

        if first <= self.horizon:
            self.engine.at(first, CONTROLLER_TICK, tick)

    def _schedule_prices(self) -> None:
        uhgs = sorted(n.id for n in self.topology.nodes_of(NodeKind.UHG))
        for sig in self.prices:
            def push(sig=sig):
                self.emit("Price", price_sgd_per_kwh=sig.price_sgd_per_kwh)
                for uhg in uhgs:
                    msg = self.transport.new_message(
                        self.cloud, uhg, MessageKind.PRICE_SIGNAL, sig, _MSG_SIZES[MessageKind.PRICE_SIGNAL]
                    )
                    self.transport.send(msg)

            self.engine.at(sig.effective_at, PRICE_UPDATE, push)

    def _schedule_sensors(self) -> None:
        s = self.spec.sensors
        if s is None:
            return
        model = SensorModel(
            p_motion_when_occupied=s.p_motion_when_occupied,
            noise_occupied=tuple(s.noise_occupied),
            noise_unoccupied=tuple(s.noise_unoccupied),
        )
        office = self.spec.topology.template == "office_section"
        for unit in self.units:
            if office:
                mpns = [mpn_id(unit.id)]
            else:
                mpns = sorted(n.id for n in self.topology.nodes_of(NodeKind.MPN) if n.unit == unit.id)
            for mpn in mpns:
                emit_sensor_samples(
                    self.engine, mpn, unit.occupancy, s.period_s, model,
                    on_sample=lambda smp, u=unit.id: self._on_sample(u, smp),
                    end_ms=self.horizon + 1,
                )

    def _on_sample(self, unit_id: str, smp: SensorSample) -> None:
        self.emit(
            "Sensor",
            unit=unit_id,
            mpn=smp.mpn_id,
            motion=smp.motion,
            noise_db=round(smp.noise_db, 6),
            temp_c=round(smp.temp_c, 6),
            humidity_pct=round(smp.humidity_pct, 6),
            lux=round(smp.lux, 6),
        )
        msg = self.transport.new_message(
            smp.mpn_id, self.cloud, MessageKind.SENSOR_SAMPLE, None, _MSG_SIZES[MessageKind.SENSOR_SAMPLE]
        )
        self.transport.send(msg)

    # -- message handling -------------------------------------------------------

    def _on_message(self, event) -> None:
        msg, outcome = event.payload
        delivered = isinstance(outcome, Delivered)
        fields = dict(
            msg=msg.id,
            msg_kind=msg.kind.value,
            src=msg.src,
            dst=msg.dst,
            created_at=msg.created_at,
            size_bytes=msg.size_bytes,
            status="delivered" if delivered else "lost",
        )
        if not delivered:
            fields["lost_hop"] = outcome.hop
            fields["lost_link"] = outcome.link_id
        self.emit("Message", **fields)
        if not delivered:
            return
        kind = msg.kind
        if kind == MessageKind.METER_READING and self.controller is not None:
            self.controller.on_reading(msg.payload)
        elif kind == MessageKind.CONTROL_COMMAND:
            self._apply_command(msg)
        elif kind == MessageKind.ACK and self.controller is not None:
            app_id, action = msg.payload
            self.controller.on_ack(app_id, action)

    def _apply_command(self, msg) -> None:
        cmd: drm.ControlCommand = msg.payload
        cmd.applied_at = self.engine.now
        plug = self.plugs[cmd.appliance_id]
        if cmd.action == drm.Action.SWITCH_OFF:
            plug.remote_off = True
            self._set_actual(plug, False, "drm")
        else:
            plug.remote_off = False
            self._set_actual(plug, plug.desired, "drm")
        self.emit(
            "Command",
            phase="applied",
            appliance=cmd.appliance_id,
            action=cmd.action.value,
            msg=msg.id,
            issued_at=cmd.issued_at,
        )
        self._record_demand()
        ack = self.transport.new_message(
            plug_id(cmd.appliance_id), self.cloud, MessageKind.ACK, (cmd.appliance_id, cmd.action),
            _MSG_SIZES[MessageKind.ACK],
        )
        self.transport.send(ack)

    # -- run ---------------------------------------------------------------------

    def run(self) -> RunSummary:
        self._schedule_user_events()
        self._schedule_base_steps()
        self.engine.at(0, LOAD_CHANGE, self._record_demand)
        self._schedule_meters()
        self._schedule_prices()
        self._schedule_sensors()
        self._schedule_controller()
        summary = self.engine.run_until(self.horizon)
        log.info("simulated %d events to t=%d ms", summary.events_processed, summary.final_time)
        return summary


def simulate(spec: ScenarioSpec) -> Simulation:
    sim = Simulation(spec)
    sim.run()
    return sim

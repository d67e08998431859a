"""NAN/HAN topology model and lossy, jittered message transport."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .simcore import MESSAGE_DELIVERY, Engine, RngRegistry

if TYPE_CHECKING:
    from .scenario import ScenarioSpec


class NodeKind(str, Enum):
    SMART_METER = "SmartMeter"
    DATA_CONCENTRATOR = "DataConcentrator"
    TVWS_BASE_STATION = "TvwsBaseStation"
    CLOUD = "Cloud"
    UHG = "UHG"
    SMART_PLUG = "SmartPlug"
    MPN = "MPN"
    BLE_SENSOR = "BleSensor"
    WIFI_AP = "WifiAP"
    ZIGBEE_RELAY = "ZigBeeRelay"


class LinkKind(str, Enum):
    BPL = "BPL"
    TVWS = "TVWS"
    WIFI = "WiFi"
    ZIGBEE = "ZigBee"
    ZWAVE = "ZWave"
    BLE = "BLE"
    FIBER = "Fiber"


class MessageKind(str, Enum):
    METER_READING = "MeterReading"
    SENSOR_SAMPLE = "SensorSample"
    CONTROL_COMMAND = "ControlCommand"
    PRICE_SIGNAL = "PriceSignal"
    ACK = "Ack"


# Non-normative defaults; the real TVWS figures are not available.
DEFAULT_LATENCY_MS = {
    LinkKind.BPL: 10,
    LinkKind.TVWS: 30,
    LinkKind.WIFI: 5,
    LinkKind.ZIGBEE: 15,
    LinkKind.ZWAVE: 20,
    LinkKind.BLE: 10,
    LinkKind.FIBER: 2,
}
DEFAULT_JITTER_FRACTION = 0.2

N = NodeKind
ALLOWED_ENDPOINTS: Dict[LinkKind, set] = {
    LinkKind.BPL: {frozenset((N.SMART_METER, N.DATA_CONCENTRATOR))},
    LinkKind.TVWS: {frozenset((N.DATA_CONCENTRATOR, N.TVWS_BASE_STATION))},
    LinkKind.FIBER: {frozenset((N.TVWS_BASE_STATION, N.CLOUD)), frozenset((N.WIFI_AP, N.CLOUD))},
    LinkKind.WIFI: {frozenset((N.UHG, N.WIFI_AP))},
    LinkKind.ZIGBEE: {
        frozenset((N.MPN, N.UHG)),
        frozenset((N.MPN, N.ZIGBEE_RELAY)),
        frozenset((N.ZIGBEE_RELAY,)),
        frozenset((N.ZIGBEE_RELAY, N.UHG)),
    },
    LinkKind.ZWAVE: {frozenset((N.SMART_PLUG, N.UHG))},
    LinkKind.BLE: {frozenset((N.BLE_SENSOR, N.UHG))},
}
HAN_DEVICE_KINDS = (N.SMART_PLUG, N.MPN, N.BLE_SENSOR)


class TopologyError(ValueError):
    pass


class NoRouteError(LookupError):
    pass


def default_link_params(kind: LinkKind) -> dict:
    base = DEFAULT_LATENCY_MS[kind]
    return {
        "base_latency_ms": base,
        "jitter_ms": int(round(base * DEFAULT_JITTER_FRACTION)),
        "loss_prob": 0.0,
    }


@dataclass
class CongestionWindow:
    """Interval during which a link's loss and latency are inflated."""

    start_ms: int
    end_ms: int
    latency_multiplier: float = 1.0
    loss_multiplier: float = 1.0
    extra_loss_prob: float = 0.0

    def covers(self, t: int) -> bool:
        return self.start_ms <= t < self.end_ms


@dataclass
class LinkSpec:
    kind: LinkKind
    endpoints: Tuple[str, str]
    base_latency_ms: int = 0
    jitter_ms: int = 0
    loss_prob: float = 0.0
    congestion: List[CongestionWindow] = field(default_factory=list)

    def __post_init__(self):
        self.kind = LinkKind(self.kind)
        if not 0.0 <= self.loss_prob <= 1.0:
            raise TopologyError(f"loss_prob must be in [0, 1], got {self.loss_prob}")
        if self.base_latency_ms < 0 or self.jitter_ms < 0:
            raise TopologyError("latency and jitter must be non-negative")

    @property
    def id(self) -> str:
        a, b = self.endpoints
        return f"{self.kind.value}:{a}--{b}"

    def params_at(self, t: int) -> Tuple[float, float, int]:
        """(loss_prob, base_latency_ms, jitter_ms) in force at time ``t``."""
        loss, base = self.loss_prob, float(self.base_latency_ms)
        for win in self.congestion:
            if win.covers(t):
                loss = min(1.0, loss * win.loss_multiplier + win.extra_loss_prob)
                base = base * win.latency_multiplier
        return loss, base, self.jitter_ms


@dataclass
class Node:
    id: str
    kind: NodeKind
    unit: Optional[str] = None


@dataclass
class Message:
    id: str
    src: str
    dst: str
    kind: MessageKind
    size_bytes: int = 64
    created_at: int = 0
    payload: object = None
    delivered_at: Optional[int] = None
    hop_trace: List[Tuple[str, int]] = field(default_factory=list)


@dataclass(frozen=True)
class Delivered:
    delivered_at: int


@dataclass(frozen=True)
class Lost:
    hop: int
    link_id: str
    at: int


Outcome = Union[Delivered, Lost]


@dataclass(frozen=True)
class LatencyStats:
    mean_ms: float
    p95_ms: float
    loss_rate: float
    samples: int


class NetworkTopology:
    def __init__(self):
        self.nodes: Dict[str, Node] = {}
        self.links: Dict[str, LinkSpec] = {}
        self._adj: Dict[str, List[Tuple[str, str]]] = {}
        self._routes: Dict[Tuple[str, str], List[Tuple[LinkSpec, str, str]]] = {}

    def __len__(self):
        return len(self.nodes)

    def add_node(self, node_id: str, kind: NodeKind, unit: Optional[str] = None) -> Node:
        if node_id in self.nodes:
            raise TopologyError(f"duplicate node id {node_id!r}")
        node = self.nodes[node_id] = Node(node_id, NodeKind(kind), unit)
        self._adj[node_id] = []
        return node

    def add_link(self, link: LinkSpec) -> LinkSpec:
        a, b = link.endpoints
        for end in (a, b):
            if end not in self.nodes:
                raise TopologyError(f"link {link.id} references unknown node {end!r}")
        pair = frozenset((self.nodes[a].kind, self.nodes[b].kind))
        if pair not in ALLOWED_ENDPOINTS[link.kind]:
            raise TopologyError(
                f"{link.kind.value} cannot connect {self.nodes[a].kind.value} and {self.nodes[b].kind.value}"
            )
        if link.id in self.links:
            raise TopologyError(f"duplicate link {link.id}")
        self.links[link.id] = link
        self._adj[a].append((b, link.id))
        self._adj[b].append((a, link.id))
        self._routes.clear()
        return link

    def remove_link(self, link_id: str) -> None:
        link = self.links.pop(link_id)
        a, b = link.endpoints
        self._adj[a] = [(n, lid) for n, lid in self._adj[a] if lid != link_id]
        self._adj[b] = [(n, lid) for n, lid in self._adj[b] if lid != link_id]
        self._routes.clear()

    def nodes_of(self, kind: NodeKind) -> List[Node]:
        return [n for n in self.nodes.values() if n.kind == kind]

    @property
    def cloud(self) -> str:
        clouds = self.nodes_of(NodeKind.CLOUD)
        if len(clouds) != 1:
            raise TopologyError(f"expected exactly one Cloud node, found {len(clouds)}")
        return clouds[0].id

    def route(self, src: str, dst: str) -> List[Tuple[LinkSpec, str, str]]:
        """Fewest-hop route as ``(link, from, to)`` triples; BFS with sorted neighbours."""
        key = (src, dst)
        cached = self._routes.get(key)
        if cached is not None:
            return cached
        if src not in self.nodes or dst not in self.nodes:
            raise NoRouteError(f"unknown endpoint in {src} -> {dst}")
        prev: Dict[str, Tuple[str, str]] = {src: ("", "")}
        frontier = deque([src])
        while frontier and dst not in prev:
            cur = frontier.popleft()
            for nxt, lid in sorted(self._adj[cur]):
                if nxt not in prev:
                    prev[nxt] = (cur, lid)
                    frontier.append(nxt)
        if dst not in prev:
            raise NoRouteError(f"no route from {src} to {dst}")
        hops = []
        node = dst
        while node != src:
            parent, lid = prev[node]
            hops.append((self.links[lid], parent, node))
            node = parent
        hops.reverse()
        self._routes[key] = hops
        return hops

    def validate(self) -> None:
        if not self.nodes:
            raise TopologyError("no premises")
        problems = []
        cloud = self.cloud
        uhg_by_unit = {n.unit: n.id for n in self.nodes_of(NodeKind.UHG)}
        for node in self.nodes.values():
            if node.kind == NodeKind.CLOUD:
                continue
            try:
                hops = self.route(node.id, cloud)
            except NoRouteError:
                problems.append(f"{node.id} ({node.kind.value}) has no path to Cloud")
                continue
            via = {to for _, _, to in hops}
            if node.kind == NodeKind.SMART_METER and not any(
                self.nodes[v].kind == NodeKind.DATA_CONCENTRATOR for v in via
            ):
                problems.append(f"{node.id} does not reach Cloud through a DataConcentrator")
            if node.kind in HAN_DEVICE_KINDS:
                uhg = uhg_by_unit.get(node.unit)
                if uhg is None or uhg not in via:
                    problems.append(f"{node.id} does not reach Cloud through its UHG")
        if problems:
            raise TopologyError("; ".join(problems))

    def echo(self) -> List[dict]:
        """Flat node listing used in reports for scenario debugging."""
        out = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            links = [
                {
                    "link": lid,
                    "peer": peer,
                    "kind": self.links[lid].kind.value,
                    "base_latency_ms": self.links[lid].base_latency_ms,
                    "jitter_ms": self.links[lid].jitter_ms,
                    "loss_prob": self.links[lid].loss_prob,
                }
                for peer, lid in sorted(self._adj[node_id], key=lambda x: x[1])
            ]
            out.append({"id": node_id, "kind": node.kind.value, "unit": node.unit, "links": links})
        return out

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for node in self.nodes.values():
            out[node.kind.value] = out.get(node.kind.value, 0) + 1
        return dict(sorted(out.items()))


# -- templates ---------------------------------------------------------------


class LinkFactory:
    """Builds LinkSpecs from per-kind parameters with optional per-link overrides."""

    def __init__(self, per_kind: Optional[Dict[str, dict]] = None, per_link: Optional[Dict[str, dict]] = None):
        self.per_kind = {LinkKind(k): v for k, v in (per_kind or {}).items()}
        self.per_link = per_link or {}

    def __call__(self, kind: LinkKind, a: str, b: str) -> LinkSpec:
        params = default_link_params(kind)
        params.update(self.per_kind.get(kind, {}))
        link_id = f"{kind.value}:{a}--{b}"
        params.update(self.per_link.get(link_id, {}))
        congestion = [
            w if isinstance(w, CongestionWindow) else CongestionWindow(**w)
            for w in params.pop("congestion", [])
        ]
        return LinkSpec(kind=kind, endpoints=(a, b), congestion=congestion, **params)


def hostel_topology(
    unit_ids: Sequence[str],
    plugs_by_unit: Dict[str, Sequence[str]],
    units_per_block: int = 10,
    mpns_per_unit: int = 4,
    ble_per_unit: int = 0,
    links: Optional[LinkFactory] = None,
) -> NetworkTopology:
    """Residential layout: one concentrator and Wi-Fi AP per apartment block.

    Meter path: SmartMeter -BPL- DataConcentrator -TVWS- TvwsBaseStation -Fiber- Cloud.
    HAN path:   device -(ZigBee|ZWave|BLE)- UHG -WiFi- WifiAP -Fiber- Cloud.
    """
    links = links or LinkFactory()
    topo = NetworkTopology()
    if not unit_ids:
        return topo
    topo.add_node("cloud", NodeKind.CLOUD)
    topo.add_node("tvws-bs", NodeKind.TVWS_BASE_STATION)
    topo.add_link(links(LinkKind.FIBER, "tvws-bs", "cloud"))
    for start in range(0, len(unit_ids), units_per_block):
        block = f"b{start // units_per_block + 1:02d}"
        dc, ap = f"dc-{block}", f"ap-{block}"
        topo.add_node(dc, NodeKind.DATA_CONCENTRATOR)
        topo.add_node(ap, NodeKind.WIFI_AP)
        topo.add_link(links(LinkKind.TVWS, dc, "tvws-bs"))
        topo.add_link(links(LinkKind.FIBER, ap, "cloud"))
        for unit in unit_ids[start : start + units_per_block]:
            sm, uhg = meter_id(unit), uhg_id(unit)
            topo.add_node(sm, NodeKind.SMART_METER, unit)
            topo.add_node(uhg, NodeKind.UHG, unit)
            topo.add_link(links(LinkKind.BPL, sm, dc))
            topo.add_link(links(LinkKind.WIFI, uhg, ap))
            for i in range(1, mpns_per_unit + 1):
                mpn = f"mpn-{unit}-{i}"
                topo.add_node(mpn, NodeKind.MPN, unit)
                topo.add_link(links(LinkKind.ZIGBEE, mpn, uhg))
            for i in range(1, ble_per_unit + 1):
                ble = f"ble-{unit}-{i}"
                topo.add_node(ble, NodeKind.BLE_SENSOR, unit)
                topo.add_link(links(LinkKind.BLE, ble, uhg))
            for appliance in plugs_by_unit.get(unit, ()):
                plug = plug_id(appliance)
                topo.add_node(plug, NodeKind.SMART_PLUG, unit)
                topo.add_link(links(LinkKind.ZWAVE, plug, uhg))
    return topo


OFFICE_UNIT = "office"


def office_topology(
    room_ids: Sequence[str],
    mpns_per_relay: int = 5,
    links: Optional[LinkFactory] = None,
) -> NetworkTopology:
    """Office section: one MPN per room, relays chained in a line to a single UHG."""
    links = links or LinkFactory()
    topo = NetworkTopology()
    if not room_ids:
        return topo
    topo.add_node("cloud", NodeKind.CLOUD)
    topo.add_node("ap-office", NodeKind.WIFI_AP)
    topo.add_node(uhg_id(OFFICE_UNIT), NodeKind.UHG, OFFICE_UNIT)
    topo.add_link(links(LinkKind.FIBER, "ap-office", "cloud"))
    topo.add_link(links(LinkKind.WIFI, uhg_id(OFFICE_UNIT), "ap-office"))
    n_relays = math.ceil(len(room_ids) / mpns_per_relay)
    upstream = uhg_id(OFFICE_UNIT)
    relays = []
    for r in range(1, n_relays + 1):
        relay = f"relay-{r}"
        topo.add_node(relay, NodeKind.ZIGBEE_RELAY, OFFICE_UNIT)
        topo.add_link(links(LinkKind.ZIGBEE, relay, upstream))
        relays.append(relay)
        upstream = relay
    for i, room in enumerate(room_ids):
        mpn = mpn_id(room)
        topo.add_node(mpn, NodeKind.MPN, OFFICE_UNIT)
        topo.add_link(links(LinkKind.ZIGBEE, mpn, relays[i // mpns_per_relay]))
    return topo


def meter_id(unit: str) -> str:
    return f"sm-{unit}"


def uhg_id(unit: str) -> str:
    return f"uhg-{unit}"


def plug_id(appliance: str) -> str:
    return f"plug-{appliance}"


def mpn_id(room: str) -> str:
    return f"mpn-{room}"


def build_topology(scenario: "ScenarioSpec") -> NetworkTopology:
    """Instantiate the scenario's template and validate reachability."""
    tpl = scenario.topology
    links = LinkFactory(
        {k: v.model_dump(exclude_none=True) for k, v in scenario.network.links.items()},
        {k: v.model_dump(exclude_none=True) for k, v in scenario.network.link_overrides.items()},
    )
    unit_ids = [u.id for u in scenario.units]
    if tpl.template == "hostel":
        plugs: Dict[str, List[str]] = {}
        for app in scenario.appliances:
            plugs.setdefault(app.unit, []).append(app.id)
        topo = hostel_topology(
            unit_ids,
            plugs,
            units_per_block=tpl.units_per_block,
            mpns_per_unit=tpl.mpns_per_unit,
            ble_per_unit=tpl.ble_sensors_per_unit,
            links=links,
        )
    else:
        topo = office_topology(unit_ids, mpns_per_relay=tpl.mpns_per_relay, links=links)
    for link_id in scenario.network.remove_links:
        if link_id not in topo.links:
            raise TopologyError(f"cannot remove unknown link {link_id}")
        topo.remove_link(link_id)
    topo.validate()
    return topo


# -- transport ---------------------------------------------------------------


def _link_stream_id(link: LinkSpec) -> str:
    return f"link:{link.id}"


def traverse(hops, t0: int, rng: RngRegistry) -> Tuple[Outcome, List[Tuple[str, int]]]:
    """Walk a route hop by hop, drawing loss then jitter from each link's stream."""
    t = t0
    trace = [(hops[0][1], t0)] if hops else []
    for i, (link, _a, b) in enumerate(hops):
        stream = rng.register(_link_stream_id(link))
        loss, base, jitter = link.params_at(t)
        if stream.uniform() < loss:
            return Lost(i, link.id, t), trace
        delay = int(round(base))
        if jitter:
            delay += stream.int_between(-jitter, jitter)
        t += max(delay, 0)
        trace.append((b, t))
    return Delivered(t), trace


class Transport:
    """Routes messages over a topology and schedules their delivery or loss."""

    def __init__(self, topology: NetworkTopology, engine: Engine):
        self.topology = topology
        self.engine = engine
        self._next_id = 0

    def new_message(self, src: str, dst: str, kind: MessageKind, payload=None, size_bytes: int = 64) -> Message:
        self._next_id += 1
        return Message(
            id=f"m{self._next_id}",
            src=src,
            dst=dst,
            kind=MessageKind(kind),
            size_bytes=size_bytes,
            created_at=self.engine.now,
            payload=payload,
        )

    def send(self, msg: Message, at: Optional[int] = None) -> Outcome:
        """Transport ``msg`` and schedule a MESSAGE_DELIVERY event for its fate.

        The event fires at the delivery time, or at the time the message reached
        the dropping hop; its payload is ``(msg, outcome)``.
        """
        at = self.engine.now if at is None else at
        msg.created_at = at
        hops = self.topology.route(msg.src, msg.dst)
        outcome, trace = traverse(hops, at, self.engine.rng)
        msg.hop_trace = trace
        if isinstance(outcome, Delivered):
            msg.delivered_at = outcome.delivered_at
            self.engine.at(outcome.delivered_at, MESSAGE_DELIVERY, (msg, outcome))
        else:
            self.engine.at(outcome.at, MESSAGE_DELIVERY, (msg, outcome))
        return outcome

    def path_latency_stats(self, src: str, dst: str, samples: int, at: int = 0) -> LatencyStats:
        return path_latency_stats(self.topology, src, dst, samples, self.engine.rng, at)


def path_latency_stats(
    topology: NetworkTopology,
    src: str,
    dst: str,
    samples: int,
    rng: Union[RngRegistry, int] = 0,
    at: int = 0,
) -> LatencyStats:
    """Monte-Carlo latency/loss estimate over the route's link streams."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if isinstance(rng, int):
        rng = RngRegistry(rng)
    hops = topology.route(src, dst)
    latencies = []
    lost = 0
    for _ in range(samples):
        outcome, _ = traverse(hops, at, rng)
        if isinstance(outcome, Delivered):
            latencies.append(outcome.delivered_at - at)
        else:
            lost += 1
    if latencies:
        arr = np.asarray(latencies, dtype=float)
        mean, p95 = float(arr.mean()), float(np.percentile(arr, 95))
    else:
        mean = p95 = math.nan
    return LatencyStats(mean, p95, lost / samples, samples)


def route_link_ids(topology: NetworkTopology, src: str, dst: str) -> List[str]:
    return [link.id for link, _, _ in topology.route(src, dst)]


def iter_links(topology: NetworkTopology, kinds: Iterable[LinkKind]) -> List[LinkSpec]:
    kinds = {LinkKind(k) for k in kinds}
    return [l for l in topology.links.values() if l.kind in kinds]

"""Meeting-room scheduling under per-slot energy prices.

Time is slotted; a meeting occupies ``duration_slots`` consecutive slots of
one room, and a room draws ``active_power_kw`` for every occupied slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

EXACT_MAX_REQUESTS = 8
EXACT_MAX_ROOMS = 4
EXACT_MAX_SLOTS = 12
_EPS = 1e-12


class Infeasible(Exception):
    """No assignment places every request."""


@dataclass(frozen=True)
class MeetingRequest:
    id: str
    duration_slots: int
    earliest_slot: int
    latest_slot: int
    attendees: int = 1

    def __post_init__(self):
        if self.duration_slots < 1:
            raise ValueError(f"{self.id}: duration_slots must be >= 1")
        if self.attendees < 1:
            raise ValueError(f"{self.id}: attendees must be >= 1")

    @property
    def window_fits(self) -> bool:
        return self.latest_slot - self.earliest_slot + 1 >= self.duration_slots


@dataclass(frozen=True)
class RoomResource:
    id: str
    capacity: int
    active_power_kw: float
    slot_length_min: int = 60

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"{self.id}: capacity must be >= 1")
        if self.active_power_kw <= 0:
            raise ValueError(f"{self.id}: active_power_kw must be > 0")
        if self.slot_length_min < 1:
            raise ValueError(f"{self.id}: slot_length_min must be >= 1")

    @property
    def slot_hours(self) -> float:
        return self.slot_length_min / 60.0


@dataclass
class ScheduleAssignment:
    placements: Dict[str, Tuple[str, int]]
    objective_sgd: float
    unplaced: List[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.unplaced

    def to_dict(self) -> dict:
        return {
            "placements": {k: {"room": r, "start_slot": s} for k, (r, s) in sorted(self.placements.items())},
            "objective_sgd": self.objective_sgd,
            "unplaced": list(self.unplaced),
        }


def _placement_cost(req: MeetingRequest, room: RoomResource, start: int, prices: Sequence[float]) -> float:
    return room.active_power_kw * room.slot_hours * sum(prices[start : start + req.duration_slots])


def check_feasible(
    placements: Dict[str, Tuple[str, int]],
    requests: Sequence[MeetingRequest],
    rooms: Sequence[RoomResource],
    n_slots: int,
) -> None:
    """Raise ValueError on overlap, window, capacity or unknown-id violations."""
    req_by_id = {r.id: r for r in requests}
    room_by_id = {r.id: r for r in rooms}
    used: Dict[str, set] = {}
    for req_id, (room_id, start) in placements.items():
        if req_id not in req_by_id:
            raise ValueError(f"unknown request {req_id}")
        if room_id not in room_by_id:
            raise ValueError(f"unknown room {room_id}")
        req, room = req_by_id[req_id], room_by_id[room_id]
        end = start + req.duration_slots - 1
        if start < req.earliest_slot or end > req.latest_slot or start < 0 or end >= n_slots:
            raise ValueError(f"{req_id} at slot {start} violates its window")
        if req.attendees > room.capacity:
            raise ValueError(f"{req_id} needs {req.attendees} seats, {room_id} has {room.capacity}")
        slots = used.setdefault(room_id, set())
        span = set(range(start, end + 1))
        if slots & span:
            raise ValueError(f"{req_id} overlaps another meeting in {room_id}")
        slots |= span


def schedule_cost(
    assignment: ScheduleAssignment | Dict[str, Tuple[str, int]],
    requests: Sequence[MeetingRequest],
    rooms: Sequence[RoomResource],
    prices: Sequence[float],
) -> float:
    """Energy cost (SGD) of a feasible assignment."""
    placements = assignment.placements if isinstance(assignment, ScheduleAssignment) else assignment
    check_feasible(placements, requests, rooms, len(prices))
    req_by_id = {r.id: r for r in requests}
    room_by_id = {r.id: r for r in rooms}
    return sum(
        _placement_cost(req_by_id[q], room_by_id[r], s, prices) for q, (r, s) in sorted(placements.items())
    )


class _Instance:
    def __init__(self, requests, rooms, prices, objective="cost"):
        if objective not in ("cost", "energy"):
            raise ValueError("objective must be 'cost' or 'energy'")
        self.requests = sorted(requests, key=lambda r: r.id)
        self.rooms = sorted(rooms, key=lambda r: r.id)
        self.prices = list(prices) if objective == "cost" else [1.0] * len(prices)
        self.n_slots = len(prices)
        # options[i] = list of (cost, room index, start, mask), lexicographic by (room id, start)
        self.options: List[List[Tuple[float, int, int, int]]] = []
        for req in self.requests:
            opts = []
            if req.window_fits:
                lo = max(req.earliest_slot, 0)
                hi = min(req.latest_slot, self.n_slots - 1) - req.duration_slots + 1
                for k, room in enumerate(self.rooms):
                    if room.capacity < req.attendees:
                        continue
                    for s in range(lo, hi + 1):
                        mask = ((1 << req.duration_slots) - 1) << s
                        opts.append((_placement_cost(req, room, s, self.prices), k, s, mask))
            self.options.append(opts)

    def assignment(self, chosen: Dict[int, Tuple[float, int, int, int]]) -> ScheduleAssignment:
        placements = {
            self.requests[i].id: (self.rooms[o[1]].id, o[2]) for i, o in sorted(chosen.items())
        }
        unplaced = [r.id for i, r in enumerate(self.requests) if i not in chosen]
        total = sum(o[0] for _, o in sorted(chosen.items()))
        return ScheduleAssignment(placements, total, unplaced)


def within_exact_bounds(requests, rooms, prices) -> bool:
    return (
        len(requests) <= EXACT_MAX_REQUESTS
        and len(rooms) <= EXACT_MAX_ROOMS
        and len(prices) <= EXACT_MAX_SLOTS
    )


def solve_exact(
    requests: Sequence[MeetingRequest],
    rooms: Sequence[RoomResource],
    prices: Sequence[float],
    objective: str = "cost",
) -> ScheduleAssignment:
    """Globally cheapest complete assignment by depth-first branch and bound.

    Requests are branched in id order and options in (room id, slot) order,
    and only strict improvements replace the incumbent, so among equal-cost
    optima the lexicographically first one is returned.
    """
    if not within_exact_bounds(requests, rooms, prices):
        raise ValueError(
            f"exact solver limited to {EXACT_MAX_REQUESTS} requests, {EXACT_MAX_ROOMS} rooms, "
            f"{EXACT_MAX_SLOTS} slots"
        )
    inst = _Instance(requests, rooms, prices, objective)
    n = len(inst.requests)
    if n == 0:
        return ScheduleAssignment({}, 0.0)
    for i, opts in enumerate(inst.options):
        if not opts:
            raise Infeasible(f"request {inst.requests[i].id} has no feasible room/slot")
    min_cost = [min(o[0] for o in opts) for opts in inst.options]
    rest = [0.0] * (n + 1)
    for i in range(n - 1, -1, -1):
        rest[i] = rest[i + 1] + min_cost[i]

    best_cost = float("inf")
    best: Optional[Dict[int, tuple]] = None
    used = [0] * len(inst.rooms)
    chosen: Dict[int, tuple] = {}

    def dfs(i: int, cost: float):
        nonlocal best_cost, best
        if cost + rest[i] >= best_cost - _EPS:
            return
        if i == n:
            best_cost, best = cost, dict(chosen)
            return
        for opt in inst.options[i]:
            c, k, _s, mask = opt
            if used[k] & mask:
                continue
            used[k] |= mask
            chosen[i] = opt
            dfs(i + 1, cost + c)
            del chosen[i]
            used[k] &= ~mask

    dfs(0, 0.0)
    if best is None:
        raise Infeasible("no assignment places every request")
    return inst.assignment(best)


def solve_heuristic(
    requests: Sequence[MeetingRequest],
    rooms: Sequence[RoomResource],
    prices: Sequence[float],
    objective: str = "cost",
    feasibility_node_limit: int = 200_000,
) -> ScheduleAssignment:
    """Greedy placement followed by relocation and pairwise local search.

    The primary pass places requests in descending ``duration x power``
    order at their cheapest free (room, start). Two further passes order by
    regret (gap between a request's two cheapest options) and by option
    count; each pass is polished by local search and the cheapest complete
    result wins. Unplaceable requests trigger an ejection repair and,
    failing that, a bounded feasibility search. Requests that remain
    unplaced are listed in ``unplaced``.
    """
    inst = _Instance(requests, rooms, prices, objective)
    n = len(inst.requests)

    def demand(i):
        req = inst.requests[i]
        powers = [inst.rooms[o[1]].active_power_kw for o in inst.options[i]]
        return req.duration_slots * (min(powers) if powers else 0.0)

    def regret(i):
        costs = sorted(o[0] for o in inst.options[i])
        return costs[1] - costs[0] if len(costs) > 1 else float("inf")

    rid = lambda i: inst.requests[i].id  # noqa: E731
    orders = [
        sorted(range(n), key=lambda i: (-demand(i), rid(i))),
        sorted(range(n), key=lambda i: (-regret(i), -demand(i), rid(i))),
        sorted(range(n), key=lambda i: (len(inst.options[i]), -demand(i), rid(i))),
    ]
    best: Optional[Dict[int, tuple]] = None
    best_key = None
    searched = False
    for order in orders:
        chosen = _greedy_pass(inst, order)
        if len(chosen) < sum(1 for i in range(n) if inst.options[i]) and not searched:
            searched = True
            full = _feasible_search(inst, feasibility_node_limit)
            if full is not None:
                chosen = full
        used = [0] * len(inst.rooms)
        for o in chosen.values():
            used[o[1]] |= o[3]
        _local_search(inst, chosen, used)
        key = (-len(chosen), sum(o[0] for o in chosen.values()))
        if best_key is None or key[0] < best_key[0] or (key[0] == best_key[0] and key[1] < best_key[1] - _EPS):
            best, best_key = chosen, key
    return inst.assignment(best or {})


def _greedy_pass(inst, order) -> Dict[int, tuple]:
    used = [0] * len(inst.rooms)
    chosen: Dict[int, tuple] = {}
    for i in order:
        opt = _cheapest_free(inst.options[i], used)
        if opt is not None:
            _place(chosen, used, i, opt)
    for i in order:
        if i not in chosen and inst.options[i]:
            _eject_repair(inst, chosen, used, i)
    return chosen


def _cheapest_free(options, used):
    best = None
    for opt in options:
        if used[opt[1]] & opt[3]:
            continue
        if best is None or opt[0] < best[0] - _EPS:
            best = opt
    return best


def _place(chosen, used, i, opt):
    chosen[i] = opt
    used[opt[1]] |= opt[3]


def _remove(chosen, used, i):
    opt = chosen.pop(i)
    used[opt[1]] &= ~opt[3]
    return opt


def _eject_repair(inst, chosen, used, i) -> bool:
    for opt in sorted(inst.options[i], key=lambda o: o[0]):
        blockers = [j for j, o in chosen.items() if o[1] == opt[1] and o[3] & opt[3]]
        if len(blockers) != 1:
            continue
        j = blockers[0]
        old = _remove(chosen, used, j)
        _place(chosen, used, i, opt)
        alt = _cheapest_free(inst.options[j], used)
        if alt is not None:
            _place(chosen, used, j, alt)
            return True
        _remove(chosen, used, i)
        _place(chosen, used, j, old)
    return False


def _feasible_search(inst, node_limit):
    """Any complete assignment, most-constrained request first, cheapest option first."""
    n = len(inst.requests)
    order = sorted(range(n), key=lambda i: (len(inst.options[i]), inst.requests[i].id))
    opts = {i: sorted(inst.options[i], key=lambda o: o[0]) for i in order}
    used = [0] * len(inst.rooms)
    chosen: Dict[int, tuple] = {}
    nodes = 0

    def dfs(pos):
        nonlocal nodes
        nodes += 1
        if nodes > node_limit:
            return False
        if pos == n:
            return True
        i = order[pos]
        for opt in opts[i]:
            if used[opt[1]] & opt[3]:
                continue
            _place(chosen, used, i, opt)
            if dfs(pos + 1):
                return True
            _remove(chosen, used, i)
        return False

    return dict(chosen) if dfs(0) else None


def _local_search(inst, chosen, used) -> None:
    improved = True
    while improved:
        improved = False
        # single relocation
        for i in sorted(chosen):
            cur = _remove(chosen, used, i)
            alt = _cheapest_free(inst.options[i], used)
            if alt is not None and alt[0] < cur[0] - _EPS:
                _place(chosen, used, i, alt)
                improved = True
            else:
                _place(chosen, used, i, cur)
        if improved:
            continue
        # joint re-placement of a pair
        placed = sorted(chosen)
        for a_pos, a in enumerate(placed):
            for b in placed[a_pos + 1 :]:
                if _improve_pair(inst, chosen, used, a, b):
                    improved = True
                    break
            if improved:
                break


def _improve_pair(inst, chosen, used, a, b) -> bool:
    oa, ob = _remove(chosen, used, a), _remove(chosen, used, b)
    current = oa[0] + ob[0]
    best = None
    best_cost = current - _EPS
    opts_b = sorted(inst.options[b], key=lambda o: o[0])
    min_b = opts_b[0][0]
    for pa in sorted(inst.options[a], key=lambda o: o[0]):
        if pa[0] + min_b >= best_cost:
            break
        if used[pa[1]] & pa[3]:
            continue
        for pb in opts_b:
            if pa[0] + pb[0] >= best_cost:
                break
            if used[pb[1]] & pb[3] or (pb[1] == pa[1] and pb[3] & pa[3]):
                continue
            best, best_cost = (pa, pb), pa[0] + pb[0]
            break
    if best is None:
        _place(chosen, used, a, oa)
        _place(chosen, used, b, ob)
        return False
    _place(chosen, used, a, best[0])
    _place(chosen, used, b, best[1])
    return True

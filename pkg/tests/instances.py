"""Random problem generators shared by the scheduler tests."""

from gridbed.scheduler import MeetingRequest, RoomResource


def random_instance(rng, max_req=8, max_rooms=4, max_slots=12):
    n_slots = rng.randint(4, max_slots)
    prices = [round(rng.uniform(0.1, 0.5), 3) for _ in range(n_slots)]
    rooms = [
        RoomResource(f"R{k}", rng.randint(4, 20), round(rng.uniform(0.5, 4.0), 2))
        for k in range(rng.randint(1, max_rooms))
    ]
    reqs = []
    for q in range(rng.randint(1, max_req)):
        dur = rng.randint(1, 3)
        lo = rng.randint(0, n_slots - dur)
        hi = rng.randint(lo + dur - 1, n_slots - 1)
        reqs.append(MeetingRequest(f"q{q}", dur, lo, hi, rng.randint(1, 15)))
    return reqs, rooms, prices

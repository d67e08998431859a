"""Regenerate the bundled scenario files under src/gridbed/scenarios/.

Run from the repository root:  python scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import random
from pathlib import Path

MS_MIN = 60_000
MS_HOUR = 3_600_000
MS_DAY = 24 * MS_HOUR

OUT = Path(__file__).resolve().parent.parent / "src" / "gridbed" / "scenarios"

# Per-room wastage targets for the office fixture (kWh). Only the means
# (6.376 and 232.025) are normative; the spread across rooms is invented.
LIGHTS_KWH = [4.2, 8.1, 5.5, 7.9, 3.3, 9.0, 6.0, 7.008]
ACS_KWH = [180.5, 260.0, 210.75, 250.0, 195.25, 300.0, 220.0, 239.7]
LIGHT_KW = 0.1
ACS_KW = 1.5


def fig4_peakshave() -> dict:
    rng = random.Random(4)
    units = [f"unit{i:02d}" for i in range(1, 11)]
    appliances = []
    for u in units:
        for k in (1, 2):
            # evening lighting, switched on between 18:00 and 19:30, off 23:00 to 00:00
            on = 18 * MS_HOUR + rng.randrange(0, 91) * MS_MIN
            off = 23 * MS_HOUR + rng.randrange(0, 60) * MS_MIN
            appliances.append(
                {
                    "id": f"{u}-light{k}",
                    "unit": u,
                    "label": "Light",
                    "rated_power_w": 300.0,
                    "flexible": True,
                    "inconvenience_weight": round(rng.uniform(0.5, 3.0), 2),
                    "schedule": [[on, off]],
                }
            )
    return {
        "schema_version": 1,
        "name": "fig4_peakshave",
        "description": "Ten hostel units with two flexible lights each on a NEMS-shaped base load; "
        "peak shaving against a 33 kW threshold over one day.",
        "horizon_ms": MS_DAY,
        "seed": 7,
        "topology": {"template": "hostel", "units": len(units)},
        "network": {
            "links": {k: {"base_latency_ms": 0, "jitter_ms": 0, "loss_prob": 0.0}
                      for k in ("BPL", "TVWS", "WiFi", "ZigBee", "ZWave", "BLE", "Fiber")},
            "meter_period_s": 60,
        },
        "base_load": {"model": "nems", "peak_kw": 30.0, "resolution_s": 60, "variation": 0.05},
        "units": [{"id": u} for u in units],
        "appliances": appliances,
        "drm": {"enabled": True, "threshold_kw": 33.0, "control_period_s": 60},
        "pricing": {"kind": "flat", "price": 0.2328},
        "output": {"dir": "out/fig4_peakshave", "figures": True},
    }


def _spread(total_ms: int, days: int):
    base, extra = divmod(total_ms, days)
    return [base + (extra if i == days - 1 else 0) for i in range(days)]


def wastage_office() -> dict:
    days = 54
    horizon = days * MS_DAY
    weekdays = [d for d in range(days) if d % 7 < 5]
    occ_spans = [(d * MS_DAY + 9 * MS_HOUR, d * MS_DAY + 18 * MS_HOUR) for d in weekdays]
    occupancy = []
    t = 0
    for a, b in occ_spans:
        occupancy.append([t, a, False])
        occupancy.append([a, b, True])
        t = b
    occupancy.append([t, horizon, False])

    rooms = [f"room{i:02d}" for i in range(1, 9)]
    appliances = []
    for room, l_kwh, a_kwh in zip(rooms, LIGHTS_KWH, ACS_KWH):
        for label, kw, kwh in (("Light", LIGHT_KW, l_kwh), ("ACS", ACS_KW, a_kwh)):
            total_ms = round(kwh / kw * MS_HOUR)
            assert abs(total_ms * kw / MS_HOUR - kwh) < 1e-9, (room, label)
            schedule = []
            for d, extra in zip(weekdays, _spread(total_ms, len(weekdays))):
                # on at arrival, left running after everyone has gone home
                schedule.append([d * MS_DAY + 9 * MS_HOUR, d * MS_DAY + 18 * MS_HOUR + extra])
            appliances.append(
                {
                    "id": f"{room}-{label.lower()}",
                    "unit": room,
                    "label": label,
                    "rated_power_w": kw * 1000,
                    "schedule": schedule,
                }
            )
    prices = [0.18, 0.18, 0.22, 0.26, 0.30, 0.30, 0.28, 0.30, 0.30, 0.26, 0.22, 0.18]
    return {
        "schema_version": 1,
        "name": "wastage_office",
        "description": "Eight office rooms over 54 days with lights and air conditioning left on "
        "after hours; wastage is extrapolated to 200 rooms.",
        "horizon_ms": horizon,
        "seed": 11,
        "topology": {"template": "office_section", "rooms": len(rooms)},
        "units": [{"id": r, "occupancy": occupancy} for r in rooms],
        "appliances": appliances,
        "sensors": {"period_s": 600, "p_motion_when_occupied": 0.3},
        "analytics": {"idle_window_s": 900, "tariff_sgd_per_kwh": 0.2328, "campus_rooms": 200},
        "scheduler": {
            "slot_length_min": 60,
            "prices": prices,
            "rooms": [
                {"id": "room01", "capacity": 8, "active_power_kw": 1.6},
                {"id": "room02", "capacity": 12, "active_power_kw": 2.4},
                {"id": "room03", "capacity": 20, "active_power_kw": 3.5},
            ],
            "requests": [
                {"id": "m1", "duration_slots": 2, "earliest_slot": 0, "latest_slot": 5, "attendees": 6},
                {"id": "m2", "duration_slots": 3, "earliest_slot": 2, "latest_slot": 11, "attendees": 15},
                {"id": "m3", "duration_slots": 1, "earliest_slot": 4, "latest_slot": 8, "attendees": 10},
                {"id": "m4", "duration_slots": 2, "earliest_slot": 0, "latest_slot": 11, "attendees": 4},
                {"id": "m5", "duration_slots": 4, "earliest_slot": 6, "latest_slot": 11, "attendees": 8},
            ],
        },
        "output": {"dir": "out/wastage_office", "figures": True},
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for build in (fig4_peakshave, wastage_office):
        spec = build()
        path = OUT / f"{spec['name']}.json"
        path.write_text(json.dumps(spec, indent=1) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()

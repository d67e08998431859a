import math

import numpy as np
import pytest

from gridbed import analytics
from gridbed.analytics import (
    DEFAULT_SIGNATURES,
    NO_ACTIVITY,
    TraceError,
    WastageRecord,
    above_threshold,
    compute_wastage,
    extrapolate_campus_wastage,
    identify_appliance,
    impairment_report,
    infer_occupancy,
    summarize_wastage,
)
from gridbed.premises import Appliance, LoadProfile, OccupancyTrace, SensorSample, appliance_power_trace
from gridbed.simcore import MS_PER_DAY, MS_PER_HOUR, MS_PER_MIN

H = MS_PER_HOUR


def sample(t, motion=False, noise=30.0):
    return SensorSample("m", t, motion, noise, 25.0, 60.0, 10.0)


def test_continuous_motion_fully_occupied():
    samples = [sample(t, True) for t in range(0, H, 30_000)]
    occ = infer_occupancy(samples, 900, end_ms=H)
    assert occ.intervals == [(0, H, True)]


def test_silent_day_unoccupied_after_window():
    samples = [sample(t) for t in range(0, MS_PER_DAY, 30_000)]
    occ = infer_occupancy(samples, 900, end_ms=MS_PER_DAY)
    assert occ.intervals == [(0, 900_000, True), (900_000, MS_PER_DAY, False)]


def test_burst_then_silence():
    ten = 10 * H
    samples = [sample(t, motion=(t == ten)) for t in range(ten - H, ten + 2 * H, 30_000)]
    occ = infer_occupancy(samples, 900, start_ms=ten - H, end_ms=ten + 2 * H)
    assert occ.occupied(ten + 15 * MS_PER_MIN - 1)
    assert not occ.occupied(ten + 15 * MS_PER_MIN)
    assert not occ.occupied(ten + H)


def test_noise_counts_as_trigger():
    samples = [sample(0), sample(2 * H, noise=50.0), sample(3 * H)]
    occ = infer_occupancy(samples, 900, noise_threshold_db=37.5, end_ms=4 * H)
    assert occ.occupied(2 * H + 1000)
    assert not occ.occupied(H)


def test_unordered_samples_rejected():
    with pytest.raises(ValueError):
        infer_occupancy([sample(10), sample(5)], 900)


def test_inferred_trace_lags_truth_by_at_most_window():
    truth = OccupancyTrace([(0, 2 * H, False), (2 * H, 5 * H, True), (5 * H, 8 * H, False), (8 * H, 9 * H, True),
                            (9 * H, 12 * H, False)])
    samples = [sample(t, motion=truth.occupied(t)) for t in range(0, 12 * H, 30_000)]
    window = 900
    occ = infer_occupancy(samples, window, end_ms=12 * H)
    # no false "occupied" time outside truth + lag (the trace start counts as a trigger)
    for t in range(window * 1000, 12 * H, 10_000):
        if occ.occupied(t):
            assert any(truth.occupied(t - d) for d in range(0, window * 1000 + 1, 10_000))
    for t in range(0, 12 * H, 10_000):
        if truth.occupied(t):
            assert occ.occupied(t)


def light_on(spans, w=300.0, label="Light"):
    a = Appliance(f"{label}-x", label, w)
    for s, e in spans:
        a.switch(s, True)
        a.switch(e, False)
    return a


def test_light_ten_hours_unoccupied():
    occ = OccupancyTrace.always(10 * H, False)
    res = compute_wastage(["r"], {"r": occ}, {"r": [light_on([(0, 10 * H)])]}, (0, 10 * H))
    assert res.records[0].lights_kwh == pytest.approx(3.0)
    assert res.records[0].acs_kwh == 0


def test_occupied_room_wastes_nothing():
    occ = OccupancyTrace.always(10 * H, True)
    apps = [light_on([(0, 10 * H)]), light_on([(H, 3 * H)], 1500, "ACS")]
    res = compute_wastage(["r"], {"r": occ}, {"r": apps}, (0, 10 * H))
    assert res.records[0].lights_kwh == 0 and res.records[0].acs_kwh == 0


def test_wastage_bounded_by_total_energy():
    occ = OccupancyTrace([(0, 3 * H, True), (3 * H, 7 * H, False), (7 * H, 10 * H, True)])
    a = light_on([(2 * H, 8 * H)])
    c = light_on([(0, 5 * H)], 1500, "ACS")
    res = compute_wastage(["r"], {"r": occ}, {"r": [a, c]}, (0, 10 * H))
    r = res.records[0]
    assert r.lights_kwh == pytest.approx(1.2)
    assert r.acs_kwh == pytest.approx(3.0)
    assert r.lights_kwh <= appliance_power_trace(a, (0, 10 * H)).energy_kwh() + 1e-12
    assert r.acs_kwh <= appliance_power_trace(c, (0, 10 * H)).energy_kwh() + 1e-12


def test_wastage_requires_coverage():
    occ = OccupancyTrace([(0, 5 * H, False)])
    with pytest.raises(ValueError):
        compute_wastage(["r"], {"r": occ}, {"r": []}, (0, 10 * H))
    with pytest.raises(ValueError):
        compute_wastage(["r"], {}, {"r": []}, (0, 10 * H))


def test_wastage_means_by_construction():
    lights = [4.2, 8.1, 5.5, 7.9, 3.3, 9.0, 6.0, 7.008]
    acs = [180.5, 260.0, 210.75, 250.0, 195.25, 300.0, 220.0, 239.7]
    recs = [WastageRecord(f"r{i}", l, a, (0, 1)) for i, (l, a) in enumerate(zip(lights, acs))]
    s = summarize_wastage(recs)
    assert abs(s.mean_lights_kwh - 6.376) <= 1e-9
    assert abs(s.mean_acs_kwh - 232.025) <= 1e-9


def test_extrapolation_matches_reported_totals():
    kwh, sgd = extrapolate_campus_wastage(WastageRecord("mean", 6.376, 232.025, (0, 1)), 200, 0.2328)
    assert kwh == 47680.2
    # frozen: 47680.2 * 0.2328 in exact decimal arithmetic
    assert sgd == 11099.95056
    assert abs(sgd - 11100) / 11100 <= 0.005


def test_extrapolation_zero_rooms():
    assert extrapolate_campus_wastage(WastageRecord("m", 1.0, 2.0, (0, 1)), 0, 0.2) == (0.0, 0.0)


def test_plain_float_arithmetic_would_miss_the_total():
    # documents why the decimal path exists
    assert (6.376 + 232.025) * 200 != 47680.2


def test_wastage_record_rejects_negative():
    with pytest.raises(ValueError):
        WastageRecord("r", -0.1, 0, (0, 1))


def _trace_for(signature, noise_sd=0.0, rng=None, window_h=2):
    app = Appliance("x", "Other", 1.0, signature=list(signature))
    app.switch(5 * MS_PER_MIN, True)
    prof = appliance_power_trace(app, (0, window_h * H), 60)
    vals = prof.values_kw * 1000.0
    if noise_sd:
        vals = vals + rng.normal(0, noise_sd, size=vals.shape)
    return LoadProfile(60, np.clip(vals, 0, None) / 1000.0)


def test_noise_free_self_match():
    for label, sig in DEFAULT_SIGNATURES:
        got, dist = identify_appliance(_trace_for(sig), DEFAULT_SIGNATURES)
        assert got == label
        assert dist == 0.0


def test_noisy_light_identified():
    rng = np.random.default_rng(0)
    sig = dict(DEFAULT_SIGNATURES)["Light"]
    hits = sum(identify_appliance(_trace_for(sig, 5.0, rng), DEFAULT_SIGNATURES)[0] == "Light" for _ in range(100))
    assert hits >= 95


def test_all_zero_trace_is_no_activity():
    label, dist = identify_appliance(LoadProfile(60, np.zeros(30)), DEFAULT_SIGNATURES)
    assert label == NO_ACTIVITY and math.isnan(dist)


def test_empty_library_rejected():
    with pytest.raises(ValueError):
        identify_appliance(LoadProfile(60, np.ones(3)), [])


def test_duplicate_signature_does_not_change_label():
    lib = list(DEFAULT_SIGNATURES)
    doubled = lib + [(lbl, sig) for lbl, sig in lib]
    rng = np.random.default_rng(1)
    for label, sig in lib:
        tr = _trace_for(sig, 5.0, rng)
        assert identify_appliance(tr, lib)[0] == identify_appliance(tr, doubled)[0]


def test_ties_go_to_library_order():
    sig = [(None, 300.0)]
    lib = [("first", sig), ("second", sig)]
    assert identify_appliance(_trace_for(sig), lib)[0] == "first"


def test_above_threshold_basic():
    series = [(0, 10.0), (1000, 40.0), (3000, 20.0)]
    t, e, exc = above_threshold(series, 33.0, 5000)
    assert t == 2.0
    assert e == pytest.approx(7.0 * 2000 / H)
    assert [(x.start, x.end) for x in exc] == [(1000, 3000)]


def test_above_threshold_collapses_same_instant_points():
    series = [(0, 10.0), (1000, 40.0), (1000, 20.0), (2000, 20.0)]
    t, _, exc = above_threshold(series, 33.0, 5000)
    assert t == 0 and exc == []


def test_above_threshold_open_excursion_closes_at_end():
    _, _, exc = above_threshold([(0, 50.0)], 33.0, 4000)
    assert [(x.start, x.end) for x in exc] == [(0, 4000)]


def _demand(at, ctl, unc):
    return {"at": at, "category": "Demand", "kind": "total", "controlled_kw": ctl, "uncontrolled_kw": unc}


def test_impairment_report_counts_and_latency():
    events = [
        _demand(0, 30.0, 30.0),
        _demand(60_000, 35.0, 35.0),
        {"at": 61_000, "category": "Command", "phase": "issued"},
        {"at": 61_000, "category": "Command", "phase": "issued"},
        {"at": 61_040, "category": "Message", "msg_kind": "ControlCommand", "status": "delivered", "created_at": 61_000},
        {"at": 61_000, "category": "Message", "msg_kind": "ControlCommand", "status": "lost", "created_at": 61_000},
        _demand(61_040, 33.0, 35.0),
    ]
    rep = impairment_report(events, 33.0, 120_000)
    assert rep.commands_sent == 2 and rep.commands_lost == 1
    assert rep.mean_command_latency_ms == 40
    assert rep.time_above_threshold_s == pytest.approx(1.04)
    assert rep.uncontrolled_time_above_threshold_s == 60.0
    assert rep.overshoot_kwh >= 0


def test_impairment_zero_excursions():
    rep = impairment_report([_demand(0, 10.0, 10.0)], 33.0, 1000)
    assert rep.time_above_threshold_s == 0 and rep.excursions == []
    assert rep.to_dict()["mean_command_latency_ms"] is None


def test_impairment_report_invariant():
    with pytest.raises(ValueError):
        analytics.ImpairmentReport(0, 0, 1, 2, 0, 0, 0, 0, 0)

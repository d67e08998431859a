import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridbed.premises import (
    Appliance,
    HorizonError,
    LoadProfile,
    OccupancyTrace,
    SensorModel,
    SensorSample,
    Unit,
    appliance_power_trace,
    emit_sensor_samples,
    synthesize_nems_base,
    total_demand,
)
from gridbed.simcore import MS_PER_HOUR, SENSOR_TICK, Engine

H = MS_PER_HOUR


def light(i=0, w=300.0, flexible=True):
    return Appliance(f"l{i}", "Light", w, flexible=flexible)


def flat_units(n, kw, horizon=H):
    return [Unit(f"u{i}", "Hostel", [], LoadProfile(60, [kw] * (horizon // 60_000))) for i in range(n)]


def test_total_demand_base_only():
    assert total_demand(flat_units(10, 3.0), 0) == pytest.approx(30.0)


def test_total_demand_with_ten_lights_on():
    units = flat_units(10, 3.0)
    for i, u in enumerate(units):
        app = light(i)
        app.switch(0, True)
        u.appliances.append(app)
    assert total_demand(units, 1000) == pytest.approx(33.0)


def test_total_demand_empty_and_out_of_horizon():
    assert total_demand([], 5) == 0.0
    with pytest.raises(HorizonError):
        total_demand(flat_units(1, 1.0), 2 * H)


def test_total_demand_additive_over_partitions():
    units = flat_units(6, 1.5)
    for i, u in enumerate(units):
        a = light(i, 100.0 * (i + 1))
        a.switch(0, i % 2 == 0)
        u.appliances.append(a)
    assert total_demand(units, 10) == pytest.approx(total_demand(units[:2], 10) + total_demand(units[2:], 10))


def test_appliance_off_draws_nothing():
    prof = appliance_power_trace(light(), (0, H))
    assert np.all(prof.values_kw == 0)


def test_light_on_whole_hour():
    a = light()
    a.switch(0, True)
    prof = appliance_power_trace(a, (0, H))
    assert np.allclose(prof.values_kw, 0.3)
    assert prof.energy_kwh() == pytest.approx(0.3)


def test_kettle_signature_playback():
    k = Appliance("k", "Kettle", 2000, signature=[(120, 2000.0)])
    k.switch(0, True)
    prof = appliance_power_trace(k, (0, 600_000))
    assert list(prof.values_kw) == [2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def test_power_trace_energy_matches_switch_history():
    a = light()
    a.switch(90_000, True)
    a.switch(330_000, False)
    prof = appliance_power_trace(a, (0, 600_000))
    assert prof.energy_kwh() == pytest.approx(0.3 * 240 / 3600)
    assert prof.values_kw[1] == pytest.approx(0.15)


def test_invalid_window():
    with pytest.raises(ValueError):
        appliance_power_trace(light(), (100, 100))


def test_same_instant_toggle_collapses():
    a = light()
    a.switch(10, True)
    a.switch(10, False)
    assert a.history == []
    a.switch(20, True)
    a.switch(30, True)
    assert a.history == [(20, True)]


def test_switch_history_cannot_go_backwards():
    a = light()
    a.switch(10, True)
    with pytest.raises(ValueError):
        a.switch(5, False)


def test_invalid_appliance_parameters():
    with pytest.raises(ValueError):
        Appliance("x", "Light", 0)
    with pytest.raises(ValueError):
        Appliance("x", "Light", 10, inconvenience_weight=0)


def test_load_profile_rejects_negative_values():
    with pytest.raises(ValueError):
        LoadProfile(60, [1.0, -0.1])


@given(st.lists(st.floats(0, 50), min_size=1, max_size=40), st.integers(0, 40), st.integers(0, 40))
@settings(max_examples=100, deadline=None)
def test_energy_is_additive_over_split_windows(vals, a, b):
    prof = LoadProfile(60, vals)
    lo, hi = sorted((a * 30_000, b * 30_000))
    mid = (lo + hi) // 2
    assert prof.energy_kwh(lo, hi) == pytest.approx(prof.energy_kwh(lo, mid) + prof.energy_kwh(mid, hi), abs=1e-9)


def test_profile_addition():
    s = LoadProfile(60, [1, 2]) + LoadProfile(60, [0.5])
    assert list(s.values_kw) == [1.5, 2.0]


def test_occupancy_lookup_and_spans():
    occ = OccupancyTrace([(0, 10, False), (10, 20, True), (20, 30, False)])
    occ.validate(30)
    assert not occ.occupied(9) and occ.occupied(10) and not occ.occupied(20)
    assert occ.unoccupied_spans(5, 25) == [(5, 10), (20, 25)]


def test_occupancy_validation_catches_gaps():
    with pytest.raises(ValueError):
        OccupancyTrace([(0, 10, False), (11, 30, True)]).validate(30)
    with pytest.raises(ValueError):
        OccupancyTrace([(0, 10, False)]).validate(30)


def test_from_occupied_spans_merges():
    occ = OccupancyTrace.from_occupied_spans([(5, 10), (8, 12), (20, 25)], 30)
    assert occ.intervals == [(0, 5, False), (5, 12, True), (12, 20, False), (20, 25, True), (25, 30, False)]


def test_sensor_sample_validation():
    with pytest.raises(ValueError):
        SensorSample("m", 0, False, 30, 25, 101, 10)
    with pytest.raises(ValueError):
        SensorSample("m", 0, False, 30, 25, 50, -1)


def run_sensors(occ, period_s, end, model=None):
    eng = Engine(seed=3, horizon=end)
    eng.on(SENSOR_TICK, lambda ev: ev.payload())
    out = []
    emit_sensor_samples(eng, "mpn-1", occ, period_s, model, out.append, end_ms=end)
    eng.run_until(end)
    return out


def test_unoccupied_means_no_motion():
    out = run_sensors(OccupancyTrace.always(H, False), 30, H, SensorModel(p_motion_when_occupied=1.0))
    assert out and not any(s.motion for s in out)


def test_occupied_with_certain_motion():
    out = run_sensors(OccupancyTrace.always(H), 30, H, SensorModel(p_motion_when_occupied=1.0))
    assert all(s.motion for s in out)


def test_sample_count_over_an_hour():
    assert len(run_sensors(OccupancyTrace.always(H), 30, H)) == 120


def test_sensor_stream_deterministic():
    a = run_sensors(OccupancyTrace.always(H), 60, H)
    b = run_sensors(OccupancyTrace.always(H), 60, H)
    assert a == b


def test_unbound_mpn_rejected():
    with pytest.raises(ValueError):
        run_sensors(None, 30, H)


def test_nems_peak_scaling():
    profs = synthesize_nems_base(10, 30.0, seed=1)
    total = sum(p.values_kw for p in profs)
    assert abs(total.max() - 30.0) <= 0.01


def test_nems_single_unit_same_shape():
    p1 = synthesize_nems_base(1, 3.0, seed=2, variation=0.0, max_shift_h=0.0)[0]
    p2 = synthesize_nems_base(1, 30.0, seed=2, variation=0.0, max_shift_h=0.0)[0]
    assert p1.values_kw.max() == pytest.approx(3.0)
    assert np.allclose(p2.values_kw, 10 * p1.values_kw)


def test_nems_seeds_differ_but_keep_peak():
    a = synthesize_nems_base(10, 30.0, seed=1)
    b = synthesize_nems_base(10, 30.0, seed=2)
    assert not np.allclose(a[0].values_kw, b[0].values_kw)
    for profs in (a, b):
        assert sum(p.values_kw for p in profs).max() == pytest.approx(30.0)


def test_nems_has_double_peak():
    prof = synthesize_nems_base(1, 1.0, seed=0, variation=0.0, max_shift_h=0.0)[0].values_kw
    hour = np.arange(len(prof)) / 60
    night = prof[(hour > 2) & (hour < 5)].max()
    morning = prof[(hour > 7) & (hour < 9)].max()
    midday = prof[(hour > 11) & (hour < 15)].min()
    evening = prof[(hour > 19) & (hour < 22)].max()
    assert night < morning and midday < morning < evening


def test_nems_rejects_bad_peak():
    with pytest.raises(ValueError):
        synthesize_nems_base(3, 0.0, seed=0)

"""Units, appliances, base-load profiles, occupancy and MPN sensor samples."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .simcore import MS_PER_DAY, MS_PER_HOUR, MS_PER_S, SENSOR_TICK, Engine, RngRegistry, RngStream


class ApplianceLabel(str, Enum):
    LIGHT = "Light"
    ACS = "ACS"
    FRIDGE = "Fridge"
    KETTLE = "Kettle"
    OTHER = "Other"


class UnitKind(str, Enum):
    HOSTEL = "Hostel"
    OFFICE = "Office"


class HorizonError(ValueError):
    pass


# A phase duration of None means "sustained until switched off".
Phase = Tuple[Optional[float], float]


@dataclass
class LoadProfile:
    """Piecewise-constant power series; ``values_kw[i]`` holds on [i*res, (i+1)*res)."""

    resolution_s: int
    values_kw: np.ndarray

    def __post_init__(self):
        if self.resolution_s <= 0:
            raise ValueError("resolution_s must be positive")
        self.values_kw = np.asarray(self.values_kw, dtype=float)
        if np.any(self.values_kw < 0):
            raise ValueError("load profile values must be >= 0")

    @property
    def resolution_ms(self) -> int:
        return self.resolution_s * MS_PER_S

    @property
    def span_ms(self) -> int:
        return len(self.values_kw) * self.resolution_ms

    def at(self, t_ms: int) -> float:
        idx = t_ms // self.resolution_ms
        if t_ms < 0 or idx >= len(self.values_kw):
            # the closing instant of the covered span reads the last step
            if t_ms == self.span_ms and len(self.values_kw):
                return float(self.values_kw[-1])
            raise HorizonError(f"t={t_ms} ms outside profile span [0, {self.span_ms}]")
        return float(self.values_kw[idx])

    def energy_kwh(self, start_ms: int = 0, end_ms: Optional[int] = None) -> float:
        """Exact integral of the step function over [start_ms, end_ms)."""
        end_ms = self.span_ms if end_ms is None else end_ms
        res = self.resolution_ms
        total = 0.0
        first, last = start_ms // res, math.ceil(end_ms / res)
        for i in range(max(first, 0), min(last, len(self.values_kw))):
            lo, hi = max(i * res, start_ms), min((i + 1) * res, end_ms)
            if hi > lo:
                total += self.values_kw[i] * (hi - lo)
        return total / MS_PER_HOUR

    def __add__(self, other: "LoadProfile") -> "LoadProfile":
        if other.resolution_s != self.resolution_s:
            raise ValueError("cannot add profiles with different resolutions")
        n = max(len(self.values_kw), len(other.values_kw))
        a = np.zeros(n)
        a[: len(self.values_kw)] += self.values_kw
        a[: len(other.values_kw)] += other.values_kw
        return LoadProfile(self.resolution_s, a)


@dataclass
class Appliance:
    id: str
    label: ApplianceLabel
    rated_power_w: float
    flexible: bool = False
    inconvenience_weight: float = 1.0
    signature: Optional[List[Phase]] = None
    unit: Optional[str] = None
    # (t_ms, on) switch history, non-decreasing in time
    history: List[Tuple[int, bool]] = field(default_factory=list)

    def __post_init__(self):
        self.label = ApplianceLabel(self.label)
        if self.rated_power_w <= 0:
            raise ValueError(f"{self.id}: rated_power_w must be positive")
        if self.inconvenience_weight <= 0:
            raise ValueError(f"{self.id}: inconvenience_weight must be positive")
        if not self.signature:
            self.signature = [(None, float(self.rated_power_w))]

    @property
    def rated_power_kw(self) -> float:
        return self.rated_power_w / 1000.0

    @property
    def state(self) -> bool:
        return bool(self.history) and self.history[-1][1]

    def switch(self, t_ms: int, on: bool) -> None:
        if self.history and t_ms < self.history[-1][0]:
            raise ValueError(f"{self.id}: switch at {t_ms} precedes last switch")
        if self.history and self.history[-1][0] == t_ms:
            # same-instant toggles collapse into the final state
            self.history.pop()
        if self.history and self.history[-1][1] == on:
            return
        if not self.history and not on:
            return
        self.history.append((t_ms, on))

    def _last_switch(self, t_ms: int) -> Optional[Tuple[int, bool]]:
        i = bisect.bisect_right(self.history, (t_ms, True))
        return self.history[i - 1] if i else None

    def is_on(self, t_ms: int) -> bool:
        last = self._last_switch(t_ms)
        return bool(last and last[1])

    def signature_power_w(self, elapsed_ms: int) -> float:
        t = 0.0
        for duration_s, power_w in self.signature:
            if duration_s is None:
                return power_w
            t += duration_s * MS_PER_S
            if elapsed_ms < t:
                return power_w
        return 0.0

    def phase_boundaries_ms(self) -> List[int]:
        """Offsets from switch-on where the signature changes power."""
        out, t = [], 0.0
        for duration_s, _ in self.signature:
            if duration_s is None:
                break
            t += duration_s * MS_PER_S
            out.append(int(round(t)))
        return out

    def power_kw(self, t_ms: int) -> float:
        last = self._last_switch(t_ms)
        if not last or not last[1]:
            return 0.0
        return self.signature_power_w(t_ms - last[0]) / 1000.0

    def on_intervals(self, end_ms: int) -> List[Tuple[int, int]]:
        out = []
        start = None
        for t, on in self.history:
            if on and start is None:
                start = t
            elif not on and start is not None:
                out.append((start, t))
                start = None
        if start is not None and start < end_ms:
            out.append((start, end_ms))
        return out


@dataclass
class OccupancyTrace:
    intervals: List[Tuple[int, int, bool]]

    def validate(self, horizon_ms: int) -> None:
        t = 0
        for start, end, _ in self.intervals:
            if start != t:
                raise ValueError(f"occupancy gap or overlap at t={t} (next interval starts {start})")
            if end <= start:
                raise ValueError(f"empty occupancy interval at t={start}")
            t = end
        if t < horizon_ms:
            raise ValueError(f"occupancy ends at {t}, before horizon {horizon_ms}")

    def occupied(self, t_ms: int) -> bool:
        starts = self.__dict__.get("_starts")
        if starts is None or len(starts) != len(self.intervals):
            starts = self.__dict__["_starts"] = [s for s, _, _ in self.intervals]
        i = bisect.bisect_right(starts, t_ms) - 1
        if i < 0:
            return False
        start, end, occ = self.intervals[i]
        return occ if t_ms < end else False

    def unoccupied_spans(self, start_ms: int = 0, end_ms: Optional[int] = None) -> List[Tuple[int, int]]:
        out = []
        for s, e, occ in self.intervals:
            if occ:
                continue
            lo, hi = max(s, start_ms), e if end_ms is None else min(e, end_ms)
            if hi > lo:
                out.append((lo, hi))
        return out

    @classmethod
    def always(cls, horizon_ms: int, occupied: bool = True) -> "OccupancyTrace":
        return cls([(0, horizon_ms, occupied)])

    @classmethod
    def from_occupied_spans(cls, spans: Iterable[Tuple[int, int]], horizon_ms: int) -> "OccupancyTrace":
        intervals, t = [], 0
        for s, e in sorted(spans):
            if s > t:
                intervals.append((t, s, False))
            if e > max(s, t):
                intervals.append((max(s, t), e, True))
            t = max(t, e)
        if t < horizon_ms:
            intervals.append((t, horizon_ms, False))
        return cls(_merge(intervals))


def _merge(intervals):
    out: List[Tuple[int, int, bool]] = []
    for s, e, occ in intervals:
        if out and out[-1][2] == occ and out[-1][1] == s:
            out[-1] = (out[-1][0], e, occ)
        else:
            out.append((s, e, occ))
    return out


@dataclass
class Unit:
    id: str
    kind: UnitKind
    appliances: List[Appliance] = field(default_factory=list)
    base_profile: Optional[LoadProfile] = None
    occupancy: Optional[OccupancyTrace] = None

    def __post_init__(self):
        self.kind = UnitKind(self.kind)
        for app in self.appliances:
            if app.unit not in (None, self.id):
                raise ValueError(f"appliance {app.id} already belongs to unit {app.unit}")
            app.unit = self.id

    def base_kw(self, t_ms: int) -> float:
        return self.base_profile.at(t_ms) if self.base_profile is not None else 0.0


@dataclass
class SensorSample:
    mpn_id: str
    at: int
    motion: bool
    noise_db: float
    temp_c: float
    humidity_pct: float
    lux: float

    def __post_init__(self):
        if not 0.0 <= self.humidity_pct <= 100.0:
            raise ValueError("humidity_pct must be in [0, 100]")
        if self.lux < 0:
            raise ValueError("lux must be >= 0")


@dataclass
class SensorModel:
    """Occupied/unoccupied sampling distributions for an MPN. Non-normative defaults."""

    p_motion_when_occupied: float = 0.3
    noise_occupied: Tuple[float, float] = (45.0, 5.0)
    noise_unoccupied: Tuple[float, float] = (30.0, 3.0)
    temp_c: Tuple[float, float] = (26.0, 0.5)
    humidity_pct: Tuple[float, float] = (65.0, 3.0)
    lux_occupied: Tuple[float, float] = (400.0, 40.0)
    lux_unoccupied: Tuple[float, float] = (20.0, 10.0)

    @property
    def noise_threshold_db(self) -> float:
        return (self.noise_occupied[0] + self.noise_unoccupied[0]) / 2.0

    def sample(self, mpn: str, t_ms: int, occupied: bool, rng: RngStream) -> SensorSample:
        motion = occupied and rng.bernoulli(self.p_motion_when_occupied)
        noise = rng.normal(*(self.noise_occupied if occupied else self.noise_unoccupied))
        temp = rng.normal(*self.temp_c)
        hum = min(100.0, max(0.0, rng.normal(*self.humidity_pct)))
        lux = max(0.0, rng.normal(*(self.lux_occupied if occupied else self.lux_unoccupied)))
        return SensorSample(mpn, t_ms, motion, noise, temp, hum, lux)


def total_demand(units: Sequence[Unit], at: int) -> float:
    """Base load plus instantaneous draw of every On appliance, in kW."""
    total = 0.0
    for unit in units:
        total += unit.base_kw(at)
        for app in unit.appliances:
            total += app.power_kw(at)
    return total


def emit_sensor_samples(
    engine: Engine,
    mpn: str,
    occupancy: Optional[OccupancyTrace],
    period_s: int,
    model: Optional[SensorModel] = None,
    on_sample: Optional[Callable[[SensorSample], None]] = None,
    end_ms: Optional[int] = None,
) -> None:
    """Schedule one sample every ``period_s`` on a self-rescheduling SENSOR_TICK chain.

    The engine's SENSOR_TICK handler must invoke ``event.payload()``.
    """
    if occupancy is None:
        raise ValueError(f"MPN {mpn} is not bound to a unit with an occupancy trace")
    if period_s <= 0:
        raise ValueError("period_s must be positive")
    model = model or SensorModel()
    rng = engine.rng.register(f"sensor:{mpn}")
    period_ms = period_s * MS_PER_S
    end_ms = engine.horizon if end_ms is None else end_ms

    def tick():
        t = engine.now
        sample = model.sample(mpn, t, occupancy.occupied(t), rng)
        if on_sample is not None:
            on_sample(sample)
        nxt = t + period_ms
        if end_ms is None or nxt < end_ms:
            engine.at(nxt, SENSOR_TICK, tick)

    engine.at(engine.now, SENSOR_TICK, tick)


def appliance_power_trace(
    appliance: Appliance, window: Tuple[int, int], resolution_s: int = 60
) -> LoadProfile:
    """Average power per resolution step over ``window``, from switch history and signature."""
    start, end = window
    if start < 0 or end <= start:
        raise ValueError(f"invalid window {window}")
    res = resolution_s * MS_PER_S
    n = math.ceil((end - start) / res)
    energy_kwms = np.zeros(n)
    for on_start, on_end in appliance.on_intervals(end):
        lo, hi = max(on_start, start), min(on_end, end)
        if hi <= lo:
            continue
        # walk signature phases, each constant power
        t = on_start
        for duration_s, power_w in appliance.signature:
            phase_end = on_end if duration_s is None else min(on_end, t + int(round(duration_s * MS_PER_S)))
            _deposit(energy_kwms, start, res, max(t, lo), min(phase_end, hi), power_w / 1000.0)
            t = phase_end
            if t >= on_end:
                break
    steps = np.full(n, float(res))
    steps[-1] = (end - start) - res * (n - 1)
    return LoadProfile(resolution_s, energy_kwms / steps)


def _deposit(acc: np.ndarray, origin: int, res: int, lo: int, hi: int, kw: float) -> None:
    if hi <= lo or kw == 0:
        return
    i0, i1 = (lo - origin) // res, (hi - 1 - origin) // res
    for i in range(i0, i1 + 1):
        a, b = max(lo, origin + i * res), min(hi, origin + (i + 1) * res)
        acc[i] += kw * (b - a)


def nems_daily_shape(hours: np.ndarray, shift_h: float = 0.0) -> np.ndarray:
    """Canonical residential double-peak day: night trough, morning and evening peaks."""
    h = (hours - shift_h) % 24.0

    def bump(centre, width):
        # periodic gaussian so the curve is smooth across midnight
        d = np.minimum(np.abs(h - centre), 24.0 - np.abs(h - centre))
        return np.exp(-0.5 * (d / width) ** 2)

    return 0.35 + 0.40 * bump(8.0, 1.6) + 0.65 * bump(20.5, 2.2) + 0.15 * bump(13.5, 3.0)


def synthesize_nems_base(
    units: int,
    peak_kw: float,
    seed: int,
    resolution_s: int = 60,
    days: int = 1,
    variation: float = 0.05,
    max_shift_h: float = 0.5,
) -> List[LoadProfile]:
    """Per-unit base-load profiles whose sum peaks at exactly ``peak_kw``.

    Each unit gets the canonical double-peak shape with a seeded amplitude
    factor in ``1 ± variation`` and a seeded time shift of up to
    ``max_shift_h`` hours. The set is then rescaled as a whole so the daily
    maximum of the summed profile equals ``peak_kw``.
    """
    if peak_kw <= 0:
        raise ValueError("peak_kw must be positive")
    if units < 0:
        raise ValueError("units must be >= 0")
    if units == 0:
        return []
    rng = RngRegistry(seed).register("nems-base")
    steps_per_day = MS_PER_DAY // (resolution_s * MS_PER_S)
    # evaluate at step midpoints
    hours = (np.arange(steps_per_day) + 0.5) * resolution_s / 3600.0
    raw = []
    for _ in range(units):
        amp = 1.0 + variation * (2.0 * rng.uniform() - 1.0)
        shift = max_shift_h * (2.0 * rng.uniform() - 1.0)
        raw.append(amp * nems_daily_shape(hours, shift))
    scale = peak_kw / np.sum(raw, axis=0).max()
    return [LoadProfile(resolution_s, np.tile(r * scale, days)) for r in raw]

"""EV fleet requirement envelopes.

Each charging session is compressed into two 24-slot vectors: the energy
that must be bought per slot if charging is postponed as long as possible
(`r_min`) and if it starts as early as possible (`r_max`). Summing these
over a fleet gives the aggregator's hourly requirement envelope, which is
all the bidding optimiser needs.

Fleet-side energies are kWh; the market boundary converts to MWh exactly
once (see `bidding.BidProblem.from_fleet`). Slots follow the market
convention: slot 0 is 12:00, so an overnight session is contiguous.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

SLOTS = 24

#: survey distributions for home arrival / departure, clock hours
ARRIVAL_HOURS = (19, 20, 21, 22, 23)
ARRIVAL_PROBS = (0.16, 0.25, 0.32, 0.12, 0.15)
DEPARTURE_HOURS = (6, 7, 8, 9, 10)
DEPARTURE_PROBS = (0.04, 0.02, 0.34, 0.50, 0.10)

DEFAULT_BATTERY_KWH = 24.0
DEFAULT_PMAX_KW = 3.7
DEFAULT_EFFICIENCY = 0.9


def clock_to_slot(hour: int) -> int:
    """Map a clock hour to the optimisation slot (slot 0 = 12:00)."""
    return (hour - 12) % SLOTS


@dataclass(frozen=True)
class EvSession:
    """One EV charging session, already mapped to horizon slots.

    `t0`/`td` are arrival and departure slots with `t0 < td`; charging may
    happen in slots [t0, td). Energies are battery-side kWh; dividing by
    `efficiency` gives the grid-side energy the aggregator must buy.
    """

    t0: int
    td: int
    soc0_kwh: float
    socd_kwh: float
    battery_kwh: float = DEFAULT_BATTERY_KWH
    pmax_kw: float = DEFAULT_PMAX_KW
    efficiency: float = DEFAULT_EFFICIENCY

    def __post_init__(self):
        if not (0 <= self.t0 < self.td <= SLOTS - 1):
            raise ValueError(f"need 0 <= t0 < td <= {SLOTS - 1}, got ({self.t0}, {self.td})")
        if not 0 <= self.soc0_kwh <= self.socd_kwh <= self.battery_kwh:
            raise ValueError("need 0 <= soc0 <= socd <= battery capacity")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if self.pmax_kw <= 0:
            raise ValueError("pmax must be positive")
        if self.grid_energy_kwh > (self.td - self.t0) * self.pmax_kw + 1e-9:
            raise ValueError(
                f"infeasible session: needs {self.grid_energy_kwh:.3f} kWh in "
                f"{self.td - self.t0} slots at {self.pmax_kw} kW"
            )

    @property
    def grid_energy_kwh(self) -> float:
        return (self.socd_kwh - self.soc0_kwh) / self.efficiency


@dataclass(frozen=True)
class RequirementVectors:
    """Latest-possible (`r_min`) and earliest-possible (`r_max`) slot needs."""

    r_min: np.ndarray
    r_max: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r_min", np.asarray(self.r_min, dtype=float))
        object.__setattr__(self, "r_max", np.asarray(self.r_max, dtype=float))


@dataclass(frozen=True)
class FleetRequirements:
    """Per-aggregator hourly envelope: summed member requirements.

    `n_plugged[t]` counts sessions with t0 <= t < td; the chargeable
    energy in slot t is bounded by ``n_plugged[t] * pmax_kw`` (kWh).
    """

    r_min: np.ndarray
    r_max: np.ndarray
    n_plugged: np.ndarray
    pmax_kw: float
    size_evs: int

    def __post_init__(self):
        object.__setattr__(self, "r_min", np.asarray(self.r_min, dtype=float))
        object.__setattr__(self, "r_max", np.asarray(self.r_max, dtype=float))
        object.__setattr__(self, "n_plugged", np.asarray(self.n_plugged, dtype=float))
        for v in (self.r_min, self.r_max, self.n_plugged):
            if v.shape != (SLOTS,):
                raise ValueError("requirement vectors must have 24 entries")
            if np.any(v < 0):
                raise ValueError("requirement vectors must be nonnegative")
        cap = self.n_plugged * self.pmax_kw
        if np.any(self.r_max > cap + 1e-6):
            raise ValueError("r_max exceeds plugged-in charging capacity")

    @property
    def cap_kwh(self) -> np.ndarray:
        return self.n_plugged * self.pmax_kw

    @property
    def total_energy_kwh(self) -> float:
        return float(self.r_min.sum())

    def __add__(self, other: "FleetRequirements") -> "FleetRequirements":
        return FleetRequirements(
            self.r_min + other.r_min,
            self.r_max + other.r_max,
            self.n_plugged + other.n_plugged,
            max(self.pmax_kw, other.pmax_kw),
            self.size_evs + other.size_evs,
        )


def _fill(window_energy: float, rate: float, n_slots: int) -> np.ndarray:
    """Greedy fill of `window_energy` into `n_slots` at `rate` per slot."""
    out = np.zeros(n_slots)
    remaining = window_energy
    for k in range(n_slots):
        take = min(rate, remaining)
        out[k] = take
        remaining -= take
        if remaining <= 0:
            break
    return out


def ev_requirements(session: EvSession) -> RequirementVectors:
    """Requirement vectors of a single session.

    `r_max` charges as early as possible (forward fill from arrival at
    full rate), `r_min` as late as possible (backward fill from
    departure). Both move the same grid-side energy; partial-rate slots
    are allowed.
    """
    need = session.grid_energy_kwh
    rate = session.pmax_kw  # kWh per 1h slot
    width = session.td - session.t0
    r_min = np.zeros(SLOTS)
    r_max = np.zeros(SLOTS)
    r_max[session.t0:session.td] = _fill(need, rate, width)
    r_min[session.t0:session.td] = _fill(need, rate, width)[::-1]
    return RequirementVectors(r_min, r_max)


def aggregate(sessions) -> FleetRequirements:
    """Sum member requirement vectors into one fleet envelope."""
    sessions = list(sessions)
    r_min = np.zeros(SLOTS)
    r_max = np.zeros(SLOTS)
    n_plugged = np.zeros(SLOTS)
    pmax = DEFAULT_PMAX_KW
    for s in sessions:
        req = ev_requirements(s)
        r_min += req.r_min
        r_max += req.r_max
        n_plugged[s.t0:s.td] += 1
        pmax = max(pmax, s.pmax_kw)
    return FleetRequirements(r_min, r_max, n_plugged, pmax, len(sessions))


@dataclass(frozen=True)
class SurveyParams:
    """Sampling distributions for synthetic overnight fleets."""

    arrival_hours: tuple = ARRIVAL_HOURS
    arrival_probs: tuple = ARRIVAL_PROBS
    departure_hours: tuple = DEPARTURE_HOURS
    departure_probs: tuple = DEPARTURE_PROBS
    battery_kwh: float = DEFAULT_BATTERY_KWH
    pmax_kw: float = DEFAULT_PMAX_KW
    efficiency: float = DEFAULT_EFFICIENCY
    soc0_frac: tuple = (0.25, 0.5)
    socd_frac: tuple = (2.0 / 3.0, 1.0)


def sample_fleet(seed: int, n_evs: int, params: SurveyParams = SurveyParams()) -> list[EvSession]:
    """Draw a synthetic overnight fleet, deterministically per seed.

    Arrival and departure clock hours follow the survey probabilities;
    initial and target states of charge are uniform fractions of the
    battery. Every sampled session is feasible by construction of the
    parameter ranges.
    """
    if n_evs < 0:
        raise ValueError("n_evs must be nonnegative")
    rng = np.random.default_rng(seed)
    t0 = rng.choice([clock_to_slot(h) for h in params.arrival_hours], size=n_evs,
                    p=np.asarray(params.arrival_probs, float))
    td = rng.choice([clock_to_slot(h) for h in params.departure_hours], size=n_evs,
                    p=np.asarray(params.departure_probs, float))
    cap = params.battery_kwh
    soc0 = rng.uniform(params.soc0_frac[0] * cap, params.soc0_frac[1] * cap, n_evs)
    socd = rng.uniform(params.socd_frac[0] * cap, params.socd_frac[1] * cap, n_evs)
    return [
        EvSession(int(t0[i]), int(td[i]), float(soc0[i]), float(socd[i]),
                  cap, params.pmax_kw, params.efficiency)
        for i in range(n_evs)
    ]


def save_fleet_csv(sessions, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t0", "td", "soc0_kwh", "socd_kwh", "battery_kwh", "pmax_kw"])
        for s in sessions:
            w.writerow([s.t0, s.td, repr(s.soc0_kwh), repr(s.socd_kwh),
                        repr(s.battery_kwh), repr(s.pmax_kw)])


def load_fleet_csv(path, efficiency: float = DEFAULT_EFFICIENCY) -> list[EvSession]:
    """Read sessions from CSV (header t0,td,soc0_kwh,socd_kwh,battery_kwh,pmax_kw)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t0", "td", "soc0_kwh", "socd_kwh", "battery_kwh", "pmax_kw"]:
            raise ValueError("line 1: expected header t0,td,soc0_kwh,socd_kwh,battery_kwh,pmax_kw")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(EvSession(int(row[0]), int(row[1]), float(row[2]),
                                     float(row[3]), float(row[4]), float(row[5]),
                                     efficiency))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return out

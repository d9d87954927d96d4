"""Hourly price-impact model of a day-ahead electricity market.

A trading day is split into 24 hourly slots. For each slot the market is
summarised by a residual supply curve: the price an additional buy order
clears at, as a function of the order's volume. Two representations are
supported, a raw stepwise curve (as read from an order book) and a convex
quadratic approximation used by the bidding optimiser.

All volumes are MWh and all prices EUR/MWh. Slot 0 is the first delivery
hour after market closure at noon, i.e. clock hour h maps to slot
``(h - 12) % 24``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

HOURS = 24


class CurveFormatError(ValueError):
    """Malformed market CSV input; carries the offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ResidualCurve:
    """Stepwise clearing price vs. added buy volume for one hourly slot.

    Parameters
    ----------
    hour : int
        Slot index in 0..23.
    volumes : array
        Strictly increasing volumes (MWh), first entry >= 0.
    prices : array
        Nondecreasing nonnegative prices (EUR/MWh), one per volume.
    """

    hour: int
    volumes: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "volumes", np.asarray(self.volumes, dtype=float))
        object.__setattr__(self, "prices", np.asarray(self.prices, dtype=float))
        if not 0 <= self.hour < HOURS:
            raise ValueError(f"hour {self.hour} outside 0..23")
        if self.volumes.ndim != 1 or self.volumes.shape != self.prices.shape:
            raise ValueError("volumes and prices must be 1-d arrays of equal length")
        if len(self.volumes) == 0:
            raise ValueError("empty curve")
        if self.volumes[0] < 0:
            raise ValueError("negative volume in curve")
        if np.any(np.diff(self.volumes) <= 0):
            raise ValueError("volumes must be strictly increasing")
        if np.any(self.prices < 0):
            raise ValueError("negative price in curve")
        if np.any(np.diff(self.prices) < 0):
            raise ValueError("prices must be nondecreasing")

    @property
    def p_max(self) -> float:
        """Price cap: the last (highest) price on the curve."""
        return float(self.prices[-1])

    @classmethod
    def from_points(cls, hour: int, points) -> "ResidualCurve":
        vols, prs = zip(*points)
        return cls(hour, np.array(vols, float), np.array(prs, float))


@dataclass(frozen=True)
class PriceImpactCurve:
    """Convex quadratic clearing-price model ``p(E) = a E^2 + b E + p0``.

    Nonnegative ``a`` and ``b`` make ``p`` nondecreasing on E >= 0 and the
    hourly cost ``E * p(E)`` convex there.
    """

    hour: int
    a: float
    b: float
    p0: float

    def __post_init__(self):
        if not 0 <= self.hour < HOURS:
            raise ValueError(f"hour {self.hour} outside 0..23")
        if self.a < 0 or self.b < 0 or self.p0 < 0:
            raise ValueError("quadratic coefficients must be nonnegative")

    def price(self, volume) -> float | np.ndarray:
        volume = np.asarray(volume, dtype=float)
        out = self.a * volume**2 + self.b * volume + self.p0
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MarketDay:
    """One trading day: a quadratic model per slot, optionally raw curves."""

    curves: tuple
    raw: tuple | None = None

    def __post_init__(self):
        curves = tuple(self.curves)
        object.__setattr__(self, "curves", curves)
        if len(curves) != HOURS or any(c.hour != t for t, c in enumerate(curves)):
            raise ValueError("need exactly one PriceImpactCurve per hour 0..23")
        if self.raw is not None:
            raw = tuple(self.raw)
            object.__setattr__(self, "raw", raw)
            if len(raw) != HOURS or any(c.hour != t for t, c in enumerate(raw)):
                raise ValueError("need exactly one ResidualCurve per hour 0..23")

    @property
    def quad_coeffs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (a, b, p0), each of shape (24,)."""
        a = np.array([c.a for c in self.curves])
        b = np.array([c.b for c in self.curves])
        p0 = np.array([c.p0 for c in self.curves])
        return a, b, p0

    def price(self, hour: int, volume: float, use_raw: bool = False) -> float:
        if use_raw and self.raw is not None:
            return clearing_price(self.raw[hour], volume)
        return float(self.curves[hour].price(volume))


def clearing_price(curve: ResidualCurve, volume: float, mode: str = "step") -> float:
    """Clearing price of a buy order of `volume` MWh on a raw curve.

    ``mode="step"`` treats the curve as an order-book step function: the
    price of the first point whose volume covers the order. ``"linear"``
    interpolates between points. Volumes beyond the last point clear at
    the price cap.
    """
    if volume < 0:
        raise ValueError(f"negative volume {volume}")
    if mode == "step":
        idx = int(np.searchsorted(curve.volumes, volume, side="left"))
        if idx >= len(curve.volumes):
            return curve.p_max
        return float(curve.prices[idx])
    if mode == "linear":
        if volume >= curve.volumes[-1]:
            return curve.p_max
        return float(np.interp(volume, curve.volumes, curve.prices))
    raise ValueError(f"unknown interpolation mode {mode!r}")


def price_impact(curve: ResidualCurve, volume: float, mode: str = "step") -> float:
    """Clearing-price increase caused by a buy order of `volume` MWh."""
    return clearing_price(curve, volume, mode) - clearing_price(curve, 0.0, mode)


def fit_quadratic(
    curve: ResidualCurve,
    volume_cap: float,
    n_samples: int = 64,
    mode: str = "step",
) -> PriceImpactCurve:
    """Least-squares convex quadratic fit of a raw curve on [0, volume_cap].

    Samples the raw curve on a uniform grid and solves a nonnegative
    least-squares problem for (a, b, p0). If the fitted intercept falls
    outside the sampled price range it is clipped there and the remaining
    coefficients refit.

    Raises
    ------
    ValueError
        On a degenerate (single-point) curve or nonpositive volume_cap.
    """
    if len(curve.volumes) < 2:
        raise ValueError("cannot fit a single-point curve")
    if volume_cap <= 0:
        raise ValueError("volume_cap must be positive")
    n_samples = max(int(n_samples), 50)
    grid = np.linspace(0.0, volume_cap, n_samples)
    y = np.array([clearing_price(curve, v, mode) for v in grid])
    design = np.column_stack([grid**2, grid, np.ones_like(grid)])
    coef, _ = nnls(design, y)
    a, b, p0 = coef
    lo, hi = float(y.min()), float(y.max())
    if not lo <= p0 <= hi:
        p0 = min(max(p0, lo), hi)
        coef2, _ = nnls(design[:, :2], y - p0)
        a, b = coef2
    return PriceImpactCurve(curve.hour, float(a), float(b), float(p0))


def evaluate_cost(allocations, market: MarketDay, agent: int, use_raw: bool = False) -> float:
    """Energy cost of one agent given everyone's hourly allocations.

    Each hour clears at the price of the *combined* volume; the agent pays
    that price on its own share. ``use_raw`` switches to the stepwise
    curves when the market carries them.

    Parameters
    ----------
    allocations : sequence of arrays
        One (24,) nonnegative MWh schedule per agent.
    market : MarketDay
    agent : int
        Index into `allocations` of the agent whose cost is computed.
    """
    alloc = np.asarray(allocations, dtype=float)
    if alloc.ndim != 2 or alloc.shape[1] != HOURS:
        raise ValueError("allocations must be a list of (24,) schedules")
    if not 0 <= agent < alloc.shape[0]:
        raise IndexError(f"agent index {agent} out of range for {alloc.shape[0]} agents")
    total = alloc.sum(axis=0)
    if use_raw and market.raw is not None:
        prices = np.array([clearing_price(market.raw[t], total[t]) for t in range(HOURS)])
    else:
        a, b, p0 = market.quad_coeffs
        prices = a * total**2 + b * total + p0
    return float(alloc[agent] @ prices)


def default_base_prices() -> np.ndarray:
    """Typical weekday base-price profile in slot space (EUR/MWh).

    Afternoon around 50, an evening peak near 60, a night valley in the
    low 30s and a morning ramp back up; the night valley is what informed
    charging (and the attacks on it) exploit.
    """
    clock = np.array([
        46.0, 44.0, 42.0, 41.0, 40.0, 41.0,  # 00h-05h
        43.0, 48.0, 54.0, 56.0, 55.0, 53.0,  # 06h-11h
        51.0, 50.0, 49.0, 49.0, 50.0, 52.0,  # 12h-17h
        56.0, 60.0, 61.0, 59.0, 55.0, 50.0,  # 18h-23h
    ])
    valley = np.array([
        34.0, 32.0, 30.0, 29.0, 29.5, 31.0,  # deepen the small hours
        36.0, 48.0, 54.0, 56.0, 55.0, 53.0,
        51.0, 50.0, 49.0, 49.0, 50.0, 52.0,
        56.0, 60.0, 61.0, 59.0, 55.0, 50.0,
    ])
    # slot 0 = 12:00; roll clock profile into slot space
    return np.roll(valley, -12)


def synth_market(
    seed: int,
    base_prices=None,
    steepness: tuple[float, float] = (0.3, 0.9),
    curvature: tuple[float, float] = (0.0, 0.02),
    raw_span_mwh: float = 60.0,
    raw_steps: int = 30,
    with_raw: bool = True,
) -> MarketDay:
    """Deterministic synthetic trading day.

    Draws per-hour quadratic coefficients from the given nonnegative
    ranges and jitters the base-price profile slightly; the same seed
    always yields the same `MarketDay`. Raw step curves consistent with
    the quadratics are attached when `with_raw`.
    """
    if base_prices is None:
        base_prices = default_base_prices()
    base_prices = np.asarray(base_prices, dtype=float)
    if base_prices.shape != (HOURS,) or np.any(base_prices < 0):
        raise ValueError("base_prices must be 24 nonnegative values")
    for name, rng_pair in (("steepness", steepness), ("curvature", curvature)):
        lo, hi = rng_pair
        if lo < 0 or hi < lo:
            raise ValueError(f"{name} range must satisfy 0 <= lo <= hi")

    rng = np.random.default_rng(seed)
    p0 = base_prices * rng.uniform(0.96, 1.04, HOURS)
    b = rng.uniform(steepness[0], steepness[1], HOURS)
    a = rng.uniform(curvature[0], curvature[1], HOURS)
    curves = tuple(PriceImpactCurve(t, float(a[t]), float(b[t]), float(p0[t])) for t in range(HOURS))

    raw = None
    if with_raw:
        vols = np.linspace(0.0, raw_span_mwh, raw_steps + 1)
        raw = tuple(
            ResidualCurve(t, vols, np.maximum.accumulate(curves[t].price(vols)))
            for t in range(HOURS)
        )
    return MarketDay(curves, raw)


# ---------------------------------------------------------------------------
# CSV formats. Raw curves: header hour,volume_mwh,price_eur_mwh, rows sorted
# by (hour, volume). Quadratics: header hour,a,b,p0.
# ---------------------------------------------------------------------------

def save_curves_csv(curves, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "volume_mwh", "price_eur_mwh"])
        for c in curves:
            for v, p in zip(c.volumes, c.prices):
                w.writerow([c.hour, repr(float(v)), repr(float(p))])


def load_curves_csv(path) -> tuple:
    """Parse a raw-curve CSV into 24 ResidualCurve objects.

    Rejects unsorted rows, negative values and missing hours, reporting
    the offending line number.
    """
    per_hour: dict[int, list] = {t: [] for t in range(HOURS)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["hour", "volume_mwh", "price_eur_mwh"]:
            raise CurveFormatError(1, "expected header hour,volume_mwh,price_eur_mwh")
        last_key = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                hour, vol, price = int(row[0]), float(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise CurveFormatError(lineno, f"bad row {row!r}") from exc
            if not 0 <= hour < HOURS:
                raise CurveFormatError(lineno, f"hour {hour} outside 0..23")
            if vol < 0 or price < 0:
                raise CurveFormatError(lineno, "negative volume or price")
            key = (hour, vol)
            if last_key is not None and key <= last_key:
                raise CurveFormatError(lineno, "rows not sorted by (hour, volume)")
            last_key = key
            per_hour[hour].append((vol, price))
    curves = []
    for t in range(HOURS):
        if not per_hour[t]:
            raise CurveFormatError(0, f"no rows for hour {t}")
        try:
            curves.append(ResidualCurve.from_points(t, per_hour[t]))
        except ValueError as exc:
            raise CurveFormatError(0, f"hour {t}: {exc}") from exc
    return tuple(curves)


def save_quadratics_csv(market: MarketDay, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "a", "b", "p0"])
        for c in market.curves:
            w.writerow([c.hour, repr(c.a), repr(c.b), repr(c.p0)])


def load_quadratics_csv(path) -> MarketDay:
    """Parse a quadratic CSV into a MarketDay (no raw curves attached)."""
    rows: dict[int, PriceImpactCurve] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["hour", "a", "b", "p0"]:
            raise CurveFormatError(1, "expected header hour,a,b,p0")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                hour, a, b, p0 = int(row[0]), float(row[1]), float(row[2]), float(row[3])
            except (ValueError, IndexError) as exc:
                raise CurveFormatError(lineno, f"bad row {row!r}") from exc
            if hour in rows:
                raise CurveFormatError(lineno, f"duplicate hour {hour}")
            try:
                rows[hour] = PriceImpactCurve(hour, a, b, p0)
            except ValueError as exc:
                raise CurveFormatError(lineno, str(exc)) from exc
    if sorted(rows) != list(range(HOURS)):
        raise CurveFormatError(0, "need exactly hours 0..23")
    return MarketDay(tuple(rows[t] for t in range(HOURS)))

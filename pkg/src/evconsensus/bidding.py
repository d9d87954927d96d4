"""Optimal day-ahead bidding for one or several EV aggregators.

The decision variable is a 24-entry nonnegative schedule of hourly MWh
quantities bid at the price cap. The feasible set is a small polytope:
cumulative sums must stay inside the envelope built from the fleet's
requirement vectors, and each hour is capped by the plugged-in charging
power. The objective is the purchased-energy cost under the convex
quadratic price model, which makes the problem convex with a unique
optimum.

Three solved forms matter downstream: the single-aggregator problem, the
joint problem over summed requirements (the centralised reference the
consensus loop must match), and the redistribution of a joint schedule
back to the members. The consensus loop additionally needs each agent's
penalised local step, provided here as `LocalSubproblem`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fleet import FleetRequirements
from .market import HOURS, MarketDay
from .optim import BarrierResult, ConstraintSet, SolverError, newton_barrier, null_space_basis, strictly_feasible

KWH_PER_MWH = 1000.0

#: deterministic tie-break weight under flat prices
_TIE_REG = 1e-9


class InfeasibleProblem(ValueError):
    """Requirements admit no feasible schedule; carries the violated slot."""

    def __init__(self, slot: int, message: str):
        super().__init__(f"slot {slot}: {message}")
        self.slot = slot


@dataclass(frozen=True, eq=False)
class BidPolytope:
    """Presolved feasible set of one 24-hour schedule.

    Slots whose implied bounds collapse (hours outside the charging
    window, zero-flexibility stretches) are fixed outright; cumulative
    envelope pinches become equality rows, eliminated through a nullspace
    basis. `x0` is a strictly feasible start over the free coordinates.
    """

    r_min: np.ndarray
    r_max: np.ndarray
    cap: np.ndarray
    cum_lo: np.ndarray
    cum_hi: np.ndarray
    fixed_values: np.ndarray
    free_idx: np.ndarray
    cons: ConstraintSet
    basis: np.ndarray | None
    a_eq: np.ndarray
    b_eq: np.ndarray
    x0: np.ndarray
    scale: float

    @property
    def n_free(self) -> int:
        return len(self.free_idx)

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        out = self.fixed_values.copy()
        out[self.free_idx] = x_free
        return out

    def violation(self, schedule: np.ndarray) -> float:
        """Worst constraint violation of a full 24-entry schedule (MWh)."""
        e = np.asarray(schedule, dtype=float)
        cum = np.cumsum(e)
        worst = max(
            float((self.cum_lo - cum).max(initial=0.0)),
            float((cum - self.cum_hi).max(initial=0.0)),
            float((e - self.cap).max(initial=0.0)),
            float((-e).max(initial=0.0)),
        )
        return max(worst, 0.0)


def _build_polytope(r_min, r_max, cap, pinch_scale: float = 1.0) -> BidPolytope:
    r_min = np.asarray(r_min, dtype=float)
    r_max = np.asarray(r_max, dtype=float)
    cap = np.asarray(cap, dtype=float)
    for name, v in (("r_min", r_min), ("r_max", r_max), ("cap", cap)):
        if v.shape != (HOURS,):
            raise ValueError(f"{name} must have shape (24,)")
        if np.any(v < 0):
            raise ValueError(f"{name} must be nonnegative")

    cum_lo = np.cumsum(r_min)
    cum_hi = np.cumsum(r_max)
    scale = max(1.0, float(cum_hi[-1]), float(cap.max(initial=0.0)))
    eps = 1e-9 * scale * pinch_scale

    # feasibility: the greedy schedule that charges as much and as early as
    # the envelope allows majorises every feasible cumulative profile
    reach = 0.0
    for t in range(HOURS):
        if cum_lo[t] > cum_hi[t] + eps:
            raise InfeasibleProblem(t, "cumulative lower envelope exceeds upper envelope")
        reach = min(reach + cap[t], cum_hi[t])
        if reach < cum_lo[t] - eps:
            raise InfeasibleProblem(t, "cumulative requirement unreachable under hourly caps")

    # tighten the envelopes to what monotonicity and the caps actually
    # allow; boundary touches forced by capped stretches then show up as
    # ordinary pinches
    tight_lo = cum_lo.copy()
    tight_hi = cum_hi.copy()
    for t in range(HOURS - 2, -1, -1):
        tight_hi[t] = min(tight_hi[t], tight_hi[t + 1])
        tight_lo[t] = max(tight_lo[t], tight_lo[t + 1] - cap[t + 1])
    for t in range(1, HOURS):
        tight_lo[t] = max(tight_lo[t], tight_lo[t - 1])
        tight_hi[t] = min(tight_hi[t], tight_hi[t - 1] + cap[t])
    for t in range(HOURS):
        if tight_lo[t] > tight_hi[t] + eps:
            raise InfeasibleProblem(t, "cumulative envelope collapses under hourly caps")

    prev_hi = np.concatenate([[0.0], tight_hi[:-1]])
    prev_lo = np.concatenate([[0.0], tight_lo[:-1]])
    lo = np.maximum(0.0, tight_lo - prev_hi)
    hi = np.minimum(cap, tight_hi - prev_lo)
    fixed_mask = hi - lo <= eps
    fixed_values = np.where(fixed_mask, 0.5 * (lo + hi), 0.0)
    free_idx = np.flatnonzero(~fixed_mask)
    fixed_cumsum = np.cumsum(fixed_values)

    pinched = (tight_hi - tight_lo) <= eps
    eq_rows, eq_rhs = [], []
    in_rows, in_rhs = [], []
    for t in range(HOURS):
        support = free_idx <= t
        rhs_lo = tight_lo[t] - fixed_cumsum[t]
        rhs_hi = tight_hi[t] - fixed_cumsum[t]
        if not support.any():
            if rhs_lo > eps or rhs_hi < -eps:
                raise InfeasibleProblem(t, "fixed slots cannot meet the cumulative envelope")
            continue
        row = support.astype(float)
        if pinched[t]:
            eq_rows.append(row)
            eq_rhs.append(rhs_lo)
            continue
        # drop rows already implied by the per-slot boxes
        if rhs_lo > lo[free_idx][support].sum() + eps:
            in_rows.append(-row)
            in_rhs.append(-rhs_lo)
        if rhs_hi < hi[free_idx][support].sum() - eps:
            in_rows.append(row)
            in_rhs.append(rhs_hi)

    a_eq = np.array(eq_rows) if eq_rows else np.zeros((0, len(free_idx)))
    b_eq = np.array(eq_rhs) if eq_rhs else np.zeros(0)
    a_in = np.array(in_rows) if in_rows else np.zeros((0, len(free_idx)))
    b_in = np.array(in_rhs) if in_rhs else np.zeros(0)
    pos = np.arange(len(free_idx))
    cons = ConstraintSet(a_in, b_in, pos, lo[free_idx], pos, hi[free_idx])

    basis = None
    mid_cum = 0.5 * (tight_lo + tight_hi)
    x0 = np.diff(np.concatenate([[0.0], mid_cum]))[free_idx]
    if len(b_eq):
        resid = b_eq - a_eq @ x0
        if np.abs(resid).max(initial=0.0) > eps * 10 + 1e-12:
            corr, *_ = np.linalg.lstsq(a_eq, resid, rcond=None)
            x0 = x0 + corr
            if np.abs(b_eq - a_eq @ x0).max() > 1e-6 * scale:
                raise InfeasibleProblem(int(HOURS - 1), "inconsistent cumulative equalities")
        basis = null_space_basis(a_eq)
    if len(free_idx):
        x_strict = strictly_feasible(cons, x0, basis=basis)
        if x_strict is None:
            if pinch_scale < 1e5:
                return _build_polytope(r_min, r_max, cap, pinch_scale * 1e4)
            raise SolverError("feasible set has no usable interior")
        x0 = x_strict

    return BidPolytope(
        r_min, r_max, cap, cum_lo, cum_hi, fixed_values, free_idx,
        cons, basis, a_eq, b_eq, x0, scale,
    )


@dataclass(frozen=True, eq=False)
class BidProblem:
    """Requirement envelope (MWh) plus the market it bids into."""

    r_min: np.ndarray
    r_max: np.ndarray
    cap: np.ndarray
    market: MarketDay

    def __post_init__(self):
        object.__setattr__(self, "r_min", np.asarray(self.r_min, dtype=float))
        object.__setattr__(self, "r_max", np.asarray(self.r_max, dtype=float))
        object.__setattr__(self, "cap", np.asarray(self.cap, dtype=float))

    @classmethod
    def from_fleet(cls, fleet: FleetRequirements, market: MarketDay) -> "BidProblem":
        """kWh requirement envelope -> MWh bid problem (the one unit boundary)."""
        return cls(
            fleet.r_min / KWH_PER_MWH,
            fleet.r_max / KWH_PER_MWH,
            fleet.cap_kwh / KWH_PER_MWH,
            market,
        )

    @cached_property
    def polytope(self) -> BidPolytope:
        return _build_polytope(self.r_min, self.r_max, self.cap)

    @property
    def total_energy(self) -> float:
        return float(self.r_min.sum())


@dataclass(frozen=True, eq=False)
class SolveReport:
    schedule: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int


def _cost_terms(market: MarketDay):
    a, b, p0 = market.quad_coeffs

    def cost(e: np.ndarray) -> float:
        return float(np.sum(((a * e + b) * e + p0) * e))

    return a, b, p0, cost


def solve_individual(problem: BidProblem, tol: float = 1e-8) -> SolveReport:
    """Cost-minimal feasible schedule for a single aggregator.

    Raises `InfeasibleProblem` (with the violated slot) when the envelope
    admits no schedule, and `SolverError` carrying the best iterate when
    the Newton budget runs out.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    poly = problem.polytope
    a, b, p0, cost = _cost_terms(problem.market)
    if poly.n_free == 0:
        e = poly.fixed_values.copy()
        return SolveReport(e, cost(e), 0.0, 0)

    free = poly.free_idx

    def obj(x, derivs):
        e = poly.expand(x)
        f = cost(e) + _TIE_REG * float(e @ e)
        if not derivs:
            return f, None, None
        g = (3.0 * a * e**2 + 2.0 * b * e + p0 + 2.0 * _TIE_REG * e)[free]
        h = np.diag((6.0 * a * e + 2.0 * b + 2.0 * _TIE_REG)[free])
        return f, g, h

    res = newton_barrier(obj, poly.cons, poly.x0, basis=poly.basis, tol=tol)
    e = poly.expand(res.x)
    return SolveReport(e, cost(e), res.kkt_residual, res.newton_steps)


def _same_market(m1: MarketDay, m2: MarketDay) -> bool:
    if m1 is m2:
        return True
    return all(np.array_equal(x, y) for x, y in zip(m1.quad_coeffs, m2.quad_coeffs))


def combine(problems) -> BidProblem:
    """Sum member envelopes into the joint problem (shared market)."""
    problems = list(problems)
    if not problems:
        raise ValueError("need at least one problem")
    market = problems[0].market
    for p in problems[1:]:
        if not _same_market(p.market, market):
            raise ValueError("joint bidding requires a shared market day")
    return BidProblem(
        sum(p.r_min for p in problems),
        sum(p.r_max for p in problems),
        sum(p.cap for p in problems),
        market,
    )


def solve_joint(problems, tol: float = 1e-8) -> SolveReport:
    """Centralised optimum over the summed requirement envelopes."""
    for p in problems:
        p.polytope  # surfaces per-member infeasibility with its slot
    return solve_individual(combine(problems), tol)


def redistribute(joint, problems, tol: float = 1e-8, mode: str = "balanced"):
    """Split a joint schedule into per-aggregator feasible schedules.

    The split must reproduce the joint schedule hour by hour while every
    member stays inside its own envelope. ``mode="balanced"`` returns the
    unique split closest to the energy-share split; ``mode="any"`` returns
    the first strictly feasible split found (pure feasibility).

    Raises `SolverError` when no split exists (possible only if `joint`
    is not feasible for the combined envelope).
    """
    if mode not in ("balanced", "any"):
        raise ValueError(f"unknown mode {mode!r}")
    joint = np.asarray(joint, dtype=float)
    problems = list(problems)
    n = len(problems)
    scale = max(1.0, max(p.polytope.scale for p in problems))
    ctol = 1e-6 * scale

    # hours the joint schedule leaves empty pin every member share at its
    # nonnegativity bound; snap them and refuse them at the presolve level
    # so the split problem keeps a strict interior elsewhere
    zero_mask = joint <= 1e-9 * scale
    joint = np.where(zero_mask, 0.0, joint)
    try:
        polys = [
            _build_polytope(p.r_min, p.r_max, np.where(zero_mask, 0.0, p.polytope.cap))
            for p in problems
        ]
    except InfeasibleProblem as exc:
        raise SolverError(f"joint schedule incompatible with a member envelope ({exc})") from exc
    widths = [poly.n_free for poly in polys]
    offs = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    dim = int(offs[-1])

    cum_joint = np.cumsum(joint)
    cum_lo_all = sum(poly.cum_lo for poly in polys)
    cum_hi_all = sum(poly.cum_hi for poly in polys)
    cap_all = sum(poly.cap for poly in polys)

    # rows of the combined envelope that `joint` saturates force every
    # member to its own boundary; add those as equalities up front so the
    # split problem keeps a usable relative interior
    forced_lo = cum_joint - cum_lo_all <= ctol
    forced_hi = cum_hi_all - cum_joint <= ctol
    forced_cap = cap_all - joint <= ctol

    eq_rows, eq_rhs = [], []

    def add_row(row, rhs):
        eq_rows.append(row)
        eq_rhs.append(rhs)

    for i, poly in enumerate(polys):
        fixed_cumsum = np.cumsum(poly.fixed_values)
        w = widths[i]
        if len(poly.b_eq):
            block = np.zeros((len(poly.b_eq), dim))
            block[:, offs[i]:offs[i] + w] = poly.a_eq
            for r in range(len(poly.b_eq)):
                add_row(block[r], poly.b_eq[r])
        for t in range(HOURS):
            if not (forced_lo[t] or forced_hi[t]):
                continue
            support = poly.free_idx <= t
            target = poly.cum_lo[t] if forced_lo[t] else poly.cum_hi[t]
            rhs = target - fixed_cumsum[t]
            if not support.any():
                continue
            row = np.zeros(dim)
            row[offs[i]:offs[i] + w][support] = 1.0
            add_row(row, rhs)

    free_sets = [set(poly.free_idx.tolist()) for poly in polys]
    for t in range(HOURS):
        row = np.zeros(dim)
        rhs = joint[t]
        any_support = False
        for i, poly in enumerate(polys):
            if t not in free_sets[i]:
                rhs -= poly.fixed_values[t]
                continue
            pos = int(np.searchsorted(poly.free_idx, t))
            row[offs[i] + pos] = 1.0
            any_support = True
            if forced_cap[t]:
                cap_row = np.zeros(dim)
                cap_row[offs[i] + pos] = 1.0
                add_row(cap_row, poly.cap[t])
        if not any_support:
            if abs(rhs) > ctol:
                raise SolverError(f"joint schedule incompatible with member windows at slot {t}")
            continue
        add_row(row, rhs)

    a_eq = np.vstack(eq_rows) if eq_rows else np.zeros((0, dim))
    b_eq = np.array(eq_rhs)

    if dim == 0:
        fixed = [poly.fixed_values.copy() for poly in polys]
        if np.abs(sum(fixed) - joint).max() > ctol:
            raise SolverError("joint schedule incompatible with fully fixed members")
        return fixed

    x00, *_ = np.linalg.lstsq(a_eq, b_eq, rcond=None)
    if np.abs(a_eq @ x00 - b_eq).max(initial=0.0) > ctol:
        raise SolverError("no split satisfies the coupling equalities")
    basis = null_space_basis(a_eq)

    blocks_a, blocks_b = [], []
    lo_idx, lo_val, up_idx, up_val = [], [], [], []
    for i, poly in enumerate(polys):
        c = poly.cons
        if len(c.b):
            block = np.zeros((len(c.b), dim))
            block[:, offs[i]:offs[i] + widths[i]] = c.a
            blocks_a.append(block)
            blocks_b.append(c.b)
        lo_idx.append(c.lo_idx + offs[i])
        lo_val.append(c.lo_val)
        up_idx.append(c.up_idx + offs[i])
        up_val.append(c.up_val)
    cons = ConstraintSet(
        np.vstack(blocks_a) if blocks_a else np.zeros((0, dim)),
        np.concatenate(blocks_b) if blocks_b else np.zeros(0),
        np.concatenate(lo_idx).astype(int),
        np.concatenate(lo_val),
        np.concatenate(up_idx).astype(int),
        np.concatenate(up_val),
    )

    if basis.shape[1] == 0:
        if cons.violation(x00) > ctol:
            raise SolverError("fully determined split violates a member envelope")
        x = x00
    else:
        x = strictly_feasible(cons, x00, basis=basis)
        if x is None:
            raise SolverError("no strictly feasible split found")
        if mode == "balanced":
            totals = np.array([max(p.total_energy, 0.0) for p in problems])
            shares = totals / totals.sum() if totals.sum() > 0 else np.full(n, 1.0 / n)
            targets = [shares[i] * joint for i in range(n)]

            def obj(xx, derivs):
                f = 0.0
                g = np.zeros(dim)
                for i, poly in enumerate(polys):
                    e = poly.expand(xx[offs[i]:offs[i] + widths[i]])
                    d = e - targets[i]
                    f += 0.5 * float(d @ d)
                    g[offs[i]:offs[i] + widths[i]] = d[poly.free_idx]
                if not derivs:
                    return f, None, None
                return f, g, np.eye(dim)

            res = newton_barrier(obj, cons, x, basis=basis, tol=tol)
            x = res.x

    return [polys[i].expand(x[offs[i]:offs[i] + widths[i]]) for i in range(n)]


def agent_cost_terms(allocations: np.ndarray, market: MarketDay, agent: int):
    """Cost of `agent` under everyone's allocations, with its gradient.

    The price every hour is set by the column sum, so the gradient has a
    cross term in every other agent's row.
    """
    x = np.asarray(allocations, dtype=float)
    a, b, p0 = market.quad_coeffs
    s = x.sum(axis=0)
    o = x[agent]
    price = (a * s + b) * s + p0
    dprice = 2.0 * a * s + b
    f = float(o @ price)
    grad = np.broadcast_to(o * dprice, x.shape).copy()
    grad[agent] += price
    return f, grad


class LocalSubproblem:
    """One aggregator's penalised consensus step, structure precomputed.

    Minimises the agent's own cost under the shared price (a function of
    all rows) plus the dual term and the proximal penalty tying the
    proposal to the current global iterate. The agent's own row must stay
    inside its envelope; other rows are only kept nonnegative.

    Hours where the agent's own slot is pinned at zero decouple: each
    other agent's entry there minimises a one-dimensional prox with a
    nonnegativity bound, so those coordinates are filled in closed form
    and never enter the Newton system.
    """

    def __init__(self, problem: BidProblem, agent: int, n_agents: int):
        if not 0 <= agent < n_agents:
            raise IndexError(f"agent {agent} out of range for {n_agents}")
        self.problem = problem
        self.agent = agent
        self.n = n_agents
        self.poly = problem.polytope
        poly = self.poly
        self.w0 = poly.n_free
        self.other_rows = [j for j in range(n_agents) if j != agent]

        free_set = {int(t): p for p, t in enumerate(poly.free_idx)}
        own_zero = (poly.fixed_values <= 1e-12 * poly.scale)
        own_zero[poly.free_idx] = False
        self.coupled_hours = [t for t in range(HOURS) if not own_zero[t]]
        self.closed_hours = np.flatnonzero(own_zero)
        n_oth = n_agents - 1
        hcount = len(self.coupled_hours)
        self.dim = self.w0 + hcount * n_oth

        m_own = len(poly.cons.b)
        a_gen = np.zeros((m_own, self.dim))
        a_gen[:, : self.w0] = poly.cons.a
        lo_idx = np.concatenate([poly.cons.lo_idx, np.arange(self.w0, self.dim)])
        lo_val = np.concatenate([poly.cons.lo_val, np.zeros(self.dim - self.w0)])
        self.cons = ConstraintSet(a_gen, poly.cons.b.copy(), lo_idx.astype(int),
                                  lo_val, poly.cons.up_idx.copy(), poly.cons.up_val.copy())

        if poly.basis is not None:
            k = poly.basis.shape[1]
            basis = np.zeros((self.dim, k + self.dim - self.w0))
            basis[: self.w0, :k] = poly.basis
            basis[self.w0:, k:] = np.eye(self.dim - self.w0)
            self.basis = basis
        else:
            self.basis = None

        # per-coupled-hour index lists into the joint variable vector
        self.hour_idx = []
        self.own_in_block = []
        for pos_h, t in enumerate(self.coupled_hours):
            idx = []
            if t in free_set:
                self.own_in_block.append(True)
                idx.append(free_set[t])
            else:
                self.own_in_block.append(False)
            idx.extend(self.w0 + r * hcount + pos_h for r in range(n_oth))
            self.hour_idx.append(np.array(idx, dtype=int))

        self.a, self.b, self.p0 = problem.market.quad_coeffs
        self.floor = 0.02 * poly.scale / HOURS

    def _closed_fill(self, e_global: np.ndarray, xi: np.ndarray, rho: float) -> np.ndarray:
        """Other agents' rows with decoupled hours already at their optimum."""
        others = np.maximum(e_global[self.other_rows] - xi[self.other_rows] / rho, 0.0)
        return others

    def _assemble(self, x: np.ndarray, fill: np.ndarray) -> np.ndarray:
        full = np.empty((self.n, HOURS))
        full[self.agent] = self.poly.expand(x[: self.w0])
        if self.n > 1:
            others = fill.copy()
            others[:, self.coupled_hours] = x[self.w0:].reshape(self.n - 1, len(self.coupled_hours))
            full[self.other_rows] = others
        return full

    def _objective(self, e_global: np.ndarray, xi: np.ndarray, rho: float, fill: np.ndarray):
        a, b, p0 = self.a, self.b, self.p0
        agent, free = self.agent, self.poly.free_idx
        hcount = len(self.coupled_hours)

        def obj(x, derivs):
            full = self._assemble(x, fill)
            s = full.sum(axis=0)
            o = full[agent]
            d = full - e_global
            price = (a * s + b) * s + p0
            f = float(o @ price) + float(np.sum(xi * d)) + 0.5 * rho * float(np.sum(d * d))
            if not derivs:
                return f, None, None
            dprice = 2.0 * a * s + b
            gfull = np.broadcast_to(o * dprice, full.shape).copy()
            gfull[agent] += price
            gfull += xi + rho * d
            g = np.concatenate([
                gfull[agent][free],
                gfull[self.other_rows][:, self.coupled_hours].ravel(),
            ])
            h = rho * np.eye(self.dim)
            for pos_h, t in enumerate(self.coupled_hours):
                idx = self.hour_idx[pos_h]
                block = np.full((len(idx), len(idx)), 2.0 * a[t] * o[t])
                if self.own_in_block[pos_h]:
                    block[0, :] += dprice[t]
                    block[:, 0] += dprice[t]
                h[np.ix_(idx, idx)] += block
            return f, g, h

        return obj

    def start(self, e_global: np.ndarray) -> np.ndarray:
        others = np.maximum(e_global[self.other_rows][:, self.coupled_hours], self.floor)
        return np.concatenate([self.poly.x0, others.ravel()])

    def solve(
        self,
        e_global: np.ndarray,
        xi: np.ndarray,
        rho: float,
        tol: float = 1e-8,
        warm: np.ndarray | None = None,
    ) -> tuple[np.ndarray, BarrierResult]:
        """Run the penalised local step; returns (proposal, solver info)."""
        if rho <= 0:
            raise ValueError("rho must be positive")
        e_global = np.asarray(e_global, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if e_global.shape != (self.n, HOURS) or xi.shape != (self.n, HOURS):
            raise ValueError("state snapshot must have shape (n_agents, 24)")

        x0 = None
        if warm is not None and warm.shape == (self.dim,):
            # polished solutions sit exactly on their active rows; pull a
            # hair toward a strictly interior point before reusing them
            cand = 0.999 * warm + 0.001 * self.start(e_global)
            if self.cons.min_slack(cand) > 0:
                x0 = cand
        if x0 is None:
            x0 = self.start(e_global)

        fill = self._closed_fill(e_global, xi, rho) if self.n > 1 else np.zeros((0, HOURS))
        obj = self._objective(e_global, xi, rho, fill)
        res = newton_barrier(obj, self.cons, x0, basis=self.basis, tol=tol)
        return self._assemble(res.x, fill), res


def solve_local_subproblem(
    problem: BidProblem,
    agent: int,
    n_agents: int,
    e_global: np.ndarray,
    xi: np.ndarray,
    rho: float,
    tol: float = 1e-8,
    warm: np.ndarray | None = None,
) -> np.ndarray:
    """One-shot penalised local step (see `LocalSubproblem`)."""
    sub = LocalSubproblem(problem, agent, n_agents)
    proposal, _ = sub.solve(e_global, xi, rho, tol, warm)
    return proposal

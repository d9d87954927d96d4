"""Dense log-barrier Newton solver for small polytope-constrained problems.

All optimisation in this package reduces to minimising a smooth (possibly
locally nonconvex) objective over a few hundred variables subject to a
fixed, small set of linear inequalities, optionally restricted to an
affine subspace. Problems of this size are solved fastest and most
reproducibly by a second-order method: damped Newton steps on the
barrier-augmented objective, with the penalty weight driven down
geometrically, then an active-set polish that solves the identified
equality system to machine precision. The polish matters because a pure
primal barrier cannot push complementarity below roughly the square root
of machine epsilon without its Hessian conditioning destroying the Newton
directions.

Nonconvex curvature is handled by Levenberg-style diagonal damping, so
every step is a descent step regardless of the Hessian. Equality
constraints are eliminated once through a nullspace basis; box
constraints are kept separate from general rows so their barrier terms
stay O(dim) instead of O(rows * dim^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class SolverError(RuntimeError):
    """Solver failed to converge; carries the best iterate found."""

    def __init__(self, message: str, best_x: np.ndarray | None = None):
        super().__init__(message)
        self.best_x = best_x


@dataclass(frozen=True)
class ConstraintSet:
    """Linear inequalities ``a @ x <= b`` plus per-coordinate bounds.

    Bounds are listed by coordinate index: ``x[lo_idx] >= lo_val`` and
    ``x[up_idx] <= up_val``. Any of the three groups may be empty.
    """

    a: np.ndarray
    b: np.ndarray
    lo_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    lo_val: np.ndarray = field(default_factory=lambda: np.empty(0))
    up_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    up_val: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_rows(self) -> int:
        return len(self.b) + len(self.lo_idx) + len(self.up_idx)

    def slacks(self, x: np.ndarray):
        s_gen = self.b - self.a @ x if len(self.b) else np.empty(0)
        s_lo = x[self.lo_idx] - self.lo_val
        s_up = self.up_val - x[self.up_idx]
        return s_gen, s_lo, s_up

    def min_slack(self, x: np.ndarray) -> float:
        pieces = [s for s in self.slacks(x) if len(s)]
        return min(float(s.min()) for s in pieces) if pieces else np.inf

    def violation(self, x: np.ndarray) -> float:
        return max(0.0, -self.min_slack(x)) if self.n_rows else 0.0

    def dense_rows(self, dim: int):
        """All constraints as dense rows (used by the phase-1 program)."""
        blocks_a, blocks_b = [], []
        if len(self.b):
            blocks_a.append(self.a)
            blocks_b.append(self.b)
        if len(self.lo_idx):
            rows = np.zeros((len(self.lo_idx), dim))
            rows[np.arange(len(self.lo_idx)), self.lo_idx] = -1.0
            blocks_a.append(rows)
            blocks_b.append(-self.lo_val)
        if len(self.up_idx):
            rows = np.zeros((len(self.up_idx), dim))
            rows[np.arange(len(self.up_idx)), self.up_idx] = 1.0
            blocks_a.append(rows)
            blocks_b.append(self.up_val)
        if not blocks_a:
            return np.zeros((0, dim)), np.zeros(0)
        return np.vstack(blocks_a), np.concatenate(blocks_b)


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    newton_steps: int
    mu_final: float


def null_space_basis(a_eq: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    return scipy.linalg.null_space(a_eq, rcond=rcond)


def _barrier_value(obj_f, cons: ConstraintSet, x: np.ndarray, mu: float) -> float:
    total = obj_f(x)
    for s in cons.slacks(x):
        if len(s):
            if s.min() <= 0.0:
                return np.inf
            total -= mu * float(np.log(s).sum())
    return total


def _max_step(cons: ConstraintSet, x: np.ndarray, dx: np.ndarray) -> float:
    """Largest step keeping every slack positive (before damping)."""
    limit = np.inf
    s_gen, s_lo, s_up = cons.slacks(x)
    if len(s_gen):
        adx = cons.a @ dx
        mask = adx > 0
        if mask.any():
            limit = min(limit, float((s_gen[mask] / adx[mask]).min()))
    if len(s_lo):
        d = -dx[cons.lo_idx]
        mask = d > 0
        if mask.any():
            limit = min(limit, float((s_lo[mask] / d[mask]).min()))
    if len(s_up):
        d = dx[cons.up_idx]
        mask = d > 0
        if mask.any():
            limit = min(limit, float((s_up[mask] / d[mask]).min()))
    return limit


def _damped_chol(hz: np.ndarray):
    """Cholesky with escalating diagonal damping; returns (factor, tau)."""
    diag_scale = max(float(np.abs(np.diag(hz)).max(initial=0.0)), 1e-12)
    tau = 0.0
    eye = np.eye(len(hz))
    for _ in range(60):
        try:
            return scipy.linalg.cho_factor(hz + tau * eye, lower=True, check_finite=False), tau
        except np.linalg.LinAlgError:
            tau = max(4.0 * tau, 1e-12 * diag_scale)
    raise SolverError("Hessian damping failed")


def _polish_at(obj, cons: ConstraintSet, x, thresh, z, gscale, scale_x, tol):
    """Pin rows with slack below `thresh`, solve exactly, certify KKT."""
    from scipy.optimize import nnls as _nnls

    dim = len(x)
    kz = z.shape[1]
    s_gen, s_lo, s_up = cons.slacks(x)
    rows, rhs = [], []
    if len(s_gen):
        for r in np.flatnonzero(s_gen <= thresh):
            rows.append(cons.a[r])
            rhs.append(cons.b[r])
    for k in np.flatnonzero(s_lo <= thresh):
        row = np.zeros(dim)
        row[cons.lo_idx[k]] = -1.0
        rows.append(row)
        rhs.append(-cons.lo_val[k])
    for k in np.flatnonzero(s_up <= thresh):
        row = np.zeros(dim)
        row[cons.up_idx[k]] = 1.0
        rows.append(row)
        rhs.append(cons.up_val[k])
    a_all = np.array(rows) if rows else np.zeros((0, dim))
    b_all = np.array(rhs)
    a_red_all = a_all @ z if len(b_all) else np.zeros((0, kz))

    a_act, b_act, a_red = a_all, b_all, a_red_all
    if len(a_red):
        _, r_qr, piv = scipy.linalg.qr(a_red.T, pivoting=True, mode="economic")
        diag = np.abs(np.diag(r_qr))
        rank = int((diag > max(diag.max(initial=0.0), 1e-300) * 1e-12).sum())
        keep = np.sort(piv[:rank])
        a_act, b_act, a_red = a_all[keep], b_all[keep], a_red_all[keep]

    m_act = len(a_red)
    y = np.zeros(kz)
    x_cur = x.copy()
    nu = np.zeros(m_act)
    best = None
    for _ in range(25):
        _, g, h = obj(x_cur, True)
        gz = z.T @ g
        hz = z.T @ h @ z
        hz = 0.5 * (hz + hz.T)
        r_act = a_act @ x_cur - b_act if m_act else np.zeros(0)
        station = gz + (a_red.T @ nu if m_act else 0.0)
        merit = float(np.abs(station).max(initial=0.0)) / gscale
        if m_act:
            merit = max(merit, float(np.abs(r_act).max(initial=0.0)) / scale_x)
        if best is None or merit < best[0]:
            best = (merit, x_cur.copy())
        if merit <= 0.01 * tol:
            break
        kkt_mat = np.zeros((kz + m_act, kz + m_act))
        reg = 1e-12 * max(1.0, float(np.abs(np.diag(hz)).max(initial=0.0)))
        kkt_mat[:kz, :kz] = hz + reg * np.eye(kz)
        if m_act:
            kkt_mat[:kz, kz:] = a_red.T
            kkt_mat[kz:, :kz] = a_red
        rhs_vec = np.concatenate([-gz, -r_act])
        try:
            sol = np.linalg.solve(kkt_mat, rhs_vec)
        except np.linalg.LinAlgError:
            return None
        y = y + sol[:kz]
        nu = sol[kz:]
        x_cur = x + z @ y
    merit, x_cur = best
    if merit > 0.1 * tol:
        return None
    if cons.violation(x_cur) > 1e-9 * scale_x:
        return None

    # dual certificate over the full (possibly dependent) active set: on a
    # degenerate face an independent subset's multipliers can have wrong
    # signs even though a nonnegative combination exists
    _, g, _ = obj(x_cur, True)
    gz = z.T @ g
    if len(b_all):
        nu_all, _ = _nnls(a_red_all.T, -gz)
        dual_resid = float(np.abs(gz + a_red_all.T @ nu_all).max(initial=0.0))
    else:
        dual_resid = float(np.abs(gz).max(initial=0.0))
    if dual_resid > 0.5 * tol * gscale:
        return None
    kkt = max(dual_resid / gscale, cons.violation(x_cur) / scale_x)
    return x_cur, kkt


def _polish(obj, cons: ConstraintSet, x: np.ndarray, mu: float, basis, gscale: float, tol: float):
    """Active-set crossover: exact Newton on the identified equality system.

    The split between active and inactive rows is read off the slack
    spectrum: the sqrt rule separates the generic case, and when weakly
    active rows blur it, the largest multiplicative gaps in the sorted
    slacks provide alternative cuts. Each candidate set is pinned, solved
    exactly and certified; the first certificate wins. Returns
    ``(x, kkt)`` or None when no candidate face can be certified.
    """
    scale_x = max(1.0, float(np.abs(x).max(initial=0.0)))
    z = basis if basis is not None else np.eye(len(x))

    s_all = np.sort(np.concatenate([s for s in cons.slacks(x) if len(s)]))
    candidates = [np.sqrt(mu * scale_x / gscale)]
    near = s_all[s_all <= 1e-2 * scale_x]
    if len(near) and len(s_all) > len(near):
        ratios = []
        for k in range(len(near)):
            nxt = s_all[k + 1] if k + 1 < len(s_all) else None
            if nxt is not None and nxt > 30.0 * max(near[k], 1e-300):
                ratios.append((nxt / max(near[k], 1e-300), np.sqrt(near[k] * nxt)))
        ratios.sort(reverse=True)
        candidates.extend(t for _, t in ratios[:3])

    seen = set()
    for thresh in candidates:
        key = round(float(np.log10(max(thresh, 1e-300))), 2)
        if key in seen:
            continue
        seen.add(key)
        out = _polish_at(obj, cons, x, thresh, z, gscale, scale_x, tol)
        if out is not None:
            return out
    return None


def newton_barrier(
    obj,
    cons: ConstraintSet,
    x0: np.ndarray,
    *,
    basis: np.ndarray | None = None,
    tol: float = 1e-8,
    mu0: float | None = None,
    mu_shrink: float = 0.15,
    max_newton: int = 800,
    stop_when=None,
    polish: bool = True,
) -> BarrierResult:
    """Minimise ``obj`` over ``cons`` starting from a strictly feasible x0.

    Parameters
    ----------
    obj : callable
        ``obj(x, derivs)`` returning ``(f, g, H)``; ``g`` and ``H`` may be
        None when ``derivs`` is False.
    cons : ConstraintSet
    x0 : array
        Strictly feasible start. When `basis` is given, iterates stay in
        ``x0 + range(basis)`` (the caller has eliminated equality rows).
    tol : float
        Target on the scaled KKT residual (stationarity, complementarity
        and feasibility, relative to the gradient scale).
    stop_when : callable, optional
        Early-exit predicate on the current iterate, checked after every
        Newton step (used by the feasibility phase; disables the polish).

    Raises
    ------
    SolverError
        If the Newton budget runs out or the residual target cannot be
        certified; carries the best iterate.
    """
    x = np.array(x0, dtype=float)
    dim = len(x)
    if basis is not None and basis.shape[1] == 0:
        f, _, _ = obj(x, False)
        return BarrierResult(x, f, 0.0, 0, 0.0)
    if cons.min_slack(x) <= 0:
        raise SolverError("barrier start is not strictly feasible", x)

    def obj_f(xx):
        return obj(xx, False)[0]

    def reduced(vec):
        return basis.T @ vec if basis is not None else vec

    f, g, _ = obj(x, True)
    gscale = max(1.0, float(np.abs(reduced(g)).max(initial=0.0)))
    scale_x = max(1.0, float(np.abs(x).max(initial=0.0)))
    m = max(cons.n_rows, 1)

    if mu0 is None:
        s_gen, s_lo, s_up = cons.slacks(x)
        bar_g = np.zeros(dim)
        if len(s_gen):
            bar_g += cons.a.T @ (1.0 / s_gen)
        np.subtract.at(bar_g, cons.lo_idx, 1.0 / s_lo)
        np.add.at(bar_g, cons.up_idx, 1.0 / s_up)
        denom = float(np.abs(reduced(bar_g)).max(initial=0.0))
        mu0 = 0.1 * gscale / max(denom, 1e-12)
    # stop shrinking mu once the scaled complementarity meets tol; never
    # below the conditioning guard where the barrier Hessian eats the digits
    mu_exit = max(8e-9, 0.4 * tol) * gscale * scale_x
    mu = max(mu0, mu_exit)
    final_target = max(0.45 * tol * gscale, 2e-13 * gscale * np.sqrt(dim))

    steps = 0
    station = np.inf
    while True:
        inner_target = 0.5 * mu if mu > 1.01 * mu_exit else final_target
        stuck = False
        for _ in range(60):
            f, g, h = obj(x, True)
            s_gen, s_lo, s_up = cons.slacks(x)
            grad = g.copy()
            hess = h.copy()
            if len(s_gen):
                w = mu / s_gen
                grad += cons.a.T @ w
                hess += (cons.a * (w / s_gen)[:, None]).T @ cons.a
            if len(s_lo):
                w = mu / s_lo
                np.subtract.at(grad, cons.lo_idx, w)
                np.add.at(hess, (cons.lo_idx, cons.lo_idx), w / s_lo)
            if len(s_up):
                w = mu / s_up
                np.add.at(grad, cons.up_idx, w)
                np.add.at(hess, (cons.up_idx, cons.up_idx), w / s_up)

            gz = reduced(grad)
            station = float(np.abs(gz).max(initial=0.0))
            if station <= inner_target:
                break
            hz = basis.T @ hess @ basis if basis is not None else hess
            hz = 0.5 * (hz + hz.T)
            chol, tau = _damped_chol(hz)
            dy = -scipy.linalg.cho_solve(chol, gz, check_finite=False)
            dx = basis @ dy if basis is not None else dy

            slope = float(gz @ dy)
            alpha = min(1.0, 0.995 * _max_step(cons, x, dx))
            # a step no double can represent means this mu is solved to the
            # precision floor; move on rather than cycle in place
            step_inf = alpha * float(np.abs(dx).max(initial=0.0))
            if step_inf <= 4.0 * np.finfo(float).eps * max(1.0, float(np.abs(x).max())):
                stuck = True
                break
            phi0 = f - mu * sum(float(np.log(s).sum()) for s in (s_gen, s_lo, s_up) if len(s))
            # below the resolvable decrease, a sufficient-decrease test is
            # noise; inside the undamped Newton basin the step is safe
            floor = 64.0 * np.finfo(float).eps * (abs(phi0) + abs(f) + 1.0)
            if tau == 0.0 and -slope * alpha <= floor:
                x = x + alpha * dx
                steps += 1
                if steps >= max_newton:
                    raise SolverError(f"Newton budget {max_newton} exhausted", x)
                continue
            for _ in range(60):
                trial = x + alpha * dx
                if _barrier_value(obj_f, cons, trial, mu) <= phi0 + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                stuck = True
                break
            x = trial
            steps += 1
            if steps >= max_newton:
                raise SolverError(f"Newton budget {max_newton} exhausted", x)
            if stop_when is not None and stop_when(x):
                f = obj(x, False)[0]
                return BarrierResult(x, f, np.inf, steps, mu)
        if mu <= mu_exit and (station <= inner_target or stuck):
            break
        mu = max(mu * mu_shrink, mu_exit)
        if stop_when is not None and stop_when(x):
            break

    # scaled residual: stationarity over the gradient scale, worst per-row
    # complementarity product over the problem's gradient-times-x scale
    kkt = max(station / gscale, mu / (gscale * scale_x))
    if stop_when is None and polish:
        polished = _polish(obj, cons, x, mu, basis, gscale, tol)
        if polished is not None:
            x, kkt = polished
    f = obj(x, False)[0]
    if stop_when is None and kkt > tol:
        raise SolverError(f"stalled at KKT residual {kkt:.3e} > tol {tol:.3e}", x)
    return BarrierResult(x, f, kkt, steps, mu)


def strictly_feasible(
    cons: ConstraintSet,
    x0: np.ndarray,
    *,
    basis: np.ndarray | None = None,
    margin: float | None = None,
    max_newton: int = 400,
) -> np.ndarray | None:
    """Move x0 strictly inside `cons` without leaving ``x0 + range(basis)``.

    Returns None when no strictly interior point exists (up to `margin`).
    x0 itself need not satisfy the inequalities. This is the standard
    single-slack feasibility program, early-stopped as soon as the slack
    variable turns safely negative.
    """
    dim = len(x0)
    scale = 1.0
    if len(cons.b):
        scale = max(scale, float(np.abs(cons.b).max()))
    if len(cons.up_val):
        scale = max(scale, float(np.abs(cons.up_val).max()))
    if margin is None:
        margin = 1e-7 * scale
    if cons.min_slack(x0) >= margin:
        return np.array(x0, dtype=float)

    a_all, b_all = cons.dense_rows(dim)
    m = len(b_all)
    a_aug = np.hstack([a_all, -np.ones((m, 1))])
    cons_aug = ConstraintSet(a_aug, b_all)
    s0 = max(0.0, -cons.min_slack(x0)) + 0.05 * scale
    x_aug = np.concatenate([x0, [s0]])
    if basis is not None:
        basis_aug = np.zeros((dim + 1, basis.shape[1] + 1))
        basis_aug[:dim, : basis.shape[1]] = basis
        basis_aug[dim, -1] = 1.0
    else:
        basis_aug = None

    e_last = np.zeros(dim + 1)
    e_last[-1] = 1.0
    zero_h = np.zeros((dim + 1, dim + 1))

    def obj(x, derivs):
        return (float(x[-1]), e_last, zero_h) if derivs else (float(x[-1]), None, None)

    target = -3.0 * margin
    try:
        res = newton_barrier(
            obj,
            cons_aug,
            x_aug,
            basis=basis_aug,
            tol=1e-6,
            max_newton=max_newton,
            stop_when=lambda xa: xa[-1] <= target,
        )
    except SolverError as exc:
        if exc.best_x is None or exc.best_x[-1] > -margin:
            return None
        res = BarrierResult(exc.best_x, 0.0, np.inf, 0, 0.0)
    if res.x[-1] <= -margin:
        return res.x[:-1]
    return None

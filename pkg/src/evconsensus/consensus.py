"""Global-variable consensus ADMM over the bidding agents.

Every round each agent solves its penalised local step and reports a
proposal covering everyone's schedules; the coordinator averages the
proposals (plus scaled duals) into the global iterate and each agent
updates its dual. The loop stops when the squared primal and dual
residuals both fall below their tolerances.

Agent behaviours hook into the reporting step only: an attacking agent
still solves the honest local problem, then rewrites its report. Attacks
activate from the second round (k >= 1), so round 0 always collects
honest proposals; the manipulation detector feeds on the proposals of
rounds 0 and 1, which the state retains unconditionally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackSpec, apply_attack, _FREEZE_FAMILY
from .bidding import BidProblem, LocalSubproblem, SolveReport, solve_individual
from .market import HOURS, MarketDay, evaluate_cost
from .optim import SolverError


@dataclass(frozen=True)
class StopCriteria:
    """Squared-residual tolerances and the iteration cap.

    Unset tolerances default to ``1e-4 * n * 24``, scaling with the
    stacked residual dimension.
    """

    eps_pri: float | None = None
    eps_dual: float | None = None
    max_iters: int = 200

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        for v in (self.eps_pri, self.eps_dual):
            if v is not None and v < 0:
                raise ValueError("tolerances must be nonnegative")

    def resolve(self, n: int) -> tuple[float, float]:
        default = 1e-4 * n * HOURS
        return (
            default if self.eps_pri is None else self.eps_pri,
            default if self.eps_dual is None else self.eps_dual,
        )


@dataclass(frozen=True)
class AgentBehavior:
    agent: int
    attack: AttackSpec | None = None

    @property
    def is_honest(self) -> bool:
        return self.attack is None


def honest_behaviors(n: int) -> list[AgentBehavior]:
    return [AgentBehavior(i) for i in range(n)]


@dataclass(frozen=True)
class IterationRecord:
    k: int
    r_sq: float
    s_sq: float
    objectives: tuple


@dataclass(eq=False)
class ConsensusState:
    """Iterates and history of one consensus run.

    `e_global`, `e_local[i]` and `xi[i]` hold the (n, 24) global iterate,
    each agent's latest reported proposal and each agent's dual.
    `proposals` keeps the round-0 and round-1 reports for the detector;
    `iterates` holds full per-round snapshots when tracing is on.
    """

    n: int
    rho: float
    k: int = 0
    e_global: np.ndarray = None
    e_local: np.ndarray = None
    xi: np.ndarray = None
    history: list = field(default_factory=list)
    proposals: list = field(default_factory=list)
    iterates: list | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        shape = (self.n, self.n, HOURS)
        if self.e_global is None:
            self.e_global = np.zeros((self.n, HOURS))
        if self.e_local is None:
            self.e_local = np.zeros(shape)
        if self.xi is None:
            self.xi = np.zeros(shape)
        if self.e_global.shape != (self.n, HOURS) or self.e_local.shape != shape or self.xi.shape != shape:
            raise ValueError("state arrays have inconsistent dimensions")

    def dual_average(self) -> np.ndarray:
        return self.xi.mean(axis=0)

    def global_total(self) -> np.ndarray:
        """Summed per-agent blocks of the global iterate (24,)."""
        return self.e_global.sum(axis=0)


class _RunContext:
    """Per-run solver cache: local subproblems, warm starts, frozen optima."""

    def __init__(self, problems, behaviors, tol: float):
        n = len(problems)
        self.subproblems = [LocalSubproblem(problems[i], i, n) for i in range(n)]
        self.warm = [None] * n
        self.individual_opt = {}
        for b in behaviors:
            if b.attack is not None and b.attack.vector in _FREEZE_FAMILY:
                self.individual_opt[b.agent] = solve_individual(problems[b.agent], tol).schedule


def _check_behaviors(behaviors, n: int) -> None:
    if len(behaviors) != n or sorted(b.agent for b in behaviors) != list(range(n)):
        raise ValueError("behaviors must cover every agent exactly once")
    deviators = [b for b in behaviors if not b.is_honest]
    if len(deviators) > 1:
        raise ValueError("at most one deviating agent per run")


def admm_iterate(
    state: ConsensusState,
    behaviors,
    problems,
    tol: float = 1e-8,
    _ctx: _RunContext | None = None,
) -> ConsensusState:
    """Advance the consensus state by one full round.

    Local solver failures propagate as `SolverError` tagged with the
    failing agent's index.
    """
    n = state.n
    _check_behaviors(behaviors, n)
    if len(problems) != n:
        raise ValueError("need one problem per agent")
    ctx = _ctx if _ctx is not None else _RunContext(problems, behaviors, tol)
    by_agent = {b.agent: b for b in behaviors}

    proposals = np.empty((n, n, HOURS))
    for i in range(n):
        try:
            honest, res = ctx.subproblems[i].solve(
                state.e_global, state.xi[i], state.rho, tol, ctx.warm[i]
            )
        except SolverError as exc:
            raise SolverError(f"agent {i}: {exc}", exc.best_x) from exc
        ctx.warm[i] = res.x
        spec = by_agent[i].attack
        if spec is not None and state.k >= 1:
            honest = apply_attack(
                spec, i, honest,
                individual_opt=ctx.individual_opt.get(i),
                prev_locals=state.e_local,
            )
        proposals[i] = honest

    e_prev = state.e_global
    e_global = (proposals + state.xi / state.rho).mean(axis=0)
    xi = state.xi + state.rho * (proposals - e_global)

    r_sq = float(np.sum((proposals - e_global) ** 2))
    s_sq = float(np.sum((e_global - e_prev) ** 2))
    market = problems[0].market
    objectives = tuple(
        evaluate_cost(e_global, market, i) for i in range(n)
    )
    record = IterationRecord(state.k, r_sq, s_sq, objectives)

    new = ConsensusState(
        n=n,
        rho=state.rho,
        k=state.k + 1,
        e_global=e_global,
        e_local=proposals,
        xi=xi,
        history=state.history + [record],
        proposals=state.proposals + [proposals.copy()] if state.k < 2 else state.proposals,
        iterates=state.iterates,
        seed=state.seed,
    )
    if new.iterates is not None:
        new.iterates = state.iterates + [{
            "k": state.k,
            "e_local": proposals.copy(),
            "e_global": e_global.copy(),
            "xi": xi.copy(),
        }]
    return new


def run(
    problems,
    behaviors=None,
    rho: float = 1.0,
    stop: StopCriteria = StopCriteria(),
    seed: int | None = None,
    tol: float = 1e-8,
    trace_full: bool = False,
) -> tuple[ConsensusState, str]:
    """Run the consensus loop from a zero start until the stop rule fires.

    Returns the final state and a termination reason, ``"converged"`` or
    ``"max_iters"``. The zero start makes the round-0 proposals each
    agent's penalty-regularised individual solve, which is what the
    detector's difference matrix assumes.
    """
    problems = list(problems)
    n = len(problems)
    if behaviors is None:
        behaviors = honest_behaviors(n)
    _check_behaviors(behaviors, n)
    ctx = _RunContext(problems, behaviors, tol)
    state = ConsensusState(n=n, rho=rho, seed=seed, iterates=[] if trace_full else None)
    eps_pri, eps_dual = stop.resolve(n)
    for _ in range(stop.max_iters):
        state = admm_iterate(state, behaviors, problems, tol, _ctx=ctx)
        rec = state.history[-1]
        if rec.r_sq <= eps_pri and rec.s_sq <= eps_dual:
            return state, "converged"
    return state, "max_iters"


def distance_to_optimum(state: ConsensusState, joint_report: SolveReport) -> float:
    """Relative gap between the consensus total and the centralised optimum."""
    target = np.asarray(joint_report.schedule, dtype=float)
    if target.shape != (HOURS,):
        raise ValueError("joint schedule must have 24 entries")
    gap = np.linalg.norm(state.global_total() - target)
    return float(gap / max(1.0, np.linalg.norm(target)))


def auto_rho(market: MarketDay, rho_hat: float) -> float:
    """Scale-free penalty rule: `rho_hat` divided by the mean base price."""
    _, _, p0 = market.quad_coeffs
    mean_p0 = float(p0.mean())
    return rho_hat / max(mean_p0, 1e-12)

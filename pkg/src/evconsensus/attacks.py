"""Manipulation transforms a self-interested agent can apply to its report.

Every vector takes the honest local proposal (the matrix of schedules the
agent computed for everyone) and rewrites parts of it before the report
reaches the aggregation step. Nothing else is touched: duals, other
agents' states and the attacker's own solving all stay intact, so the
attack surface is exactly the reported proposal.

Targeted vectors rewrite one victim row; the ``*All`` variants rewrite
every other row. ``Freeze`` pins the attacker's own row to its
individually optimal schedule and composes with the Shift/Proportional
families. ``Adversarial`` instead nudges the victim's row toward what the
victim itself proposed last round, trying to make the victim look like
the deviator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market import HOURS

VECTORS = (
    "Shift",
    "ShiftAll",
    "Proportional",
    "ProportionalAll",
    "Freeze",
    "FreezeShift",
    "FreezeShiftAll",
    "FreezeProp",
    "FreezePropAll",
    "Adversarial",
)

_TARGETED = {"Shift", "Proportional", "FreezeShift", "FreezeProp", "Adversarial"}
_SHIFT_FAMILY = {"Shift", "ShiftAll", "FreezeShift", "FreezeShiftAll"}
_PROP_FAMILY = {"Proportional", "ProportionalAll", "FreezeProp", "FreezePropAll"}
_FREEZE_FAMILY = {"Freeze", "FreezeShift", "FreezeShiftAll", "FreezeProp", "FreezePropAll"}

#: allocation below this is treated as an empty hour when locating the
#: median occupied hour
_SUPPORT_EPS = 1e-12


@dataclass(frozen=True)
class AttackSpec:
    """Which vector to run, against whom, and how hard.

    `mu` is the hour shift of the Shift family; `lam` the scale-down (or
    mix-in) fraction of the Proportional and Adversarial families. The
    unused knob of a given vector is ignored.
    """

    vector: str
    target: int | None = None
    mu: int = 1
    lam: float = 0.5

    def __post_init__(self):
        if self.vector not in VECTORS:
            raise ValueError(f"unknown attack vector {self.vector!r}")
        if self.mu < 0 or int(self.mu) != self.mu:
            raise ValueError("mu must be a nonnegative integer")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.vector in _TARGETED and self.target is None:
            raise ValueError(f"{self.vector} needs a target agent")

    @property
    def strength(self) -> float:
        if self.vector in _SHIFT_FAMILY:
            return float(self.mu)
        if self.vector == "Freeze":
            return 0.0
        return self.lam


def apply_shift(block: np.ndarray, mu: int) -> np.ndarray:
    """Shift the early half of a schedule `mu` hours earlier.

    The pivot is the median occupied hour t*; entries at or below
    ``t* - mu`` take the value `mu` hours later, the vacated band up to t*
    is zeroed and everything after t* stays. An all-zero schedule has no
    pivot and is returned unchanged.
    """
    block = np.asarray(block, dtype=float)
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0:
        return block.copy()
    occupied = np.flatnonzero(block > _SUPPORT_EPS)
    if len(occupied) == 0:
        return block.copy()
    t_star = int(occupied[(len(occupied) - 1) // 2])  # lower median
    out = block.copy()
    for t in range(t_star + 1):
        if t <= t_star - mu:
            src = t + mu
            out[t] = block[src] if src < HOURS else 0.0
        else:
            out[t] = 0.0
    return out


def apply_proportional(block: np.ndarray, lam: float) -> np.ndarray:
    """Scale a schedule down by ``1 - lam``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return np.asarray(block, dtype=float) * (1.0 - lam)


def apply_freeze(individual_opt: np.ndarray) -> np.ndarray:
    """The frozen own-row report: the individually optimal schedule."""
    return np.asarray(individual_opt, dtype=float).copy()


def apply_adversarial(
    block_for_target: np.ndarray,
    target_prev_self: np.ndarray,
    lam: float,
) -> np.ndarray:
    """Blend the honest proposal for the victim toward the victim's own
    previous-round self-proposal."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    block = np.asarray(block_for_target, dtype=float)
    prev = np.asarray(target_prev_self, dtype=float)
    return block * (1.0 - lam) + prev * lam


def apply_attack(
    spec: AttackSpec,
    attacker: int,
    honest_local: np.ndarray,
    individual_opt: np.ndarray | None = None,
    prev_locals: np.ndarray | None = None,
) -> np.ndarray:
    """Rewrite an honest local proposal according to `spec`.

    Parameters
    ----------
    spec : AttackSpec
    attacker : int
        Row index of the deviating agent inside the proposal.
    honest_local : array (n_agents, 24)
        The proposal produced by the honest local step.
    individual_opt : array (24,), optional
        The attacker's individually optimal schedule (Freeze family).
    prev_locals : array (n_agents, n_agents, 24), optional
        Everyone's previous-round proposals (Adversarial reads the
        victim's self-row).
    """
    local = np.array(honest_local, dtype=float)
    n = local.shape[0]
    if spec.target is not None and spec.target == attacker:
        raise ValueError("attack target must differ from the attacker")
    if spec.target is not None and not 0 <= spec.target < n:
        raise IndexError(f"target {spec.target} out of range")

    if spec.vector in _FREEZE_FAMILY:
        if individual_opt is None:
            raise ValueError(f"{spec.vector} needs the attacker's individual optimum")
        local[attacker] = apply_freeze(individual_opt)

    if spec.vector in _SHIFT_FAMILY:
        victims = [spec.target] if spec.vector in _TARGETED else [j for j in range(n) if j != attacker]
        for j in victims:
            local[j] = apply_shift(local[j], spec.mu)
    elif spec.vector in _PROP_FAMILY:
        victims = [spec.target] if spec.vector in _TARGETED else [j for j in range(n) if j != attacker]
        for j in victims:
            local[j] = apply_proportional(local[j], spec.lam)
    elif spec.vector == "Adversarial":
        if prev_locals is None:
            raise ValueError("Adversarial needs the previous-round proposals")
        j = spec.target
        local[j] = apply_adversarial(local[j], prev_locals[j, j], spec.lam)
    elif spec.vector == "Freeze":
        pass
    return local

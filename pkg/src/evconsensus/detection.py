"""Influence quantification and threshold-based deviator detection.

The first two consensus rounds are enough to see who is bending the
algorithm: entry (i, j) of the difference matrix measures how far agent
i's round-1 proposal for agent j landed from what j proposed for itself
in round 0. Benign agents of similar size produce similar entries; the
normalised matrix divides the natural size effects out so a deviation
stands out in mixed fleets too.

Detection itself is a median-distance threshold rule, applied separately
to off- and on-diagonal entries (their magnitudes differ intrinsically),
flagging at most one agent.
"""

from __future__ import annotations

from csv import writer as csv_writer
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class DifferenceMatrix:
    """Raw and size-normalised inter-agent influence norms."""

    n: int
    raw: np.ndarray
    normalized: np.ndarray
    sizes: np.ndarray
    shares: np.ndarray


@dataclass(frozen=True)
class DetectionResult:
    deviator: int | None
    max_deviation: float
    candidate_source: str
    alpha: float
    n_agents: int


def build_difference_matrix(source) -> DifferenceMatrix:
    """Build the influence matrix from the first two rounds of proposals.

    `source` is either a consensus state (its retained round-0/1
    proposals are used) or a pair of (n, n, 24) proposal arrays. Sizes
    are proxied by each agent's round-0 self-allocation total, which must
    be positive for the shares to make sense.
    """
    if hasattr(source, "proposals"):
        proposals = source.proposals
        if len(proposals) < 2:
            raise ValueError("need at least two completed rounds to quantify influence")
        p0, p1 = proposals[0], proposals[1]
    else:
        p0, p1 = source
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if p0.shape != p1.shape or p0.ndim != 3 or p0.shape[0] != p0.shape[1]:
        raise ValueError("proposals must be two (n, n, 24) arrays")
    n = p0.shape[0]

    self_rows = p0[np.arange(n), np.arange(n)]          # (n, 24), j's own round-0 row
    diff = p1 - self_rows[None, :, :]                   # broadcast over proposers i
    raw = np.linalg.norm(diff, axis=2)

    sizes = self_rows.sum(axis=1)
    if np.any(sizes <= 0):
        bad = int(np.flatnonzero(sizes <= 0)[0])
        raise ValueError(f"agent {bad} proposed no energy for itself; size proxy undefined")
    shares = sizes / sizes.sum()
    normalized = raw * np.sqrt(shares)[:, None] / (sizes[:, None] + sizes[None, :])
    return DifferenceMatrix(n, raw, normalized, sizes, shares)


def detect(matrix: DifferenceMatrix, alpha: float) -> DetectionResult:
    """Median-distance threshold rule on the normalised matrix.

    Off- and on-diagonal entries are screened separately against their
    own medians; the single entry deviating the most is the candidate,
    and its row agent is flagged iff the deviation exceeds `alpha`.
    """
    if matrix.n < 2:
        raise ValueError("detection needs at least two agents")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    d = matrix.normalized
    n = matrix.n

    off_mask = ~np.eye(n, dtype=bool)
    off_vals = d[off_mask]
    off_dist = np.abs(off_vals - np.median(off_vals))
    off_best = int(np.argmax(off_dist))
    off_rows = np.nonzero(off_mask)[0]
    max_off = float(off_dist[off_best])

    diag = np.diag(d)
    diag_dist = np.abs(diag - np.median(diag))
    diag_best = int(np.argmax(diag_dist))
    max_on = float(diag_dist[diag_best])

    if max_off >= max_on:
        winner, source = int(off_rows[off_best]), "off-diagonal"
        max_dev = max_off
    else:
        winner, source = diag_best, "on-diagonal"
        max_dev = max_on
    deviator = winner if max_dev > alpha else None
    return DetectionResult(deviator, max_dev, source, float(alpha), n)


def confusion(results, truths) -> tuple[int, int, int, int]:
    """(tp, tn, fp, fn) over aligned detection results and ground truths."""
    results = list(results)
    truths = list(truths)
    if len(results) != len(truths):
        raise ValueError("results and truths must have equal length")
    tp = tn = fp = fn = 0
    for res, truth in zip(results, truths):
        flagged = res.deviator
        for agent in range(res.n_agents):
            is_dev = truth is not None and agent == truth
            is_flagged = flagged is not None and agent == flagged
            if is_flagged and is_dev:
                tp += 1
            elif is_flagged and not is_dev:
                fp += 1
            elif not is_flagged and is_dev:
                fn += 1
            else:
                tn += 1
    return tp, tn, fp, fn


def accuracy(results, truths) -> float:
    """Fraction of correct per-agent classifications across runs."""
    tp, tn, fp, fn = confusion(results, truths)
    total = tp + tn + fp + fn
    if total == 0:
        raise ValueError("no classifications to score")
    return (tp + tn) / total


def naive_accuracy(n: int) -> float:
    """Accuracy of the flag-nobody detector when exactly one agent deviates."""
    return (n - 1) / n


@dataclass(frozen=True, eq=False)
class LabeledRun:
    """One finished run ready for threshold sweeps."""

    matrix: DifferenceMatrix
    truth: int | None
    attack: str
    strength: float
    n_aggs: int
    size_mix: str


SWEEP_COLUMNS = (
    "alpha", "attack", "strength", "n_aggs", "size_mix",
    "accuracy", "fp_rate", "fn_rate", "tp", "tn", "fp", "fn",
)


def sweep_alpha(runs, alphas) -> list[dict]:
    """Score every threshold against every labelled-run group.

    Runs sharing (attack, strength, n_aggs, size_mix) are pooled; one row
    per group and alpha. Rates are per-agent: fp_rate over benign agents,
    fn_rate over deviators.
    """
    runs = list(runs)
    alphas = list(alphas)
    if not runs or not alphas:
        raise ValueError("need at least one run and one alpha")
    groups: dict[tuple, list[LabeledRun]] = {}
    for r in runs:
        groups.setdefault((r.attack, r.strength, r.n_aggs, r.size_mix), []).append(r)

    rows = []
    for key in sorted(groups):
        attack, strength, n_aggs, size_mix = key
        members = groups[key]
        for alpha in alphas:
            results = [detect(r.matrix, alpha) for r in members]
            truths = [r.truth for r in members]
            tp, tn, fp, fn = confusion(results, truths)
            total = tp + tn + fp + fn
            rows.append({
                "alpha": alpha,
                "attack": attack,
                "strength": strength,
                "n_aggs": n_aggs,
                "size_mix": size_mix,
                "accuracy": (tp + tn) / total,
                "fp_rate": fp / (fp + tn) if fp + tn else 0.0,
                "fn_rate": fn / (fn + tp) if fn + tp else 0.0,
                "tp": tp, "tn": tn, "fp": fp, "fn": fn,
            })
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv_writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([row[c] for c in SWEEP_COLUMNS])


def calibrate_alpha(runs, alphas) -> tuple[float, float]:
    """Pick the alpha with the best pooled accuracy over `runs`.

    Ties break toward the largest alpha (the least trigger-happy
    detector). Returns (alpha, accuracy).
    """
    runs = list(runs)
    best = None
    for alpha in sorted(alphas):
        results = [detect(r.matrix, alpha) for r in runs]
        acc = accuracy(results, [r.truth for r in runs])
        if best is None or acc >= best[1]:
            best = (float(alpha), acc)
    return best

"""AUC, impression-weighted per-user AUC (GAUC) and relative improvement."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata


class UndefinedAUC(ValueError):
    """Raised when a scored set lacks positives or negatives."""


@dataclass
class ScoredSet:
    scores: Sequence[float]
    labels: Sequence[int]

    def __post_init__(self):
        if len(self.scores) != len(self.labels):
            raise ValueError("scores and labels differ in length")


@dataclass
class UserEval:
    user_id: str
    scored: ScoredSet

    @property
    def impressions(self) -> int:
        return len(self.scored.labels)


def auc(s: ScoredSet) -> float:
    """Rank-sum AUC with average ranks for ties.

    Equals P(score_pos > score_neg) + P(tie) / 2 over all positive/negative pairs.
    """
    y = np.asarray(s.labels)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("AUC needs at least one positive and one negative")
    ranks = rankdata(np.asarray(s.scores, dtype=np.float64))  # ascending, ties averaged
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class GaucResult:
    gauc: float
    n_users_included: int
    n_users_excluded: int


def gauc(users: Iterable[UserEval]) -> GaucResult:
    """Impression-weighted mean of per-user AUC; single-class users are left out."""
    num = den = 0.0
    inc = exc = 0
    for u in users:
        try:
            a = auc(u.scored)
        except UndefinedAUC:
            exc += 1
            continue
        num += u.impressions * a
        den += u.impressions
        inc += 1
    if inc == 0:
        raise UndefinedAUC("no user has a defined AUC")
    return GaucResult(num / den, inc, exc)


def rela_impr(measured_auc: float, base_auc: float) -> float:
    """Relative improvement in percent, measured from the 0.5 random-guess floor."""
    if base_auc == 0.5:
        raise ZeroDivisionError("baseline AUC of 0.5 gives no reference margin")
    return ((measured_auc - 0.5) / (base_auc - 0.5) - 1.0) * 100.0


def group_by_user(user_ids: Sequence, scores: Sequence[float], labels: Sequence[int]) -> list[UserEval]:
    """Split parallel arrays into per-user scored sets, in first-appearance order."""
    groups: dict = {}
    for u, s, y in zip(user_ids, scores, labels):
        g = groups.setdefault(u, ([], []))
        g[0].append(float(s))
        g[1].append(int(y))
    return [UserEval(u, ScoredSet(s, y)) for u, (s, y) in groups.items()]


def evaluate(
    user_ids: Sequence,
    scores: Sequence[float],
    labels: Sequence[int],
    baseline_auc: float | None = None,
    baseline_gauc: float | None = None,
) -> dict:
    """Metrics report: ``auc``, ``gauc``, user counts and optional RelaImpr."""
    g = gauc(group_by_user(user_ids, scores, labels))
    report = {
        "auc": auc(ScoredSet(scores, labels)),
        "gauc": g.gauc,
        "n_users_included": g.n_users_included,
        "n_users_excluded": g.n_users_excluded,
    }
    if baseline_auc is not None:
        report["rela_impr_auc"] = rela_impr(report["auc"], baseline_auc)
    if baseline_gauc is not None:
        report["rela_impr_gauc"] = rela_impr(report["gauc"], baseline_gauc)
    return report

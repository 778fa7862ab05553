"""Classification accuracy and ranking metrics with deterministic tie-breaks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class RankedGroup:
    group_id: object
    candidates: list  # (score, relevant) in input order

    def has_relevant(self) -> bool:
        return any(rel for _, rel in self.candidates)


def accuracy(predictions: np.ndarray, labels) -> float:
    """Fraction of argmax matches; ties resolve to the lowest class index."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.ndim != 2 or predictions.shape[0] == 0:
        raise DataError("accuracy needs a nonempty (n, num_classes) score matrix")
    if predictions.shape[0] != labels.shape[0]:
        raise DataError("predictions and labels must have equal length")
    picked = predictions.argmax(axis=1)  # argmax returns the first (lowest) index on ties
    return float((picked == labels).mean())


def _ranked_relevance(group: RankedGroup) -> list[bool]:
    order = sorted(
        range(len(group.candidates)),
        key=lambda i: (-group.candidates[i][0], i),  # stable: ties keep input order
    )
    return [bool(group.candidates[i][1]) for i in order]


def _retained(groups) -> tuple[list[RankedGroup], int]:
    groups = list(groups)
    retained = [g for g in groups if g.has_relevant()]
    return retained, len(groups) - len(retained)


def mean_average_precision(groups: list[RankedGroup]) -> tuple[float, int]:
    """MAP over groups that contain a relevant candidate.

    Returns (map, n_groups_skipped); groups without any relevant candidate
    are excluded from the mean and counted.
    """
    retained, skipped = _retained(groups)
    if not retained:
        raise DataError("no group with a relevant candidate")
    total = 0.0
    for g in retained:
        ranked = _ranked_relevance(g)
        hits = 0
        ap = 0.0
        for rank, rel in enumerate(ranked, start=1):
            if rel:
                hits += 1
                ap += hits / rank
        total += ap / hits
    return total / len(retained), skipped


def mean_reciprocal_rank(groups: list[RankedGroup]) -> tuple[float, int]:
    """MRR over groups that contain a relevant candidate."""
    retained, skipped = _retained(groups)
    if not retained:
        raise DataError("no group with a relevant candidate")
    total = 0.0
    for g in retained:
        ranked = _ranked_relevance(g)
        for rank, rel in enumerate(ranked, start=1):
            if rel:
                total += 1.0 / rank
                break
    return total / len(retained), skipped


def group_candidates(scores, relevances, group_ids) -> list[RankedGroup]:
    """Assemble flat per-candidate rows into RankedGroups, input order kept."""
    if len(scores) != len(relevances) or len(scores) != len(group_ids):
        raise DataError("scores, relevances and group_ids must have equal length")
    by_id: dict = {}
    order: list = []
    for s, r, g in zip(scores, relevances, group_ids):
        if g is None:
            raise DataError("ranking evaluation needs a group_id on every example")
        if g not in by_id:
            by_id[g] = RankedGroup(g, [])
            order.append(g)
        by_id[g].candidates.append((float(s), bool(r)))
    return [by_id[g] for g in order]

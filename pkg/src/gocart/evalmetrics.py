"""Edge-recovery and partition-recovery metrics."""
from __future__ import annotations

from .dpt import Partition
from .glasso import normalize_edges


def edge_metrics(est, truth) -> tuple[float, float, float]:
    """``(precision, recall, f1)`` of an estimated edge set.

    An empty estimate scores ``(0, 0, 0)``; so does any estimate against an
    empty truth unless both are empty, which scores ``(1, 1, 1)``.
    """
    est, truth = normalize_edges(est), normalize_edges(truth)
    if not est and not truth:
        return 1.0, 1.0, 1.0
    if not est or not truth:
        return 0.0, 0.0, 0.0
    hit = len(est & truth)
    precision = hit / len(est)
    recall = hit / len(truth)
    f1 = 0.0 if hit == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def partition_recovered(truth: Partition, est: Partition) -> bool:
    """True when every truth cell is a union of estimated cells."""
    for cell in est.cells:
        if not any(t.contains_rect(cell) for t in truth.cells):
            return False
    return True


def exact_recovery(truth: Partition, est: Partition) -> bool:
    return set(truth.cells) == set(est.cells)

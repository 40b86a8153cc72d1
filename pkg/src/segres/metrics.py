"""Segmentation accuracy with phase alignment."""
from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from segres.core import LabelMap

MAX_ALIGN_PHASES = 8


def confusion(pred: LabelMap, truth: LabelMap, phases: int) -> np.ndarray:
    """``conf[a, b]`` = number of pixels with predicted a and true b."""
    idx = pred.labels.ravel() * phases + truth.labels.ravel()
    return np.bincount(idx, minlength=phases * phases).reshape(phases, phases)


def align_labels(pred: LabelMap, truth: LabelMap, phases: Optional[int] = None) -> LabelMap:
    """Relabel ``pred`` by the phase permutation that agrees most with ``truth``.

    Exhaustive over all permutations; the first best one (in
    lexicographic order) wins, so the identity is kept on ties.
    """
    if pred.shape != truth.shape:
        raise ValueError(f"label maps differ in size: {pred.shape} vs {truth.shape}")
    k = phases or max(pred.phases, truth.phases)
    if k > MAX_ALIGN_PHASES:
        raise ValueError(f"alignment supports at most {MAX_ALIGN_PHASES} phases, got {k}")
    conf = confusion(pred, truth, k)
    rows = np.arange(k)
    best, best_score = None, -1
    for perm in itertools.permutations(range(k)):
        score = conf[rows, perm].sum()
        if score > best_score:
            best, best_score = perm, score
    return LabelMap(np.asarray(best)[pred.labels], k)


def segmentation_accuracy(pred: LabelMap, truth: LabelMap, phases: Optional[int] = None) -> float:
    """Percentage of pixels labelled correctly after phase alignment."""
    aligned = align_labels(pred, truth, phases)
    return 100.0 * float(np.mean(aligned.labels == truth.labels))

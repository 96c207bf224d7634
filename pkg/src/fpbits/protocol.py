"""Verification protocol: pair enumeration and error-rate estimation.

Pairing follows the standard competition recipe: every unordered pair of
impressions of the same subject is a genuine attempt, and every unordered
pair of *first* impressions of distinct subjects is an impostor attempt
(S subjects x m impressions gives S*m*(m-1)/2 genuine and S*(S-1)/2
impostor attempts).

The equal error rate is read off the receiver curve at the point where the
false accept and false reject rates meet. The deterministic threshold sweep
only reaches a staircase of operating points, so the meeting point is
interpolated on the convex hull of those points (the operating curve a
threshold randomized between two sweep positions can realize).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import EmptyScores

POLARITY_SIMILARITY = "similarity"
POLARITY_DISSIMILARITY = "dissimilarity"

Pair = Tuple[Tuple[int, int], Tuple[int, int]]


def fvc_pairs(n_subjects: int, n_impressions: int) -> Tuple[List[Pair], List[Pair]]:
    """Enumerate genuine and impostor attempts over an S x m dataset.

    Subjects and impressions are 0-based indices; callers map them onto ids.
    Returns ``(genuine, impostor)`` where each attempt is
    ``((subject_a, impression_a), (subject_b, impression_b))`` with the
    lexicographically smaller endpoint first.
    """
    if n_subjects < 1 or n_impressions < 1:
        raise EmptyScores(
            f"cannot pair {n_subjects} subjects x {n_impressions} impressions"
        )
    genuine: List[Pair] = []
    for s in range(n_subjects):
        for i in range(n_impressions):
            for j in range(i + 1, n_impressions):
                genuine.append(((s, i), (s, j)))
    impostor: List[Pair] = []
    for a in range(n_subjects):
        for b in range(a + 1, n_subjects):
            impostor.append(((a, 0), (b, 0)))
    return genuine, impostor


@dataclass
class ProtocolReport:
    """Scores, the swept receiver curve, and the interpolated equal error rate."""

    genuine_scores: np.ndarray
    impostor_scores: np.ndarray
    eer: float
    roc: List[Tuple[float, float, float]]  # (FAR, FRR, threshold), tightening
    polarity: str = POLARITY_SIMILARITY


def _operating_points(
    genuine: np.ndarray, impostor: np.ndarray, polarity: str
) -> Tuple[List[Tuple[float, float, float]], np.ndarray]:
    """Swept staircase plus the full corner set for hull interpolation."""
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    if polarity == POLARITY_DISSIMILARITY:
        sweep = thresholds[::-1]  # tightening = lowering the acceptance bar
    else:
        sweep = thresholds

    roc: List[Tuple[float, float, float]] = []
    corners = [(1.0, 0.0), (0.0, 1.0)]  # accept-everything / reject-everything
    n_g, n_i = genuine.size, impostor.size
    for th in sweep:
        if polarity == POLARITY_SIMILARITY:
            far = float((impostor >= th).sum()) / n_i
            frr = float((genuine < th).sum()) / n_g
            far_x = float((impostor > th).sum()) / n_i
            frr_x = float((genuine <= th).sum()) / n_g
        else:
            far = float((impostor <= th).sum()) / n_i
            frr = float((genuine > th).sum()) / n_g
            far_x = float((impostor < th).sum()) / n_i
            frr_x = float((genuine >= th).sum()) / n_g
        roc.append((far, frr, float(th)))
        corners.append((far, frr))
        corners.append((far_x, frr_x))
    return roc, np.unique(np.array(corners, dtype=np.float64), axis=0)


def _hull_eer(points: np.ndarray) -> float:
    """Diagonal crossing of the lower convex hull of (FAR, FRR) points."""
    order = np.lexsort((points[:, 1], points[:, 0]))
    pts = points[order]
    hull: List[np.ndarray] = []
    for p in pts:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
            if cross <= 0.0:  # b is above or on segment a-p: discard it
                hull.pop()
            else:
                break
        hull.append(p)

    for a, b in zip(hull, hull[1:]):
        da = a[1] - a[0]
        db = b[1] - b[0]
        if da == 0.0:
            return float(a[0])
        if (da > 0.0 > db) or (da < 0.0 < db):
            t = da / (da - db)
            return float(a[0] + t * (b[0] - a[0]))
    # hull ends exactly on the diagonal
    return float(hull[-1][0])


def compute_eer(
    genuine: Sequence[float],
    impostor: Sequence[float],
    polarity: str = POLARITY_SIMILARITY,
) -> ProtocolReport:
    """Sweep thresholds over the merged scores and interpolate the EER.

    ``polarity`` declares whether genuine attempts should score high
    (``"similarity"``) or low (``"dissimilarity"``). The returned curve
    tightens along the list: FAR never increases and FRR never decreases.

    Raises:
        EmptyScores: either score list is empty or contains non-finite values.
    """
    if polarity not in (POLARITY_SIMILARITY, POLARITY_DISSIMILARITY):
        raise ValueError(f"unknown polarity {polarity!r}")
    g = np.asarray(list(genuine), dtype=np.float64)
    i = np.asarray(list(impostor), dtype=np.float64)
    if g.size == 0 or i.size == 0:
        raise EmptyScores("both genuine and impostor score lists must be non-empty")
    if not (np.isfinite(g).all() and np.isfinite(i).all()):
        raise EmptyScores("scores must be finite")

    roc, corners = _operating_points(g, i, polarity)
    eer = _hull_eer(corners)
    return ProtocolReport(
        genuine_scores=g, impostor_scores=i, eer=eer, roc=roc, polarity=polarity
    )

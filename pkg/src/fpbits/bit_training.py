"""Enrollment-time bit selection for one finger.

From a handful of enrollment impressions, each bit position earns a
discrimination power (how far the finger's distances sit below the global
population mean at that cluster, weighted by cluster rarity) and a
reliability (how consistently the bit was set across the enrollment
samples). Positions are visited in power order and kept when their
reliability clears a sigmoid threshold that tightens with rank, producing a
per-finger positional mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .codebook import BitString, DistanceVector
from .errors import EmptyEnrollment, LengthMismatch

DEFAULT_ALPHA = 0.45
DEFAULT_BETA = 0.4


@dataclass
class FingerModel:
    """Trained per-finger bit statistics and the resulting mask."""

    finger_id: str
    power: np.ndarray
    reliability: np.ndarray
    mask: np.ndarray  # bool, True = bit position kept
    n_mean: float  # mean minutia count over the enrollment samples
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    @property
    def k(self) -> int:
        return self.mask.shape[0]


def interclass_variance(
    vectors: Sequence[DistanceVector], population_mean: np.ndarray
) -> np.ndarray:
    """Below-mean spread of a finger's distances, per cluster.

    Only the side where the finger comes *closer* to a cluster than the
    population does carries identity information, so deviations above the
    population mean are clipped to zero before squaring:
    ``mean_j(min(v_j - mu, 0)^2)``.

    Raises:
        EmptyEnrollment: no distance vectors supplied.
    """
    if len(vectors) == 0:
        raise EmptyEnrollment("interclass variance needs at least one impression")
    mu = np.asarray(population_mean, dtype=np.float64).ravel()
    acc = np.zeros_like(mu)
    for dv in vectors:
        if dv.values.shape[0] != mu.shape[0]:
            raise LengthMismatch(
                f"distance vector length {dv.values.shape[0]} != mean length {mu.shape[0]}"
            )
        below = np.minimum(dv.values - mu, 0.0)
        acc += below * below
    return acc / len(vectors)


def discrimination_power(
    variance: np.ndarray, cluster_weights: np.ndarray
) -> np.ndarray:
    """Per-bit power: below-mean variance scaled by cluster rarity weight."""
    v = np.asarray(variance, dtype=np.float64).ravel()
    w = np.asarray(cluster_weights, dtype=np.float64).ravel()
    if v.shape != w.shape:
        raise LengthMismatch(f"variance length {v.shape[0]} != weights {w.shape[0]}")
    return w * v


def reliability(bitstrings: Sequence[BitString]) -> np.ndarray:
    """Fraction of enrollment strings that set each bit.

    Raises:
        EmptyEnrollment: no bit-strings supplied.
        LengthMismatch: enrollment strings of differing lengths.
    """
    if len(bitstrings) == 0:
        raise EmptyEnrollment("reliability needs at least one bit-string")
    length = len(bitstrings[0])
    acc = np.zeros(length, dtype=np.float64)
    for bs in bitstrings:
        if len(bs) != length:
            raise LengthMismatch(f"bit-string length {len(bs)} != {length}")
        acc += bs.bits
    return acc / len(bitstrings)


def adaptive_threshold(
    rank: float, n_mean: float, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA
) -> float:
    """Reliability bar for the bit visited at a given power rank.

    A sigmoid rising from ``alpha`` toward 1: early (most discriminative)
    ranks face a lenient bar, later ranks an ever stricter one. At
    ``rank == n_mean`` the bar sits exactly halfway, ``alpha + (1-alpha)/2``.
    """
    return alpha + (1.0 - alpha) / (1.0 + math.exp(-beta * (rank - n_mean)))


def train_mask(
    power: np.ndarray,
    rel: np.ndarray,
    n_mean: float,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> np.ndarray:
    """Select bit positions by descending power under the adaptive bar.

    All positions are visited exactly once, ordered by power descending
    (ties by smaller index); the position visited at rank t (1-based) is
    kept iff its reliability strictly exceeds ``adaptive_threshold(t)``.
    Zero-power positions still get a (very strict) chance at the tail.
    """
    p = np.asarray(power, dtype=np.float64).ravel()
    r = np.asarray(rel, dtype=np.float64).ravel()
    if p.shape != r.shape:
        raise LengthMismatch(f"power length {p.shape[0]} != reliability {r.shape[0]}")
    order = np.lexsort((np.arange(p.shape[0]), -p))
    mask = np.zeros(p.shape[0], dtype=bool)
    for t, idx in enumerate(order, start=1):
        if r[idx] > adaptive_threshold(t, n_mean, alpha, beta):
            mask[idx] = True
    return mask


def train_finger(
    finger_id: str,
    distance_vectors: Sequence[DistanceVector],
    bitstrings: Sequence[BitString],
    minutia_counts: Sequence[int],
    population_mean: np.ndarray,
    cluster_weights: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
) -> FingerModel:
    """Run the whole per-finger selection from enrollment-time artifacts."""
    if len(distance_vectors) == 0 or len(bitstrings) == 0:
        raise EmptyEnrollment(f"finger {finger_id!r} has no enrollment samples")
    if len(minutia_counts) == 0:
        raise EmptyEnrollment(f"finger {finger_id!r} has no minutia counts")
    var = interclass_variance(distance_vectors, population_mean)
    power = discrimination_power(var, cluster_weights)
    rel = reliability(bitstrings)
    n_mean = float(np.mean(minutia_counts))
    mask = train_mask(power, rel, n_mean, alpha, beta)
    return FingerModel(
        finger_id=finger_id,
        power=power,
        reliability=rel,
        mask=mask,
        n_mean=n_mean,
        alpha=alpha,
        beta=beta,
    )

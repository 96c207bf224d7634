"""Dimensionality reduction and descriptor fusion.

Both descriptor families are projected into low-dimensional principal
subspaces (one model per family, same target dimension), z-normalized per
vector, weighted, and concatenated into a single fused vector per minutia.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import LengthMismatch, RankDeficient, TooFewSamples

_RANK_TOL = 1e-10


@dataclass
class PcaModel:
    """Mean vector plus an orthonormal basis of principal directions.

    ``basis`` has one column per retained direction, ordered by decreasing
    ``explained_variance``. Each column's sign is fixed so its
    largest-magnitude component is positive, which makes training
    deterministic across runs and platforms.
    """

    mean: np.ndarray
    basis: np.ndarray  # (dim, n_components)
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    for j in range(basis.shape[1]):
        k = int(np.argmax(np.abs(basis[:, j])))
        if basis[k, j] < 0.0:
            basis[:, j] = -basis[:, j]
    return basis


def train_pca(samples: Sequence[np.ndarray] | np.ndarray, n_components: int) -> PcaModel:
    """Fit a principal-component model on row-vector samples.

    Uses the sample covariance (denominator ``n - 1``). When there are fewer
    samples than dimensions the eigenproblem is solved on the samples' Gram
    matrix instead of the full covariance, which is exact for the nonzero
    spectrum and far smaller.

    Raises:
        TooFewSamples: fewer than 2 samples.
        RankDeficient: ``n_components`` exceeds what the samples can span
            (never more than ``min(n_samples - 1, dim)``).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        x = np.vstack([np.asarray(s, dtype=np.float64).ravel() for s in samples])
    n, dim = x.shape
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    if n_components < 1:
        raise RankDeficient(f"n_components must be >= 1, got {n_components}")
    achievable = min(n - 1, dim)
    if n_components > achievable:
        raise RankDeficient(
            f"{n_components} components requested, at most {achievable} achievable "
            f"from {n} samples of dimension {dim}"
        )

    mean = x.mean(axis=0)
    xc = x - mean

    if n < dim:
        # Gram trick: eigenvectors of (Xc Xc^T) map onto covariance
        # eigenvectors through Xc^T, sharing the nonzero spectrum.
        gram = xc @ xc.T
        evals, evecs = np.linalg.eigh(gram)
        order = np.argsort(evals)[::-1][:n_components]
        lead = evals[order]
        if lead[-1] <= _RANK_TOL * max(lead[0], 1.0):
            raise RankDeficient(
                f"{n_components} components requested but the samples' numerical "
                f"rank is lower"
            )
        basis = xc.T @ evecs[:, order]
        basis /= np.linalg.norm(basis, axis=0)
        variance = lead / (n - 1)
    else:
        cov = (xc.T @ xc) / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:n_components]
        basis = evecs[:, order]
        variance = np.maximum(evals[order], 0.0)

    return PcaModel(mean=mean, basis=_fix_signs(basis), explained_variance=variance)


def project(model: PcaModel, vector: np.ndarray) -> np.ndarray:
    """Center a vector on the model mean and project onto the basis."""
    v = np.asarray(vector, dtype=np.float64).ravel()
    if v.shape[0] != model.dim:
        raise LengthMismatch(f"vector length {v.shape[0]} != model dim {model.dim}")
    return model.basis.T @ (v - model.mean)


def znorm(vector: np.ndarray) -> np.ndarray:
    """Standardize a vector to mean 0, population-std 1 over its own entries.

    A constant vector has no scale to recover and maps to all zeros.
    """
    v = np.asarray(vector, dtype=np.float64).ravel()
    if v.shape[0] < 2:
        raise LengthMismatch(f"z-normalization needs length >= 2, got {v.shape[0]}")
    std = float(v.std())
    if std == 0.0:
        return np.zeros_like(v)
    return (v - v.mean()) / std


@dataclass
class FusedVector:
    """Weighted concatenation of both projected descriptors for one minutia.

    ``source`` optionally records (subject_id, impression_id, minutia_index)
    so pooled training vectors stay traceable.
    """

    values: np.ndarray
    source: Optional[Tuple[str, str, int]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()

    def __len__(self) -> int:
        return self.values.shape[0]


def fuse(
    minutia_part: np.ndarray,
    texture_part: np.ndarray,
    weight_m: float = 0.6,
    weight_t: float = 0.4,
    source: Optional[Tuple[str, str, int]] = None,
) -> FusedVector:
    """Fuse the two projected descriptors of one minutia.

    Both parts are z-normalized independently, scaled by their fusion
    weights, and concatenated (minutia part first). The parts must have the
    same length, so either half can be recovered by position.
    """
    a = np.asarray(minutia_part, dtype=np.float64).ravel()
    b = np.asarray(texture_part, dtype=np.float64).ravel()
    if a.shape[0] != b.shape[0]:
        raise LengthMismatch(
            f"projected parts differ in length: {a.shape[0]} vs {b.shape[0]}"
        )
    return FusedVector(
        np.concatenate([weight_m * znorm(a), weight_t * znorm(b)]), source=source
    )


def stack_fused(vectors: Sequence[FusedVector]) -> np.ndarray:
    """Stack fused vectors into an (n, dim) matrix (empty -> (0, 0))."""
    if len(vectors) == 0:
        return np.zeros((0, 0), dtype=np.float64)
    return np.stack([fv.values for fv in vectors])

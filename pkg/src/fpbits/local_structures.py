"""Per-minutia local structure descriptors.

Two fixed-length real vectors are extracted around every minutia, both in a
coordinate frame translated to the minutia and rotated by its direction so
the result is invariant to rigid motion of the whole impression:

* the minutia descriptor: a rasterized sum of one anisotropic 2-d Gaussian
  bump per neighboring minutia, L2-normalized, sampled over a disc lattice
  shrunk by an area downscale factor;
* the texture descriptor: the normalized gray image sampled bilinearly over
  a disc lattice around the minutia.

Lattice points are enumerated row-major (by y, then x), and the two lattices
live in the geometry object so every descriptor in a system shares one
ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from .template_io import GrayImage, Minutia


@dataclass(frozen=True)
class SpreadModel:
    """Gaussian bump spreads as linear functions of neighbor distance.

    The tangential spread (across the center-to-neighbor ray) grows at least
    as fast as the radial spread (along it), so far bumps blur more in the
    direction a neighbor's position is least certain in.
    """

    sigma_t0: float = 3.0
    sigma_t_slope: float = 0.05
    sigma_r0: float = 3.0
    sigma_r_slope: float = 0.02

    def __post_init__(self):
        for name in ("sigma_t0", "sigma_t_slope", "sigma_r0", "sigma_r_slope"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.sigma_t_slope < self.sigma_r_slope:
            raise ValueError("tangential slope must be >= radial slope")

    def sigma_at(self, rho: float) -> Tuple[float, float]:
        """(tangential, radial) spread for a neighbor at distance ``rho``."""
        return (
            self.sigma_t0 + self.sigma_t_slope * rho,
            self.sigma_r0 + self.sigma_r_slope * rho,
        )


def _disc_lattice(radius: float) -> np.ndarray:
    """Integer points with x^2 + y^2 <= radius^2, row-major by y then x."""
    r = int(math.floor(radius))
    pts = []
    r2 = radius * radius
    for y in range(-r, r + 1):
        for x in range(-r, r + 1):
            if x * x + y * y <= r2:
                pts.append((x, y))
    return np.array(pts, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class StructureGeometry:
    """Shared disc lattices and radii for both descriptor families.

    ``lattice_m`` covers the minutia-descriptor disc after area downscaling
    (radius ``r_m / sqrt(downscale_area)``), ``lattice_t`` the texture disc at
    full resolution (radius ``r_t``). Descriptor lengths are the lattice
    point counts; they are properties of the lattice, not configured.
    """

    r_m: float
    r_t: float
    downscale_area: float
    lattice_m: np.ndarray = field(repr=False)
    lattice_t: np.ndarray = field(repr=False)

    @classmethod
    def create(cls, r_m: float, r_t: float, downscale_area: float) -> "StructureGeometry":
        if r_m <= 0 or r_t <= 0:
            raise ValueError("structure radii must be > 0")
        if downscale_area < 1.0:
            raise ValueError("downscale_area must be >= 1")
        scale = 1.0 / math.sqrt(downscale_area)
        return cls(
            r_m=float(r_m),
            r_t=float(r_t),
            downscale_area=float(downscale_area),
            lattice_m=_disc_lattice(r_m * scale),
            lattice_t=_disc_lattice(r_t),
        )

    @property
    def n_m(self) -> int:
        return self.lattice_m.shape[0]

    @property
    def n_t(self) -> int:
        return self.lattice_t.shape[0]

    @property
    def position_scale(self) -> float:
        return 1.0 / math.sqrt(self.downscale_area)


def local_frame(ref: Minutia, other: Minutia) -> Tuple[float, float, float]:
    """Express ``other``'s position in ``ref``'s local frame.

    The frame is translated to ``ref`` and rotated by ``-ref.theta``, so a
    minutia straight ahead of the reference direction lands on the positive
    u axis. Returns ``(u, v, rho)`` with ``rho`` the Euclidean center
    distance (which rotation leaves unchanged).
    """
    dx = other.x - ref.x
    dy = other.y - ref.y
    c, s = math.cos(ref.theta), math.sin(ref.theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return u, v, math.hypot(dx, dy)


def gaussian_response(
    points: np.ndarray,
    mu: Tuple[float, float],
    sigma: Tuple[float, float],
    theta_i: float,
) -> np.ndarray:
    """Anisotropic 2-d Gaussian bump, evaluated at an (n, 2) point array.

    ``sigma[0]`` spreads along the axis rotated by ``theta_i`` from the
    x axis, ``sigma[1]`` across it. Peak value is 1 at ``mu``; there is no
    normalizing prefactor.
    """
    sx2 = 2.0 * sigma[0] * sigma[0]
    sy2 = 2.0 * sigma[1] * sigma[1]
    cos_t, sin_t = math.cos(theta_i), math.sin(theta_i)
    sin_2t = math.sin(2.0 * theta_i)
    a = cos_t * cos_t / sx2 + sin_t * sin_t / sy2
    b = -sin_2t / (2.0 * sx2) + sin_2t / (2.0 * sy2)
    c = sin_t * sin_t / sx2 + cos_t * cos_t / sy2

    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    dx = pts[:, 0] - mu[0]
    dy = pts[:, 1] - mu[1]
    return np.exp(-(a * dx * dx + 2.0 * b * dx * dy + c * dy * dy))


def build_mbls(
    ref: Minutia,
    minutiae: Sequence[Minutia],
    geometry: StructureGeometry,
    spread: SpreadModel,
) -> np.ndarray:
    """Minutia-descriptor vector for ``ref`` within its impression.

    Every other minutia whose center distance is at most ``r_m`` contributes
    one Gaussian bump at its local-frame position, oriented across the
    center-to-neighbor ray (tangentially), with spreads from ``spread`` at
    its distance. Positions and spreads are then shrunk by the geometry's
    area downscale and rasterized over ``lattice_m``. The sum is
    L2-normalized; a minutia with no neighbors in range yields a zero vector.
    """
    scale = geometry.position_scale
    lattice = geometry.lattice_m.astype(np.float64)

    acc = np.zeros(geometry.n_m, dtype=np.float64)
    hit = False
    for m in minutiae:
        if m is ref:
            continue
        u, v, rho = local_frame(ref, m)
        if rho > geometry.r_m:
            continue
        sig_t, sig_r = spread.sigma_at(rho)
        theta_i = math.atan2(v, u) + math.pi / 2.0
        acc += gaussian_response(
            lattice,
            (u * scale, v * scale),
            (sig_t * scale, sig_r * scale),
            theta_i,
        )
        hit = True

    if not hit:
        return acc
    return acc / np.linalg.norm(acc)


def mbls_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two minutia-descriptor vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"descriptor shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def normalize_image(
    image: GrayImage, target_mean: float = 0.0, target_std: float = 1.0
) -> np.ndarray:
    """Affinely map an image to a target global mean and std.

    Returns a float array of the image's shape. A constant image maps to
    ``target_mean`` everywhere.
    """
    px = image.pixels.astype(np.float64)
    mean = float(px.mean())
    std = float(px.std())
    if std == 0.0:
        return np.full_like(px, target_mean)
    return (px - mean) / std * target_std + target_mean


def bilinear_sample(
    img: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float
) -> np.ndarray:
    """Sample ``img`` at real coordinates; points off the pixel grid get ``fill``."""
    h, w = img.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = (xs >= 0.0) & (xs <= w - 1) & (ys >= 0.0) & (ys <= h - 1)

    out = np.full(xs.shape, fill, dtype=np.float64)
    if not inside.any():
        return out
    x = xs[inside]
    y = ys[inside]
    # clip the base corner so x0+1 stays a valid column even at the far edge
    x0 = np.clip(np.floor(x).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(y).astype(np.int64), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = x - x0
    ty = y - y0
    val = (
        img[y0, x0] * (1.0 - tx) * (1.0 - ty)
        + img[y0, x1] * tx * (1.0 - ty)
        + img[y1, x0] * (1.0 - tx) * ty
        + img[y1, x1] * tx * ty
    )
    out[inside] = val
    return out


def extract_tbls(
    ref: Minutia,
    image: np.ndarray,
    geometry: StructureGeometry,
    fill: float = 0.0,
) -> np.ndarray:
    """Texture-descriptor vector: the disc around ``ref``, direction-aligned.

    Each lattice offset is rotated by ``ref.theta`` and added to the minutia
    position; the (already normalized) image is sampled there bilinearly.
    Samples outside the image take ``fill``, which callers set to the
    normalization target mean so off-image area carries no information.
    """
    c, s = math.cos(ref.theta), math.sin(ref.theta)
    lat = geometry.lattice_t.astype(np.float64)
    xs = ref.x + lat[:, 0] * c - lat[:, 1] * s
    ys = ref.y + lat[:, 0] * s + lat[:, 1] * c
    return bilinear_sample(np.asarray(image, dtype=np.float64), xs, ys, fill)

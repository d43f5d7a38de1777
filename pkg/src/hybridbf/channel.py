"""Clustered multipath channel generation for uniform planar arrays.

Channels are sums of ray outer products ``a_r a_t^H`` over clusters and
rays, with complex Gaussian ray gains and a prefactor that makes the
expected squared Frobenius norm equal ``n_t * n_r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .exceptions import DegenerateError, DimensionError
from .validation import check_positive_int

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_CARRIER_HZ = 28e9

#: Name of the counter-based generator recorded in output metadata.
RNG_NAME = "philox4x64"

TWO_PI = 2.0 * math.pi


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for ``(master seed, stream indices...)``.

    Independent streams come from distinct index tuples, never from
    sharing one mutable generator across tasks.
    """
    words = [int(seed) & (2**64 - 1), *(int(s) & (2**64 - 1) for s in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array in the yz plane.

    ``l_elems`` on the y axis, ``b_elems`` on the z axis, element
    ``spacing`` and carrier ``wavelength`` in meters.
    """

    l_elems: int
    b_elems: int
    spacing: float
    wavelength: float

    def __post_init__(self):
        check_positive_int(self.l_elems, "l_elems")
        check_positive_int(self.b_elems, "b_elems")
        if self.spacing <= 0 or self.wavelength <= 0:
            raise DimensionError("spacing and wavelength must be positive")

    @property
    def n_elements(self) -> int:
        return self.l_elems * self.b_elems

    @classmethod
    def for_antennas(cls, n: int, carrier_hz: float = DEFAULT_CARRIER_HZ,
                     spacing_factor: float = 0.5) -> "ArrayGeometry":
        """Near-square L x B factorization of ``n`` elements at half-wavelength spacing."""
        n = check_positive_int(n, "n")
        b = int(math.isqrt(n))
        while n % b != 0:
            b -= 1
        wavelength = SPEED_OF_LIGHT / carrier_hz
        return cls(l_elems=n // b, b_elems=b, spacing=spacing_factor * wavelength,
                   wavelength=wavelength)


def array_response(geom: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Unit-norm steering vector of the UPA for one direction.

    Entry for y index m and z index n (flattened as ``m * B + n``) is
    ``exp(j * (2*pi/wavelength) * spacing * (m*sin(el)*sin(az) + n*cos(el))) / sqrt(L*B)``.
    """
    k = TWO_PI / geom.wavelength * geom.spacing
    m = np.arange(geom.l_elems)
    n = np.arange(geom.b_elems)
    phase = k * (np.add.outer(m * (math.sin(elevation) * math.sin(azimuth)),
                              n * math.cos(elevation)))
    return np.exp(1j * phase).ravel() / math.sqrt(geom.n_elements)


@dataclass(frozen=True)
class RaySpec:
    """One propagation path: complex gain plus departure/arrival angles in radians."""

    gain: complex
    aod_azimuth: float
    aod_elevation: float
    aoa_azimuth: float
    aoa_elevation: float


@dataclass(frozen=True)
class ClusterSet:
    """All rays of a realization: ``n_cl`` clusters with ``n_ray`` rays each."""

    n_cl: int
    n_ray: int
    rays: tuple

    def __post_init__(self):
        check_positive_int(self.n_cl, "n_cl")
        check_positive_int(self.n_ray, "n_ray")
        if len(self.rays) != self.n_cl * self.n_ray:
            raise DimensionError(
                f"expected {self.n_cl * self.n_ray} rays, got {len(self.rays)}"
            )


@dataclass(frozen=True)
class ChannelRealization:
    """Channel matrix ``h`` (n_r x n_t) plus the parameters that produced it."""

    h: np.ndarray
    clusters: ClusterSet
    tx_geometry: ArrayGeometry
    rx_geometry: ArrayGeometry
    seed: int = 0

    @property
    def n_t(self) -> int:
        return self.h.shape[1]

    @property
    def n_r(self) -> int:
        return self.h.shape[0]


def sample_cluster_set(rng: np.random.Generator, n_cl: int, n_ray: int,
                       angular_spread_deg: float | None = None,
                       first_cluster_center: tuple[float, float] | None = None) -> ClusterSet:
    """Draw ray gains and angles for one realization.

    The default recipe draws every angle independently uniform on
    [0, 2*pi) and gains i.i.d. circularly-symmetric complex Gaussian with
    unit variance.  With ``angular_spread_deg`` set, cluster centers are
    drawn first and per-ray angles are Laplacian around their cluster
    center with that scale (used by the beam-pattern experiment).
    ``first_cluster_center`` optionally pins the first cluster's
    (azimuth, elevation) center, in radians.
    """
    n_cl = check_positive_int(n_cl, "n_cl")
    n_ray = check_positive_int(n_ray, "n_ray")
    total = n_cl * n_ray
    gains = (rng.standard_normal(total) + 1j * rng.standard_normal(total)) / math.sqrt(2.0)

    if angular_spread_deg is None:
        angles = rng.uniform(0.0, TWO_PI, size=(total, 4))
    else:
        scale = math.radians(angular_spread_deg)
        centers = rng.uniform(0.0, TWO_PI, size=(n_cl, 4))
        if first_cluster_center is not None:
            az, el = first_cluster_center
            centers[0] = [az, el, az, el]
        spread = rng.laplace(0.0, scale, size=(n_cl, n_ray, 4))
        angles = (centers[:, None, :] + spread).reshape(total, 4) % TWO_PI

    rays = tuple(
        RaySpec(gain=complex(gains[i]),
                aod_azimuth=float(angles[i, 0]), aod_elevation=float(angles[i, 1]),
                aoa_azimuth=float(angles[i, 2]), aoa_elevation=float(angles[i, 3]))
        for i in range(total)
    )
    return ClusterSet(n_cl=n_cl, n_ray=n_ray, rays=rays)


def build_channel(tx: ArrayGeometry, rx: ArrayGeometry, clusters: ClusterSet,
                  seed: int = 0) -> ChannelRealization:
    """Assemble the n_r x n_t channel from steering-vector outer products."""
    n_t, n_r = tx.n_elements, rx.n_elements
    a_t = np.column_stack([array_response(tx, r.aod_azimuth, r.aod_elevation)
                           for r in clusters.rays])
    a_r = np.column_stack([array_response(rx, r.aoa_azimuth, r.aoa_elevation)
                           for r in clusters.rays])
    gains = np.array([r.gain for r in clusters.rays])
    prefactor = math.sqrt(n_t * n_r / (clusters.n_cl * clusters.n_ray))
    h = prefactor * ((a_r * gains) @ a_t.conj().T)
    return ChannelRealization(h=h, clusters=clusters, tx_geometry=tx,
                              rx_geometry=rx, seed=seed)


def normalize_channel(ch: ChannelRealization) -> ChannelRealization:
    """Rescale so that ``||h||_F^2 == n_t * n_r`` exactly."""
    norm = np.linalg.norm(ch.h)
    if norm == 0.0:
        raise DegenerateError("cannot normalize an all-zero channel")
    target = math.sqrt(ch.n_t * ch.n_r)
    return replace(ch, h=ch.h * (target / norm))


def generate_channel(tx: ArrayGeometry, rx: ArrayGeometry, n_cl: int, n_ray: int,
                     seed: int, *stream: int,
                     angular_spread_deg: float | None = None,
                     first_cluster_center: tuple[float, float] | None = None,
                     normalize: bool = True) -> ChannelRealization:
    """Seeded end-to-end draw: cluster set, channel assembly, normalization."""
    rng = make_rng(seed, *stream)
    clusters = sample_cluster_set(rng, n_cl, n_ray,
                                  angular_spread_deg=angular_spread_deg,
                                  first_cluster_center=first_cluster_center)
    ch = build_channel(tx, rx, clusters, seed=seed)
    return normalize_channel(ch) if normalize else ch


def generate_channels(tx: ArrayGeometry, rx: ArrayGeometry, n_cl: int, n_ray: int,
                      seed: int, count: int, *stream: int,
                      angular_spread_deg: float | None = None,
                      normalize: bool = True) -> list[ChannelRealization]:
    """Batch of independent realizations; stream i derives from (seed, *stream, i)."""
    return [generate_channel(tx, rx, n_cl, n_ray, seed, *stream, i,
                             angular_spread_deg=angular_spread_deg,
                             normalize=normalize)
            for i in range(count)]


def stack_batch(channels: Sequence[ChannelRealization]) -> np.ndarray:
    """Stack realizations into a (batch, n_r, n_t) array for export."""
    return np.stack([ch.h for ch in channels])

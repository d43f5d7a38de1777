import math

import numpy as np
import pytest

from hybridbf.channel import (ArrayGeometry, ChannelRealization, ClusterSet, RaySpec,
                              array_response, build_channel, generate_channel,
                              make_rng, normalize_channel, sample_cluster_set)
from hybridbf.exceptions import DegenerateError, DimensionError


def geometry(l_elems, b_elems, wavelength=1.0):
    return ArrayGeometry(l_elems=l_elems, b_elems=b_elems,
                         spacing=wavelength / 2, wavelength=wavelength)


class TestArrayGeometry:
    def test_for_antennas_near_square(self):
        assert (ArrayGeometry.for_antennas(64).l_elems,
                ArrayGeometry.for_antennas(64).b_elems) == (8, 8)
        assert (ArrayGeometry.for_antennas(32).l_elems,
                ArrayGeometry.for_antennas(32).b_elems) == (8, 4)
        assert ArrayGeometry.for_antennas(16).n_elements == 16

    def test_default_spacing_half_wavelength(self):
        geom = ArrayGeometry.for_antennas(4)
        assert geom.spacing == pytest.approx(geom.wavelength / 2)

    def test_rejects_bad_dims(self):
        with pytest.raises(DimensionError):
            ArrayGeometry(l_elems=0, b_elems=2, spacing=0.5, wavelength=1.0)
        with pytest.raises(DimensionError):
            ArrayGeometry(l_elems=2, b_elems=2, spacing=-1.0, wavelength=1.0)


class TestArrayResponse:
    def test_single_element(self):
        v = array_response(geometry(1, 1), 0.3, 1.2)
        assert np.allclose(v, [1.0])

    def test_line_array_zero_elevation(self):
        # elevation 0: cos=1, sin=0, so phases are pi * n for d = lambda/2
        v = array_response(geometry(1, 4), azimuth=0.7, elevation=0.0)
        assert np.allclose(v, 0.5 * np.array([1, -1, 1, -1]))

    def test_two_by_two_broadside(self):
        # elevation pi/2, azimuth pi/2: phase = pi * m, order (m, n) row-major
        v = array_response(geometry(2, 2), azimuth=np.pi / 2, elevation=np.pi / 2)
        assert np.allclose(v, 0.5 * np.array([1, 1, -1, -1]))

    @pytest.mark.parametrize("seed", range(6))
    def test_unit_norm(self, seed):
        rng = np.random.default_rng(seed)
        geom = geometry(rng.integers(1, 9), rng.integers(1, 9))
        az, el = rng.uniform(0, 2 * np.pi, 2)
        assert abs(np.linalg.norm(array_response(geom, az, el)) - 1.0) <= 1e-12


class TestSampleClusterSet:
    def test_single_ray(self):
        cs = sample_cluster_set(make_rng(1), 1, 1)
        assert cs.n_cl == cs.n_ray == 1 and len(cs.rays) == 1

    def test_deterministic(self):
        a = sample_cluster_set(make_rng(5, 1), 5, 5)
        b = sample_cluster_set(make_rng(5, 1), 5, 5)
        assert a == b

    def test_angles_in_range(self):
        cs = sample_cluster_set(make_rng(2), 4, 3)
        for ray in cs.rays:
            for angle in (ray.aod_azimuth, ray.aod_elevation,
                          ray.aoa_azimuth, ray.aoa_elevation):
                assert 0.0 <= angle < 2 * np.pi

    def test_gain_unit_variance(self):
        # Monte Carlo against the unit-variance gain spec
        cs = sample_cluster_set(make_rng(3), 100, 100)
        gains = np.array([r.gain for r in cs.rays])
        assert np.mean(np.abs(gains) ** 2) == pytest.approx(1.0, rel=0.05)

    def test_laplacian_spread_wraps(self):
        cs = sample_cluster_set(make_rng(4), 3, 4, angular_spread_deg=10.0,
                                first_cluster_center=(1.0, 0.4))
        assert len(cs.rays) == 12
        for ray in cs.rays:
            assert 0.0 <= ray.aod_azimuth < 2 * np.pi


def single_ray_channel(gain=1.0 + 0.0j, angles=(0.3, 1.1, 2.0, 0.7)):
    ray = RaySpec(gain=gain, aod_azimuth=angles[0], aod_elevation=angles[1],
                  aoa_azimuth=angles[2], aoa_elevation=angles[3])
    clusters = ClusterSet(n_cl=1, n_ray=1, rays=(ray,))
    return build_channel(geometry(4, 2), geometry(2, 2), clusters)


class TestBuildChannel:
    def test_single_ray_outer_product(self):
        ch = single_ray_channel()
        ray = ch.clusters.rays[0]
        a_t = array_response(ch.tx_geometry, ray.aod_azimuth, ray.aod_elevation)
        a_r = array_response(ch.rx_geometry, ray.aoa_azimuth, ray.aoa_elevation)
        expected = math.sqrt(8 * 4) * np.outer(a_r, a_t.conj())
        assert np.allclose(ch.h, expected)
        assert np.linalg.norm(ch.h) == pytest.approx(math.sqrt(8 * 4))
        sigma = np.linalg.svd(ch.h, compute_uv=False)
        assert sigma[1] < 1e-12 * sigma[0]

    def test_zero_gains(self):
        rays = tuple(RaySpec(0j, 0.1 * i, 0.2, 0.3, 0.4) for i in range(4))
        ch = build_channel(geometry(2, 2), geometry(2, 1),
                           ClusterSet(n_cl=2, n_ray=2, rays=rays))
        assert np.all(ch.h == 0)

    def test_opposite_gains_cancel(self):
        angles = (0.5, 1.0, 1.5, 2.0)
        rays = (RaySpec(1 + 2j, *angles), RaySpec(-1 - 2j, *angles))
        ch = build_channel(geometry(2, 2), geometry(2, 1),
                           ClusterSet(n_cl=1, n_ray=2, rays=rays))
        assert np.allclose(ch.h, 0)

    def test_linear_in_gains(self):
        cs = sample_cluster_set(make_rng(7), 3, 3)
        doubled = ClusterSet(n_cl=3, n_ray=3, rays=tuple(
            RaySpec(2 * r.gain, r.aod_azimuth, r.aod_elevation,
                    r.aoa_azimuth, r.aoa_elevation) for r in cs.rays))
        tx, rx = geometry(4, 2), geometry(2, 2)
        assert np.allclose(build_channel(tx, rx, doubled).h,
                           2 * build_channel(tx, rx, cs).h, atol=1e-12)

    def test_rank_bound(self):
        cs = sample_cluster_set(make_rng(8), 1, 3)
        ch = build_channel(geometry(4, 4), geometry(4, 2), cs)
        sigma = np.linalg.svd(ch.h, compute_uv=False)
        assert np.all(sigma[3:] <= 1e-9 * sigma[0])

    def test_dimensions_rx_rows(self):
        ch = single_ray_channel()
        assert ch.h.shape == (4, 8)
        assert ch.n_r == 4 and ch.n_t == 8

    def test_cluster_length_contract(self):
        with pytest.raises(DimensionError):
            ClusterSet(n_cl=2, n_ray=2, rays=(RaySpec(1j, 0, 0, 0, 0),))


class TestNormalizeChannel:
    def test_scalar_case(self):
        ch = ChannelRealization(h=np.array([[2.0 + 0j]]),
                                clusters=ClusterSet(1, 1, (RaySpec(1, 0, 0, 0, 0),)),
                                tx_geometry=geometry(1, 1), rx_geometry=geometry(1, 1))
        assert np.allclose(normalize_channel(ch).h, [[1.0]])

    def test_idempotent(self):
        ch = normalize_channel(single_ray_channel(gain=0.3 + 0.4j))
        again = normalize_channel(ch)
        assert np.linalg.norm(again.h - ch.h) <= 1e-12

    def test_batch_exact_norm(self):
        tx, rx = geometry(4, 2), geometry(2, 2)
        for i in range(200):
            ch = build_channel(tx, rx, sample_cluster_set(make_rng(9, i), 5, 5))
            normed = normalize_channel(ch)
            assert np.linalg.norm(normed.h) ** 2 == pytest.approx(8 * 4, abs=1e-9)

    def test_expected_norm_unnormalized(self):
        # the sqrt(n_t n_r / (n_cl n_ray)) prefactor gives E||H||_F^2 = n_t n_r
        tx, rx = geometry(4, 2), geometry(2, 2)
        norms = [np.linalg.norm(build_channel(tx, rx, sample_cluster_set(make_rng(10, i), 5, 5)).h) ** 2
                 for i in range(600)]
        assert np.mean(norms) == pytest.approx(8 * 4, rel=0.05)

    def test_zero_channel_rejected(self):
        rays = (RaySpec(0j, 0, 0, 0, 0),)
        ch = build_channel(geometry(2, 1), geometry(1, 1), ClusterSet(1, 1, rays))
        with pytest.raises(DegenerateError):
            normalize_channel(ch)


class TestGenerateChannel:
    def test_deterministic(self):
        tx, rx = geometry(4, 2), geometry(2, 2)
        a = generate_channel(tx, rx, 5, 5, seed=77, normalize=True)
        b = generate_channel(tx, rx, 5, 5, seed=77, normalize=True)
        assert np.array_equal(a.h, b.h)
        assert a.clusters == b.clusters

    def test_stream_separation(self):
        tx, rx = geometry(4, 2), geometry(2, 2)
        a = generate_channel(tx, rx, 2, 2, 77, 0)
        b = generate_channel(tx, rx, 2, 2, 77, 1)
        assert not np.allclose(a.h, b.h)

import math

import numpy as np
import pytest

from kpzlab.core.errors import InsufficientSamplesError
from kpzlab.services import statistics as st
from kpzlab.services.replicas import chunk_bounds, run_chunks

pytestmark = pytest.mark.unit


def _gaussian_samples(rng, n, d, K, scale=1.0):
    g = rng.standard_normal((2, n, d, K))
    return scale * (g[0] + 1j * g[1]) / math.sqrt(2.0)


class TestCovarianceZTest:
    """Tests para covariance_z_test"""

    def test_matching_target(self, rng):
        """Generador igual al objetivo: |z| ≤ 4 en al menos el 99% de las entradas"""
        zt = st.covariance_z_test(_gaussian_samples(rng, 2000, 2, 20), np.eye(2))
        assert np.mean(np.abs(zt.z) <= 4.0) >= 0.99
        assert zt.n_samples == 2000

    def test_shifted_target_grows(self, rng):
        """Con un objetivo desplazado |z| crece como √n"""
        small = st.covariance_z_test(_gaussian_samples(rng, 100, 1, 4), 1.3 * np.eye(1))
        large = st.covariance_z_test(_gaussian_samples(rng, 10000, 1, 4), 1.3 * np.eye(1))
        assert large.max_abs_z > 5.0 * small.max_abs_z / 2.0
        assert not large.passes()

    def test_single_sample(self, rng):
        with pytest.raises(InsufficientSamplesError):
            st.covariance_z_test(_gaussian_samples(rng, 1, 1, 4), np.eye(1))

    def test_rows_layout(self, rng):
        """d=2: (1,1), (1,2) real, (1,2) imaginaria y (2,2) por modo"""
        zt = st.covariance_z_test(_gaussian_samples(rng, 50, 2, 3), np.eye(2))
        rows = zt.rows()
        assert len(rows) == 4 * 3
        assert {r["part"] for r in rows} == {"re", "im"}
        assert all(r["target"] == 0.0 for r in rows if r["part"] == "im")

    def test_per_mode_target(self, rng):
        K = 5
        scales = np.linspace(1.0, 0.2, K)
        samples = _gaussian_samples(rng, 4000, 1, K) * scales
        target = (scales**2)[:, None, None]
        assert st.covariance_z_test(samples, target).max_abs_z <= 4.5


class TestZScores:
    """Tests para z_scores"""

    def test_zero_stderr(self):
        z = st.z_scores(np.array([1.0, 2.0]), np.array([1.0, 1.0]), np.array([0.0, 0.0]))
        assert z[0] == 0.0
        assert np.isinf(z[1])


class TestBatchMeans:
    """Tests para batch_means"""

    def test_constant_series(self):
        mean, se = st.batch_means(np.full(100, 3.0), 10)
        assert mean == 3.0
        assert se == 0.0

    def test_leftover_dropped(self):
        series = np.arange(23, dtype=float)
        mean, _ = st.batch_means(series, 4)
        assert mean == pytest.approx(np.arange(20).mean())

    def test_too_few(self):
        with pytest.raises(InsufficientSamplesError):
            st.batch_means(np.ones(3), 5)


class TestReplicaSlopes:
    """Tests para replica_slopes y mean_and_stderr"""

    def test_exact_lines(self):
        t = np.linspace(0.0, 1.0, 11)
        values = np.stack([np.stack([2.0 * t, -t], axis=1), np.stack([2.0 * t + 1, -t], axis=1)])
        slopes = st.replica_slopes(t, values)
        assert np.allclose(slopes, [[2.0, -1.0], [2.0, -1.0]])

    def test_too_few_times(self):
        with pytest.raises(InsufficientSamplesError):
            st.replica_slopes(np.array([0.0, 1.0]), np.zeros((2, 2, 1)))

    def test_mean_and_stderr(self):
        mean, se = st.mean_and_stderr(np.array([[1.0], [3.0]]))
        assert mean[0] == 2.0
        assert se[0] == pytest.approx(1.0)

    def test_single_replica(self):
        with pytest.raises(InsufficientSamplesError):
            st.mean_and_stderr(np.ones((1, 2)))


def _square_range(start, stop):
    return [r * r for r in range(start, stop)]


class TestReplicaChunks:
    """Tests para el reparto en bloques"""

    def test_bounds_independent_of_workers(self):
        assert chunk_bounds(7, 3) == [(0, 3), (3, 6), (6, 7)]

    def test_invalid_chunk(self):
        with pytest.raises(ValueError):
            chunk_bounds(5, 0)

    def test_serial_order(self):
        parts = run_chunks(_square_range, 10, chunk_size=4, workers=1)
        assert sum(parts, []) == [r * r for r in range(10)]

    @pytest.mark.integration
    def test_pool_matches_serial(self):
        serial = run_chunks(_square_range, 10, chunk_size=3, workers=1)
        pooled = run_chunks(_square_range, 10, chunk_size=3, workers=2)
        assert serial == pooled

import numpy as np
import pytest

from kpzlab.core.errors import ConfigError, PreconditionError
from kpzlab.models.fields import SpectralField
from kpzlab.models.schemas import CouplingTensor, DiffusionPair, SimConfig
from kpzlab.models.symbols import sharp_cutoff, smooth_cutoff
from kpzlab.services import sbe_simulator as sim
from kpzlab.services.spectral_grid import derivative_symbol
from kpzlab.services.statistics import covariance_z_test
from kpzlab.services.stochastic_sources import RngStream, ou_step, sample_mu_A
from kpzlab.services.tensor_core import random_bilinear, random_sigma, random_trilinear


def _cfg(base, **overrides):
    payload = {
        **base,
        "modes_K": 8,
        "cutoff": {"N": 6, "psi": "smooth"},
        "dt": 1e-3,
        "horizon_T": 0.02,
        "replicas": 4,
    }
    payload.update(overrides)
    return SimConfig.model_validate(payload)


def _zero_mean_field(rng, d, K):
    c = rng.standard_normal((d, K + 1)) + 1j * rng.standard_normal((d, K + 1))
    c[:, 0] = 0.0
    return SpectralField(c)


@pytest.mark.unit
class TestValidateSimConfig:
    """Tests para las comprobaciones de estabilidad"""

    def test_too_few_modes(self, base_config):
        with pytest.raises(ConfigError):
            sim.validate_sim_config(_cfg(base_config, modes_K=3, cutoff={"N": 2}))

    def test_dt_above_limit(self, base_config):
        cfg = _cfg(base_config, modes_K=16, cutoff={"N": 12}, dt=0.01)
        with pytest.raises(ConfigError):
            sim.validate_sim_config(cfg)

    def test_galerkin_requires_K_at_least_N(self, base_config):
        with pytest.raises(ValueError):
            _cfg(base_config, modes_K=8, cutoff={"N": 12})


@pytest.mark.unit
class TestEnergyIdentity:
    """Tests para f_N y energy_identity_residual"""

    def test_trilinear_residual_vanishes(self, rng):
        """100 campos aleatorios, Γ trilineal, N=32, K=48"""
        psi = smooth_cutoff()
        for _ in range(100):
            t, dp = random_trilinear(rng, 2)
            u = _zero_mean_field(rng, 2, 48)
            res = sim.energy_identity_residual(u, t, dp, 32, psi)
            assert abs(res) <= 1e-10 * sim.energy_residual_scale(u, t, dp, 32)

    def test_zero_tensor(self, rng, identity_pair):
        t = CouplingTensor(d=2, gamma=np.zeros((2, 2, 2)))
        u = _zero_mean_field(rng, 2, 10)
        assert sim.energy_identity_residual(u, t, identity_pair, 8, smooth_cutoff()) == 0.0

    def test_generic_tensor_nonzero(self, rng):
        """Sin trilinealidad el residuo casi nunca se anula"""
        nonzero = 0
        for _ in range(100):
            dp = random_sigma(rng, 2)
            t = random_bilinear(rng, 2)
            u = _zero_mean_field(rng, 2, 12)
            res = sim.energy_identity_residual(u, t, dp, 8, smooth_cutoff())
            nonzero += abs(res) > 1e-6 * sim.energy_residual_scale(u, t, dp, 8)
        assert nonzero >= 99

    def test_requires_zero_mean(self, example_tensor):
        c = np.zeros((2, 5), dtype=complex)
        c[:, 0] = 1.0
        with pytest.raises(PreconditionError):
            sim.f_N(SpectralField(c), example_tensor, 4, smooth_cutoff())

    def test_sharp_cutoff_also_conserves(self, rng, example_tensor, identity_pair):
        u = _zero_mean_field(rng, 2, 20)
        res = sim.energy_identity_residual(u, example_tensor, identity_pair, 10, sharp_cutoff())
        assert abs(res) <= 1e-10 * sim.energy_residual_scale(u, example_tensor, identity_pair, 10)

    def test_energy_positive(self, rng, identity_pair):
        u = _zero_mean_field(rng, 2, 6)
        assert sim.energy(u, identity_pair) > 0.0


@pytest.mark.unit
class TestDivergenceFree:
    """Tests para divergence_free_residual"""

    def test_vanishes_at_random_point(self, rng, example_tensor):
        u = _zero_mean_field(rng, 2, 8)
        res = sim.divergence_free_residual(example_tensor, 6, smooth_cutoff(), 8, u=u)
        assert abs(res) <= 1e-8

    def test_vanishes_at_origin(self, example_tensor):
        assert abs(sim.divergence_free_residual(example_tensor, 6, smooth_cutoff(), 8)) <= 1e-12


@pytest.mark.unit
class TestStepGalerkin:
    """Tests para step_galerkin"""

    def test_zero_gamma_is_ou(self, identity_pair):
        """Γ=0: un paso de Galerkin es exactamente el paso OU"""
        cfg = _cfg(
            {"d": 2, "gamma": np.zeros((2, 2, 2)).tolist(), "sigma": [[1.0, 0.0], [0.0, 1.0]]}
        )
        u = sample_mu_A(RngStream(1), identity_pair, 8)
        a = sim.step_galerkin(u, cfg, RngStream(5))
        b = ou_step(u, identity_pair, RngStream(5), cfg.dt)
        assert a.allclose(b, rtol=1e-15)

    def test_seeded_determinism(self, base_config, identity_pair):
        cfg = _cfg(base_config)
        ctx = sim.SimContext.from_config(cfg)
        u = sample_mu_A(RngStream(1), identity_pair, 8)
        a = sim.step_galerkin(u, ctx, RngStream(3))
        b = sim.step_galerkin(u, ctx, RngStream(3))
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_zero_mode_preserved(self, base_config, identity_pair):
        ctx = sim.SimContext.from_config(_cfg(base_config))
        u = sample_mu_A(RngStream(1), identity_pair, 8)
        rng_stream = RngStream(2)
        for _ in range(10):
            u = sim.step_galerkin(u, ctx, rng_stream)
        assert u.is_zero_mean()

    def test_requires_zero_mean(self, base_config):
        c = np.zeros((2, 9), dtype=complex)
        c[:, 0] = 1.0
        with pytest.raises(PreconditionError):
            sim.step_galerkin(SpectralField(c), _cfg(base_config), RngStream(0))


@pytest.mark.unit
class TestStepKpz:
    """Tests para step_kpz y step_burgers"""

    def test_zero_gamma_variants_coincide(self):
        cfg = _cfg(
            {"d": 1, "gamma": [[[0.0]]], "sigma": [[1.0]]},
            scheme="kpz_plain",
            mollifier={"kind": "gaussian", "eps": 0.2},
        )
        h = SpectralField.zeros(1, 8)
        a = sim.step_kpz(h, cfg, RngStream(4), "plain")
        b = sim.step_kpz(h, cfg, RngStream(4), "tilde")
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_derivative_matches_burgers(self, scalar_config):
        """∂ₓ de la trayectoria kpz_plain coincide con burgers_plain con el mismo ruido"""
        cfg = _cfg(scalar_config, scheme="kpz_plain", mollifier={"kind": "gaussian", "eps": 0.2})
        ctx = sim.SimContext.from_config(cfg)
        rng = np.random.default_rng(0)
        u0 = np.zeros((1, 9), dtype=complex)
        u0[0, 1:] = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        dx = derivative_symbol(8)
        h0 = np.zeros_like(u0)
        h0[0, 1:] = u0[0, 1:] / dx[1:]
        h = SpectralField(h0)
        u = SpectralField(u0)
        noise_h, noise_u = RngStream(9), RngStream(9)
        for _ in range(20):
            h = sim.step_kpz(h, ctx, noise_h, "plain")
            u = sim.step_burgers(u, ctx, noise_u, "plain")
        derived = h.coeffs * dx
        derived[:, 0] = 0.0
        assert np.max(np.abs(derived - u.coeffs)) <= 1e-10

    def test_zero_mode_carries_shift(self, scalar_config):
        """Con h=0 el modo cero recibe −½Γc^εA·dt"""
        cfg = _cfg(scalar_config, scheme="kpz_plain", mollifier={"kind": "gaussian", "eps": 0.2})
        ctx = sim.SimContext.from_config(cfg)
        zeros = np.zeros((1, 9), dtype=complex)
        out = sim.kpz_coeffs_step(zeros, zeros.copy(), ctx, tilde=False)
        assert out[0, 0].real == pytest.approx(-0.5 * ctx.c_band * cfg.dt, rel=1e-12)


@pytest.mark.integration
class TestSimulate:
    """Tests para simulate y el reparto de réplicas"""

    def test_worker_count_invariance(self, base_config):
        cfg = _cfg(base_config, replicas=6, chunk_size=2, checkpoints=2)
        serial = sim.simulate(cfg, workers=1)
        pooled = sim.simulate(cfg, workers=2)
        assert np.array_equal(serial.snapshots, pooled.snapshots)
        assert np.array_equal(serial.energy, pooled.energy)

    def test_chunking_invariance(self, base_config):
        """Los flujos son por réplica: el tamaño de bloque no cambia el resultado"""
        a = sim.simulate(_cfg(base_config, replicas=5, chunk_size=2))
        b = sim.simulate(_cfg(base_config, replicas=5, chunk_size=5))
        assert np.array_equal(a.snapshots, b.snapshots)

    def test_trajectory_shapes(self, base_config):
        traj = sim.simulate(_cfg(base_config, checkpoints=4))
        assert traj.snapshots.shape == (4, 4, 2, 9)
        assert traj.energy.shape == (4, 4)
        assert traj.zero_mode is None
        assert np.all(traj.snapshots[..., 0] == 0.0)

    def test_pair_zero_mode_series(self, scalar_config):
        cfg = _cfg(
            scalar_config,
            scheme="kpz_pair",
            mollifier={"kind": "gaussian", "eps": 0.2},
            drift={"sample_every": 2},
        )
        traj = sim.simulate(cfg)
        assert traj.zero_mode.shape == (4, 10, 1)
        assert traj.sample_times[0] == pytest.approx(2 * cfg.dt)

    def test_require_trilinear(self, base_config):
        bad = dict(base_config)
        bad["gamma"] = [[[1.0, 0.0], [0.0, 2.0]], [[0.0, 1.0], [1.0, 0.0]]]
        with pytest.raises(PreconditionError):
            sim.require_trilinear(_cfg(bad))


@pytest.mark.slow
class TestInvariance:
    """μ_A invariante para la dinámica de Galerkin con Γ trilineal"""

    def test_mu_A_preserved(self, base_config):
        cfg = _cfg(
            base_config,
            modes_K=16,
            cutoff={"N": 12, "psi": "smooth"},
            dt=1e-4,
            horizon_T=1.0,
            replicas=200,
            seed=1,
        )
        traj = sim.simulate(cfg)
        zt = covariance_z_test(traj.snapshots[-1][..., 1:], DiffusionPair.from_sigma(np.eye(2)).a)
        assert zt.max_abs_z <= 4.5

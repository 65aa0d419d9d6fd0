import numpy as np
import pytest

from kpzlab.core.errors import ConfigError, NumericalError, PreconditionError
from kpzlab.models.schemas import CouplingTensor, DiffusionPair
from kpzlab.services.tensor_core import (
    b_gamma_contraction,
    c_shift,
    c_shift_from_f,
    cole_hopf_marginal_variances,
    ertas_kardar,
    ertas_kardar_s,
    f_matrix,
    g_matrix,
    hat_transform,
    is_trilinear,
    is_trilinear_lowered,
    lowered_tensor,
    no_log_condition,
    random_bilinear,
    random_sigma,
    random_trilinear,
    tensor_report,
    validate_bilinear,
    verify_cole_hopf,
)

pytestmark = pytest.mark.unit


class TestValidateBilinear:
    """Tests para la función validate_bilinear"""

    def test_symmetric_tensor(self, example_tensor):
        """El ejemplo trilineal es simétrico en (β,γ)"""
        assert validate_bilinear(example_tensor) is True

    def test_asymmetric_tensor(self):
        """Un único elemento fuera de simetría basta para fallar"""
        g = np.zeros((2, 2, 2))
        g[0, 0, 1] = 1.0
        assert validate_bilinear(CouplingTensor(d=2, gamma=g)) is False

    def test_wrong_shape_rejected(self):
        """La forma debe ser d×d×d"""
        with pytest.raises(ValueError):
            CouplingTensor(d=3, gamma=np.zeros((2, 2, 2)))

    def test_tensor_is_immutable(self, example_tensor):
        """El array subyacente es de sólo lectura"""
        with pytest.raises(ValueError):
            example_tensor.gamma[0, 0, 0] = 5.0


class TestHatTransform:
    """Tests para la función hat_transform"""

    def test_identity_sigma(self, example_tensor, identity_pair):
        """Con σ = I, Γ̂ = Γ"""
        t_hat = hat_transform(example_tensor, identity_pair)
        assert np.array_equal(t_hat.gamma, example_tensor.gamma)

    def test_scalar_scaling(self):
        """d=1, σ=2: Γ̂ = τΓσσ = 2"""
        t_hat = hat_transform(CouplingTensor.from_array(1.0), DiffusionPair.from_sigma([[2.0]]))
        assert t_hat.gamma[0, 0, 0] == pytest.approx(2.0, rel=1e-15)

    def test_dimension_mismatch(self, example_tensor, scalar_pair):
        """σ de otra dimensión es un error de configuración"""
        with pytest.raises(ConfigError):
            hat_transform(example_tensor, scalar_pair)

    def test_non_bilinear_rejected(self, identity_pair):
        g = np.zeros((2, 2, 2))
        g[1, 0, 1] = 1.0
        with pytest.raises(PreconditionError):
            hat_transform(CouplingTensor(d=2, gamma=g), identity_pair)

    def test_inverse_round_trip(self, rng):
        """Γ̂ con σ y luego con σ⁻¹ recupera Γ en 100 casos d=3"""
        for _ in range(100):
            t = random_bilinear(rng, 3)
            dp = random_sigma(rng, 3)
            back = hat_transform(hat_transform(t, dp), dp.inverse())
            scale = max(1.0, float(np.max(np.abs(t.gamma))))
            assert np.max(np.abs(back.gamma - t.gamma)) <= 1e-12 * scale

    def test_singular_sigma(self):
        """σ singular no admite DiffusionPair"""
        with pytest.raises(NumericalError):
            DiffusionPair.from_sigma([[1.0, 2.0], [2.0, 4.0]])


class TestTrilinearCondition:
    """Tests para is_trilinear y sus caracterizaciones equivalentes"""

    def test_trilinear_example(self, example_tensor, identity_pair):
        assert is_trilinear(hat_transform(example_tensor, identity_pair))

    def test_ertas_kardar_not_trilinear(self, ek_tensor, identity_pair):
        """Γ¹₂₂ = λ₂ ≠ λ₁ = Γ²₁₂"""
        assert not is_trilinear(hat_transform(ek_tensor, identity_pair))

    def test_scalar_always_trilinear(self, scalar_pair):
        t = CouplingTensor.from_array(3.7)
        assert is_trilinear(hat_transform(t, scalar_pair))

    def test_lowered_agrees_on_random(self, rng):
        """Γ̃ = A⁻¹Γ simétrico ⇔ Γ̂ trilineal"""
        for _ in range(20):
            t, dp = random_trilinear(rng, 3)
            assert is_trilinear(hat_transform(t, dp))
            assert is_trilinear_lowered(t, dp)
            dp2 = random_sigma(rng, 3)
            t2 = random_bilinear(rng, 3)
            assert is_trilinear(hat_transform(t2, dp2)) == is_trilinear_lowered(t2, dp2)

    def test_lowered_tensor_shape(self, example_tensor, identity_pair):
        low = lowered_tensor(example_tensor, identity_pair)
        assert low.shape == (2, 2, 2)
        assert np.allclose(low, example_tensor.gamma)


class TestFGMatrices:
    """Tests para f_matrix y g_matrix"""

    def test_trilinear_example_values(self, example_tensor, identity_pair):
        """F = G = [[7,6],[6,7]] para el ejemplo con σ = I"""
        expected = np.array([[7.0, 6.0], [6.0, 7.0]])
        assert np.allclose(f_matrix(example_tensor, identity_pair), expected, rtol=0, atol=1e-14)
        assert np.allclose(g_matrix(example_tensor, identity_pair), expected, rtol=0, atol=1e-14)

    def test_invariant_under_index_exchange(self, rng):
        """Intercambiar Γ^α_{βγ} ↔ Γ^α_{γβ} no cambia F ni G"""
        for _ in range(100):
            t = random_bilinear(rng, 3)
            dp = random_sigma(rng, 3)
            swapped = CouplingTensor(d=3, gamma=t.gamma.transpose(0, 2, 1))
            assert np.array_equal(f_matrix(swapped, dp), f_matrix(t, dp))
            assert np.array_equal(g_matrix(swapped, dp), g_matrix(t, dp))

    def test_f_symmetric(self, rng):
        t = random_bilinear(rng, 3)
        f = f_matrix(t, random_sigma(rng, 3))
        assert np.array_equal(f, f.T)

    def test_trilinear_implies_f_equals_g(self, rng):
        """100 tensores trilineales aleatorios: ‖F−G‖∞ ≤ 1e-12(1+‖F‖∞)"""
        for _ in range(100):
            t, dp = random_trilinear(rng, 3)
            f = f_matrix(t, dp)
            g = g_matrix(t, dp)
            assert np.max(np.abs(f - g)) <= 1e-12 * (1.0 + np.max(np.abs(f)))

    def test_generic_bilinear_f_differs_from_g(self, rng):
        """Para tensores bilineales genéricos F ≠ G en al menos 99 de 100 casos"""
        differs = 0
        for _ in range(100):
            t = random_bilinear(rng, 2)
            dp = random_sigma(rng, 2)
            f = f_matrix(t, dp)
            g = g_matrix(t, dp)
            differs += np.max(np.abs(f - g)) > 1e-12 * (1.0 + np.max(np.abs(f)))
        assert differs >= 99


class TestNoLogCondition:
    """Tests para no_log_condition"""

    def test_trilinear_satisfies(self, rng):
        """100 tensores trilineales aleatorios cumplen la condición"""
        for _ in range(100):
            t, dp = random_trilinear(rng, 3)
            assert no_log_condition(hat_transform(t, dp))

    def test_zero_tensor(self):
        assert no_log_condition(CouplingTensor(d=2, gamma=np.zeros((2, 2, 2))))

    @pytest.mark.parametrize("lambdas", [(1.0, 2.0), (3.0, 0.5), (0.7, -1.3)])
    def test_ertas_kardar_satisfies(self, lambdas, identity_pair):
        """Cole–Hopf sin trilinealidad: la condición se cumple igualmente"""
        t_hat = hat_transform(ertas_kardar(*lambdas), identity_pair)
        assert not is_trilinear(t_hat)
        assert no_log_condition(t_hat)


class TestColeHopf:
    """Tests para verify_cole_hopf"""

    def test_ertas_kardar_passes(self, ek_tensor):
        assert verify_cole_hopf(ek_tensor, ertas_kardar_s(1.0, 2.0))

    def test_trilinear_example_fails_with_identity(self, example_tensor):
        assert not verify_cole_hopf(example_tensor, np.eye(2))

    def test_singular_s(self, ek_tensor):
        with pytest.raises(NumericalError):
            verify_cole_hopf(ek_tensor, np.zeros((2, 2)))

    def test_wrong_shape(self, ek_tensor):
        with pytest.raises(ConfigError):
            verify_cole_hopf(ek_tensor, np.eye(3))

    def test_marginal_variances(self, identity_pair):
        """Con σ = I y s = I cada marginal tiene varianza 1"""
        assert np.allclose(cole_hopf_marginal_variances(np.eye(2), identity_pair), [1.0, 1.0])


class TestCShift:
    """Tests para c_shift y sus formas equivalentes"""

    def test_scalar_one_twenty_fourth(self, scalar_pair):
        """d=1, Γ=σ=1 → c = 1/24"""
        c = c_shift(CouplingTensor.from_array(1.0), scalar_pair)
        assert abs(c[0] - 1.0 / 24.0) <= 1e-15

    def test_trilinear_example(self, example_tensor, identity_pair):
        """c^α = (1/24)ΓF = 33/24 = 11/8 en ambas componentes"""
        c = c_shift(example_tensor, identity_pair)
        assert np.allclose(c, [11.0 / 8.0, 11.0 / 8.0], rtol=1e-14)

    def test_forms_agree_on_random(self, rng):
        """σΓ̂Γ̂Γ̂/24 y ΓF/24 coinciden en 100 entradas trilineales"""
        for _ in range(100):
            t, dp = random_trilinear(rng, 3)
            a = c_shift(t, dp)
            b = c_shift_from_f(t, dp)
            assert np.max(np.abs(a - b)) <= 1e-12 * (1.0 + np.max(np.abs(a)))

    def test_non_trilinear_rejected(self, ek_tensor, identity_pair):
        with pytest.raises(PreconditionError):
            c_shift(ek_tensor, identity_pair)

    def test_b_contraction(self, example_tensor):
        """½ΓB con B = I"""
        out = b_gamma_contraction(example_tensor, np.eye(2))
        assert np.allclose(out, [1.5, 1.5])


class TestTensorReport:
    """Tests para tensor_report"""

    def test_example_report(self, example_tensor, identity_pair):
        report = tensor_report(example_tensor, identity_pair)
        assert report.is_trilinear
        assert report.lowered_symmetric
        assert report.f_matrix == report.g_matrix
        assert report.c_shift == pytest.approx([1.375, 1.375])
        assert report.cole_hopf_verified is None

    def test_ertas_kardar_report(self, ek_tensor, identity_pair):
        report = tensor_report(ek_tensor, identity_pair, ertas_kardar_s(1.0, 2.0))
        assert not report.is_trilinear
        assert report.c_shift is None
        assert report.cole_hopf_verified is True
        assert len(report.cole_hopf_marginal_variances) == 2

    def test_non_bilinear_report(self, identity_pair):
        """Γ no simétrico: informe con is_bilinear=False y campos dependientes vacíos"""
        g = np.zeros((2, 2, 2))
        g[0, 0, 1] = 1.0
        report = tensor_report(CouplingTensor(d=2, gamma=g), identity_pair)
        assert report.is_bilinear is False
        assert report.is_trilinear is None
        assert report.satisfies_no_log is None
        assert report.f_matrix is None
        assert report.gamma_hat is None
        assert report.c_shift is None

    def test_tolerance_reaches_no_log(self, example_tensor, identity_pair):
        """La tolerancia del llamador se aplica también a la condición no-log"""
        assert tensor_report(example_tensor, identity_pair).satisfies_no_log is True
        # ninguna identidad se cumple con tolerancia negativa
        strict = tensor_report(example_tensor, identity_pair, tol=-1.0)
        assert strict.satisfies_no_log is False
        assert strict.is_trilinear is False
        assert strict.c_shift is None

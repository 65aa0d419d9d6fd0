"""
Álgebra del tensor de acoplamiento Γ y de la matriz de difusión σ.

Convención de índices: gamma[α, β, γ] = Γ^α_{βγ}, sigma[β, δ] = σ^β_δ.
Todas las funciones son puras; los tensores son inmutables.
"""
from __future__ import annotations

import logging
import math
import time
from itertools import permutations

import numpy as np

from ..core.errors import ConfigError, NumericalError, PreconditionError
from ..models.schemas import CouplingTensor, DiffusionPair, TensorReport

logger = logging.getLogger("kpzlab.services.tensor_core")

# tolerancia relativa para identidades algebraicas exactas
REL_TOL = 1e-12


def _scaled_tol(arr: np.ndarray, tol: float | None, rel: float = REL_TOL) -> float:
    if tol is not None:
        return tol
    return rel * max(1.0, float(np.max(np.abs(arr), initial=0.0)))


def _check_dims(t: CouplingTensor, dp: DiffusionPair | None = None) -> None:
    if t.gamma.shape != (t.d, t.d, t.d):
        raise ConfigError(f"gamma tiene forma {t.gamma.shape}, se declaró d={t.d}")
    if dp is not None and dp.d != t.d:
        raise ConfigError(f"sigma es {dp.d}×{dp.d} pero el tensor tiene d={t.d}")


def validate_bilinear(t: CouplingTensor) -> bool:
    """Γ^α_{βγ} == Γ^α_{γβ} sin tolerancia."""
    _check_dims(t)
    return bool(np.array_equal(t.gamma, t.gamma.transpose(0, 2, 1)))


def _require_bilinear(t: CouplingTensor) -> None:
    if not validate_bilinear(t):
        raise PreconditionError("el tensor no es bilineal (Γ^α_{βγ} ≠ Γ^α_{γβ})")


def hat_transform(t: CouplingTensor, dp: DiffusionPair) -> CouplingTensor:
    """Γ̂^α_{βγ} = τ^α_{α'} Γ^{α'}_{β'γ'} σ^{β'}_β σ^{γ'}_γ."""
    _check_dims(t, dp)
    _require_bilinear(t)
    g = np.einsum("ap,pqr,qb,rc->abc", dp.tau, t.gamma, dp.sigma, dp.sigma)
    # la simetría es exacta en aritmética real; el redondeo del einsum no
    g = 0.5 * (g + g.transpose(0, 2, 1))
    return CouplingTensor(d=t.d, gamma=g)


def is_trilinear(t_hat: CouplingTensor, tol: float | None = None) -> bool:
    g = t_hat.gamma
    tol = _scaled_tol(g, tol)
    cyclic = np.einsum("bca->abc", g)
    swapped = g.transpose(0, 2, 1)
    return bool(np.all(np.abs(g - cyclic) <= tol) and np.all(np.abs(g - swapped) <= tol))


def e_tensor(t: CouplingTensor, dp: DiffusionPair) -> np.ndarray:
    """E^α_{β₁β₂} = Γ^α_{γ₁γ₂} σ^{γ₁}_{β₁} σ^{γ₂}_{β₂}."""
    return np.einsum("apq,pb,qc->abc", t.gamma, dp.sigma, dp.sigma)


def f_matrix(t: CouplingTensor, dp: DiffusionPair) -> np.ndarray:
    _check_dims(t, dp)
    _require_bilinear(t)
    e = e_tensor(t, dp)
    f = np.einsum("bij,cij->bc", e, e)
    return 0.5 * (f + f.T)


def g_matrix(t: CouplingTensor, dp: DiffusionPair) -> np.ndarray:
    _check_dims(t, dp)
    _require_bilinear(t)
    e = e_tensor(t, dp)
    return np.einsum("bpq,pij,qj,ci->bc", t.gamma, e, dp.sigma, dp.sigma)


def no_log_condition(t_hat: CouplingTensor, tol: float | None = None) -> bool:
    """
    Condición bajo la cual B^ε no diverge logarítmicamente.

    tol por defecto: absoluta 1e-10 escalada por max|Γ̂|³ (la identidad es cúbica en Γ̂).
    """
    g = t_hat.gamma
    if tol is None:
        tol = 1e-10 * max(1.0, float(np.max(np.abs(g), initial=0.0))) ** 3
    lhs = np.einsum("apq,prs,qrs->a", g, g, g)
    rhs = np.einsum("apq,prs,rqs->a", g, g, g)
    return bool(np.all(np.abs(lhs - rhs) <= tol))


def verify_cole_hopf(t: CouplingTensor, s: np.ndarray, tol: float | None = None) -> bool:
    """Γ^α_{βγ} = Σ_{α'} (s⁻¹)^α_{α'} s^{α'}_β s^{α'}_γ, s posiblemente compleja."""
    _check_dims(t)
    s = np.asarray(s, dtype=np.complex128)
    if s.shape != (t.d, t.d):
        raise ConfigError(f"s debe ser {t.d}×{t.d}, recibido {s.shape}")
    if np.linalg.cond(s) > 1.0 / np.finfo(float).eps:
        raise NumericalError("la matriz s de Cole–Hopf es singular")
    s_inv = np.linalg.inv(s)
    recon = np.einsum("ap,pb,pc->abc", s_inv, s, s)
    tol = _scaled_tol(t.gamma, tol)
    return bool(np.all(np.abs(t.gamma - recon) <= tol))


def cole_hopf_marginal_variances(s: np.ndarray, dp: DiffusionPair) -> np.ndarray:
    """Varianzas Σ_γ |(sσ)^α_γ|² de las componentes desacopladas."""
    m = np.asarray(s, dtype=np.complex128) @ dp.sigma
    return np.sum(np.abs(m) ** 2, axis=1)


def c_shift(t: CouplingTensor, dp: DiffusionPair, tol: float | None = None) -> np.ndarray:
    """c^α = (1/24) σ^α_β Γ̂^β_{α₁α₂} Γ̂^{α₁}_{β₁β₂} Γ̂^{α₂}_{β₁β₂}."""
    t_hat = hat_transform(t, dp)
    if not is_trilinear(t_hat, tol):
        raise PreconditionError("c_shift requiere Γ̂ trilineal")
    g = t_hat.gamma
    return np.einsum("ab,bpq,prs,qrs->a", dp.sigma, g, g, g) / 24.0


def c_shift_from_f(t: CouplingTensor, dp: DiffusionPair) -> np.ndarray:
    """Forma equivalente (1/24) Γ^α_{βγ} F^{βγ}."""
    return np.einsum("abc,bc->a", t.gamma, f_matrix(t, dp)) / 24.0


def b_gamma_contraction(t: CouplingTensor, b: np.ndarray) -> np.ndarray:
    """½ Γ^α_{βγ} B^{βγ}: el contratérmino que entra en la ecuación."""
    return 0.5 * np.einsum("abc,bc->a", t.gamma, np.asarray(b, dtype=float))


def lowered_tensor(t: CouplingTensor, dp: DiffusionPair) -> np.ndarray:
    """Γ̃_{αβγ} = (A⁻¹)_{αα'} Γ^{α'}_{βγ}."""
    _check_dims(t, dp)
    return np.einsum("ap,pbc->abc", np.linalg.inv(dp.a), t.gamma)


def is_trilinear_lowered(t: CouplingTensor, dp: DiffusionPair, tol: float | None = None) -> bool:
    low = lowered_tensor(t, dp)
    tol = _scaled_tol(low, tol, rel=1e-10)
    return all(
        bool(np.all(np.abs(low - low.transpose(p)) <= tol)) for p in permutations(range(3))
    )


def trilinear_example() -> CouplingTensor:
    return CouplingTensor(
        d=2,
        gamma=[[[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 2.0]]],
    )


def ertas_kardar(lambda1: float, lambda2: float) -> CouplingTensor:
    g = np.zeros((2, 2, 2))
    g[0, 0, 0] = lambda1
    g[0, 1, 1] = lambda2
    g[1, 0, 1] = g[1, 1, 0] = lambda1
    return CouplingTensor(d=2, gamma=g)


def ertas_kardar_s(lambda1: float, lambda2: float) -> np.ndarray:
    r = math.sqrt(lambda1 * lambda2)
    return np.array([[lambda1, r], [lambda1, -r]], dtype=np.complex128)


def symmetrize_full(arr: np.ndarray) -> np.ndarray:
    return sum(arr.transpose(p) for p in permutations(range(3))) / 6.0


def random_sigma(rng: np.random.Generator, d: int) -> DiffusionPair:
    # perturbación acotada de la identidad: cond(σ) ≤ 7 para d ≤ 4
    return DiffusionPair.from_sigma(np.eye(d) + 0.25 * rng.uniform(-1.0, 1.0, (d, d)))


def random_bilinear(rng: np.random.Generator, d: int) -> CouplingTensor:
    g = rng.uniform(-1.0, 1.0, (d, d, d))
    return CouplingTensor(d=d, gamma=0.5 * (g + g.transpose(0, 2, 1)))


def random_trilinear(
    rng: np.random.Generator, d: int, dp: DiffusionPair | None = None
) -> tuple[CouplingTensor, DiffusionPair]:
    """Γ̂ totalmente simétrico, devuelto en coordenadas originales vía σ."""
    dp = dp or random_sigma(rng, d)
    g_hat = symmetrize_full(rng.uniform(-1.0, 1.0, (d, d, d)))
    g = np.einsum("ap,pqr,qb,rc->abc", dp.sigma, g_hat, dp.tau, dp.tau)
    g = 0.5 * (g + g.transpose(0, 2, 1))
    return CouplingTensor(d=d, gamma=g), dp


def tensor_report(
    t: CouplingTensor,
    dp: DiffusionPair,
    s: np.ndarray | None = None,
    tol: float | None = None,
) -> TensorReport:
    start = time.perf_counter()
    _check_dims(t, dp)
    cole_hopf = None
    marginals = None
    if s is not None:
        cole_hopf = verify_cole_hopf(t, s, tol)
        marginals = cole_hopf_marginal_variances(s, dp).tolist()
    if not validate_bilinear(t):
        logger.warning(f"tensor_report d={t.d} bilinear=False")
        return TensorReport(
            is_bilinear=False,
            cole_hopf_verified=cole_hopf,
            cole_hopf_marginal_variances=marginals,
            tol=_scaled_tol(t.gamma, tol),
        )
    t_hat = hat_transform(t, dp)
    trilinear = is_trilinear(t_hat, tol)
    report = TensorReport(
        is_bilinear=True,
        is_trilinear=trilinear,
        satisfies_no_log=no_log_condition(t_hat, tol),
        f_matrix=f_matrix(t, dp).tolist(),
        g_matrix=g_matrix(t, dp).tolist(),
        c_shift=c_shift(t, dp, tol).tolist() if trilinear else None,
        gamma_hat=t_hat.gamma.tolist(),
        lowered_symmetric=is_trilinear_lowered(t, dp, tol),
        cole_hopf_verified=cole_hopf,
        cole_hopf_marginal_variances=marginals,
        tol=_scaled_tol(t_hat.gamma, tol),
    )
    duration_ms = round((time.perf_counter() - start) * 1000, 2)
    logger.info(
        f"tensor_report d={t.d} trilinear={trilinear} no_log={report.satisfies_no_log} "
        f"cole_hopf={cole_hopf} duration_ms={duration_ms}"
    )
    return report

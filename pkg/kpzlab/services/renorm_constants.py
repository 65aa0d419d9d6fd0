"""
Constantes de renormalización como sumas de red truncadas.

Las dobles sumas recorren el cuadrado |k₁|,|k₂| ≤ K con k₁, k₂, k₁+k₂ ≠ 0.
Cada franja de k₁ se acumula con math.fsum (redondeo exacto) y las franjas se
fusionan en orden fijo: el resultado es reproducible bit a bit.
"""
from __future__ import annotations

import logging
import math
import time

import numpy as np

from ..core import settings
from ..core.errors import TruncationError
from ..models.schemas import CouplingTensor, DiffusionPair, RenormValues
from ..models.symbols import MollifierSymbol
from .tensor_core import b_gamma_contraction, f_matrix, g_matrix

logger = logging.getLogger("kpzlab.services.renorm_constants")

FOUR_PI2 = 4.0 * math.pi**2
# filas de k₁ por franja al evaluar las dobles sumas
STRIPE_ROWS = 256
# cota de (k₁+k₂)/(k₁Q) y de 1/Q sobre la red
WEIGHT_BOUND = 4.0 / 3.0


def _phi2(m: MollifierSymbol, eps: float, k: np.ndarray) -> np.ndarray:
    return m.multiplier(eps, k) ** 2


def truncation_radius(m: MollifierSymbol, eps: float, tol: float) -> tuple[int, float]:
    """
    Menor K con φ²(εK) < tol/(1+c^ε) y cola ≤ tol; devuelve (K, cota de cola).
    """
    if eps <= 0 or tol <= 0:
        raise ValueError("eps y tol deben ser positivos")
    if m.tail_bound is None:
        raise TruncationError(f"el mollifier '{m.name}' no tiene cota de cola; use band=K")
    limit = settings.K_HARD_LIMIT
    ks = np.arange(1, limit + 1, dtype=float)
    phi2 = _phi2(m, eps, ks)
    partial = 2.0 * np.cumsum(phi2)
    candidates = np.nonzero(phi2 < tol / (1.0 + partial))[0]
    for idx in candidates:
        K = int(idx) + 1
        tail = m.tail_bound(K, eps)
        if tail <= tol:
            return K, tail
    raise TruncationError(
        f"la cota de cola no baja de tol={tol:g} con K ≤ {limit} (eps={eps}, {m.name})"
    )


def _resolve(m: MollifierSymbol, eps: float, tol: float, band: int | None) -> tuple[int, float]:
    if band is not None:
        if band < 1:
            raise ValueError("band debe ser ≥ 1")
        return band, 0.0
    return truncation_radius(m, eps, tol)


def _c_eps_sum(m: MollifierSymbol, eps: float, K: int) -> float:
    ks = np.arange(1, K + 1, dtype=float)
    return 2.0 * math.fsum(_phi2(m, eps, ks).tolist())


def c_eps(m: MollifierSymbol, eps: float, tol: float = settings.DEFAULT_TOL, band: int | None = None) -> float:
    """Σ_{k≠0} φ²(εk)."""
    K, _ = _resolve(m, eps, tol, band)
    return _c_eps_sum(m, eps, K)


def _stripes(m: MollifierSymbol, eps: float, K: int):
    """Franjas de k₁ con los factores comunes de los cuatro sumandos."""
    k2 = np.concatenate([np.arange(-K, 0), np.arange(1, K + 1)]).astype(float)
    p2 = _phi2(m, eps, k2)
    for start in range(0, k2.size, STRIPE_ROWS):
        a = k2[start : start + STRIPE_ROWS, None]
        b = k2[None, :]
        s = a + b
        mask = s != 0
        s_safe = np.where(mask, s, 1.0)
        pa = _phi2(m, eps, a)
        ps = np.where(mask, _phi2(m, eps, s_safe), 0.0)
        q = a * a + a * b + b * b
        base = np.where(mask, pa * p2[None, :] / q, 0.0)
        yield a, s, pa, ps, base


def _lattice_sums(m: MollifierSymbol, eps: float, K: int) -> tuple[float, float, float, float]:
    partials: list[list[float]] = [[], [], [], []]
    for a, s, pa, ps, base in _stripes(m, eps, K):
        ratio = s / a
        # en D̃ el φ⁴ recae sobre el modo k₁ del factor ∂ₓH_I final
        terms = (base, -ratio * base, base * ps * ps, -ratio * base * pa * ps)
        for acc, arr in zip(partials, terms, strict=True):
            acc.append(math.fsum(arr.ravel().tolist()))
    # franjas fusionadas siempre en el mismo orden
    c, d, ct, dt = (math.fsum(acc) / FOUR_PI2 for acc in partials)
    return c, d, ct, dt


def evaluate(
    m: MollifierSymbol,
    eps: float,
    tol: float = settings.DEFAULT_TOL,
    band: int | None = None,
) -> RenormValues:
    """Las cinco constantes en una sola pasada por la red."""
    start = time.perf_counter()
    K, tail = _resolve(m, eps, tol, band)
    ce = _c_eps_sum(m, eps, K)
    cb, db, ct, dt = _lattice_sums(m, eps, K)
    est = 2.0 * 3.0 * WEIGHT_BOUND * tail * (ce + tail) / FOUR_PI2 + tail
    values = RenormValues(
        eps=eps,
        c_eps=ce,
        c_big=cb,
        d_big=db,
        c_tilde=ct,
        d_tilde=dt,
        truncation_K=K,
        est_truncation_error=est,
        band=band is not None,
        mollifier=m.name,
    )
    duration_ms = round((time.perf_counter() - start) * 1000, 2)
    logger.info(
        f"evaluate mollifier={m.name} eps={eps} K={K} band={band is not None} "
        f"c_plus_2d={values.c_plus_2d:.6e} tilde_sum={values.tilde_sum:.3e} "
        f"duration_ms={duration_ms}"
    )
    return values


def c_big(m: MollifierSymbol, eps: float, tol: float = settings.DEFAULT_TOL, band: int | None = None) -> float:
    return evaluate(m, eps, tol, band).c_big


def d_big(m: MollifierSymbol, eps: float, tol: float = settings.DEFAULT_TOL, band: int | None = None) -> float:
    return evaluate(m, eps, tol, band).d_big


def c_tilde(m: MollifierSymbol, eps: float, tol: float = settings.DEFAULT_TOL, band: int | None = None) -> float:
    return evaluate(m, eps, tol, band).c_tilde


def d_tilde(m: MollifierSymbol, eps: float, tol: float = settings.DEFAULT_TOL, band: int | None = None) -> float:
    return evaluate(m, eps, tol, band).d_tilde


def c_plus_2d_closed_form(m: MollifierSymbol, eps: float, K: int) -> float:
    """
    C+2D sobre el cuadrado |k| ≤ K en forma cerrada: −(1/4π²) Σ_{0<|k|≤K} φ⁴(εk)/k².

    Se obtiene simetrizando k₁ ↔ k₂; sirve de oráculo independiente de la doble suma.
    """
    ks = np.arange(1, K + 1, dtype=float)
    terms = _phi2(m, eps, ks) ** 2 / ks**2
    return -2.0 * math.fsum(terms.tolist()) / FOUR_PI2


def b_matrices(
    t: CouplingTensor,
    dp: DiffusionPair,
    m: MollifierSymbol,
    eps: float,
    tol: float = settings.DEFAULT_TOL,
    band: int | None = None,
    values: RenormValues | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """B^ε = F·C + 2G·D y B̃^ε = F·C̃ + 2G·D̃."""
    values = values or evaluate(m, eps, tol, band)
    f = f_matrix(t, dp)
    g = g_matrix(t, dp)
    b = f * values.c_big + 2.0 * g * values.d_big
    b_tilde = f * values.c_tilde + 2.0 * g * values.d_tilde
    return b, b_tilde


def richardson(eps_a: float, v_a: float, eps_b: float, v_b: float) -> float:
    """Extrapolación de dos puntos suponiendo error de primer orden en ε."""
    if eps_a == eps_b:
        raise ValueError("richardson necesita dos eps distintos")
    return (eps_a * v_b - eps_b * v_a) / (eps_a - eps_b)


def drift_prediction(
    t: CouplingTensor,
    dp: DiffusionPair,
    m: MollifierSymbol,
    eps: float,
    band: int | None = None,
    tol: float = settings.DEFAULT_TOL,
) -> np.ndarray:
    """Pendiente a ε fijo de la media de h̃−h: −½ Γ^α_{βγ} B^{βγ}."""
    b, _ = b_matrices(t, dp, m, eps, tol, band)
    return -b_gamma_contraction(t, b)

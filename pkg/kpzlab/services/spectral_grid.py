"""
Representación espectral de campos periódicos en 𝕋 = [0,1).

û(k) = ∫ e^{−2πikx} u(x) dx, discretizado como rfft(g)/M. Las funciones
`*_coeffs` trabajan sobre arrays (..., d, K+1) con ejes de lote delante;
las demás envuelven SpectralField.
"""
from __future__ import annotations

import numpy as np
from scipy import fft

from ..models.fields import SpectralField
from ..models.symbols import CutoffSymbol

TWO_PI = 2.0 * np.pi


def wavenumbers(K: int) -> np.ndarray:
    return np.arange(K + 1, dtype=float)


def derivative_symbol(K: int) -> np.ndarray:
    return 1j * TWO_PI * wavenumbers(K)


def padded_size(kf: int, kg: int, ko: int | None = None) -> int:
    """Malla sin aliasing para un producto de bandas (Kf, Kg) proyectado a Ko."""
    ko = max(kf, kg) if ko is None else ko
    need = max(kf + kg + ko + 1, 2 * max(kf, kg, ko) + 2)
    return fft.next_fast_len(need, real=True)


def coeffs_to_grid(c: np.ndarray, M: int) -> np.ndarray:
    K = c.shape[-1] - 1
    if M < 2 * K + 2:
        raise ValueError(f"malla M={M} demasiado pequeña para K={K} (se requiere M ≥ {2 * K + 2})")
    return fft.irfft(c, n=M, axis=-1) * M


def grid_to_coeffs(g: np.ndarray, K: int) -> np.ndarray:
    M = g.shape[-1]
    if M < 2 * K + 2:
        raise ValueError(f"malla M={M} demasiado pequeña para K={K} (se requiere M ≥ {2 * K + 2})")
    c = fft.rfft(g, axis=-1)[..., : K + 1] / M
    c[..., 0] = c[..., 0].real
    return c


def resize_coeffs(c: np.ndarray, K: int) -> np.ndarray:
    """Trunca o rellena con ceros hasta la banda K."""
    cur = c.shape[-1] - 1
    if K <= cur:
        return c[..., : K + 1].copy()
    pad = [(0, 0)] * (c.ndim - 1) + [(0, K - cur)]
    return np.pad(c, pad)


def product_coeffs(a: np.ndarray, b: np.ndarray, K_out: int | None = None) -> np.ndarray:
    """Producto puntual componente a componente, sin aliasing, restringido a |k| ≤ K_out."""
    ka, kb = a.shape[-1] - 1, b.shape[-1] - 1
    K_out = max(ka, kb) if K_out is None else K_out
    M = padded_size(ka, kb, K_out)
    return grid_to_coeffs(coeffs_to_grid(a, M) * coeffs_to_grid(b, M), K_out)


def quadratic_coeffs(
    gamma: np.ndarray, a: np.ndarray, b: np.ndarray, K_out: int | None = None
) -> np.ndarray:
    """Σ_{βγ} Γ^α_{βγ} a^β b^γ sin aliasing; a, b con forma (..., d, K+1)."""
    ka, kb = a.shape[-1] - 1, b.shape[-1] - 1
    K_out = max(ka, kb) if K_out is None else K_out
    M = padded_size(ka, kb, K_out)
    ga = coeffs_to_grid(a, M)
    gb = ga if b is a else coeffs_to_grid(b, M)
    prod = np.einsum("abc,...bm,...cm->...am", gamma, ga, gb)
    return grid_to_coeffs(prod, K_out)


def inner_coeffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """⟨a^α, b^β⟩ para todo par (α, β): forma (..., d, d)."""
    weights = np.full(a.shape[-1], 2.0)
    weights[0] = 1.0
    return np.einsum("...ak,...bk,k->...ab", a, np.conj(b), weights).real


def to_physical(f: SpectralField, M: int) -> np.ndarray:
    return coeffs_to_grid(f.coeffs, M)


def to_spectral(g: np.ndarray, K: int) -> SpectralField:
    return SpectralField.from_array(grid_to_coeffs(np.atleast_2d(np.asarray(g, dtype=float)), K))


def derivative(f: SpectralField) -> SpectralField:
    return SpectralField(f.coeffs * derivative_symbol(f.K))


def filter(f: SpectralField, multiplier: np.ndarray) -> SpectralField:
    """Multiplicador de Fourier real y par, dado en k = 0..K."""
    return SpectralField(f.coeffs * np.asarray(multiplier, dtype=float))


def smooth_multiplier(K: int, N: int, psi: CutoffSymbol) -> np.ndarray:
    return psi(wavenumbers(K) / N)


def sharp_multiplier(K: int, N: int) -> np.ndarray:
    return (wavenumbers(K) <= N).astype(float)


def project_smooth(f: SpectralField, N: int, psi: CutoffSymbol) -> SpectralField:
    """P_N = ψ(N⁻¹D)."""
    return filter(f, smooth_multiplier(f.K, N, psi))


def project_sharp(f: SpectralField, N: int) -> SpectralField:
    """Π_N = 1_{[−N,N]}(D)."""
    return filter(f, sharp_multiplier(f.K, N))


def project_sharp_complement(f: SpectralField, N: int) -> SpectralField:
    """Π_N^⊥ = I − Π_N."""
    return filter(f, 1.0 - sharp_multiplier(f.K, N))


def product(f: SpectralField, g: SpectralField) -> SpectralField:
    if f.K != g.K or f.d != g.d:
        raise ValueError(f"campos incompatibles: (d={f.d}, K={f.K}) y (d={g.d}, K={g.K})")
    return SpectralField.from_array(product_coeffs(f.coeffs, g.coeffs, f.K))


def inner(f: SpectralField, g: SpectralField) -> np.ndarray:
    """⟨f^α, g^α⟩ por componente."""
    if f.coeffs.shape != g.coeffs.shape:
        raise ValueError("campos incompatibles para el producto interno")
    return np.diagonal(inner_coeffs(f.coeffs, g.coeffs)).copy()


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(np.sum(inner(f, f))))


def full_coefficients(f: SpectralField) -> np.ndarray:
    """Coeficientes en k = −K..K, forma (d, 2K+1)."""
    neg = np.conj(f.coeffs[:, :0:-1])
    return np.concatenate([neg, f.coeffs], axis=1)

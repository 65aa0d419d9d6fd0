"""
Toda la aleatoriedad: incrementos de ruido blanco complejo por modo,
transiciones exactas de Ornstein–Uhlenbeck y muestreo de μ_A.

Cada réplica posee su propio flujo (seed, stream_id); los modos negativos se
construyen por conjugación, nunca se muestrean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core.errors import NumericalError
from ..models.fields import SpectralField
from ..models.schemas import DiffusionPair
from ..models.symbols import MollifierSymbol
from .spectral_grid import TWO_PI, derivative_symbol, wavenumbers


@dataclass
class RngStream:
    """Flujo de una réplica: (seed, stream_id) fija la secuencia bit a bit."""

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.default_rng(seq)

    def standard_complex(self, d: int, K: int) -> np.ndarray:
        """ζ con E|ζ|² = 1 y pseudo-varianza nula para k ≥ 1; ζ(0) real N(0,1)."""
        g = self.generator.standard_normal((2, d, K + 1))
        z = (g[0] + 1j * g[1]) / math.sqrt(2.0)
        z[:, 0] = g[0, :, 0]
        return z


class ReplicaStreams:
    """Flujos de las réplicas [start, stop), apilados en un eje de lote."""

    def __init__(self, streams: list[RngStream]):
        self.streams = streams

    @classmethod
    def for_range(cls, seed: int, start: int, stop: int) -> ReplicaStreams:
        return cls([RngStream(seed, r) for r in range(start, stop)])

    def __len__(self) -> int:
        return len(self.streams)

    def standard_complex(self, d: int, K: int) -> np.ndarray:
        return np.stack([s.standard_complex(d, K) for s in self.streams])

    def standard_normal(self, shape: tuple[int, ...]) -> np.ndarray:
        return np.stack([s.generator.standard_normal(shape) for s in self.streams])


@dataclass(frozen=True)
class NoiseIncrement:
    dt: float
    dW: np.ndarray

    @property
    def K(self) -> int:
        return self.dW.shape[-1] - 1


def sample_noise(rng: RngStream, K: int, d: int, dt: float) -> NoiseIncrement:
    if dt <= 0:
        raise ValueError("dt debe ser positivo")
    return NoiseIncrement(dt, math.sqrt(dt) * rng.standard_complex(d, K))


def mollify_noise(n: NoiseIncrement, m: MollifierSymbol, eps: float) -> NoiseIncrement:
    return NoiseIncrement(n.dt, n.dW * m.multiplier(eps, wavenumbers(n.K)))


def heat_decay(K: int, dt: float) -> np.ndarray:
    """e^{−2π²k²dt}."""
    return np.exp(-0.5 * (TWO_PI * wavenumbers(K)) ** 2 * dt)


def height_noise_scale(K: int, dt: float) -> np.ndarray:
    """Desviación de ∫₀^dt e^{−2π²k²(dt−s)} dW_s: √((1−e^{−4π²k²dt})/(4π²k²)), √dt en k=0."""
    lam = (TWO_PI * wavenumbers(K)) ** 2
    out = np.empty(K + 1)
    out[0] = math.sqrt(dt)
    out[1:] = np.sqrt(-np.expm1(-lam[1:] * dt) / lam[1:])
    return out


def derivative_noise_scale(K: int, dt: float) -> np.ndarray:
    """2πik·height_noise_scale: varianza (1−e^{−4π²k²dt}) por modo."""
    return derivative_symbol(K) * height_noise_scale(K, dt)


def color_noise(sigma: np.ndarray, zeta: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """σ^α_β ζ^β(k)·scale(k) con ejes de lote delante."""
    return np.einsum("ab,...bk->...ak", sigma, zeta) * scale


def cholesky_factor(dp: DiffusionPair) -> np.ndarray:
    try:
        return np.linalg.cholesky(dp.a)
    except np.linalg.LinAlgError as e:
        raise NumericalError("Cholesky de A falló: A no es definida positiva") from e


def gaussian_coeffs(
    streams: ReplicaStreams, dp: DiffusionPair, K: int, multiplier: np.ndarray | None = None
) -> np.ndarray:
    """Lote de muestras de μ_A (o μ_A^ε con multiplier = φ(εk)): forma (R, d, K+1)."""
    chol = cholesky_factor(dp)
    g = streams.standard_normal((2, dp.d, K))
    z = np.zeros((len(streams), dp.d, K + 1), dtype=np.complex128)
    z[..., 1:] = np.einsum("ab,rbk->rak", chol, g[:, 0] + 1j * g[:, 1]) / math.sqrt(2.0)
    if multiplier is not None:
        z *= multiplier
    return z


def sample_mu_A(rng: RngStream, dp: DiffusionPair, K: int) -> SpectralField:
    """Campo de media cero con E[û^α(k) conj û^β(k)] = A^{αβ} para k ≥ 1."""
    return SpectralField(gaussian_coeffs(ReplicaStreams([rng]), dp, K)[0])


def sample_mu_A_eps(
    rng: RngStream, dp: DiffusionPair, K: int, m: MollifierSymbol, eps: float
) -> SpectralField:
    """Medida suavizada μ_A^ε: covarianza A^{αβ}φ²(εk)."""
    mult = m.multiplier(eps, wavenumbers(K))
    return SpectralField(gaussian_coeffs(ReplicaStreams([rng]), dp, K, mult)[0])


def ou_coeffs_step(
    c: np.ndarray,
    zeta: np.ndarray,
    sigma: np.ndarray,
    dt: float,
    multiplier: np.ndarray | None = None,
) -> np.ndarray:
    """Transición exacta de ∂ₜu = ½∂ₓ²u + σ∂ₓξ (suavizado por multiplier) sobre arrays."""
    K = c.shape[-1] - 1
    scale = derivative_noise_scale(K, dt)
    if multiplier is not None:
        scale = scale * multiplier
    return heat_decay(K, dt) * c + color_noise(sigma, zeta, scale)


def ou_step(
    f: SpectralField,
    dp: DiffusionPair,
    rng: RngStream,
    dt: float,
    m: MollifierSymbol | None = None,
    eps: float | None = None,
) -> SpectralField:
    """û(k) ↦ e^{−2π²k²dt}û(k) + G(k), Cov G = A(1−e^{−4π²k²dt})φ²(εk)."""
    if dt <= 0:
        raise ValueError("dt debe ser positivo")
    mult = None if m is None else m.multiplier(eps, wavenumbers(f.K))
    zeta = rng.standard_complex(f.d, f.K)
    return SpectralField.from_array(ou_coeffs_step(f.coeffs, zeta, dp.sigma, dt, mult))

"""
Símbolos de Fourier: mollifier φ (ruido suavizado) y cut-off ψ (proyección P_N).
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MollifierSymbol:
    """
    Símbolo φ = Fη de un núcleo par con ∫η = 1.

    `tail_bound(K, eps)` acota Σ_{|k|>K} φ²(εk); None significa que no se conoce
    el decaimiento y las sumas no truncadas fallan.
    """

    name: str
    phi: ArrayFn
    tail_bound: Callable[[int, float], float] | None = None

    def __call__(self, theta) -> np.ndarray:
        return self.phi(np.asarray(theta, dtype=float))

    def multiplier(self, eps: float, k: np.ndarray) -> np.ndarray:
        return self(eps * np.asarray(k, dtype=float))


def _gaussian_phi(theta: np.ndarray) -> np.ndarray:
    return np.exp(-(theta**2))


def _gaussian_tail(K: int, eps: float) -> float:
    # Σ_{|k|>K} e^{-2ε²k²} ≤ 2∫_K^∞ e^{-2ε²θ²}dθ
    return math.sqrt(math.pi / 2.0) / eps * float(erfc(math.sqrt(2.0) * eps * K))


def _raised_cosine_phi(theta: np.ndarray) -> np.ndarray:
    inside = np.abs(theta) <= 1.0
    return np.where(inside, np.cos(0.5 * np.pi * theta) ** 2, 0.0)


def _raised_cosine_tail(K: int, eps: float) -> float:
    last = math.floor(1.0 / eps)
    if K >= last:
        return 0.0
    # φ decrece en [0,1]
    peak = float(_raised_cosine_phi(np.asarray(eps * (K + 1)))) ** 2
    return 2.0 * (last - K) * peak


def gaussian() -> MollifierSymbol:
    return MollifierSymbol("gaussian", _gaussian_phi, _gaussian_tail)


def raised_cosine() -> MollifierSymbol:
    return MollifierSymbol("raised_cosine", _raised_cosine_phi, _raised_cosine_tail)


def identity() -> MollifierSymbol:
    return MollifierSymbol("identity", lambda theta: np.ones_like(theta, dtype=float), None)


MOLLIFIERS: dict[str, Callable[[], MollifierSymbol]] = {
    "gaussian": gaussian,
    "raised_cosine": raised_cosine,
    "identity": identity,
}


@dataclass(frozen=True)
class CutoffSymbol:
    """ψ par, con valores en [0,1], ψ(0)=1 y soporte en [-1,1]."""

    name: str
    psi: ArrayFn

    def __call__(self, theta) -> np.ndarray:
        return self.psi(np.asarray(theta, dtype=float))


def _smooth_psi(theta: np.ndarray) -> np.ndarray:
    a = np.abs(theta)
    taper = np.cos(np.pi * (a - 0.5)) ** 2
    return np.where(a <= 0.5, 1.0, np.where(a <= 1.0, taper, 0.0))


def _sharp_psi(theta: np.ndarray) -> np.ndarray:
    return np.where(np.abs(theta) <= 1.0, 1.0, 0.0)


def smooth_cutoff() -> CutoffSymbol:
    return CutoffSymbol("smooth", _smooth_psi)


def sharp_cutoff() -> CutoffSymbol:
    return CutoffSymbol("sharp", _sharp_psi)


CUTOFFS: dict[str, Callable[[], CutoffSymbol]] = {
    "smooth": smooth_cutoff,
    "sharp": sharp_cutoff,
}

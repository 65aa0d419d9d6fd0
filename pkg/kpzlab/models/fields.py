"""
Campos espectrales y contenedores de trayectorias.

Los coeficientes se guardan en media-banda: coeffs[α, k] = û^α(k) para
k = 0..K; los modos negativos se obtienen por conjugación.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class SpectralField:
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.complex128)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise ValueError(f"coeffs debe tener forma (d, K+1), recibido {arr.shape}")
        if np.any(arr[:, 0].imag != 0.0):
            raise ValueError("el modo cero debe ser real (û(0) = conj(û(0)))")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def d(self) -> int:
        return self.coeffs.shape[0]

    @property
    def K(self) -> int:
        return self.coeffs.shape[1] - 1

    @classmethod
    def zeros(cls, d: int, K: int) -> SpectralField:
        return cls(np.zeros((d, K + 1), dtype=np.complex128))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> SpectralField:
        """Acepta coeficientes con parte imaginaria residual en el modo cero."""
        a = np.array(arr, dtype=np.complex128)
        a[..., 0] = a[..., 0].real
        return cls(a)

    def is_zero_mean(self) -> bool:
        return bool(np.all(self.coeffs[:, 0] == 0.0))

    def allclose(self, other: SpectralField, rtol: float = 1e-13, atol: float = 0.0) -> bool:
        if self.coeffs.shape != other.coeffs.shape:
            return False
        scale = max(np.abs(self.coeffs).max(initial=0.0), np.abs(other.coeffs).max(initial=0.0))
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= atol + rtol * scale)


@dataclass
class Trajectory:
    """
    Resultado de un lote de réplicas.

    snapshots: (n_checkpoints, R, d, K+1); zero_mode: (R, n_samples, d) para
    esquemas de altura (en kpz_pair es la diferencia h̃−h).
    """

    scheme: str
    times: np.ndarray
    snapshots: np.ndarray
    sample_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zero_mode: np.ndarray | None = None
    energy: np.ndarray | None = None

    @property
    def replicas(self) -> int:
        return self.snapshots.shape[1]

    def field(self, checkpoint: int, replica: int) -> SpectralField:
        return SpectralField.from_array(self.snapshots[checkpoint, replica])


@dataclass
class DriverState:
    """
    Estado de los drivers ∂ₓH_I, ∂ₓH_Y, ∂ₓH_W con eje de réplicas delante.

    dxHI y dxHW viven en |k| ≤ K; dxHY en |k| ≤ 2K para contener todos los
    modos k₁+k₂ del producto ∂ₓH_I∂ₓH_I.
    """

    t: float
    dxHI: np.ndarray
    dxHY: np.ndarray
    dxHW: np.ndarray
    eps: float
    scheme: str = "plain"

    def field(self, name: str, replica: int = 0) -> SpectralField:
        return SpectralField.from_array(getattr(self, name)[replica])

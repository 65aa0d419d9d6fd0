"""
Estadística de verificación: z-tests de covarianzas por modo, medias por
bloques y regresión de pendientes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..core.errors import InsufficientSamplesError

MIN_SAMPLES = 30
# puerta por entrada y puerta global para miles de z-tests simultáneos
Z_MAX = 4.0
Z_WARN = 3.0
MAX_WARN_FRACTION = 0.01


@dataclass
class CovarianceZTest:
    """Una fila por (modo, α, β, parte); parte 're' compara con A, 'im' con 0."""

    k: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    part: np.ndarray
    estimate: np.ndarray
    target: np.ndarray
    stderr: np.ndarray
    z: np.ndarray
    n_samples: int

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z), initial=0.0))

    def fraction_above(self, threshold: float = Z_WARN) -> float:
        if self.z.size == 0:
            return 0.0
        return float(np.mean(np.abs(self.z) >= threshold))

    def passes(
        self,
        z_max: float = Z_MAX,
        z_warn: float = Z_WARN,
        max_fraction: float = MAX_WARN_FRACTION,
    ) -> bool:
        return self.max_abs_z <= z_max and self.fraction_above(z_warn) <= max_fraction

    def rows(self) -> list[dict]:
        return [
            {
                "k": int(self.k[i]),
                "alpha": int(self.alpha[i]),
                "beta": int(self.beta[i]),
                "part": str(self.part[i]),
                "estimate": float(self.estimate[i]),
                "target": float(self.target[i]),
                "stderr": float(self.stderr[i]),
                "z_score": float(self.z[i]),
            }
            for i in range(self.z.size)
        ]


def z_scores(estimate: np.ndarray, target: np.ndarray, stderr: np.ndarray) -> np.ndarray:
    """(estimate − target)/SE; SE nulo sólo es aceptable si coinciden exactamente."""
    diff = np.asarray(estimate, dtype=float) - np.asarray(target, dtype=float)
    se = np.asarray(stderr, dtype=float)
    safe = np.where(se > 0, se, 1.0)
    return np.where(se > 0, diff / safe, np.where(diff == 0, 0.0, np.inf))


def covariance_z_test(samples: np.ndarray, target: np.ndarray) -> CovarianceZTest:
    """
    samples: (n, d, K) coeficientes complejos de los modos k = 1..K.
    target: (d, d) o (K, d, d), covarianza E[û^α(k) conj û^β(k)] esperada.
    """
    samples = np.asarray(samples)
    if samples.ndim == 2:
        samples = samples[:, None, :]
    n, d, K = samples.shape
    if n < MIN_SAMPLES:
        raise InsufficientSamplesError(
            f"covariance_z_test necesita al menos {MIN_SAMPLES} muestras, recibidas {n}"
        )
    target = np.asarray(target, dtype=float)
    if target.ndim == 2:
        target = np.broadcast_to(target, (K, d, d))

    # (n, K, d, d): û^α(k) conj û^β(k)
    prods = np.einsum("nak,nbk->nkab", samples, np.conj(samples))
    mean = prods.mean(axis=0)
    se = prods.real.std(axis=0, ddof=1) / math.sqrt(n)
    se_im = prods.imag.std(axis=0, ddof=1) / math.sqrt(n)

    ks, als, bes, parts, est, tgt, err = [], [], [], [], [], [], []
    for a in range(d):
        for b in range(a, d):
            kk = np.arange(1, K + 1)
            ks.append(kk)
            als.append(np.full(K, a))
            bes.append(np.full(K, b))
            parts.append(np.full(K, "re"))
            est.append(mean[:, a, b].real)
            tgt.append(target[:, a, b])
            err.append(se[:, a, b])
            if a < b:
                ks.append(kk)
                als.append(np.full(K, a))
                bes.append(np.full(K, b))
                parts.append(np.full(K, "im"))
                est.append(mean[:, a, b].imag)
                tgt.append(np.zeros(K))
                err.append(se_im[:, a, b])
    estimate = np.concatenate(est)
    target_flat = np.concatenate(tgt)
    stderr = np.concatenate(err)
    return CovarianceZTest(
        k=np.concatenate(ks),
        alpha=np.concatenate(als),
        beta=np.concatenate(bes),
        part=np.concatenate(parts),
        estimate=estimate,
        target=target_flat,
        stderr=stderr,
        z=z_scores(estimate, target_flat, stderr),
        n_samples=n,
    )


def batch_means(series: np.ndarray, batches: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Media y error estándar por medias de bloques sobre el eje 0.

    Las muestras sobrantes del final se descartan para que todos los bloques
    tengan la misma longitud.
    """
    series = np.asarray(series, dtype=float)
    n = series.shape[0]
    if batches < 2 or n < batches:
        raise InsufficientSamplesError(f"{n} muestras no alcanzan para {batches} bloques")
    size = n // batches
    blocks = series[: size * batches].reshape((batches, size) + series.shape[1:]).mean(axis=1)
    return blocks.mean(axis=0), blocks.std(axis=0, ddof=1) / math.sqrt(batches)


def replica_slopes(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Pendiente de linregress por réplica y componente; values: (R, n_t, d)."""
    R, n_t, d = values.shape
    if n_t < 3:
        raise InsufficientSamplesError(f"la regresión necesita ≥ 3 tiempos, recibidos {n_t}")
    out = np.empty((R, d))
    for r in range(R):
        for a in range(d):
            out[r, a] = stats.linregress(times, values[r, :, a]).slope
    return out


def mean_and_stderr(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise InsufficientSamplesError("se necesitan al menos 2 réplicas para el error estándar")
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(n)

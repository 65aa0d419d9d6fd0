"""
Drivers ∂ₓH_I, ∂ₓH_Y, ∂ₓH_W a ε fijo y estimación Monte-Carlo de sus momentos.

∂ₓH_I es un OU estacionario exacto en |k| ≤ K; ∂ₓH_Y vive en |k| ≤ 2K y
∂ₓH_W en |k| ≤ K, de modo que los momentos simulados corresponden a las
sumas de red restringidas al cuadrado |k₁|,|k₂| ≤ K.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import exprel

from ..core.errors import InsufficientSamplesError
from ..models.fields import DriverState
from ..models.schemas import DiffusionPair, MomentEstimate, RenormValues, SimConfig
from . import renorm_constants as rc
from .replicas import run_chunks
from .sbe_simulator import diffusion_of, mollifier_of, tensor_of, validate_sim_config
from .spectral_grid import TWO_PI, derivative_symbol, inner_coeffs, quadratic_coeffs, wavenumbers
from .statistics import batch_means, z_scores
from .stochastic_sources import (
    ReplicaStreams,
    color_noise,
    derivative_noise_scale,
    gaussian_coeffs,
    heat_decay,
)
from .tensor_core import f_matrix, g_matrix

logger = logging.getLogger("kpzlab.services.drivers_mc")

# varios tiempos de relajación del modo k=1
DEFAULT_BURN_IN = 5.0 / (2.0 * math.pi**2)


def phi2_weight(z: np.ndarray) -> np.ndarray:
    """φ₂(z) = (e^z − 1 − z)/z², con serie cerca de 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 0.0, z)
    series = 0.5 + z / 6.0 + z**2 / 24.0 + z**3 / 120.0
    direct = (exprel(zs) - 1.0) / np.where(small, 1.0, zs)
    return np.where(small, series, direct)


@dataclass
class _Band:
    decay: np.ndarray
    phi1_dt: np.ndarray
    phi2_dt: np.ndarray
    dx: np.ndarray
    filt: np.ndarray

    @classmethod
    def build(cls, K: int, dt: float, phi2: np.ndarray, tilde: bool) -> _Band:
        lam = 0.5 * (TWO_PI * wavenumbers(K)) ** 2
        return cls(
            decay=heat_decay(K, dt),
            phi1_dt=dt * exprel(-lam * dt),
            phi2_dt=dt * phi2_weight(-lam * dt),
            dx=derivative_symbol(K),
            filt=phi2 if tilde else np.ones(K + 1),
        )


@dataclass
class DriverContext:
    dp: DiffusionPair
    gamma: np.ndarray
    sigma: np.ndarray
    a: np.ndarray
    K: int
    dt: float
    eps: float
    scheme: str
    linear: bool
    phi_k: np.ndarray
    x_noise: np.ndarray
    x_decay: np.ndarray
    y_band: _Band
    w_band: _Band
    c_band: float

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @classmethod
    def from_config(cls, cfg: SimConfig) -> DriverContext:
        validate_sim_config(cfg)
        t = tensor_of(cfg)
        dp = diffusion_of(cfg)
        m = mollifier_of(cfg)
        K, dt, eps = cfg.modes_K, cfg.dt, cfg.mollifier.eps
        tilde = cfg.drivers.variant == "tilde"
        phi_k = m.multiplier(eps, wavenumbers(K))
        phi_2k = m.multiplier(eps, wavenumbers(2 * K))
        return cls(
            dp=dp,
            gamma=np.array(t.gamma),
            sigma=np.array(dp.sigma),
            a=np.array(dp.a),
            K=K,
            dt=dt,
            eps=eps,
            scheme=cfg.drivers.variant,
            linear=cfg.drivers.forcing_rule == "linear",
            phi_k=phi_k,
            x_noise=derivative_noise_scale(K, dt) * phi_k,
            x_decay=heat_decay(K, dt),
            y_band=_Band.build(2 * K, dt, phi_2k**2, tilde),
            w_band=_Band.build(K, dt, phi_k**2, tilde),
            c_band=rc.c_eps(m, eps, band=K),
        )


def burn_in_of(cfg: SimConfig) -> float:
    return DEFAULT_BURN_IN if cfg.drivers.burn_in is None else cfg.drivers.burn_in


def y_forcing_source(x: np.ndarray, ctx: DriverContext) -> np.ndarray:
    """½Γ(∂ₓH_I∂ₓH_I − c^εA) antes de derivar; su modo cero tiene media nula."""
    out = 0.5 * quadratic_coeffs(ctx.gamma, x, x, 2 * ctx.K)
    out[..., 0] -= 0.5 * ctx.c_band * np.einsum("abc,bc->a", ctx.gamma, ctx.a)
    return out


def y_forcing(x: np.ndarray, ctx: DriverContext) -> np.ndarray:
    return ctx.y_band.filt * ctx.y_band.dx * y_forcing_source(x, ctx)


def w_forcing(y: np.ndarray, x: np.ndarray, ctx: DriverContext) -> np.ndarray:
    """∂ₓ Γ(∂ₓH_Y ∂ₓH_I), proyectado a |k| ≤ K."""
    return ctx.w_band.filt * ctx.w_band.dx * quadratic_coeffs(ctx.gamma, y, x, ctx.K)


def _etd(band: _Band, state: np.ndarray, f0: np.ndarray, f1: np.ndarray | None) -> np.ndarray:
    out = band.decay * state + band.phi1_dt * f0
    if f1 is not None:
        out = out + band.phi2_dt * (f1 - f0)
    return out


def init_stationary(
    streams: ReplicaStreams, config: SimConfig | DriverContext, burn_in: float | None = None
) -> DriverState:
    """∂ₓH_I de su ley estacionaria exacta; ∂ₓH_Y y ∂ₓH_W por calentamiento desde 0."""
    ctx = config if isinstance(config, DriverContext) else DriverContext.from_config(config)
    if burn_in is None:
        burn_in = burn_in_of(config) if isinstance(config, SimConfig) else DEFAULT_BURN_IN
    R, d, K = len(streams), ctx.d, ctx.K
    x = gaussian_coeffs(streams, ctx.dp, K, ctx.phi_k)
    state = DriverState(
        t=0.0,
        dxHI=x,
        dxHY=np.zeros((R, d, 2 * K + 1), dtype=np.complex128),
        dxHW=np.zeros((R, d, K + 1), dtype=np.complex128),
        eps=ctx.eps,
        scheme=ctx.scheme,
    )
    cache: dict[str, np.ndarray] = {}
    for _ in range(int(round(burn_in / ctx.dt))):
        state = step_drivers(state, streams, ctx, cache)
    state.t = 0.0
    return state


def step_drivers(
    s: DriverState,
    streams: ReplicaStreams,
    ctx: DriverContext,
    cache: dict[str, np.ndarray] | None = None,
) -> DriverState:
    """
    Un paso del sistema triangular: OU exacto para H_I, Euler exponencial para H_Y, H_W.

    `cache` guarda los forzamientos del estado final para reutilizarlos en el
    paso siguiente; sólo es válido si se pasa siempre el estado devuelto.
    """
    zeta = streams.standard_complex(ctx.d, ctx.K)
    x0, y0, w0 = s.dxHI, s.dxHY, s.dxHW
    x1 = ctx.x_decay * x0 + color_noise(ctx.sigma, zeta, ctx.x_noise)
    cached = cache is not None and "fy" in cache
    fy0 = cache["fy"] if cached else y_forcing(x0, ctx)
    fw0 = cache["fw"] if cached else w_forcing(y0, x0, ctx)
    fy1 = y_forcing(x1, ctx) if ctx.linear else None
    y1 = _etd(ctx.y_band, y0, fy0, fy1)
    fw1 = w_forcing(y1, x1, ctx) if ctx.linear else None
    w1 = _etd(ctx.w_band, w0, fw0, fw1)
    if cache is not None and ctx.linear:
        cache["fy"], cache["fw"] = fy1, fw1
    return DriverState(
        t=s.t + ctx.dt, dxHI=x1, dxHY=y1, dxHW=w1, eps=s.eps, scheme=s.scheme
    )


def _pointwise(c: np.ndarray) -> np.ndarray:
    """Valor en x=0: û(0) + 2 Re Σ_{k≥1} û(k)."""
    return c[..., 0].real + 2.0 * c[..., 1:].real.sum(axis=-1)


def sample_moments(s: DriverState) -> dict[str, np.ndarray]:
    """Productos promediados en espacio (Parseval) y en x=0, por réplica: (R, d, d)."""
    x, y, w = s.dxHI, s.dxHY, s.dxHW
    px, py, pw = _pointwise(x), _pointwise(y), _pointwise(w)
    return {
        "XX": inner_coeffs(x, x),
        "YY": inner_coeffs(y, y),
        "WX": inner_coeffs(w, x),
        "XX_pointwise": np.einsum("ra,rb->rab", px, px),
        "YY_pointwise": np.einsum("ra,rb->rab", py, py),
        "WX_pointwise": np.einsum("ra,rb->rab", pw, px),
    }


def moments_chunk(cfg: SimConfig, start: int, stop: int) -> dict[str, np.ndarray]:
    """Serie temporal de momentos promediados sobre las réplicas del bloque (suma, no media)."""
    ctx = DriverContext.from_config(cfg)
    streams = ReplicaStreams.for_range(cfg.seed, start, stop)
    state = init_stationary(streams, ctx, burn_in_of(cfg))
    series: dict[str, list[np.ndarray]] = {}
    cache: dict[str, np.ndarray] = {}
    for n in range(1, cfg.n_steps + 1):
        state = step_drivers(state, streams, ctx, cache)
        if n % cfg.drivers.sample_every == 0:
            for key, val in sample_moments(state).items():
                series.setdefault(key, []).append(val.sum(axis=0))
    return {key: np.stack(vals) for key, vals in series.items()}


def closed_forms(cfg: SimConfig) -> tuple[RenormValues, dict[str, np.ndarray]]:
    """Valores de banda |k| ≤ K: c^εA, F·C y G·D (o sus variantes tilde)."""
    t, dp, m = tensor_of(cfg), diffusion_of(cfg), mollifier_of(cfg)
    values = rc.evaluate(m, cfg.mollifier.eps, band=cfg.modes_K)
    tilde = cfg.drivers.variant == "tilde"
    c = values.c_tilde if tilde else values.c_big
    d_ = values.d_tilde if tilde else values.d_big
    xx = values.c_eps * dp.a
    yy = f_matrix(t, dp) * c
    wx = g_matrix(t, dp) * d_
    return values, {
        "XX": xx,
        "YY": yy,
        "WX": wx,
        "XX_pointwise": xx,
        "YY_pointwise": yy,
        "WX_pointwise": wx,
    }


@dataclass
class MomentsResult:
    estimates: list[MomentEstimate]
    values: RenormValues
    n_samples: int
    burn_in: float
    cancellation: MomentEstimate | None = None

    def rows(self) -> list[dict]:
        rows = [e.model_dump() for e in self.estimates]
        if self.cancellation is not None:
            rows.append(self.cancellation.model_dump())
        return rows


def estimate_moments(cfg: SimConfig, workers: int | None = None) -> MomentsResult:
    """estimate_C / estimate_D y E[∂ₓH_I∂ₓH_I] con errores por medias de bloques."""
    start = time.perf_counter()
    parts = run_chunks(
        partial(moments_chunk, cfg), cfg.replicas, cfg.effective_chunk_size, workers
    )
    series = {key: sum(p[key] for p in parts) / cfg.replicas for key in parts[0]}
    values, closed = closed_forms(cfg)
    batches = cfg.drivers.batch_count
    n_samples = next(iter(series.values())).shape[0]
    estimates = []
    for key, s in series.items():
        mean, se = batch_means(s, batches)
        z = z_scores(mean, closed[key], se)
        for a in range(cfg.d):
            for b in range(cfg.d):
                estimates.append(
                    MomentEstimate(
                        quantity=key,
                        alpha=a,
                        beta=b,
                        estimate=float(mean[a, b]),
                        stderr=float(se[a, b]),
                        closed_form_band=float(closed[key][a, b]),
                        z_score=float(z[a, b]),
                    )
                )
    cancellation = None
    if cfg.drivers.variant == "tilde":
        gamma = cfg.gamma_array()
        combo = np.einsum("abc,nbc->na", gamma, series["YY"] + 2.0 * series["WX"])
        mean, se = batch_means(combo, batches)
        target = np.einsum("abc,bc->a", gamma, closed["YY"] + 2.0 * closed["WX"])
        z = z_scores(mean, target, se)
        worst = int(np.argmax(np.abs(z)))
        cancellation = MomentEstimate(
            quantity="tilde_cancellation",
            alpha=worst,
            beta=-1,
            estimate=float(mean[worst]),
            stderr=float(se[worst]),
            closed_form_band=float(target[worst]),
            z_score=float(z[worst]),
        )
    bound = cfg.drivers.se_bound
    if bound is not None:
        worst_se = max(e.stderr for e in estimates if not e.quantity.endswith("pointwise"))
        if worst_se > bound:
            raise InsufficientSamplesError(
                f"error estándar {worst_se:.3e} por encima de se_bound={bound:.3e}"
            )
    burn_in = burn_in_of(cfg)
    duration_ms = round((time.perf_counter() - start) * 1000, 2)
    logger.info(
        f"estimate_moments variant={cfg.drivers.variant} K={cfg.modes_K} eps={cfg.mollifier.eps} "
        f"samples={n_samples} replicas={cfg.replicas} duration_ms={duration_ms}"
    )
    return MomentsResult(estimates, values, n_samples, burn_in, cancellation)


def estimate_C(result: MomentsResult) -> list[MomentEstimate]:
    return [e for e in result.estimates if e.quantity == "YY"]


def estimate_D(result: MomentsResult) -> list[MomentEstimate]:
    return [e for e in result.estimates if e.quantity == "WX"]

"""
Integración temporal de los esquemas acoplados.

Todos los esquemas usan Euler exponencial: semigrupo del calor y convolución
estocástica exactos por modo, no linealidad explícita con peso φ₁.
El estado vive en media-banda (R, d, K+1) con un eje de réplicas delante.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.special import exprel

from ..core.errors import ConfigError, PreconditionError
from ..models.fields import SpectralField, Trajectory
from ..models.schemas import CouplingTensor, DiffusionPair, SimConfig
from ..models.symbols import CUTOFFS, MOLLIFIERS, CutoffSymbol, MollifierSymbol
from . import renorm_constants as rc
from .replicas import run_chunks
from .spectral_grid import (
    TWO_PI,
    derivative_symbol,
    inner_coeffs,
    quadratic_coeffs,
    smooth_multiplier,
    wavenumbers,
)
from .stochastic_sources import (
    ReplicaStreams,
    RngStream,
    color_noise,
    derivative_noise_scale,
    gaussian_coeffs,
    heat_decay,
    height_noise_scale,
)
from .tensor_core import b_gamma_contraction, hat_transform, is_trilinear

logger = logging.getLogger("kpzlab.services.sbe_simulator")

HEIGHT_SCHEMES = ("kpz_plain", "kpz_tilde", "kpz_pair")
VELOCITY_SCHEMES = ("galerkin_sbe", "burgers_plain", "burgers_tilde")
MIN_MODES = 4


def validate_sim_config(cfg: SimConfig) -> None:
    """Rechaza K < 4 y dt por encima del límite efectivo del término explícito."""
    if cfg.modes_K < MIN_MODES:
        logger.warning(f"stability_check rejected K={cfg.modes_K} min={MIN_MODES}")
        raise ConfigError(f"modes_K={cfg.modes_K} < {MIN_MODES}")
    if cfg.dt > cfg.dt_limit:
        logger.warning(f"stability_check rejected dt={cfg.dt} limit={cfg.dt_limit:.3e}")
        raise ConfigError(
            f"dt={cfg.dt} supera el límite de estabilidad 10/(2π²K²)={cfg.dt_limit:.3e}"
        )


@dataclass
class SimContext:
    """Multiplicadores y constantes precomputados para un SimConfig."""

    gamma: np.ndarray
    sigma: np.ndarray
    a_inv: np.ndarray
    K: int
    dt: float
    decay: np.ndarray
    phi1_dt: np.ndarray
    phi: np.ndarray
    phi2: np.ndarray
    psi: np.ndarray
    dx: np.ndarray
    h_noise: np.ndarray
    u_noise: np.ndarray
    # ½Γ(c^ε_band A + B) restado al modo cero de la altura
    shift_plain: np.ndarray
    shift_tilde: np.ndarray
    c_band: float

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @classmethod
    def from_config(cls, cfg: SimConfig) -> SimContext:
        validate_sim_config(cfg)
        t = tensor_of(cfg)
        dp = diffusion_of(cfg)
        m = mollifier_of(cfg)
        K, dt, eps = cfg.modes_K, cfg.dt, cfg.mollifier.eps
        lam = 0.5 * (TWO_PI * wavenumbers(K)) ** 2
        phi = m.multiplier(eps, wavenumbers(K))
        c_band = rc.c_eps(m, eps, band=K)
        base = c_band * dp.a
        b_plain = np.zeros_like(dp.a)
        b_tilde = np.zeros_like(dp.a)
        if cfg.renorm_policy == "computed" and cfg.scheme in HEIGHT_SCHEMES:
            b_plain, b_tilde = rc.b_matrices(t, dp, m, eps, band=K)
        return cls(
            gamma=np.array(t.gamma),
            sigma=np.array(dp.sigma),
            a_inv=np.linalg.inv(dp.a),
            K=K,
            dt=dt,
            decay=heat_decay(K, dt),
            phi1_dt=dt * exprel(-lam * dt),
            phi=phi,
            phi2=phi**2,
            psi=smooth_multiplier(K, cfg.cutoff.N, cutoff_of(cfg)),
            dx=derivative_symbol(K),
            h_noise=height_noise_scale(K, dt),
            u_noise=derivative_noise_scale(K, dt),
            shift_plain=b_gamma_contraction(t, base + b_plain),
            shift_tilde=b_gamma_contraction(t, base + b_tilde),
            c_band=c_band,
        )


def tensor_of(cfg: SimConfig) -> CouplingTensor:
    return CouplingTensor(d=cfg.d, gamma=cfg.gamma_array())


def diffusion_of(cfg: SimConfig) -> DiffusionPair:
    return DiffusionPair.from_sigma(cfg.sigma_array())


def mollifier_of(cfg: SimConfig) -> MollifierSymbol:
    return MOLLIFIERS[cfg.mollifier.kind]()


def cutoff_of(cfg: SimConfig) -> CutoffSymbol:
    return CUTOFFS[cfg.cutoff.psi]()


def _as_context(config: SimConfig | SimContext) -> SimContext:
    return config if isinstance(config, SimContext) else SimContext.from_config(config)


# --- núcleos sobre arrays -------------------------------------------------


def galerkin_nonlinearity(c: np.ndarray, gamma: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """F_N = ½Γ∂ₓP_N(P_Nu P_Nu)."""
    K = c.shape[-1] - 1
    v = c * psi
    return 0.5 * derivative_symbol(K) * psi * quadratic_coeffs(gamma, v, v, K)


def burgers_nonlinearity(c: np.ndarray, ctx: SimContext, tilde: bool) -> np.ndarray:
    out = 0.5 * ctx.dx * quadratic_coeffs(ctx.gamma, c, c, ctx.K)
    return out * ctx.phi2 if tilde else out


def kpz_nonlinearity(h: np.ndarray, ctx: SimContext, tilde: bool) -> np.ndarray:
    """½Γ(∂ₓh∂ₓh − c^εA − B); en la variante tilde filtrada por φ²(εD)."""
    ux = ctx.dx * h
    out = 0.5 * quadratic_coeffs(ctx.gamma, ux, ux, ctx.K)
    out[..., 0] -= ctx.shift_tilde if tilde else ctx.shift_plain
    return out * ctx.phi2 if tilde else out


def galerkin_coeffs_step(c: np.ndarray, zeta: np.ndarray, ctx: SimContext) -> np.ndarray:
    forcing = galerkin_nonlinearity(c, ctx.gamma, ctx.psi)
    return ctx.decay * c + ctx.phi1_dt * forcing + color_noise(ctx.sigma, zeta, ctx.u_noise)


def burgers_coeffs_step(
    c: np.ndarray, zeta: np.ndarray, ctx: SimContext, tilde: bool
) -> np.ndarray:
    forcing = burgers_nonlinearity(c, ctx, tilde)
    noise = color_noise(ctx.sigma, zeta, ctx.u_noise * ctx.phi)
    return ctx.decay * c + ctx.phi1_dt * forcing + noise


def kpz_coeffs_step(h: np.ndarray, zeta: np.ndarray, ctx: SimContext, tilde: bool) -> np.ndarray:
    forcing = kpz_nonlinearity(h, ctx, tilde)
    noise = color_noise(ctx.sigma, zeta, ctx.h_noise * ctx.phi)
    out = ctx.decay * h + ctx.phi1_dt * forcing + noise
    out[..., 0] = out[..., 0].real
    return out


# --- operaciones sobre SpectralField --------------------------------------


def f_N(u: SpectralField, t: CouplingTensor, N: int, psi: CutoffSymbol) -> SpectralField:
    if not u.is_zero_mean():
        raise PreconditionError("f_N requiere un campo de media cero")
    return SpectralField.from_array(
        galerkin_nonlinearity(u.coeffs, t.gamma, smooth_multiplier(u.K, N, psi))
    )


def energy(u: SpectralField, dp: DiffusionPair) -> float:
    """H(u) = (A⁻¹)_{αβ}⟨u^α, u^β⟩."""
    return float(np.einsum("ab,ab->", np.linalg.inv(dp.a), inner_coeffs(u.coeffs, u.coeffs)))


def energy_identity_residual(
    u: SpectralField, t: CouplingTensor, dp: DiffusionPair, N: int, psi: CutoffSymbol
) -> float:
    """(A⁻¹)_{αβ}⟨F_N^α(u), u^β⟩; nulo salvo redondeo si Γ̂ es trilineal."""
    forcing = f_N(u, t, N, psi)
    return float(np.einsum("ab,ab->", np.linalg.inv(dp.a), inner_coeffs(forcing.coeffs, u.coeffs)))


def energy_residual_scale(u: SpectralField, t: CouplingTensor, dp: DiffusionPair, N: int) -> float:
    """Escala natural del residuo: ‖A⁻¹‖·max|Γ|·2πN·‖u‖³."""
    norm_u = math.sqrt(float(np.sum(np.diagonal(inner_coeffs(u.coeffs, u.coeffs)))))
    gmax = float(np.max(np.abs(t.gamma), initial=0.0))
    return float(np.linalg.norm(np.linalg.inv(dp.a), 2)) * gmax * TWO_PI * N * norm_u**3


def divergence_free_residual(
    t: CouplingTensor,
    N: int,
    psi: CutoffSymbol,
    K: int,
    u: SpectralField | None = None,
    h: float = 1e-3,
) -> float:
    """
    Σ_k ∂F_N^{α,k}/∂u^{α,k} en coordenadas reales (Re, Im) de los modos k ≥ 1.

    F_N es cuadrático, así que la diferencia central es exacta salvo redondeo.
    """
    base = np.zeros((t.d, K + 1), dtype=np.complex128) if u is None else np.array(u.coeffs)
    mult = smooth_multiplier(K, N, psi)
    total = 0.0
    for a in range(t.d):
        for k in range(1, K + 1):
            for unit in (1.0, 1j):
                plus = base.copy()
                minus = base.copy()
                plus[a, k] += h * unit
                minus[a, k] -= h * unit
                diff = galerkin_nonlinearity(plus, t.gamma, mult) - galerkin_nonlinearity(
                    minus, t.gamma, mult
                )
                comp = diff[a, k] / (2.0 * h)
                total += comp.real if unit == 1.0 else comp.imag
    return total


def step_galerkin(u: SpectralField, config: SimConfig | SimContext, rng: RngStream) -> SpectralField:
    ctx = _as_context(config)
    if not u.is_zero_mean():
        raise PreconditionError("step_galerkin requiere un campo de media cero")
    zeta = rng.standard_complex(ctx.d, ctx.K)
    out = galerkin_coeffs_step(u.coeffs, zeta, ctx)
    out[..., 0] = 0.0
    return SpectralField(out)


def step_kpz(
    h: SpectralField, config: SimConfig | SimContext, rng: RngStream, variant: str = "plain"
) -> SpectralField:
    ctx = _as_context(config)
    zeta = rng.standard_complex(ctx.d, ctx.K)
    return SpectralField(kpz_coeffs_step(h.coeffs, zeta, ctx, variant == "tilde"))


def step_burgers(
    u: SpectralField, config: SimConfig | SimContext, rng: RngStream, variant: str = "plain"
) -> SpectralField:
    ctx = _as_context(config)
    zeta = rng.standard_complex(ctx.d, ctx.K)
    out = burgers_coeffs_step(u.coeffs, zeta, ctx, variant == "tilde")
    out[..., 0] = 0.0
    return SpectralField(out)


# --- lotes de réplicas ----------------------------------------------------


def checkpoint_steps(n_steps: int, checkpoints: int) -> list[int]:
    return sorted({max(1, round(j * n_steps / checkpoints)) for j in range(1, checkpoints + 1)})


def initial_state(cfg: SimConfig, ctx: SimContext, streams: ReplicaStreams) -> np.ndarray:
    """galerkin_sbe parte de μ_A; el resto de μ_A^ε (para la altura, ∂ₓh(0) ~ μ_A^ε)."""
    dp = diffusion_of(cfg)
    mult = None if cfg.scheme == "galerkin_sbe" else ctx.phi
    u0 = gaussian_coeffs(streams, dp, ctx.K, mult)
    if cfg.scheme in VELOCITY_SCHEMES:
        return u0
    h0 = np.zeros_like(u0)
    h0[..., 1:] = u0[..., 1:] / ctx.dx[1:]
    return h0


def simulate_chunk(cfg: SimConfig, burn_in_steps: int, start: int, stop: int) -> Trajectory:
    """Integra las réplicas [start, stop) con sus propios flujos."""
    ctx = SimContext.from_config(cfg)
    streams = ReplicaStreams.for_range(cfg.seed, start, stop)
    state = initial_state(cfg, ctx, streams)
    pair = cfg.scheme == "kpz_pair"
    tilde_state = state.copy() if pair else None
    n_steps = cfg.n_steps
    ckpts = set(checkpoint_steps(n_steps, cfg.checkpoints))
    every = cfg.drift.sample_every
    snapshots, energies, zero_mode, sample_times = [], [], [], []

    for n in range(1, burn_in_steps + n_steps + 1):
        zeta = streams.standard_complex(ctx.d, ctx.K)
        if cfg.scheme == "galerkin_sbe":
            state = galerkin_coeffs_step(state, zeta, ctx)
        elif cfg.scheme in ("burgers_plain", "burgers_tilde"):
            state = burgers_coeffs_step(state, zeta, ctx, cfg.scheme == "burgers_tilde")
        elif pair:
            # ruido común para las dos variantes
            state = kpz_coeffs_step(state, zeta, ctx, tilde=False)
            tilde_state = kpz_coeffs_step(tilde_state, zeta, ctx, tilde=True)
        else:
            state = kpz_coeffs_step(state, zeta, ctx, cfg.scheme == "kpz_tilde")

        m = n - burn_in_steps
        if m < 0:
            continue
        if cfg.scheme in HEIGHT_SCHEMES and m % every == 0:
            mean = tilde_state[..., 0] - state[..., 0] if pair else state[..., 0]
            zero_mode.append(mean.real.copy())
            sample_times.append(m * ctx.dt)
        if m in ckpts:
            snapshots.append(state.copy())
            if cfg.scheme in VELOCITY_SCHEMES:
                energies.append(np.einsum("ab,rab->r", ctx.a_inv, inner_coeffs(state, state)))

    if cfg.scheme in VELOCITY_SCHEMES and np.any(state[..., 0] != 0.0):
        raise PreconditionError("el modo cero de la velocidad dejó de ser nulo")
    return Trajectory(
        scheme=cfg.scheme,
        times=np.array(sorted(ckpts), dtype=float) * ctx.dt,
        snapshots=np.stack(snapshots),
        sample_times=np.array(sample_times),
        zero_mode=np.stack(zero_mode, axis=1) if zero_mode else None,
        energy=np.stack(energies) if energies else None,
    )


def merge_trajectories(parts: list[Trajectory]) -> Trajectory:
    first = parts[0]
    return Trajectory(
        scheme=first.scheme,
        times=first.times,
        snapshots=np.concatenate([p.snapshots for p in parts], axis=1),
        sample_times=first.sample_times,
        zero_mode=None
        if first.zero_mode is None
        else np.concatenate([p.zero_mode for p in parts], axis=0),
        energy=None if first.energy is None else np.concatenate([p.energy for p in parts], axis=1),
    )


def simulate(cfg: SimConfig, workers: int | None = None, burn_in: float = 0.0) -> Trajectory:
    start = time.perf_counter()
    validate_sim_config(cfg)
    burn_in_steps = int(round(burn_in / cfg.dt))
    fn = partial(simulate_chunk, cfg, burn_in_steps)
    parts = run_chunks(fn, cfg.replicas, cfg.effective_chunk_size, workers)
    traj = merge_trajectories(parts)
    duration_ms = round((time.perf_counter() - start) * 1000, 2)
    logger.info(
        f"simulate scheme={cfg.scheme} d={cfg.d} K={cfg.modes_K} steps={cfg.n_steps} "
        f"replicas={cfg.replicas} duration_ms={duration_ms}"
    )
    return traj


def require_trilinear(cfg: SimConfig) -> None:
    t_hat = hat_transform(tensor_of(cfg), diffusion_of(cfg))
    if not is_trilinear(t_hat):
        raise PreconditionError("el experimento requiere Γ̂ trilineal")

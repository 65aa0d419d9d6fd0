from __future__ import annotations

import math
from typing import Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_serializer,
    field_validator,
    model_validator,
)

from ..core import settings
from ..core.errors import NumericalError


def _frozen_array(value: Any, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr


class CouplingTensor(BaseModel):
    """Γ^α_{βγ} guardado como gamma[α, β, γ]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    d: int = Field(..., ge=1, description="Número de componentes")
    gamma: np.ndarray

    @field_validator("gamma", mode="before")
    @classmethod
    def to_array(cls, v: Any) -> np.ndarray:
        return _frozen_array(v)

    @model_validator(mode="after")
    def check_shape(self) -> CouplingTensor:
        expected = (self.d, self.d, self.d)
        if self.gamma.shape != expected:
            raise ValueError(
                f"gamma tiene forma {self.gamma.shape}, se esperaba {expected} para d={self.d}"
            )
        if not np.all(np.isfinite(self.gamma)):
            raise ValueError("gamma contiene valores no finitos")
        return self

    @field_serializer("gamma")
    def serialize_gamma(self, v: np.ndarray) -> list:
        return v.tolist()

    @classmethod
    def from_array(cls, gamma: Any) -> CouplingTensor:
        arr = np.asarray(gamma, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1, 1)
        return cls(d=arr.shape[0], gamma=arr)


class DiffusionPair(BaseModel):
    """σ invertible, su inversa τ y A = σσᵀ."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sigma: np.ndarray
    tau: np.ndarray
    a: np.ndarray

    @field_validator("sigma", "tau", "a", mode="before")
    @classmethod
    def to_array(cls, v: Any) -> np.ndarray:
        return _frozen_array(np.atleast_2d(np.asarray(v, dtype=float)))

    @model_validator(mode="after")
    def check_consistency(self) -> DiffusionPair:
        d = self.sigma.shape[0]
        for name, m in (("sigma", self.sigma), ("tau", self.tau), ("a", self.a)):
            if m.shape != (d, d):
                raise ValueError(f"{name} tiene forma {m.shape}, se esperaba {(d, d)}")
        # tolerancia escalada por ‖σ‖‖τ‖ para σ mal condicionadas
        scale = np.linalg.norm(self.sigma, np.inf) * max(1.0, np.linalg.norm(self.tau, np.inf))
        residual = np.max(np.abs(self.sigma @ self.tau - np.eye(d)))
        if residual > 1e-12 * scale:
            raise ValueError(f"sigma·tau difiere de la identidad (residuo {residual:.3e})")
        if not np.allclose(self.a, self.a.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(self.a).max())):
            raise ValueError("A no es simétrica")
        try:
            np.linalg.cholesky(self.a)
        except np.linalg.LinAlgError as e:
            raise ValueError("A no es definida positiva") from e
        return self

    @field_serializer("sigma", "tau", "a")
    def serialize_matrix(self, v: np.ndarray) -> list:
        return v.tolist()

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @classmethod
    def from_sigma(cls, sigma: Any) -> DiffusionPair:
        s = np.atleast_2d(np.asarray(sigma, dtype=float))
        if s.shape[0] != s.shape[1]:
            raise NumericalError(f"sigma debe ser cuadrada, forma {s.shape}")
        if not np.all(np.isfinite(s)) or np.linalg.cond(s) > 1.0 / np.finfo(float).eps:
            raise NumericalError("sigma es singular")
        try:
            tau = np.linalg.inv(s)
        except np.linalg.LinAlgError as e:
            raise NumericalError("sigma es singular") from e
        a = s @ s.T
        return cls(sigma=s, tau=tau, a=0.5 * (a + a.T))

    def inverse(self) -> DiffusionPair:
        return DiffusionPair.from_sigma(self.tau)


class TensorReport(BaseModel):
    is_bilinear: bool
    # el resto queda en None si Γ no es bilineal
    is_trilinear: bool | None = None
    satisfies_no_log: bool | None = None
    f_matrix: list[list[float]] | None = None
    g_matrix: list[list[float]] | None = None
    # None cuando Γ̂ no es trilineal: c^α sólo tiene sentido bajo esa condición
    c_shift: list[float] | None = None
    gamma_hat: list[list[list[float]]] | None = None
    lowered_symmetric: bool | None = None
    cole_hopf_verified: bool | None = None
    cole_hopf_marginal_variances: list[float] | None = None
    tol: float


class RenormValues(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps: float = Field(..., gt=0)
    c_eps: float = Field(..., ge=0)
    c_big: float
    d_big: float
    c_tilde: float
    d_tilde: float
    truncation_K: int
    est_truncation_error: float = Field(..., ge=0)
    band: bool = False
    mollifier: str = "gaussian"

    @property
    def c_plus_2d(self) -> float:
        return self.c_big + 2.0 * self.d_big

    @property
    def tilde_sum(self) -> float:
        return self.c_tilde + 2.0 * self.d_tilde


class ComplexMatrix(BaseModel):
    model_config = ConfigDict(extra="forbid")

    real: list[list[float]]
    imag: list[list[float]] | None = None

    def to_array(self) -> np.ndarray:
        re = np.asarray(self.real, dtype=float)
        im = np.zeros_like(re) if self.imag is None else np.asarray(self.imag, dtype=float)
        if re.shape != im.shape:
            raise ValueError("partes real e imaginaria con formas distintas")
        return re + 1j * im


class MollifierConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["gaussian", "raised_cosine", "identity"] = "gaussian"
    eps: float = Field(0.1, gt=0)


class CutoffConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N: int = Field(12, ge=1)
    psi: Literal["smooth", "sharp"] = "smooth"


class RenormConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps_list: list[float] = Field(default_factory=lambda: [0.1], min_length=1)
    tol: float = Field(default_factory=lambda: settings.DEFAULT_TOL, gt=0)
    # restringe las sumas a |k| ≤ band (error de truncamiento nulo)
    band: int | None = Field(None, ge=1)
    # puerta |Richardson(C+2D) + 1/12| con dos o más ε; None la desactiva
    richardson_tol: float | None = Field(1e-3, gt=0)

    @field_validator("eps_list")
    @classmethod
    def validate_positive(cls, v: list[float]) -> list[float]:
        for idx, eps in enumerate(v):
            if eps <= 0:
                raise ValueError(f"eps en posición {idx} debe ser positivo (>0)")
        return v


class DriverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    variant: Literal["plain", "tilde"] = "plain"
    # None: 5/(2π²), varios tiempos de relajación del modo k=1
    burn_in: float | None = Field(None, ge=0)
    batch_count: int = Field(20, ge=2)
    sample_every: int = Field(10, ge=1)
    forcing_rule: Literal["linear", "constant"] = "linear"
    se_bound: float | None = Field(None, gt=0)


class DriftConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    burn_in: float = Field(0.0, ge=0)
    sample_every: int = Field(10, ge=1)
    rel_tolerance: float = Field(0.25, gt=0)


class SimConfig(BaseModel):
    """Configuración de un experimento; claves versionadas por schema_version."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = settings.SCHEMA_VERSION
    d: int = Field(..., ge=1)
    gamma: list[list[list[float]]]
    sigma: list[list[float]]
    cole_hopf_s: ComplexMatrix | None = None
    mollifier: MollifierConfig = Field(default_factory=MollifierConfig)
    cutoff: CutoffConfig = Field(default_factory=CutoffConfig)
    modes_K: int = Field(16, ge=1)
    dt: float = Field(1e-4, gt=0)
    horizon_T: float = Field(1.0, gt=0)
    replicas: int = Field(200, ge=1)
    seed: int = Field(0, ge=0)
    scheme: Literal[
        "galerkin_sbe", "kpz_plain", "kpz_tilde", "kpz_pair", "burgers_plain", "burgers_tilde"
    ] = "galerkin_sbe"
    renorm_policy: Literal["zero", "computed"] = "zero"
    renorm: RenormConfig = Field(default_factory=RenormConfig)
    drivers: DriverConfig = Field(default_factory=DriverConfig)
    drift: DriftConfig = Field(default_factory=DriftConfig)
    checkpoints: int = Field(1, ge=1)
    chunk_size: int | None = Field(None, ge=1)
    dump_samples: bool = False

    @field_validator("schema_version")
    @classmethod
    def validate_version(cls, v: int) -> int:
        if v != settings.SCHEMA_VERSION:
            raise ValueError(f"schema_version {v} no soportada (actual {settings.SCHEMA_VERSION})")
        return v

    @model_validator(mode="after")
    def check_dimensions(self) -> SimConfig:
        d = self.d
        g = np.asarray(self.gamma, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        if g.shape != (d, d, d):
            raise ValueError(f"gamma tiene forma {g.shape}, se esperaba {(d, d, d)}")
        if s.shape != (d, d):
            raise ValueError(f"sigma tiene forma {s.shape}, se esperaba {(d, d)}")
        if self.cole_hopf_s is not None and np.shape(self.cole_hopf_s.real) != (d, d):
            raise ValueError("cole_hopf_s debe ser d×d")
        if self.horizon_T < self.dt:
            raise ValueError(f"horizon_T={self.horizon_T} menor que dt={self.dt}")
        if self.scheme == "galerkin_sbe" and self.modes_K < self.cutoff.N:
            raise ValueError(f"modes_K={self.modes_K} debe ser ≥ cutoff.N={self.cutoff.N}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_T / self.dt))

    @property
    def effective_chunk_size(self) -> int:
        """chunk_size del fichero o, si falta, KPZ_CHUNK_SIZE; se registra en report.json."""
        return self.chunk_size if self.chunk_size is not None else settings.CHUNK_SIZE

    @property
    def dt_limit(self) -> float:
        return 10.0 / (2.0 * math.pi**2 * self.modes_K**2)

    def gamma_array(self) -> np.ndarray:
        return np.asarray(self.gamma, dtype=float)

    def sigma_array(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=float)


class TestOutcome(BaseModel):
    # pytest no debe recolectar este modelo
    __test__ = False

    name: str
    statistic: float
    threshold: float
    passed: bool
    detail: str = ""


class MomentEstimate(BaseModel):
    quantity: str
    alpha: int
    beta: int
    estimate: float
    stderr: float
    closed_form_band: float
    z_score: float


class DriftEstimate(BaseModel):
    alpha: int
    slope: float
    stderr: float
    prediction: float
    c_shift_limit: float
    relative_error: float


class ExperimentReport(BaseModel):
    command: str
    artifact_version: str = settings.ARTIFACT_VERSION
    seed: int | None = None
    config: dict[str, Any] = Field(default_factory=dict)
    tests: list[TestOutcome] = Field(default_factory=list)
    results: dict[str, Any] = Field(default_factory=dict)
    metadata: dict[str, Any] = Field(default_factory=dict)
    # fuera de report.json para que sea reproducible bit a bit
    wall_clock_s: float = 0.0
    workers: int = 1

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tests)

    def deterministic_dump(self) -> dict[str, Any]:
        return self.model_dump(mode="json", exclude={"wall_clock_s", "workers"})

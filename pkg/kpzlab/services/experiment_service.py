from __future__ import annotations

import logging
import time
from typing import Any

import numpy as np

from ..core.errors import ConfigError
from ..models.schemas import DriftEstimate, ExperimentReport, SimConfig, TestOutcome
from ..repositories.results_repo import ResultsRepository
from . import drivers_mc
from . import renorm_constants as rc
from . import sbe_simulator as sim
from . import tensor_core as tc
from .spectral_grid import wavenumbers
from .statistics import (
    MAX_WARN_FRACTION,
    Z_MAX,
    Z_WARN,
    covariance_z_test,
    mean_and_stderr,
    replica_slopes,
)

# tolerancia del test de cancelación C̃+2D̃ (además del error de truncamiento)
CANCELLATION_REL_TOL = 1e-10
LIMIT_C_PLUS_2D = -1.0 / 12.0
RICHARDSON_ORDER = 1
RANDOM_FG_TOL = 1e-12
MIN_GENERIC_FRACTION = 0.99


def _fg_gap(f: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    """‖F−G‖∞ y su umbral 1e-12·(1+‖F‖∞)."""
    gap = float(np.max(np.abs(f - g)))
    return gap, RANDOM_FG_TOL * (1.0 + float(np.max(np.abs(f))))


class ExperimentService:
    def __init__(self, repo: ResultsRepository):
        self.repo = repo
        self.logger = logging.getLogger("kpzlab.services.experiment_service")

    def _finish(
        self,
        command: str,
        cfg: SimConfig,
        start: float,
        workers: int,
        tests: list[TestOutcome],
        results: dict[str, Any],
        metadata: dict[str, Any] | None = None,
    ) -> ExperimentReport:
        report = ExperimentReport(
            command=command,
            seed=cfg.seed,
            config=cfg.model_dump(mode="json"),
            tests=tests,
            results=results,
            metadata={"chunk_size": cfg.effective_chunk_size, **(metadata or {})},
            wall_clock_s=round(time.perf_counter() - start, 3),
            workers=workers,
        )
        self.repo.write_report(report)
        failed = [t.name for t in tests if not t.passed]
        if failed:
            self.logger.warning(f"{command} failed_tests={','.join(failed)}")
        self.logger.info(
            f"{command} tests={len(tests)} passed={report.passed} "
            f"duration_ms={round(report.wall_clock_s * 1000, 2)}"
        )
        return report

    # --- check-tensor -----------------------------------------------------

    def _random_self_check(self, d: int, count: int, seed: int) -> tuple[list[TestOutcome], dict]:
        """Equivalencia trilineal ⇔ F=G y las dos formas de c^α sobre tensores aleatorios."""
        rng = np.random.default_rng(seed)
        worst_ratio = 0.0
        worst_shift = 0.0
        for _ in range(count):
            t, dp = tc.random_trilinear(rng, d)
            gap, thr = _fg_gap(tc.f_matrix(t, dp), tc.g_matrix(t, dp))
            worst_ratio = max(worst_ratio, gap / thr)
            a = tc.c_shift(t, dp)
            b = tc.c_shift_from_f(t, dp)
            scale = 1.0 + float(np.max(np.abs(a)))
            worst_shift = max(worst_shift, float(np.max(np.abs(a - b))) / scale)
        generic = 0
        for _ in range(count):
            dp = tc.random_sigma(rng, d)
            t = tc.random_bilinear(rng, d)
            gap, thr = _fg_gap(tc.f_matrix(t, dp), tc.g_matrix(t, dp))
            generic += gap > thr
        fraction = generic / count
        tests = [
            TestOutcome(
                name="random_trilinear_f_equals_g",
                statistic=worst_ratio,
                threshold=1.0,
                passed=worst_ratio <= 1.0,
                detail=f"máximo de ‖F−G‖∞/(1e-12(1+‖F‖∞)) sobre {count} tensores, d={d}",
            ),
            TestOutcome(
                name="random_bilinear_f_differs_g",
                statistic=fraction,
                threshold=MIN_GENERIC_FRACTION,
                passed=fraction >= MIN_GENERIC_FRACTION,
                detail=f"{generic}/{count} tensores genéricos con F ≠ G",
            ),
            TestOutcome(
                name="c_shift_forms_agree",
                statistic=worst_shift,
                threshold=RANDOM_FG_TOL,
                passed=worst_shift <= RANDOM_FG_TOL,
                detail="σΓ̂Γ̂Γ̂/24 frente a ΓF/24",
            ),
        ]
        return tests, {"d": d, "count": count, "generic_fraction": fraction}

    def check_tensor(
        self, cfg: SimConfig, random_count: int = 0, workers: int = 1
    ) -> ExperimentReport:
        start = time.perf_counter()
        t = sim.tensor_of(cfg)
        dp = sim.diffusion_of(cfg)
        s = None if cfg.cole_hopf_s is None else cfg.cole_hopf_s.to_array()
        report = tc.tensor_report(t, dp, s)
        results: dict[str, Any] = {"tensor": report.model_dump(mode="json")}
        if not report.is_bilinear:
            asym = float(np.max(np.abs(t.gamma - t.gamma.transpose(0, 2, 1))))
            tests = [
                TestOutcome(
                    name="bilinear",
                    statistic=asym,
                    threshold=0.0,
                    passed=False,
                    detail="max|Γ^α_{βγ} − Γ^α_{γβ}|; sin simetría no hay informe algebraico",
                )
            ]
            return self._finish("check-tensor", cfg, start, workers, tests, results)
        f = np.asarray(report.f_matrix)
        g = np.asarray(report.g_matrix)
        gap, thr = _fg_gap(f, g)
        consistent = report.is_trilinear == report.lowered_symmetric and (
            not report.is_trilinear or gap <= thr
        )
        tests = [
            TestOutcome(
                name="trilinear_characterizations_agree",
                statistic=gap,
                threshold=thr,
                passed=consistent,
                detail=(
                    f"is_trilinear={report.is_trilinear} "
                    f"lowered_symmetric={report.lowered_symmetric}; ‖F−G‖∞ frente al umbral"
                ),
            )
        ]
        if random_count > 0:
            extra, summary = self._random_self_check(max(cfg.d, 2), random_count, cfg.seed)
            tests.extend(extra)
            results["random_self_check"] = summary
        return self._finish("check-tensor", cfg, start, workers, tests, results)

    # --- renorm -----------------------------------------------------------

    def renorm(self, cfg: SimConfig, workers: int = 1) -> ExperimentReport:
        start = time.perf_counter()
        m = sim.mollifier_of(cfg)
        rcfg = cfg.renorm
        rows = []
        tests = []
        values = []
        for eps in rcfg.eps_list:
            v = rc.evaluate(m, eps, rcfg.tol, rcfg.band)
            values.append(v)
            rows.append(
                {
                    "eps": eps,
                    "c_eps": v.c_eps,
                    "C": v.c_big,
                    "D": v.d_big,
                    "C_tilde": v.c_tilde,
                    "D_tilde": v.d_tilde,
                    "C_plus_2D": v.c_plus_2d,
                    "trunc_K": v.truncation_K,
                    "trunc_err": v.est_truncation_error,
                }
            )
            if rcfg.band is not None:
                # en el cuadrado |k| ≤ band la cancelación sólo es aproximada
                continue
            bound = CANCELLATION_REL_TOL * abs(v.c_tilde) + v.est_truncation_error
            tests.append(
                TestOutcome(
                    name=f"tilde_cancellation_eps={eps}",
                    statistic=abs(v.tilde_sum),
                    threshold=bound,
                    passed=abs(v.tilde_sum) <= bound,
                    detail="|C̃+2D̃| ≤ 1e-10·|C̃| + error de truncamiento",
                )
            )
        self.repo.write_renorm_csv(rows)

        results: dict[str, Any] = {"rows": rows}
        metadata: dict[str, Any] = {"band": rcfg.band, "mollifier": m.name}
        if len(values) >= 2:
            # los dos ε más pequeños
            a, b = sorted(values, key=lambda v: v.eps)[:2][::-1]
            extrapolated = rc.richardson(a.eps, a.c_plus_2d, b.eps, b.c_plus_2d)
            results["richardson_C_plus_2D"] = extrapolated
            metadata["extrapolation_order"] = RICHARDSON_ORDER
            if rcfg.richardson_tol is not None and rcfg.band is None:
                err = abs(extrapolated - LIMIT_C_PLUS_2D)
                tests.append(
                    TestOutcome(
                        name="richardson_limit_minus_one_twelfth",
                        statistic=err,
                        threshold=rcfg.richardson_tol,
                        passed=err <= rcfg.richardson_tol,
                        detail=f"extrapolación con eps={a.eps},{b.eps} frente a −1/12",
                    )
                )
        return self._finish("renorm", cfg, start, workers, tests, results, metadata)

    # --- simulate ---------------------------------------------------------

    def _write_trajectory(self, cfg: SimConfig, traj) -> dict[str, Any]:
        final = traj.field(len(traj.times) - 1, 0)
        self.repo.write_field("final_replica0", final)
        summary: dict[str, Any] = {"checkpoint_times": traj.times.tolist(), "replicas": traj.replicas}
        if traj.energy is not None:
            rows = []
            for c, t in enumerate(traj.times):
                if traj.replicas > 1:
                    mean, se = mean_and_stderr(traj.energy[c])
                else:
                    mean, se = traj.energy[c, 0], 0.0
                rows.append(
                    {
                        "checkpoint": c,
                        "t": float(t),
                        "energy_mean": float(mean),
                        "energy_stderr": float(se),
                    }
                )
            self.repo.write_csv(
                "energy.csv", ["checkpoint", "t", "energy_mean", "energy_stderr"], rows
            )
            summary["energy"] = rows
        if traj.zero_mode is not None:
            mean = traj.zero_mode.mean(axis=0)
            cols = ["t"] + [f"mean{a + 1}" for a in range(cfg.d)]
            self.repo.write_csv(
                "zero_mode.csv",
                cols,
                (
                    {"t": float(t), **{f"mean{a + 1}": float(mean[i, a]) for a in range(cfg.d)}}
                    for i, t in enumerate(traj.sample_times)
                ),
            )
        if cfg.dump_samples:
            self.repo.write_samples("samples.bin", traj.snapshots[-1])
        return summary

    def simulate(self, cfg: SimConfig, workers: int = 1) -> ExperimentReport:
        start = time.perf_counter()
        traj = sim.simulate(cfg, workers)
        summary = self._write_trajectory(cfg, traj)
        return self._finish("simulate", cfg, start, workers, [], summary)

    # --- invariance-test --------------------------------------------------

    def _invariance_target(self, cfg: SimConfig) -> np.ndarray:
        dp = sim.diffusion_of(cfg)
        if cfg.scheme == "galerkin_sbe":
            return np.array(dp.a)
        if cfg.scheme == "burgers_tilde":
            sim.require_trilinear(cfg)
            phi = sim.mollifier_of(cfg).multiplier(cfg.mollifier.eps, wavenumbers(cfg.modes_K))
            return np.einsum("k,ab->kab", phi[1:] ** 2, dp.a)
        raise ConfigError(
            f"invariance-test admite galerkin_sbe o burgers_tilde, no {cfg.scheme}"
        )

    def invariance_experiment(self, cfg: SimConfig, workers: int = 1) -> ExperimentReport:
        start = time.perf_counter()
        target = self._invariance_target(cfg)
        traj = sim.simulate(cfg, workers)
        tests = []
        rows = []
        checkpoints = []
        for c, t in enumerate(traj.times):
            zt = covariance_z_test(traj.snapshots[c][..., 1:], target)
            for row in zt.rows():
                rows.append({"checkpoint": c, "t": float(t), **row})
            frac = zt.fraction_above(Z_WARN)
            tests.append(
                TestOutcome(
                    name=f"mode_covariance_t={float(t):.6g}",
                    statistic=zt.max_abs_z,
                    threshold=Z_MAX,
                    passed=zt.passes(),
                    detail=(
                        f"max|z| ≤ {Z_MAX} y fracción |z| ≥ {Z_WARN} = {frac:.4f} "
                        f"≤ {MAX_WARN_FRACTION}; n={zt.n_samples}"
                    ),
                )
            )
            checkpoints.append(
                {"t": float(t), "max_abs_z": zt.max_abs_z, "fraction_above_warn": frac}
            )
        self.repo.write_ztest_csv(rows)
        summary = self._write_trajectory(cfg, traj)
        summary["checkpoints"] = checkpoints
        # E[H] bajo la medida objetivo: Σ_{0<|k|≤K} tr(A⁻¹·Cov(k))
        phi2 = np.ones(cfg.modes_K)
        if target.ndim == 3:
            phi = sim.mollifier_of(cfg).multiplier(cfg.mollifier.eps, wavenumbers(cfg.modes_K))
            phi2 = phi[1:] ** 2
        summary["energy_expected"] = float(2.0 * cfg.d * phi2.sum())
        metadata = {
            "target": "mu_A" if cfg.scheme == "galerkin_sbe" else "mu_A_eps",
            "z_max": Z_MAX,
            "z_warn": Z_WARN,
            "max_warn_fraction": MAX_WARN_FRACTION,
        }
        return self._finish("invariance-test", cfg, start, workers, tests, summary, metadata)

    # --- moments ----------------------------------------------------------

    def moments(self, cfg: SimConfig, workers: int = 1) -> ExperimentReport:
        start = time.perf_counter()
        result = drivers_mc.estimate_moments(cfg, workers)
        self.repo.write_moments_csv(result.rows())
        tests = []
        by_quantity: dict[str, float] = {}
        for e in result.estimates:
            if e.quantity.endswith("pointwise"):
                # sólo informativos
                continue
            by_quantity[e.quantity] = max(by_quantity.get(e.quantity, 0.0), abs(e.z_score))
        if result.cancellation is not None:
            by_quantity[result.cancellation.quantity] = abs(result.cancellation.z_score)
        for quantity, z in by_quantity.items():
            tests.append(
                TestOutcome(
                    name=f"moment_{quantity}",
                    statistic=z,
                    threshold=Z_MAX,
                    passed=z <= Z_MAX,
                    detail="max|z| frente a la forma cerrada de banda |k| ≤ K",
                )
            )
        results = {
            "rows": result.rows(),
            "n_samples": result.n_samples,
            "renorm_band": result.values.model_dump(),
        }
        metadata = {
            "burn_in": result.burn_in,
            "burn_in_bias_possible": result.burn_in < drivers_mc.DEFAULT_BURN_IN,
            "variant": cfg.drivers.variant,
            "forcing_rule": cfg.drivers.forcing_rule,
        }
        return self._finish("moments", cfg, start, workers, tests, results, metadata)

    # --- drift ------------------------------------------------------------

    def drift_experiment(self, cfg: SimConfig, workers: int = 1) -> ExperimentReport:
        start = time.perf_counter()
        if cfg.scheme != "kpz_pair":
            raise ConfigError(f"drift requiere scheme=kpz_pair, no {cfg.scheme}")
        if cfg.renorm_policy != "zero":
            raise ConfigError("drift compara las variantes con B = B̃ = 0 (renorm_policy=zero)")
        sim.require_trilinear(cfg)
        t = sim.tensor_of(cfg)
        dp = sim.diffusion_of(cfg)
        m = sim.mollifier_of(cfg)
        prediction = rc.drift_prediction(t, dp, m, cfg.mollifier.eps, band=cfg.modes_K)
        limit = tc.c_shift(t, dp)

        traj = sim.simulate(cfg, workers, burn_in=cfg.drift.burn_in)
        slopes = replica_slopes(traj.sample_times, traj.zero_mode)
        mean, se = mean_and_stderr(slopes)

        estimates = []
        tests = []
        tol = cfg.drift.rel_tolerance
        for a in range(cfg.d):
            pred = float(prediction[a])
            slope = float(mean[a])
            if pred != 0.0:
                rel = abs(slope - pred) / abs(pred)
                passed = rel <= tol and np.sign(slope) == np.sign(pred)
                stat, thr = rel, tol
                detail = f"error relativo ≤ {tol} y mismo signo que la predicción"
            else:
                # sin predicción de deriva: la pendiente debe ser compatible con 0
                rel = abs(slope)
                thr = Z_MAX * float(se[a]) + 1e-12
                passed = rel <= thr
                stat = rel
                detail = "predicción nula: |pendiente| ≤ 4 SE"
            estimates.append(
                DriftEstimate(
                    alpha=a,
                    slope=slope,
                    stderr=float(se[a]),
                    prediction=pred,
                    c_shift_limit=float(limit[a]),
                    relative_error=rel,
                )
            )
            tests.append(
                TestOutcome(
                    name=f"drift_alpha={a}",
                    statistic=stat,
                    threshold=thr,
                    passed=bool(passed),
                    detail=detail,
                )
            )
        rows = [e.model_dump() for e in estimates]
        self.repo.write_drift_csv(rows)
        self._write_trajectory(cfg, traj)
        metadata = {
            "drift_tolerance": tol,
            "drift_tolerance_note": (
                "tolerancia de ingeniería: la convergencia a ε fijo hacia c^α no tiene tasa conocida"
            ),
            "burn_in": cfg.drift.burn_in,
            "burn_in_bias_possible": cfg.drift.burn_in == 0.0,
            "prediction_band": cfg.modes_K,
        }
        return self._finish("drift", cfg, start, workers, tests, {"estimates": rows}, metadata)

from __future__ import annotations

import csv
import json
import logging
import struct
import time
from collections.abc import Iterable
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import ValidationError

from ..core import settings
from ..core.errors import ConfigError
from ..models.fields import SpectralField
from ..models.schemas import ExperimentReport, SimConfig
from ..services.spectral_grid import to_physical

SAMPLE_MAGIC = b"KPZS"
# magic + uint32 d, K, count (little endian)
SAMPLE_HEADER = struct.Struct("<4sIII")

RENORM_COLUMNS = ["eps", "c_eps", "C", "D", "C_tilde", "D_tilde", "C_plus_2D", "trunc_K", "trunc_err"]
MOMENT_COLUMNS = ["quantity", "alpha", "beta", "estimate", "stderr", "closed_form_band", "z_score"]
ZTEST_COLUMNS = ["checkpoint", "t", "k", "alpha", "beta", "part", "estimate", "target", "stderr", "z_score"]
DRIFT_COLUMNS = ["alpha", "slope", "stderr", "prediction", "c_shift_limit", "relative_error"]


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<raíz>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


class ResultsRepository:
    """Toda la E/S de ficheros: configuraciones de entrada y artefactos de salida."""

    def __init__(self, out_dir: str | Path | None = None):
        self.out_dir = Path(out_dir or settings.OUT_DIR)
        self.logger = logging.getLogger("kpzlab.repositories.results_repo")

    def load_config(self, path: str | Path, overrides: dict[str, Any] | None = None) -> SimConfig:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"no existe el fichero de configuración {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} no es JSON válido: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{path} debe contener un objeto JSON")
        # los flags de la CLI sólo sustituyen valores presentes
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        try:
            cfg = SimConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(f"configuración inválida: {_format_errors(e)}") from e
        self.logger.info(f"load_config path={path} scheme={cfg.scheme} d={cfg.d} seed={cfg.seed}")
        return cfg

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def write_json(self, name: str, payload: Any) -> Path:
        start = time.perf_counter()
        path = self._path(name)
        text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
        path.write_text(text + "\n", encoding="utf-8")
        duration_ms = round((time.perf_counter() - start) * 1000, 2)
        self.logger.info(f"write_json file={path.name} bytes={len(text)} duration_ms={duration_ms}")
        return path

    def write_report(self, report: ExperimentReport) -> Path:
        """report.json es reproducible; reloj y trabajadores van a run_meta.json."""
        self.write_json(
            settings.RUN_META_FILE,
            {
                "command": report.command,
                "wall_clock_s": report.wall_clock_s,
                "workers": report.workers,
            },
        )
        return self.write_json(settings.REPORT_FILE, report.deterministic_dump())

    def write_csv(self, name: str, columns: list[str], rows: Iterable[dict[str, Any]]) -> Path:
        start = time.perf_counter()
        path = self._path(name)
        count = 0
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: _cell(v) for k, v in row.items()})
                count += 1
        duration_ms = round((time.perf_counter() - start) * 1000, 2)
        self.logger.info(f"write_csv file={path.name} rows={count} duration_ms={duration_ms}")
        return path

    def write_renorm_csv(self, rows: Iterable[dict[str, Any]]) -> Path:
        return self.write_csv("renorm.csv", RENORM_COLUMNS, rows)

    def write_moments_csv(self, rows: Iterable[dict[str, Any]]) -> Path:
        return self.write_csv("moments.csv", MOMENT_COLUMNS, rows)

    def write_ztest_csv(self, rows: Iterable[dict[str, Any]]) -> Path:
        return self.write_csv("invariance_ztest.csv", ZTEST_COLUMNS, rows)

    def write_drift_csv(self, rows: Iterable[dict[str, Any]]) -> Path:
        return self.write_csv("drift.csv", DRIFT_COLUMNS, rows)

    def write_field(self, stem: str, f: SpectralField, M: int | None = None) -> tuple[Path, Path]:
        """Instantánea en malla (x, u¹..u^d) y coeficientes (k, Re, Im por componente)."""
        M = M or 2 * f.K + 2
        grid = to_physical(f, M)
        grid_rows = (
            {"x": i / M, **{f"u{a + 1}": grid[a, i] for a in range(f.d)}} for i in range(M)
        )
        grid_path = self.write_csv(
            f"{stem}_grid.csv", ["x"] + [f"u{a + 1}" for a in range(f.d)], grid_rows
        )
        spectral = {
            "K": f.K,
            "d": f.d,
            "modes": [
                {
                    "k": k,
                    "re": [float(f.coeffs[a, k].real) for a in range(f.d)],
                    "im": [float(f.coeffs[a, k].imag) for a in range(f.d)],
                }
                for k in range(f.K + 1)
            ],
        }
        return grid_path, self.write_json(f"{stem}_spectral.json", spectral)

    def write_samples(self, name: str, samples: np.ndarray) -> Path:
        """samples: (count, d, K+1) complejos; se guardan Re e Im intercalados en float64."""
        start = time.perf_counter()
        samples = np.asarray(samples, dtype=np.complex128)
        count, d, k1 = samples.shape
        path = self._path(name)
        body = np.ascontiguousarray(samples).view(np.float64).astype("<f8", copy=False)
        with path.open("wb") as f:
            f.write(SAMPLE_HEADER.pack(SAMPLE_MAGIC, d, k1 - 1, count))
            f.write(body.tobytes())
        duration_ms = round((time.perf_counter() - start) * 1000, 2)
        self.logger.info(
            f"write_samples file={path.name} count={count} d={d} K={k1 - 1} duration_ms={duration_ms}"
        )
        return path

    def read_samples(self, path: str | Path) -> np.ndarray:
        data = Path(path).read_bytes()
        magic, d, K, count = SAMPLE_HEADER.unpack_from(data)
        if magic != SAMPLE_MAGIC:
            raise ValueError(f"{path} no es un volcado de muestras")
        body = np.frombuffer(data, dtype="<f8", offset=SAMPLE_HEADER.size)
        return body.view(np.complex128).reshape(count, d, K + 1)


def _cell(v: Any) -> Any:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return v

"""
Fixtures y configuración para los tests.
"""
import json
import os

# Configurar variables de entorno antes de importar módulos que las usan
os.environ.setdefault("KPZ_LOG_LEVEL", "WARNING")
os.environ.setdefault("KPZ_WORKERS", "1")

import numpy as np
import pytest

from kpzlab.models.schemas import DiffusionPair
from kpzlab.models.symbols import gaussian
from kpzlab.services.tensor_core import ertas_kardar, trilinear_example


@pytest.fixture
def example_tensor():
    return trilinear_example()


@pytest.fixture
def ek_tensor():
    # λ₁ ≠ λ₂: Cole–Hopf sí, trilineal no
    return ertas_kardar(1.0, 2.0)


@pytest.fixture
def identity_pair():
    return DiffusionPair.from_sigma(np.eye(2))


@pytest.fixture
def scalar_pair():
    return DiffusionPair.from_sigma([[1.0]])


@pytest.fixture
def gauss():
    return gaussian()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def base_config():
    """Configuración mínima d=2 con el tensor de ejemplo trilineal y σ=I."""
    return {
        "d": 2,
        "gamma": [[[2.0, 1.0], [1.0, 1.0]], [[1.0, 1.0], [1.0, 2.0]]],
        "sigma": [[1.0, 0.0], [0.0, 1.0]],
    }


@pytest.fixture
def scalar_config():
    """Caso escalar Γ = σ = 1."""
    return {"d": 1, "gamma": [[[1.0]]], "sigma": [[1.0]]}


@pytest.fixture
def write_config(tmp_path):
    """Escribe un dict como JSON y devuelve la ruta."""

    def _write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write

"""
Jerarquía de errores del toolkit.

Cada error lleva el código de salida que la CLI devuelve cuando se propaga
hasta la capa de comandos.
"""
from __future__ import annotations

EXIT_OK = 0
EXIT_TEST_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class KpzError(Exception):
    exit_code = EXIT_NUMERICAL


class ConfigError(KpzError):
    """Configuración inválida o incompatible con el esquema."""

    exit_code = EXIT_CONFIG


class NumericalError(KpzError):
    """Fallo numérico: truncamiento, Cholesky, matrices singulares."""

    exit_code = EXIT_NUMERICAL


class TruncationError(NumericalError):
    pass


class InsufficientSamplesError(NumericalError):
    pass


class PreconditionError(KpzError):
    """La entrada no cumple la hipótesis que hace válido el resultado."""

    exit_code = EXIT_NUMERICAL

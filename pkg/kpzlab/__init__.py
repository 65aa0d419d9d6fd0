"""Toolkit espectral para KPZ acoplado y Burgers estocástico en el toro."""

__version__ = "1.0.0"

"""Assemblage moment matrices: device-independent steering, incompatibility and Tsirelson bounds."""

__version__ = "0.1.0"

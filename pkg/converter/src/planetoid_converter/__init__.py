"""Planetoid pickle bundle to PANDS v1 converter."""

from .convert import ConversionStats, ConverterError, PlanetoidBundle, convert

__all__ = ["ConversionStats", "ConverterError", "PlanetoidBundle", "convert"]

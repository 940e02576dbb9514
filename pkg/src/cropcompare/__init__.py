"""Cropland map intercomparison: accuracy assessment, consensus and downstream analysis."""

__version__ = "0.1.0"

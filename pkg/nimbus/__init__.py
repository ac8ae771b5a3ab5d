"""Thin-cloud synthesis and cirrus-driven correction for multispectral rasters."""

__version__ = "0.1.0"

# nimbus/spatial.py
"""Single-channel cloud fields and the patch pipeline for cirrus imagery."""

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Protocol

import numpy as np

from .errors import DataValidationError, ParameterError, ShapeError
from .models import (
    REFERENCE_WAVELENGTH,
    BandRaster,
    CloudField,
    FbmParams,
    MultiBandImage,
    PatchSpec,
    SensorProfile,
)
from .raster import read_raster, write_raster
from .seeding import make_rng, mix_seed

logger = logging.getLogger(__name__)

# ingested values in [-SNAP_EPSILON, 0) are treated as zero
SNAP_EPSILON = 1e-6


# --------------------------------------------------------------------
# fBm generator
# --------------------------------------------------------------------


def _value_noise(
    height: int, width: int, frequency: float, rng: np.random.Generator
) -> np.ndarray:
    """Lattice value noise, bilinearly interpolated, values in [0, 1)."""
    span = max(height, width)
    ys = np.arange(height, dtype=np.float64) * (frequency / span)
    xs = np.arange(width, dtype=np.float64) * (frequency / span)
    lattice = rng.random((int(ys[-1]) + 2, int(xs[-1]) + 2))

    yi = np.floor(ys).astype(np.intp)
    xi = np.floor(xs).astype(np.intp)
    fy = (ys - yi)[:, None]
    fx = (xs - xi)[None, :]
    rows = yi[:, None]
    cols = xi[None, :]

    v00 = lattice[rows, cols]
    v01 = lattice[rows, cols + 1]
    v10 = lattice[rows + 1, cols]
    v11 = lattice[rows + 1, cols + 1]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def fbm_noise(height: int, width: int, params: FbmParams) -> np.ndarray:
    """Octave sum of value noise, min-max normalized to [0, 1]."""
    total = np.zeros((height, width), dtype=np.float64)
    amplitude = 1.0
    frequency = params.base_frequency
    for octave in range(params.octaves):
        rng = make_rng(mix_seed(params.seed, octave))
        total += amplitude * _value_noise(height, width, frequency, rng)
        amplitude *= params.persistence
        frequency *= params.lacunarity

    lo, hi = float(total.min()), float(total.max())
    if hi <= lo:
        return np.zeros_like(total)
    return (total - lo) / (hi - lo)


def generate_fbm_cloud(
    width: int,
    height: int,
    params: FbmParams,
    wavelength: float = REFERENCE_WAVELENGTH,
) -> CloudField:
    if width < 1 or height < 1:
        raise ParameterError(f"cloud dimensions must be >= 1, got {width}x{height}")
    noise = fbm_noise(height, width, params)
    t = params.coverage_threshold
    m = params.max_radiance
    radiance = np.minimum(np.maximum(noise - t, 0.0) * (m / (1.0 - t)), m)
    return CloudField.from_array(radiance, wavelength)


def ingest_cloud(path: str | Path, profile: SensorProfile) -> CloudField:
    """Load an externally produced single-band cloud raster."""
    image = read_raster(path)
    if image.band_count != 1:
        raise ShapeError(
            f"{path} holds {image.band_count} bands; a cloud field needs exactly 1"
        )
    values = image.bands[0].values()
    if (values < -SNAP_EPSILON).any():
        raise DataValidationError(
            f"{path} has radiance below -{SNAP_EPSILON}: {values.min()}"
        )
    snapped = np.where(values < 0, 0.0, values)
    return CloudField.from_array(snapped, profile.reference_wavelength)


class CloudProvider(Protocol):
    def cloud(self, index: int, width: int, height: int, seed: int) -> CloudField: ...


class FbmCloudProvider:
    def __init__(
        self, params: FbmParams, wavelength: float = REFERENCE_WAVELENGTH
    ) -> None:
        self.params = params
        self.wavelength = wavelength

    def cloud(self, index: int, width: int, height: int, seed: int) -> CloudField:
        params = self.params.model_copy(update={"seed": seed})
        return generate_fbm_cloud(width, height, params, self.wavelength)


class RasterCloudProvider:
    """Round-robin over external cloud rasters, cropped top-left to the request."""

    def __init__(self, paths: Sequence[str | Path], profile: SensorProfile) -> None:
        if not paths:
            raise ParameterError("no cloud rasters to ingest")
        self.paths = list(paths)
        self.profile = profile

    def cloud(self, index: int, width: int, height: int, seed: int) -> CloudField:
        path = self.paths[index % len(self.paths)]
        field = ingest_cloud(path, self.profile)
        if field.width < width or field.height < height:
            raise ShapeError(
                f"{path} is {field.width}x{field.height}, "
                f"smaller than the requested {width}x{height}"
            )
        if (field.width, field.height) == (width, height):
            return field
        return CloudField.from_array(field.data[:height, :width], field.wavelength)


# --------------------------------------------------------------------
# Patch pipeline
# --------------------------------------------------------------------


def patch_anchors(height: int, width: int, spec: PatchSpec) -> list[tuple[int, int]]:
    """Top-left (y, x) of every patch that fits, row-major."""
    size = spec.patch_size
    if height < size or width < size:
        return []
    return [
        (y, x)
        for y in range(0, height - size + 1, spec.stride)
        for x in range(0, width - size + 1, spec.stride)
    ]


def extract_patches(image: BandRaster, spec: PatchSpec) -> list[BandRaster]:
    size = spec.patch_size
    return [
        image.with_data(image.data[y : y + size, x : x + size])
        for y, x in patch_anchors(image.height, image.width, spec)
    ]


def is_cloudy_patch(patch: BandRaster, spec: PatchSpec) -> bool:
    # compared at storage precision so a stored 0.015 counts as 0.015
    return bool(patch.data.max() >= np.float32(spec.cleaning_threshold))


def clean_patches(patches: Sequence[BandRaster], spec: PatchSpec) -> list[BandRaster]:
    """Drop patches whose maximum radiance is below the cleaning threshold."""
    return [patch for patch in patches if is_cloudy_patch(patch, spec)]


def patch_filename(stem: str, anchor: tuple[int, int], spec: PatchSpec) -> str:
    y, x = anchor
    return f"{stem}_p{y // spec.stride}_{x // spec.stride}.ras"


def write_patch_batch(
    stem: str,
    anchors: Sequence[tuple[int, int]],
    patches: Sequence[BandRaster],
    spec: PatchSpec,
    out_dir: str | Path,
) -> list[str]:
    """Write one RAS1 file per patch; returns `filename<TAB>y<TAB>x` index lines."""
    if len(anchors) != len(patches):
        raise ShapeError("every patch needs exactly one anchor")
    out_dir = Path(out_dir)
    lines = []
    for anchor, patch in zip(anchors, patches):
        name = patch_filename(stem, anchor, spec)
        write_raster(MultiBandImage(bands=(patch,)), out_dir / name)
        lines.append(f"{name}\t{anchor[0]}\t{anchor[1]}")
    logger.info("wrote %d patches for %s", len(lines), stem)
    return lines


# --------------------------------------------------------------------
# Thickness control
# --------------------------------------------------------------------


def adjust_thickness(
    cloud: CloudField, scale: float, cap: float | None = None
) -> CloudField:
    """Linear stretch by `scale`, then an optional upper radiance limit."""
    if scale < 0:
        raise ParameterError(f"thickness scale must be >= 0, got {scale}")
    if cap is not None and not cap > 0:
        raise ParameterError(f"thickness cap must be > 0, got {cap}")
    values = scale * cloud.raster.values()
    if cap is not None:
        values = np.minimum(values, cap)
    return CloudField.from_array(values, cloud.wavelength)

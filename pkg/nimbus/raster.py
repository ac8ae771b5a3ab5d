# nimbus/raster.py
"""RAS1 storage, radiometric calibration and the cirrus training normalization.

RAS1 layout::

    RAS1 <width> <height> <bands>\\n
    <wavelength or -> ... one per band\\n
    bands x height x width little-endian float32, band-sequential, row-major

Values are treated as unitless TOA quantities, typically within [0, 1].
"""

import logging
import math
from pathlib import Path

import numpy as np

from .errors import (
    DataValidationError,
    FormatError,
    StorageError,
    TruncationError,
)
from .models import BandRaster, CalibrationParams, MultiBandImage

logger = logging.getLogger(__name__)

MAGIC = "RAS1"
PAYLOAD_DTYPE = np.dtype("<f4")

NORMALIZATION_SCALE = 0.05


# --------------------------------------------------------------------
# RAS1 codec
# --------------------------------------------------------------------


def _format_wavelength(value: float | None) -> str:
    return "-" if value is None else repr(float(value))


def _parse_wavelength(token: str) -> float | None:
    if token == "-":
        return None
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"wavelength {token!r} is neither a number nor '-'")
    if not (math.isfinite(value) and value > 0):
        raise FormatError(f"wavelength {token!r} must be > 0")
    return value


def encode_raster(image: MultiBandImage) -> bytes:
    header = (
        f"{MAGIC} {image.width} {image.height} {image.band_count}\n"
        + " ".join(_format_wavelength(wl) for wl in image.wavelengths)
        + "\n"
    )
    payload = np.stack([band.data for band in image.bands]).astype(PAYLOAD_DTYPE)
    return header.encode("ascii") + payload.tobytes(order="C")


def decode_raster(blob: bytes) -> MultiBandImage:
    first_end = blob.find(b"\n")
    second_end = blob.find(b"\n", first_end + 1) if first_end >= 0 else -1
    if first_end < 0 or second_end < 0:
        raise FormatError("RAS1 header needs two LF-terminated lines")

    try:
        first = blob[:first_end].decode("ascii").split()
        second = blob[first_end + 1 : second_end].decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError("RAS1 header is not ASCII")

    if len(first) != 4 or first[0] != MAGIC:
        raise FormatError(f"bad RAS1 magic line: {blob[:first_end]!r}")
    try:
        width, height, band_count = (int(token) for token in first[1:])
    except ValueError:
        raise FormatError(f"non-integer dimensions in {blob[:first_end]!r}")
    if min(width, height, band_count) < 1:
        raise FormatError(
            f"dimensions must be >= 1, got {width}x{height}x{band_count}"
        )
    if len(second) != band_count:
        raise FormatError(
            f"header declares {band_count} bands but lists {len(second)} wavelengths"
        )
    wavelengths = [_parse_wavelength(token) for token in second]

    payload = blob[second_end + 1 :]
    expected = band_count * height * width * PAYLOAD_DTYPE.itemsize
    if len(payload) < expected:
        raise TruncationError(
            f"payload holds {len(payload)} bytes, header needs {expected}"
        )
    if len(payload) > expected:
        raise FormatError(
            f"payload holds {len(payload) - expected} bytes past the declared size"
        )

    stack = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(
        band_count, height, width
    )
    if not np.isfinite(stack).all():
        raise DataValidationError("payload contains NaN or Inf")
    return MultiBandImage.from_stack(stack.astype(np.float32), wavelengths)


def read_raster(path: str | Path) -> MultiBandImage:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    image = decode_raster(blob)
    logger.debug(
        "read %s: %dx%dx%d", path, image.width, image.height, image.band_count
    )
    return image


def write_raster(image: MultiBandImage, path: str | Path) -> None:
    blob = encode_raster(image)
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    logger.debug("wrote %s (%d bytes)", path, len(blob))


# --------------------------------------------------------------------
# Radiometry
# --------------------------------------------------------------------


def calibrate_to_toa(dn: BandRaster, params: CalibrationParams) -> BandRaster:
    """(gain * DN + offset) / sin(sun elevation), wavelength preserved."""
    sin_elev = math.sin(math.radians(params.sun_elevation))
    toa = (params.gain * dn.values() + params.offset) / sin_elev
    if not np.isfinite(toa).all():
        raise DataValidationError("calibration produced non-finite values")
    return dn.with_data(toa)


def calibrate_image(dn: MultiBandImage, params: CalibrationParams) -> MultiBandImage:
    return MultiBandImage(bands=tuple(calibrate_to_toa(b, params) for b in dn.bands))


def normalize_for_training(c: BandRaster) -> BandRaster:
    """Map cirrus radiance [0, 0.1] onto [-1, 1]; anything above 0.1 clamps to 1."""
    values = c.values()
    if (values < 0).any():
        raise DataValidationError("normalization expects non-negative radiance")
    scaled = np.minimum(values / NORMALIZATION_SCALE - 1.0, 1.0)
    return c.with_data(scaled)


def denormalize(x: BandRaster) -> BandRaster:
    values = x.values()
    if (values < -1.0).any() or (values > 1.0).any():
        raise DataValidationError("denormalization expects values in [-1, 1]")
    return x.with_data(NORMALIZATION_SCALE * (values + 1.0))

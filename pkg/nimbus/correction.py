# nimbus/correction.py
"""Cirrus-driven thin-cloud correction: subtract the extrapolated cloud per band.

Saturated cirrus or cirrus mixed with surface signal gets no special treatment;
the estimate is only as good as the cirrus band.
"""

import logging

import numpy as np

from .errors import ShapeError
from .models import (
    CloudField,
    CorrectionReport,
    GammaModel,
    MultiBandImage,
    SensorProfile,
)
from .spectral import extrapolate_all, extrapolate_band

logger = logging.getLogger(__name__)


def estimate_cloud(
    cirrus: CloudField, profile: SensorProfile, model: GammaModel
) -> MultiBandImage:
    """Per-band cloud radiance predicted from the cirrus band."""
    return extrapolate_all(cirrus, profile, model)


def correct_pgcs_m(
    cloudy: MultiBandImage,
    cirrus: CloudField,
    profile: SensorProfile,
    model: GammaModel,
) -> tuple[MultiBandImage, CorrectionReport]:
    # a cirrus band on a different grid is refused, never resampled
    if (cirrus.height, cirrus.width) != (cloudy.height, cloudy.width):
        raise ShapeError(
            f"cirrus is {cirrus.width}x{cirrus.height}, "
            f"cloudy image is {cloudy.width}x{cloudy.height}"
        )
    profile.check_image(cloudy, "cloudy image")

    corrected = []
    cloud_means = []
    clamped = []
    for band, wavelength in zip(cloudy.bands, profile.wavelengths):
        estimate = extrapolate_band(cirrus, wavelength, model).values()
        residual = band.values() - estimate
        negative = residual < 0
        residual[negative] = 0.0
        corrected.append(band.with_data(residual))
        cloud_means.append(float(estimate.mean()))
        clamped.append(float(np.count_nonzero(negative)) / negative.size)

    report = CorrectionReport(
        profile_name=profile.name,
        coefficient=model.coefficient,
        reference_wavelength=cirrus.wavelength,
        band_names=profile.band_names,
        cloud_means=tuple(cloud_means),
        clamped_fractions=tuple(clamped),
    )
    logger.info(
        "corrected %d bands; worst clamped fraction %.4f",
        len(corrected),
        max(clamped),
    )
    return MultiBandImage(bands=tuple(corrected)), report


def format_correction_report(report: CorrectionReport) -> str:
    lines = [
        f"profile = {report.profile_name}",
        f"coefficient = {report.coefficient!r}",
        f"reference_wavelength = {report.reference_wavelength!r}",
    ]
    for name, mean, fraction in zip(
        report.band_names, report.cloud_means, report.clamped_fractions
    ):
        lines.append(f"cloud_mean_{name} = {mean!r}")
        lines.append(f"clamped_fraction_{name} = {fraction!r}")
    return "\n".join(lines) + "\n"

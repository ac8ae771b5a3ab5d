# nimbus/spectral.py
"""Scattering-law extrapolation, gamma inversion and the binned LSGF fit.

Cloud radiance follows C = D / lambda^gamma. Taking the ratio of two bands
cancels D, so a reference band at lambda_r predicts any target band:

    C_t = (lambda_r / lambda_t) ** gamma(C_r) * C_r,   gamma(C_r) = a * ln(C_r)

with gamma clamped to its physical range [0, 4].
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from .errors import (
    DegeneratePairError,
    DomainError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    ShapeError,
    StorageError,
)
from .models import (
    Aggregator,
    BandRaster,
    BinStat,
    CloudField,
    GammaModel,
    GammaSample,
    GammaSampleSet,
    LsgfFit,
    MultiBandImage,
    SensorProfile,
)

logger = logging.getLogger(__name__)

DEFAULT_BIN_COUNT = 250
MODE_RESOLUTION = 0.01


# --------------------------------------------------------------------
# Forward model
# --------------------------------------------------------------------


def gamma_values(c_r: np.ndarray, model: GammaModel) -> np.ndarray:
    c = np.asarray(c_r, dtype=np.float64)
    if (c < 0).any():
        raise DomainError("reference radiance must be >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = model.coefficient * np.log(c)
    gamma = np.clip(raw, model.gamma_min, model.gamma_max)
    # at C_r = 0 the value is irrelevant since C_t(0) = 0
    return np.where(c > 0, gamma, model.gamma_max)


def gamma_of(c_r: float, model: GammaModel) -> float:
    return float(gamma_values(np.float64(c_r), model))


def extrapolate_values(
    c_r: np.ndarray, lambda_r: float, lambda_t: float, model: GammaModel
) -> np.ndarray:
    """Float64 kernel of the band extrapolation; 0 maps to 0."""
    if not lambda_t > 0:
        raise ParameterError(f"target wavelength must be > 0, got {lambda_t}")
    if not lambda_r > 0:
        raise ParameterError(f"reference wavelength must be > 0, got {lambda_r}")
    c = np.asarray(c_r, dtype=np.float64)
    factor = np.power(lambda_r / lambda_t, gamma_values(c, model))
    return np.where(c > 0, factor * c, 0.0)


def extrapolate_band(
    c_r: CloudField, lambda_t: float, model: GammaModel
) -> BandRaster:
    values = extrapolate_values(c_r.raster.values(), c_r.wavelength, lambda_t, model)
    return BandRaster(data=values, wavelength=lambda_t)


def extrapolate_all(
    c_r: CloudField, profile: SensorProfile, model: GammaModel
) -> MultiBandImage:
    """One extrapolated cloud band per profile band, in profile order."""
    return MultiBandImage(
        bands=tuple(extrapolate_band(c_r, wl, model) for wl in profile.wavelengths)
    )


# --------------------------------------------------------------------
# Inversion and sampling
# --------------------------------------------------------------------


def _check_pair(lambda_i: float, lambda_r: float) -> None:
    if not (lambda_i > 0 and lambda_r > 0):
        raise ParameterError("wavelengths must be > 0")
    if lambda_i == lambda_r:
        raise DegeneratePairError(f"band pair shares the wavelength {lambda_i}")


def invert_gamma_values(
    c_r: np.ndarray, c_i: np.ndarray, lambda_i: float, lambda_r: float
) -> np.ndarray:
    _check_pair(lambda_i, lambda_r)
    cr = np.asarray(c_r, dtype=np.float64)
    ci = np.asarray(c_i, dtype=np.float64)
    if (cr <= 0).any() or (ci <= 0).any():
        raise DomainError("gamma inversion needs strictly positive radiance")
    return np.log(ci / cr) / np.log(lambda_r / lambda_i)


def invert_gamma(c_r: float, c_i: float, lambda_i: float, lambda_r: float) -> float:
    """gamma = ln(C_i / C_r) / ln(lambda_r / lambda_i)."""
    gamma = invert_gamma_values(np.float64(c_r), np.float64(c_i), lambda_i, lambda_r)
    return float(gamma)


def collect_gamma_samples(
    cloud_bands: MultiBandImage, cirrus: CloudField, min_cr: float
) -> GammaSampleSet:
    """(C_r, gamma) for every pixel passing the guard, one per non-reference band.

    The bands must hold cloud radiance alone, already separated from the surface.
    """
    if (cloud_bands.height, cloud_bands.width) != (cirrus.height, cirrus.width):
        raise ShapeError(
            f"bands are {cloud_bands.width}x{cloud_bands.height}, "
            f"cirrus is {cirrus.width}x{cirrus.height}"
        )
    cr = cirrus.raster.values()
    guard = (cr >= min_cr) & (cr > 0)

    c_parts: list[np.ndarray] = []
    g_parts: list[np.ndarray] = []
    for idx, band in enumerate(cloud_bands.bands):
        if band.wavelength is None:
            raise ParameterError(f"band {idx} has no wavelength")
        if band.wavelength == cirrus.wavelength:
            continue
        ci = band.values()
        mask = guard & (ci > 0)
        c_parts.append(cr[mask])
        g_parts.append(
            invert_gamma_values(cr[mask], ci[mask], band.wavelength, cirrus.wavelength)
        )

    if not c_parts:
        return GammaSampleSet(c_r=[], gamma=[])
    samples = GammaSampleSet(c_r=np.concatenate(c_parts), gamma=np.concatenate(g_parts))
    logger.info("collected %d gamma samples", len(samples))
    return samples


# --------------------------------------------------------------------
# LSGF: local statistics, global fit
# --------------------------------------------------------------------


def _histogram_mode(values: np.ndarray) -> float:
    """Midpoint of the tallest fixed-width histogram cell; ties go to the lower one."""
    # unique() returns sorted cells, so argmax picks the lowest of tied cells
    cells, counts = np.unique(np.floor(values / MODE_RESOLUTION), return_counts=True)
    return (float(cells[np.argmax(counts)]) + 0.5) * MODE_RESOLUTION


def _r_squared(observed: np.ndarray, fitted: np.ndarray) -> float:
    ss_res = float(np.sum((observed - fitted) ** 2))
    ss_tot = float(np.sum((observed - observed.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def bin_samples(samples: GammaSampleSet, bin_count: int) -> list[BinStat]:
    """Equal-width bins over [min C_r, max C_r]; empty bins are dropped.

    Values are sorted inside each bin before reduction, so the statistics do
    not depend on sample order.
    """
    c, g = samples.c_r, samples.gamma
    lo, hi = float(c.min()), float(c.max())
    if hi > lo:
        idx = np.floor((c - lo) / (hi - lo) * bin_count).astype(np.intp)
        np.minimum(idx, bin_count - 1, out=idx)
    else:
        idx = np.zeros(c.size, dtype=np.intp)

    counts = np.bincount(idx, minlength=bin_count)
    bounds = np.cumsum(counts)[:-1]
    c_groups = np.split(c[np.lexsort((c, idx))], bounds)
    g_groups = np.split(g[np.lexsort((g, idx))], bounds)

    stats_: list[BinStat] = []
    for c_bin, g_bin in zip(c_groups, g_groups):
        if c_bin.size == 0:
            continue
        stats_.append(
            BinStat(
                mean_c_r=float(c_bin.mean()),
                mode_gamma=_histogram_mode(g_bin),
                median_gamma=float(np.median(g_bin)),
                mean_gamma=float(g_bin.mean()),
                count=int(c_bin.size),
            )
        )
    return stats_


def lsgf_fit(
    samples: GammaSampleSet | Sequence[GammaSample],
    bin_count: int = DEFAULT_BIN_COUNT,
    aggregator: Aggregator | str = Aggregator.MEAN,
) -> LsgfFit:
    """Fit gamma = a * ln(C_r) through the origin to per-bin aggregates."""
    if bin_count < 1:
        raise ParameterError(f"bin count must be >= 1, got {bin_count}")
    aggregator = Aggregator(aggregator)
    if not isinstance(samples, GammaSampleSet):
        samples = GammaSampleSet.from_samples(list(samples))
    if len(samples) == 0:
        raise InsufficientDataError("no samples to fit")

    bins = bin_samples(samples, bin_count)
    if len(bins) < 2:
        raise InsufficientDataError(
            f"LSGF needs at least 2 non-empty bins, got {len(bins)}"
        )

    log_c = np.log(np.array([b.mean_c_r for b in bins]))
    denom = float(np.dot(log_c, log_c))
    if denom == 0.0:
        raise InsufficientDataError("every bin sits at C_r = 1; slope is undefined")

    coefficients: dict[Aggregator, float] = {}
    r_squared: dict[Aggregator, float] = {}
    for agg in Aggregator:
        observed = np.array([b.aggregate(agg) for b in bins])
        a = float(np.dot(observed, log_c)) / denom
        coefficients[agg] = a
        r_squared[agg] = _r_squared(observed, a * log_c)

    chosen = np.array([b.aggregate(aggregator) for b in bins])
    diagnostic = stats.linregress(log_c, chosen)

    fit = LsgfFit(
        coefficient=coefficients[aggregator],
        aggregator=aggregator,
        coefficients=coefficients,
        r_squared=r_squared,
        bin_count=bin_count,
        bin_stats=tuple(bins),
        intercept_slope=float(diagnostic.slope),
        intercept=float(diagnostic.intercept),
    )
    logger.info(
        "LSGF %s: a=%.6f R2=%.4f over %d bins",
        aggregator.value,
        fit.coefficient,
        r_squared[aggregator],
        len(bins),
    )
    return fit


# --------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------


def write_samples_csv(samples: GammaSampleSet, path: str | Path) -> None:
    frame = pd.DataFrame({"c_r": samples.c_r, "gamma": samples.gamma})
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_samples_csv(path: str | Path) -> GammaSampleSet:
    try:
        frame = pd.read_csv(path, dtype="float64", float_precision="round_trip")
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
        raise FormatError(f"{path} is not a c_r,gamma CSV: {exc}") from exc
    if list(frame.columns) != ["c_r", "gamma"]:
        raise FormatError(
            f"{path} header must be 'c_r,gamma', got {list(frame.columns)}"
        )
    return GammaSampleSet(
        c_r=frame["c_r"].to_numpy(), gamma=frame["gamma"].to_numpy()
    )


def format_fit_report(fit: LsgfFit) -> str:
    lines = [
        f"coefficient = {fit.coefficient!r}",
        f"aggregator = {fit.aggregator.value}",
        f"bin_count = {fit.bin_count}",
        f"bins_used = {len(fit.bin_stats)}",
    ]
    for agg in Aggregator:
        lines.append(f"coefficient_{agg.value} = {fit.coefficients[agg]!r}")
    for agg in Aggregator:
        lines.append(f"r_squared_{agg.value} = {fit.r_squared[agg]!r}")
    lines.append(f"intercept_fit_slope = {fit.intercept_slope!r}")
    lines.append(f"intercept_fit_intercept = {fit.intercept!r}")
    lines.append("")
    lines.append("mean_c_r,mode_gamma,median_gamma,mean_gamma,count")
    for b in fit.bin_stats:
        lines.append(
            f"{b.mean_c_r!r},{b.mode_gamma!r},{b.median_gamma!r},"
            f"{b.mean_gamma!r},{b.count}"
        )
    return "\n".join(lines) + "\n"

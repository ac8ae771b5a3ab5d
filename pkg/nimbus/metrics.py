# nimbus/metrics.py
"""Full-reference quality metrics and the histogram overlap rate."""

import math
from collections.abc import Sequence

import numpy as np
from scipy import signal

from .errors import (
    DomainError,
    ParameterError,
    ShapeError,
    UndefinedCorrelationError,
)
from .models import BandRaster, HistogramOverlap, MetricReport, MultiBandImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEFAULT_PEAK = 1.0
DEFAULT_OVERLAP_BINS = 256


def _pair(a: MultiBandImage, b: MultiBandImage) -> tuple[np.ndarray, np.ndarray]:
    if a.band_count != b.band_count:
        raise ShapeError(f"band counts differ: {a.band_count} vs {b.band_count}")
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(
            f"image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    return a.stack(), b.stack()


def _mse(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((x - y) ** 2))


def rmse(a: MultiBandImage, b: MultiBandImage) -> float:
    x, y = _pair(a, b)
    return math.sqrt(_mse(x, y))


def psnr(a: MultiBandImage, b: MultiBandImage, peak: float = DEFAULT_PEAK) -> float:
    """Peak signal-to-noise ratio in dB; math.inf for identical images."""
    if not peak > 0:
        raise ParameterError(f"peak must be > 0, got {peak}")
    x, y = _pair(a, b)
    mse = _mse(x, y)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim_map(x: np.ndarray, y: np.ndarray, peak: float = DEFAULT_PEAK) -> np.ndarray:
    """Local SSIM over every fully contained 11x11 Gaussian window of one band."""
    if min(x.shape) < SSIM_WINDOW:
        raise ParameterError(
            f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {x.shape}"
        )
    window = gaussian_window()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def filt(image: np.ndarray) -> np.ndarray:
        return signal.correlate2d(image, window, mode="valid")

    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x**2
    var_y = filt(y * y) - mu_y**2
    cov = filt(x * y) - mu_x * mu_y
    return ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )


def ssim_per_band(
    a: MultiBandImage, b: MultiBandImage, peak: float = DEFAULT_PEAK
) -> list[float]:
    x, y = _pair(a, b)
    return [float(ssim_map(xb, yb, peak).mean()) for xb, yb in zip(x, y)]


def ssim(a: MultiBandImage, b: MultiBandImage, peak: float = DEFAULT_PEAK) -> float:
    return float(np.mean(ssim_per_band(a, b, peak)))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant image")
    return float(np.sum(dx * dy)) / (sx * sy)


def cc(a: MultiBandImage, b: MultiBandImage, per_band: bool = False) -> float:
    """Pearson correlation over all pixels and bands, or the mean of per-band values."""
    x, y = _pair(a, b)
    if per_band:
        values = [_pearson(xb.ravel(), yb.ravel()) for xb, yb in zip(x, y)]
        return float(np.mean(values))
    return _pearson(x.ravel(), y.ravel())


def spectral_angles(
    a: MultiBandImage, b: MultiBandImage
) -> tuple[np.ndarray, int]:
    """Per-pixel spectral angle in degrees, plus the count of skipped zero spectra."""
    if a.band_count < 2:
        raise ParameterError("SAM needs at least 2 bands")
    x, y = _pair(a, b)
    u = x.reshape(x.shape[0], -1)
    v = y.reshape(y.shape[0], -1)
    norm_u = np.sqrt(np.sum(u * u, axis=0))
    norm_v = np.sqrt(np.sum(v * v, axis=0))
    valid = (norm_u > 0) & (norm_v > 0)
    cos = np.sum(u[:, valid] * v[:, valid], axis=0) / (norm_u[valid] * norm_v[valid])
    angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return angles, int(valid.size - np.count_nonzero(valid))


def sam(a: MultiBandImage, b: MultiBandImage) -> float:
    angles, _ = spectral_angles(a, b)
    if angles.size == 0:
        raise DomainError("SAM is undefined: every pixel spectrum is zero")
    return float(angles.mean())


def evaluate(
    a: MultiBandImage, b: MultiBandImage, peak: float = DEFAULT_PEAK
) -> MetricReport:
    angles, skipped = spectral_angles(a, b)
    if angles.size == 0:
        raise DomainError("SAM is undefined: every pixel spectrum is zero")
    return MetricReport(
        rmse=rmse(a, b),
        psnr=psnr(a, b, peak),
        ssim=ssim(a, b, peak),
        cc=cc(a, b),
        sam=float(angles.mean()),
        sam_skipped=skipped,
    )


def histogram_overlap(
    real: Sequence[BandRaster],
    gen: Sequence[BandRaster],
    bin_count: int = DEFAULT_OVERLAP_BINS,
) -> HistogramOverlap:
    """Shared-bin histogram intersection, normalized by the real histogram's count."""
    if not real or not gen:
        raise ParameterError("histogram overlap needs real and generated bands")
    if bin_count < 1:
        raise ParameterError(f"bin count must be >= 1, got {bin_count}")
    real_values = np.concatenate([r.data.ravel() for r in real]).astype(np.float64)
    gen_values = np.concatenate([g.data.ravel() for g in gen]).astype(np.float64)
    lo = float(min(real_values.min(), gen_values.min()))
    hi = float(max(real_values.max(), gen_values.max()))
    edges = np.histogram_bin_edges(real_values, bins=bin_count, range=(lo, hi))
    h_real, _ = np.histogram(real_values, bins=edges)
    h_gen, _ = np.histogram(gen_values, bins=edges)
    rate = float(np.minimum(h_real, h_gen).sum()) / float(h_real.sum())
    return HistogramOverlap(rate=rate, bin_count=bin_count, lo=lo, hi=hi)


def format_metric_report(
    report: MetricReport, overlap: HistogramOverlap | None = None
) -> str:
    lines = [
        f"rmse = {report.rmse!r}",
        f"psnr = {'inf' if math.isinf(report.psnr) else repr(report.psnr)}",
        f"ssim = {report.ssim!r}",
        f"cc = {report.cc!r}",
        f"sam = {report.sam!r}",
        f"sam_skipped = {report.sam_skipped}",
    ]
    if overlap is not None:
        lines.append(f"overlap_rate = {overlap.rate!r}")
        lines.append(f"overlap_bins = {overlap.bin_count}")
    return "\n".join(lines) + "\n"

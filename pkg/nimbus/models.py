# nimbus/models.py
from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import DataValidationError, ParameterError, ShapeError

REFERENCE_WAVELENGTH = 1.375


def _frozen_array(value, dtype) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------
# Rasters
# --------------------------------------------------------------------


class BandRaster(BaseModel):
    """One spectral band: a (height, width) float32 grid plus its central wavelength."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    data: np.ndarray
    wavelength: float | None = None

    @field_validator("data", mode="before")
    @classmethod
    def _coerce_data(cls, value):
        arr = np.asarray(value)
        if arr.ndim != 2:
            raise ShapeError(f"band data must be 2-D, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"band data must be non-empty, got shape {arr.shape}")
        if arr.dtype == np.float32 and not arr.flags.writeable:
            data = arr
        else:
            data = _frozen_array(arr, np.float32)
        if not np.isfinite(data).all():
            raise DataValidationError("band data contains NaN or Inf")
        return data

    @field_validator("wavelength")
    @classmethod
    def _check_wavelength(cls, value: float | None) -> float | None:
        if value is not None and not (math.isfinite(value) and value > 0):
            raise DataValidationError(f"wavelength must be > 0, got {value}")
        return value

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    def values(self) -> np.ndarray:
        """Float64 working copy of the grid."""
        return self.data.astype(np.float64)

    def with_data(self, data: np.ndarray) -> BandRaster:
        return BandRaster(data=data, wavelength=self.wavelength)


class MultiBandImage(BaseModel):
    """Ordered, co-registered stack of bands sharing one grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bands: tuple[BandRaster, ...]

    @model_validator(mode="after")
    def _check_bands(self) -> MultiBandImage:
        if not self.bands:
            raise DataValidationError("an image needs at least one band")
        shape = self.bands[0].data.shape
        for idx, band in enumerate(self.bands[1:], start=1):
            if band.data.shape != shape:
                raise ShapeError(
                    f"band {idx} has shape {band.data.shape}, expected {shape}"
                )
        return self

    @classmethod
    def from_stack(
        cls, stack: np.ndarray, wavelengths: Sequence[float | None]
    ) -> MultiBandImage:
        if stack.ndim != 3 or stack.shape[0] != len(wavelengths):
            raise ShapeError(
                f"stack shape {stack.shape} does not match {len(wavelengths)} bands"
            )
        return cls(
            bands=tuple(
                BandRaster(data=layer, wavelength=wl)
                for layer, wl in zip(stack, wavelengths)
            )
        )

    @property
    def band_count(self) -> int:
        return len(self.bands)

    @property
    def height(self) -> int:
        return self.bands[0].height

    @property
    def width(self) -> int:
        return self.bands[0].width

    @property
    def wavelengths(self) -> tuple[float | None, ...]:
        return tuple(band.wavelength for band in self.bands)

    def stack(self) -> np.ndarray:
        """Float64 (bands, height, width) working copy."""
        return np.stack([band.data for band in self.bands]).astype(np.float64)


class CloudField(BaseModel):
    """Single-channel cloud radiance at the reference wavelength."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    raster: BandRaster

    @model_validator(mode="after")
    def _check_field(self) -> CloudField:
        if self.raster.wavelength is None:
            raise DataValidationError("a cloud field needs its reference wavelength")
        if (self.raster.data < 0).any():
            raise DataValidationError("cloud radiance must be non-negative")
        return self

    @classmethod
    def from_array(
        cls, data: np.ndarray, wavelength: float = REFERENCE_WAVELENGTH
    ) -> CloudField:
        return cls(raster=BandRaster(data=data, wavelength=wavelength))

    @property
    def data(self) -> np.ndarray:
        return self.raster.data

    @property
    def wavelength(self) -> float:
        return self.raster.wavelength

    @property
    def height(self) -> int:
        return self.raster.height

    @property
    def width(self) -> int:
        return self.raster.width


# --------------------------------------------------------------------
# Sensors and parameters
# --------------------------------------------------------------------


class SpectralBand(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    wavelength: float


class SensorProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    bands: tuple[SpectralBand, ...]
    reference_wavelength: float = REFERENCE_WAVELENGTH
    max_parallax_offset: int = 0

    @model_validator(mode="after")
    def _check_profile(self) -> SensorProfile:
        if not self.bands:
            raise ParameterError(f"profile {self.name!r} has no bands")
        names = [band.name for band in self.bands]
        if len(set(names)) != len(names):
            raise ParameterError(f"profile {self.name!r} repeats a band name")
        for band in self.bands:
            if not (math.isfinite(band.wavelength) and band.wavelength > 0):
                raise ParameterError(
                    f"band {band.name!r} wavelength must be > 0, got {band.wavelength}"
                )
        if not self.reference_wavelength > 0:
            raise ParameterError("reference wavelength must be > 0")
        if self.max_parallax_offset < 0:
            raise ParameterError("max parallax offset must be >= 0")
        return self

    @property
    def band_names(self) -> tuple[str, ...]:
        return tuple(band.name for band in self.bands)

    @property
    def wavelengths(self) -> tuple[float, ...]:
        return tuple(band.wavelength for band in self.bands)

    def check_image(self, image: MultiBandImage, role: str = "image") -> None:
        """Band k of `image` must be band k of the profile.

        Bands without a wavelength are matched by position only.
        """
        if image.band_count != len(self.bands):
            raise ShapeError(
                f"{role} has {image.band_count} bands, "
                f"profile {self.name!r} has {len(self.bands)}"
            )
        for idx, (band, expected) in enumerate(zip(image.bands, self.bands)):
            if band.wavelength is None:
                continue
            if not math.isclose(band.wavelength, expected.wavelength, rel_tol=1e-9):
                raise ShapeError(
                    f"{role} band {idx} is at {band.wavelength} µm, "
                    f"profile {self.name!r} expects {expected.name} "
                    f"at {expected.wavelength} µm"
                )


class CalibrationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    gain: float
    offset: float
    sun_elevation: float

    @model_validator(mode="after")
    def _check_params(self) -> CalibrationParams:
        if not (math.isfinite(self.gain) and math.isfinite(self.offset)):
            raise ParameterError("gain and offset must be finite")
        if not (0 < self.sun_elevation <= 90):
            raise ParameterError(
                f"sun elevation must lie in (0, 90] degrees, got {self.sun_elevation}"
            )
        return self


class FbmParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    octaves: int = 6
    persistence: float = 0.5
    lacunarity: float = 2.0
    # lattice cells across the longer image side at the first octave
    base_frequency: float = 4.0
    coverage_threshold: float = 0.4
    max_radiance: float = 0.1
    seed: int = 0

    @model_validator(mode="after")
    def _check_params(self) -> FbmParams:
        if self.octaves < 1:
            raise ParameterError("octaves must be >= 1")
        if not (0 < self.persistence <= 1):
            raise ParameterError("persistence must lie in (0, 1]")
        if not self.lacunarity > 1:
            raise ParameterError("lacunarity must be > 1")
        if not self.base_frequency > 0:
            raise ParameterError("base frequency must be > 0")
        if not (0 <= self.coverage_threshold < 1):
            raise ParameterError("coverage threshold must lie in [0, 1)")
        if not self.max_radiance > 0:
            raise ParameterError("max radiance must be > 0")
        return self


class PatchSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    patch_size: int = 512
    stride: int = 128
    cleaning_threshold: float = 0.015

    @model_validator(mode="after")
    def _check_spec(self) -> PatchSpec:
        if self.patch_size < 1:
            raise ParameterError("patch size must be >= 1")
        if not (1 <= self.stride <= self.patch_size):
            raise ParameterError("stride must lie in [1, patch_size]")
        return self


# --------------------------------------------------------------------
# Spectral law
# --------------------------------------------------------------------


class GammaModel(BaseModel):
    """gamma = coefficient * ln(C_r), clamped to [gamma_min, gamma_max]."""

    model_config = ConfigDict(frozen=True)

    coefficient: float = -0.14
    gamma_min: float = 0.0
    gamma_max: float = 4.0

    @model_validator(mode="after")
    def _check_model(self) -> GammaModel:
        if not math.isfinite(self.coefficient):
            raise ParameterError("gamma coefficient must be finite")
        if not self.gamma_min <= self.gamma_max:
            raise ParameterError("gamma_min must not exceed gamma_max")
        return self


class GammaSample(BaseModel):
    model_config = ConfigDict(frozen=True)

    c_r: float
    gamma: float

    @model_validator(mode="after")
    def _check_sample(self) -> GammaSample:
        if not self.c_r > 0:
            raise DataValidationError(f"sample c_r must be > 0, got {self.c_r}")
        if not math.isfinite(self.gamma):
            raise DataValidationError("sample gamma must be finite")
        return self


class GammaSampleSet(BaseModel):
    """Array-backed (c_r, gamma) scatter."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    c_r: np.ndarray
    gamma: np.ndarray

    @field_validator("c_r", "gamma", mode="before")
    @classmethod
    def _coerce(cls, value):
        return _frozen_array(np.ravel(value), np.float64)

    @model_validator(mode="after")
    def _check_set(self) -> GammaSampleSet:
        if self.c_r.shape != self.gamma.shape:
            raise ShapeError("c_r and gamma must have the same length")
        if (self.c_r <= 0).any() or not np.isfinite(self.c_r).all():
            raise DataValidationError("every sample c_r must be finite and > 0")
        if not np.isfinite(self.gamma).all():
            raise DataValidationError("every sample gamma must be finite")
        return self

    @classmethod
    def from_samples(cls, samples: Sequence[GammaSample]) -> GammaSampleSet:
        return cls(
            c_r=[s.c_r for s in samples],
            gamma=[s.gamma for s in samples],
        )

    def __len__(self) -> int:
        return int(self.c_r.size)

    def samples(self) -> Iterator[GammaSample]:
        for c_r, gamma in zip(self.c_r, self.gamma):
            yield GammaSample(c_r=float(c_r), gamma=float(gamma))


class Aggregator(str, Enum):
    MODE = "mode"
    MEDIAN = "median"
    MEAN = "mean"


class BinStat(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_c_r: float
    mode_gamma: float
    median_gamma: float
    mean_gamma: float
    count: int

    def aggregate(self, aggregator: Aggregator) -> float:
        return {
            Aggregator.MODE: self.mode_gamma,
            Aggregator.MEDIAN: self.median_gamma,
            Aggregator.MEAN: self.mean_gamma,
        }[aggregator]


class LsgfFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    coefficient: float
    aggregator: Aggregator
    coefficients: dict[Aggregator, float]
    r_squared: dict[Aggregator, float]
    bin_count: int
    bin_stats: tuple[BinStat, ...]
    # diagnostic fit gamma = slope * ln(c_r) + intercept; never used for synthesis
    intercept_slope: float
    intercept: float

    def as_gamma_model(self) -> GammaModel:
        return GammaModel(coefficient=self.coefficient)


# --------------------------------------------------------------------
# Pair synthesis
# --------------------------------------------------------------------


class ParallaxOffsets(BaseModel):
    model_config = ConfigDict(frozen=True)

    shifts: tuple[tuple[int, int], ...]
    bound: int

    @model_validator(mode="after")
    def _check_offsets(self) -> ParallaxOffsets:
        if self.bound < 0:
            raise ParameterError("offset bound must be >= 0")
        for idx, (dx, dy) in enumerate(self.shifts):
            if abs(dx) > self.bound or abs(dy) > self.bound:
                raise ParameterError(
                    f"band {idx} offset ({dx}, {dy}) exceeds bound {self.bound}"
                )
        return self

    @classmethod
    def zero(cls, band_count: int, bound: int = 0) -> ParallaxOffsets:
        return cls(shifts=((0, 0),) * band_count, bound=bound)

    @property
    def is_zero(self) -> bool:
        return all(dx == 0 and dy == 0 for dx, dy in self.shifts)

    def encode(self) -> str:
        return ";".join(f"{dx},{dy}" for dx, dy in self.shifts)

    @classmethod
    def decode(cls, text: str, bound: int) -> ParallaxOffsets:
        shifts = []
        for item in text.split(";"):
            dx, dy = item.split(",")
            shifts.append((int(dx), int(dy)))
        return cls(shifts=tuple(shifts), bound=bound)


class AugmentOp(str, Enum):
    """The eight dihedral transforms. Composite names read right to left."""

    IDENTITY = "identity"
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"
    HFLIP = "hflip"
    VFLIP = "vflip"
    HFLIP_ROT90 = "hflip_rot90"
    VFLIP_ROT90 = "vflip_rot90"

    @property
    def flip_turns(self) -> tuple[int, int]:
        """(f, k): k counter-clockwise turns, then a horizontal flip if f."""
        return _FLIP_TURNS[self]

    @classmethod
    def from_flip_turns(cls, flip: int, turns: int) -> AugmentOp:
        return _BY_FLIP_TURNS[(flip % 2, turns % 4)]

    def compose(self, other: AugmentOp) -> AugmentOp:
        """self ∘ other: apply other first, then self."""
        f1, k1 = self.flip_turns
        f2, k2 = other.flip_turns
        # a turn moved past a flip reverses direction
        turns = (-k1 if f2 else k1) + k2
        return AugmentOp.from_flip_turns(f1 ^ f2, turns)

    def inverse(self) -> AugmentOp:
        flip, turns = self.flip_turns
        if flip:
            return self
        return AugmentOp.from_flip_turns(0, -turns)


_FLIP_TURNS = {
    AugmentOp.IDENTITY: (0, 0),
    AugmentOp.ROT90: (0, 1),
    AugmentOp.ROT180: (0, 2),
    AugmentOp.ROT270: (0, 3),
    AugmentOp.HFLIP: (1, 0),
    AugmentOp.HFLIP_ROT90: (1, 1),
    AugmentOp.VFLIP: (1, 2),
    AugmentOp.VFLIP_ROT90: (1, 3),
}
_BY_FLIP_TURNS = {value: key for key, value in _FLIP_TURNS.items()}


class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    ground_path: str
    cloud_path: str
    cloudy_path: str
    seed: int
    thickness_scale: float
    cap: float | None
    offsets: ParallaxOffsets
    augment: AugmentOp
    cirrus_path: str


class DatasetManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    profile_name: str
    coefficient: float
    entries: tuple[ManifestEntry, ...]
    base_seed: int | None = None
    offset_bound: int = 0

    @model_validator(mode="after")
    def _check_paths(self) -> DatasetManifest:
        seen: set[str] = set()
        for entry in self.entries:
            for path in (
                entry.ground_path,
                entry.cloud_path,
                entry.cloudy_path,
                entry.cirrus_path,
            ):
                if path in seen:
                    raise DataValidationError(f"manifest path {path!r} is repeated")
                seen.add(path)
        return self


# --------------------------------------------------------------------
# Correction and evaluation
# --------------------------------------------------------------------


class CorrectionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    profile_name: str
    coefficient: float
    reference_wavelength: float
    band_names: tuple[str, ...]
    cloud_means: tuple[float, ...]
    clamped_fractions: tuple[float, ...]

    @model_validator(mode="after")
    def _check_fractions(self) -> CorrectionReport:
        if any(not (0.0 <= f <= 1.0) for f in self.clamped_fractions):
            raise DataValidationError("clamped fractions must lie in [0, 1]")
        return self


class MetricReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rmse: float
    psnr: float  # math.inf when the images are identical
    ssim: float
    cc: float
    sam: float
    sam_skipped: int = 0


class HistogramOverlap(BaseModel):
    model_config = ConfigDict(frozen=True)

    rate: float
    bin_count: int
    lo: float
    hi: float

    @model_validator(mode="after")
    def _check_rate(self) -> HistogramOverlap:
        if not (0.0 <= self.rate <= 1.0):
            raise DataValidationError(
                f"overlap rate must lie in [0, 1], got {self.rate}"
            )
        return self

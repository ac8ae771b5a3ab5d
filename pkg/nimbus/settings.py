# nimbus/settings.py
import configparser
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .errors import ConfigError, ParameterError, StorageError
from .models import FbmParams, GammaModel, SensorProfile
from .sensors import build_profile, builtin_profiles

# .env is read from the directory nimbus is launched in
load_dotenv(Path.cwd() / ".env")

DEFAULT_TRACKING_URI = "mlruns"


def thread_limit() -> int:
    """Parallelism cap from NIMBUS_THREADS. Changes speed only, never output bytes."""
    raw = os.getenv("NIMBUS_THREADS")
    if raw is None or not raw.strip():
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ParameterError(f"NIMBUS_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ParameterError(f"NIMBUS_THREADS must be >= 1, got {value}")
    return value


def tracking_uri() -> str:
    return os.getenv("MLFLOW_TRACKING_URI", DEFAULT_TRACKING_URI)


# --------------------------------------------------------------------
# Config file
# --------------------------------------------------------------------


class DatasetParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_pairs: int = 10
    scale_min: float = 0.5
    scale_max: float = 1.5
    cap: float | None = None
    clamp_export: bool = False

    @model_validator(mode="after")
    def _check_params(self) -> "DatasetParams":
        if self.n_pairs < 1:
            raise ParameterError("n_pairs must be >= 1")
        if not (0 <= self.scale_min <= self.scale_max):
            raise ParameterError("thickness range must satisfy 0 <= min <= max")
        if self.cap is not None and not self.cap > 0:
            raise ParameterError("cap must be > 0")
        return self


class MetricParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    peak: float = 1.0
    bins: int = 256

    @model_validator(mode="after")
    def _check_params(self) -> "MetricParams":
        if not self.peak > 0:
            raise ParameterError("peak must be > 0")
        if self.bins < 1:
            raise ParameterError("bins must be >= 1")
        return self


class Config(BaseModel):
    model_config = ConfigDict(frozen=True)

    profiles: dict[str, SensorProfile]
    gamma: GammaModel = GammaModel()
    generator: FbmParams = FbmParams()
    dataset: DatasetParams = DatasetParams()
    metrics: MetricParams = MetricParams()

    def profile(self, name: str) -> SensorProfile:
        try:
            return self.profiles[name]
        except KeyError:
            known = ", ".join(sorted(self.profiles))
            raise ParameterError(f"unknown sensor profile {name!r} (known: {known})")


def default_config() -> Config:
    return Config(profiles=builtin_profiles())


_SECTION_MODELS = {
    "gamma": GammaModel,
    "generator": FbmParams,
    "dataset": DatasetParams,
    "metrics": MetricParams,
}


def _section_values(
    parser: configparser.ConfigParser, section: str, model: type[BaseModel]
) -> dict[str, str | None]:
    allowed = set(model.model_fields) - {"seed"}
    values: dict[str, str | None] = {}
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ConfigError(f"[{section}] has no setting {key!r}")
        values[key] = None if raw.strip().lower() == "none" else raw.strip()
    return values


def _parse_bands(section: str, raw: str) -> list[tuple[str, float]]:
    bands = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, wavelength = item.partition(":")
        if not sep:
            raise ConfigError(
                f"[{section}] band {item!r} must look like name:wavelength"
            )
        try:
            bands.append((name.strip(), float(wavelength)))
        except ValueError:
            raise ConfigError(f"[{section}] band {item!r} has a non-numeric wavelength")
    return bands


def _parse_profile(
    parser: configparser.ConfigParser, section: str, base: SensorProfile | None
) -> SensorProfile:
    name = section.split(".", 1)[1].strip()
    options = dict(parser.items(section))
    unknown = set(options) - {"bands", "reference_wavelength", "max_parallax_offset"}
    if unknown:
        raise ConfigError(f"[{section}] has unknown settings {sorted(unknown)}")
    if "bands" in options:
        bands = _parse_bands(section, options["bands"])
    elif base is not None:
        bands = [(b.name, b.wavelength) for b in base.bands]
    else:
        raise ConfigError(f"[{section}] defines a new profile without bands")
    try:
        return build_profile(
            name=name,
            bands=bands,
            max_parallax_offset=int(
                options.get(
                    "max_parallax_offset",
                    base.max_parallax_offset if base else 0,
                )
            ),
            reference_wavelength=float(
                options.get(
                    "reference_wavelength",
                    base.reference_wavelength if base else 1.375,
                )
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def load_config(path: str | Path | None) -> Config:
    """Read an INI-style config; anything not set keeps its built-in default."""
    if path is None:
        return default_config()

    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise StorageError(f"cannot read config {path}: {exc}") from exc

    profiles = builtin_profiles()
    sections: dict[str, BaseModel] = {}
    try:
        for section in parser.sections():
            if section.startswith("profile."):
                profile = _parse_profile(parser, section, profiles.get(section[8:]))
                profiles[profile.name] = profile
            elif section in _SECTION_MODELS:
                model = _SECTION_MODELS[section]
                sections[section] = model(**_section_values(parser, section, model))
            else:
                raise ConfigError(f"unknown config section [{section}]")
    except ValidationError as exc:
        raise ConfigError(f"invalid value in {path}: {exc}") from exc

    return Config(profiles=profiles, **sections)

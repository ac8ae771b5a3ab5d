# nimbus/sensors.py
from .errors import ParameterError
from .models import REFERENCE_WAVELENGTH, SensorProfile, SpectralBand

# Central wavelengths in µm; parallax maxima in pixels.
PROFILES_TO_LOAD = [
    {
        "name": "landsat89",
        "bands": [
            ("coastal", 0.4500),
            ("blue", 0.4626),
            ("green", 0.5613),
            ("red", 0.6546),
            ("nir", 0.8650),
        ],
        "max_parallax_offset": 2,
    },
    {
        "name": "sentinel2",
        "bands": [
            ("coastal", 0.4430),
            ("blue", 0.4900),
            ("green", 0.5600),
            ("red", 0.6650),
            ("nir", 0.8420),
        ],
        "max_parallax_offset": 5,
    },
    {
        # no coastal band
        "name": "gaofen2",
        "bands": [
            ("blue", 0.4850),
            ("green", 0.5550),
            ("red", 0.6600),
            ("nir", 0.8330),
        ],
        "max_parallax_offset": 0,
    },
]


def build_profile(
    name: str,
    bands: list[tuple[str, float]],
    max_parallax_offset: int = 0,
    reference_wavelength: float = REFERENCE_WAVELENGTH,
) -> SensorProfile:
    return SensorProfile(
        name=name,
        bands=tuple(SpectralBand(name=b, wavelength=wl) for b, wl in bands),
        reference_wavelength=reference_wavelength,
        max_parallax_offset=max_parallax_offset,
    )


def builtin_profiles() -> dict[str, SensorProfile]:
    return {item["name"]: build_profile(**item) for item in PROFILES_TO_LOAD}


def get_profile(
    name: str, profiles: dict[str, SensorProfile] | None = None
) -> SensorProfile:
    catalogue = builtin_profiles() if profiles is None else profiles
    try:
        return catalogue[name]
    except KeyError:
        known = ", ".join(sorted(catalogue))
        raise ParameterError(f"unknown sensor profile {name!r} (known: {known})")

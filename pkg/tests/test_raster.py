import math

import numpy as np
import pytest

from nimbus.errors import (
    DataValidationError,
    FormatError,
    ParameterError,
    StorageError,
    TruncationError,
)
from nimbus.models import BandRaster, CalibrationParams, MultiBandImage
from nimbus.raster import (
    calibrate_image,
    calibrate_to_toa,
    decode_raster,
    denormalize,
    encode_raster,
    normalize_for_training,
    read_raster,
    write_raster,
)


def _band(values, wavelength=1.375) -> BandRaster:
    return BandRaster(data=np.asarray(values, dtype=np.float32), wavelength=wavelength)


# --------------------------------------------------------------------
# RAS1 codec
# --------------------------------------------------------------------


def test_decode_hand_built_file():
    payload = np.array([0.0, 0.05, 0.1, 0.02], dtype="<f4").tobytes()
    image = decode_raster(b"RAS1 2 2 1\n1.375\n" + payload)
    assert (image.width, image.height, image.band_count) == (2, 2, 1)
    assert image.wavelengths == (1.375,)
    expected = np.array([[0.0, 0.05], [0.1, 0.02]], dtype=np.float32)
    np.testing.assert_array_equal(image.bands[0].data, expected)


def test_single_value_payload_bytes():
    blob = encode_raster(MultiBandImage(bands=(_band([[0.05]]),)))
    assert blob == b"RAS1 1 1 1\n1.375\n" + bytes([0xCD, 0xCC, 0x4C, 0x3D])


def test_header_echoes_wavelengths():
    image = MultiBandImage(
        bands=(_band([[0.1]], 0.4626), _band([[0.2]], 0.5613))
    )
    assert encode_raster(image).split(b"\n")[1] == b"0.4626 0.5613"


def test_unknown_wavelength_is_a_dash():
    blob = encode_raster(MultiBandImage(bands=(_band([[0.0]], None),)))
    assert blob.split(b"\n")[1] == b"-"
    assert decode_raster(blob).wavelengths == (None,)


@pytest.mark.parametrize(
    "blob",
    [
        b"RAS1 0 4 1\n1.375\n",
        b"RAS2 1 1 1\n1.375\n" + bytes(4),
        b"RAS1 1 1\n1.375\n" + bytes(4),
        b"RAS1 1 1 1\n",
        b"RAS1 1 1 2\n1.375\n" + bytes(8),
        b"RAS1 1 1 1\n0\n" + bytes(4),
        b"RAS1 1 1 1\nabc\n" + bytes(4),
        b"RAS1 1 1 1\n1.375\n" + bytes(5),
    ],
)
def test_malformed_files_are_format_errors(blob):
    with pytest.raises(FormatError):
        decode_raster(blob)


def test_short_payload_is_truncation():
    with pytest.raises(TruncationError):
        decode_raster(b"RAS1 2 2 1\n-\n" + bytes(12))


def test_nan_payload_is_rejected():
    payload = np.array([np.nan], dtype="<f4").tobytes()
    with pytest.raises(DataValidationError):
        decode_raster(b"RAS1 1 1 1\n-\n" + payload)


def test_round_trip_is_bit_identical(tmp_path, rng):
    shapes = [(1, 1, 1), (1, 3, 2), (3, 5, 7), (2, 1, 9)]
    shapes += [tuple(int(v) for v in rng.integers(1, 12, size=3)) for _ in range(96)]
    for i, (bands, height, width) in enumerate(shapes):
        stack = rng.uniform(-1.0, 1.0, size=(bands, height, width))
        wavelengths = [float(w) for w in rng.uniform(0.4, 2.5, size=bands)]
        image = MultiBandImage.from_stack(stack, wavelengths)
        path = tmp_path / f"{i}.ras"
        write_raster(image, path)
        back = read_raster(path)
        assert back.wavelengths == image.wavelengths
        for a, b in zip(image.bands, back.bands):
            assert a.data.tobytes() == b.data.tobytes()
        assert path.read_bytes() == encode_raster(back)


def test_missing_file_is_storage_error(tmp_path):
    with pytest.raises(StorageError) as err:
        read_raster(tmp_path / "absent.ras")
    assert err.value.exit_code == 3


def test_unwritable_path_is_storage_error(tmp_path):
    image = MultiBandImage(bands=(_band([[0.0]]),))
    with pytest.raises(StorageError):
        write_raster(image, tmp_path / "missing" / "x.ras")


# --------------------------------------------------------------------
# Radiometry
# --------------------------------------------------------------------


def _calibrate(dn: float, gain: float, offset: float, elevation: float) -> float:
    params = CalibrationParams(gain=gain, offset=offset, sun_elevation=elevation)
    return float(calibrate_to_toa(_band([[dn]]), params).data[0, 0])


def test_calibration_formula():
    assert _calibrate(10000, 2e-5, -0.1, 90) == pytest.approx(0.1, rel=1e-6)
    assert _calibrate(10000, 2e-5, -0.1, 30) == pytest.approx(0.2, rel=1e-6)


def test_unit_calibration_is_identity(rng):
    image = MultiBandImage.from_stack(rng.uniform(0, 1, (2, 4, 4)), [0.5, None])
    params = CalibrationParams(gain=1.0, offset=0.0, sun_elevation=90.0)
    out = calibrate_image(image, params)
    np.testing.assert_array_equal(out.stack(), image.stack())
    assert out.wavelengths == image.wavelengths


@pytest.mark.parametrize("seed", range(5))
def test_calibration_is_affine_in_dn(seed):
    rng = np.random.default_rng(seed)
    params = CalibrationParams(gain=2e-5, offset=-0.1, sun_elevation=45.0)
    x = rng.uniform(0, 30000, (16, 16))
    y = rng.uniform(0, 30000, (16, 16))
    a, b = rng.uniform(0.0, 1.0, 2)

    def toa(dn):
        return calibrate_to_toa(_band(dn), params).values()

    combined = toa(a * x + b * y)
    expected = a * toa(x) + b * toa(y) + (1.0 - a - b) * toa(np.zeros((16, 16)))
    np.testing.assert_allclose(combined, expected, atol=1e-5)


@pytest.mark.parametrize("elevation", [0.0, -5.0, 90.5, math.nan])
def test_sun_elevation_out_of_range(elevation):
    with pytest.raises(ParameterError):
        CalibrationParams(gain=1.0, offset=0.0, sun_elevation=elevation)


@pytest.mark.parametrize(
    "value, expected", [(0.05, 0.0), (0.0, -1.0), (0.1, 1.0), (0.12, 1.0)]
)
def test_normalize_for_training(value, expected):
    out = normalize_for_training(_band([[value]]))
    assert float(out.data[0, 0]) == pytest.approx(expected, abs=1e-6)


def test_normalize_rejects_negative_radiance():
    with pytest.raises(DataValidationError):
        normalize_for_training(_band([[-0.01]]))


def test_normalize_then_denormalize_round_trips():
    back = denormalize(normalize_for_training(_band([[0.0371]])))
    assert float(back.data[0, 0]) == pytest.approx(0.0371, abs=1e-7)


def test_denormalize():
    out = denormalize(_band([[-1.0, 0.0, 1.0]]))
    np.testing.assert_allclose(out.data[0], [0.0, 0.05, 0.1], atol=1e-7)
    with pytest.raises(DataValidationError):
        denormalize(_band([[1.5]]))

import pytest

from nimbus.errors import ConfigError, NimbusError, ParameterError, StorageError
from nimbus.settings import default_config, load_config, thread_limit, tracking_uri


def _write(tmp_path, text: str):
    path = tmp_path / "nimbus.ini"
    path.write_text(text, encoding="utf-8")
    return path


def test_thread_limit(monkeypatch):
    monkeypatch.delenv("NIMBUS_THREADS", raising=False)
    assert thread_limit() == 1
    monkeypatch.setenv("NIMBUS_THREADS", "3")
    assert thread_limit() == 3
    for bad in ("abc", "0"):
        monkeypatch.setenv("NIMBUS_THREADS", bad)
        with pytest.raises(ParameterError):
            thread_limit()


def test_tracking_uri(monkeypatch):
    monkeypatch.delenv("MLFLOW_TRACKING_URI", raising=False)
    assert tracking_uri() == "mlruns"
    monkeypatch.setenv("MLFLOW_TRACKING_URI", "file:/tmp/runs")
    assert tracking_uri() == "file:/tmp/runs"


def test_defaults():
    config = load_config(None)
    assert config == default_config()
    assert set(config.profiles) == {"landsat89", "sentinel2", "gaofen2"}
    assert config.gamma.coefficient == -0.14
    assert config.profile("landsat89").max_parallax_offset == 2
    assert config.profile("gaofen2").band_names == ("blue", "green", "red", "nir")
    with pytest.raises(ParameterError):
        config.profile("modis")


def test_file_overrides(tmp_path):
    config = load_config(
        _write(
            tmp_path,
            "[gamma]\ncoefficient = -0.15\n"
            "[dataset]\nn_pairs = 3\ncap = none\nclamp_export = true\n"
            "[metrics]\nbins = 128\n"
            "[generator]\noctaves = 4\n"
            "[profile.custom]\nbands = a:0.5, b:0.6\nmax_parallax_offset = 1\n"
            "[profile.landsat89]\nmax_parallax_offset = 0\n",
        )
    )
    assert config.gamma.coefficient == -0.15
    assert config.dataset.n_pairs == 3
    assert config.dataset.cap is None
    assert config.dataset.clamp_export is True
    assert config.metrics.bins == 128
    assert config.generator.octaves == 4
    custom = config.profile("custom")
    assert custom.wavelengths == (0.5, 0.6)
    assert custom.reference_wavelength == 1.375
    landsat = config.profile("landsat89")
    assert landsat.max_parallax_offset == 0
    assert len(landsat.bands) == 5


@pytest.mark.parametrize(
    "text",
    [
        "[weather]\nsunny = yes\n",
        "[gamma]\nslope = 1\n",
        "[dataset]\nn_pairs = many\n",
        "[generator]\nseed = 4\n",
        "[profile.new]\nmax_parallax_offset = 1\n",
        "[profile.new]\nbands = a0.5\n",
        "[profile.new]\nbands = a:x\n",
        "[profile.new]\nbands = a:0.5\ncolour = red\n",
        "not an ini file",
    ],
)
def test_invalid_config(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, text))


def test_out_of_range_value(tmp_path):
    with pytest.raises(NimbusError) as err:
        load_config(_write(tmp_path, "[dataset]\nscale_min = 2\nscale_max = 1\n"))
    assert err.value.exit_code == 4


def test_missing_config_file(tmp_path):
    with pytest.raises(StorageError):
        load_config(tmp_path / "absent.ini")

import numpy as np
import pytest

from nimbus.models import CloudField, GammaModel, MultiBandImage
from nimbus.raster import write_raster
from nimbus.sensors import get_profile


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240517)


@pytest.fixture
def landsat():
    return get_profile("landsat89")


@pytest.fixture
def gaofen():
    return get_profile("gaofen2")


@pytest.fixture
def model() -> GammaModel:
    return GammaModel()


@pytest.fixture
def make_image():
    def _make(stack, wavelengths=None) -> MultiBandImage:
        stack = np.asarray(stack, dtype=np.float32)
        if stack.ndim == 2:
            stack = stack[None]
        if wavelengths is None:
            wavelengths = [None] * stack.shape[0]
        return MultiBandImage.from_stack(stack, wavelengths)

    return _make


@pytest.fixture
def random_ground(rng, landsat):
    def _ground(height: int = 32, width: int = 32, lo: float = 0.01, hi: float = 0.3):
        stack = rng.uniform(lo, hi, size=(len(landsat.bands), height, width))
        return MultiBandImage.from_stack(stack, landsat.wavelengths)

    return _ground


@pytest.fixture
def random_cirrus(rng):
    def _cirrus(height: int = 32, width: int = 32, hi: float = 0.1) -> CloudField:
        return CloudField.from_array(rng.uniform(0.0, hi, size=(height, width)))

    return _cirrus


@pytest.fixture
def write_image(tmp_path):
    def _write(image: MultiBandImage, name: str):
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        write_raster(image, path)
        return path

    return _write

import numpy as np
import pytest

from vibroscan.server import TextureStore, TouchServer
from vibroscan.vibmap import VibrationMap, write_map, write_preview


def full_map(data) -> VibrationMap:
    """Map where every pixel is touched; stats describe the grid as-is."""
    arr = np.asarray(data, dtype=np.float32)
    vals = arr.astype(np.float64)
    return VibrationMap(
        data=arr,
        touched=np.ones(arr.shape, dtype=bool),
        normalized=True,
        raw_min=float(vals.min()),
        raw_max=float(vals.max()),
        raw_mean=float(vals.mean()),
        raw_std=float(vals.std()),
    )


def checker_bands_map(size: int = 40, band_px: int = 10, lo: float = 0.25, hi: float = 0.75):
    """Vertical bands alternating lo/hi, with one 0 and one 1 pixel so the
    grid is a valid normalized map without rescaling the plateaus."""
    data = np.empty((size, size), dtype=np.float32)
    for x in range(size):
        data[:, x] = lo if (x // band_px) % 2 == 0 else hi
    data[0, 0] = 0.0
    data[0, 1] = 1.0
    return full_map(data)


def gradient_map(w: int = 16, h: int = 8):
    ramp = np.linspace(0.0, 1.0, w, dtype=np.float32)
    return full_map(np.tile(ramp, (h, 1)))


@pytest.fixture
def texture_dir(tmp_path):
    d = tmp_path / "textures"
    d.mkdir()
    checker = checker_bands_map()
    grad = gradient_map()
    write_map(checker, d / "checker.vibmap")
    write_preview(checker, d / "checker.png")
    write_map(grad, d / "gradient.vibmap")
    write_preview(grad, d / "gradient.png")
    return d


@pytest.fixture
def texture_store(texture_dir):
    return TextureStore.from_directory(texture_dir)


@pytest.fixture
def running_server(texture_store):
    srv = TouchServer(texture_store, port=0)
    srv.start()
    yield srv
    srv.stop()

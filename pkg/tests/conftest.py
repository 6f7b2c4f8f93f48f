import numpy as np
import pytest

from gcdtc.imaging import write_ppm
from helpers import make_test_image


@pytest.fixture
def small_image(tmp_path):
    """A 12x12x3 integer image on disk, small enough for fast solves."""
    img = make_test_image(12, 12, seed=3)
    path = tmp_path / "input.ppm"
    write_ppm(img, path)
    return path, img

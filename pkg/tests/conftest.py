import logging

import numpy as np
import pytest

from varimorph import constraint_gen as cg
from varimorph import extract, formats, morph, phantoms

SIZE = 64


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """No user defaults file, log files under tmp, fixed manifest timestamp."""
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path / "xdg"))
    monkeypatch.setenv("VARIMORPH_CONFIG", str(tmp_path / "no-defaults"))
    monkeypatch.setenv("CURRENT_DATETIME", "2026-01-01T00:00:00Z")
    monkeypatch.delenv("VARIMORPH_PRECISION", raising=False)
    monkeypatch.delenv("VARIMORPH_WORKERS", raising=False)
    yield
    logger = logging.getLogger("varimorph")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


def unit_set(img, max_pairs=400):
    """Image constraints thinned and scaled to the unit box, as the pipeline does."""
    cset = cg.thin_constraints(cg.image_to_constraints(img), max_pairs)
    return cset.scaled(1.0 / (SIZE - 1))


def image_contour(img):
    """Mid-gray contour of an image in unit-box coordinates."""
    grid = extract.SampledGrid(((0.0, 0.0), (1.0, 1.0)), img.pixels.T)
    return extract.marching_squares(grid, cg.MID_GRAY)


@pytest.fixture(scope="session")
def x_image():
    return phantoms.cross_image(SIZE)


@pytest.fixture(scope="session")
def o_image():
    return phantoms.ring_image(SIZE)


@pytest.fixture(scope="session")
def x_set(x_image):
    return unit_set(x_image)


@pytest.fixture(scope="session")
def o_set(o_image):
    return unit_set(o_image)


@pytest.fixture(scope="session")
def xo_morph(x_set, o_set):
    return morph.build_morph(x_set, o_set, 1.0)


@pytest.fixture(scope="session")
def unit_grid():
    from varimorph.extract import GridSpec

    return GridSpec(((0.0, 0.0), (1.0, 1.0)), 96)


@pytest.fixture
def pgm_pair(tmp_path, x_image, o_image):
    a, b = tmp_path / "x.pgm", tmp_path / "o.pgm"
    formats.write_pgm(x_image, str(a))
    formats.write_pgm(o_image, str(b))
    return str(a), str(b)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

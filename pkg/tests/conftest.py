import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cropcompare.grid import MASK_NODATA, BinaryMask, GridSpec  # noqa: E402
from cropcompare.synthetic import build_fixture  # noqa: E402

DATA = Path(__file__).parent / "data"


def unit_grid(h, w, px=1.0, crs="EPSG:32636", origin=(0.0, None)) -> GridSpec:
    x0, y0 = origin
    return GridSpec(x0, float(h * px) if y0 is None else y0, px, px, w, h, crs)


def random_mask(rng, h, w, nodata_frac=0.0, grid=None, p=0.5) -> BinaryMask:
    values = (rng.random((h, w)) < p).astype(np.uint8)
    if nodata_frac:
        values[rng.random((h, w)) < nodata_frac] = MASK_NODATA
    return BinaryMask(grid or unit_grid(h, w), values, MASK_NODATA)


@pytest.fixture(scope="session")
def fixture_config(tmp_path_factory):
    return build_fixture(tmp_path_factory.mktemp("fixture"), seed=7)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240101))


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])

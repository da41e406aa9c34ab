import numpy as np
import pytest

from floquet_spec.errors import SpecError
from floquet_spec.regions import Rectangle


def test_parse_and_bounds():
    r = Rectangle.parse("-1,2,-0.5,0.5")
    assert (r.width, r.height, r.center) == (3.0, 1.0, 0.5 + 0j)
    with pytest.raises(SpecError):
        Rectangle.parse("1,0,0,1")


def test_contour_orientation_and_integral():
    z, dz = Rectangle(-1, 1, -1, 1).contour(400)
    assert np.sum(dz / z) == pytest.approx(2j * np.pi, rel=1e-4)
    assert np.sum(dz) == pytest.approx(0, abs=1e-12)


def test_split_covers_area():
    r = Rectangle(0, 8, 0, 1)
    parts = r.split()
    assert sum(p.width * p.height for p in parts) == pytest.approx(8.0)

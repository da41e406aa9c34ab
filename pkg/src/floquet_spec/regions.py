"""Axis-aligned rectangles in the complex plane and their contours."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from floquet_spec.errors import SpecError


@dataclass(frozen=True)
class Rectangle:
    """``[re0, re1] x [im0, im1]``."""

    re0: float
    re1: float
    im0: float
    im1: float

    def __post_init__(self):
        for name in ("re0", "re1", "im0", "im1"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (np.isfinite([self.re0, self.re1, self.im0, self.im1]).all()):
            raise SpecError("rectangle bounds must be finite", "window")
        if self.re1 < self.re0 or self.im1 < self.im0:
            raise SpecError("rectangle bounds must satisfy re0 <= re1 and im0 <= im1", "window")

    @classmethod
    def parse(cls, text: str) -> "Rectangle":
        """Parse ``"re0,re1,im0,im1"``."""
        try:
            vals = [float(x) for x in str(text).split(",")]
        except ValueError:
            raise SpecError(f"cannot parse {text!r} as four numbers", "window") from None
        if len(vals) != 4:
            raise SpecError(f"expected four comma-separated numbers, got {len(vals)}", "window")
        return cls(*vals)

    @classmethod
    def bounding(cls, points) -> "Rectangle":
        z = np.asarray(list(points), dtype=complex)
        return cls(z.real.min(), z.real.max(), z.imag.min(), z.imag.max())

    @property
    def re(self):
        return (self.re0, self.re1)

    @property
    def im(self):
        return (self.im0, self.im1)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re0 + self.re1), 0.5 * (self.im0 + self.im1))

    @property
    def width(self) -> float:
        return self.re1 - self.re0

    @property
    def height(self) -> float:
        return self.im1 - self.im0

    @property
    def corners(self):
        return (complex(self.re0, self.im0), complex(self.re1, self.im0),
                complex(self.re1, self.im1), complex(self.re0, self.im1))

    def contains(self, z, pad: float = 0.0) -> bool:
        z = complex(z)
        return (self.re0 - pad <= z.real <= self.re1 + pad
                and self.im0 - pad <= z.imag <= self.im1 + pad)

    def contour(self, nodes: int):
        """Counter-clockwise trapezoid nodes and weights ``dz`` on the boundary.

        Nodes are distributed along the sides in proportion to their lengths
        (at least 4 per side) and include the corners.  Closed-contour
        trapezoid weights are ``(z_{j+1} - z_{j-1}) / 2``.
        """
        lengths = np.array([self.width, self.height, self.width, self.height])
        perim = lengths.sum()
        if perim == 0:
            raise SpecError("degenerate rectangle", "window")
        counts = np.maximum(4, np.round(nodes * lengths / perim).astype(int))
        pts = []
        c = self.corners
        for k in range(4):
            a, b = c[k], c[(k + 1) % 4]
            s = np.arange(counts[k]) / counts[k]
            pts.append(a + (b - a) * s)
        z = np.concatenate(pts)
        dz = 0.5 * (np.roll(z, -1) - np.roll(z, 1))
        return z, dz

    def split(self):
        """Four quadrants (split alongside the longer side first if elongated)."""
        cr, ci = self.center.real, self.center.imag
        if self.width > 4 * self.height:
            return [Rectangle(self.re0, cr, self.im0, self.im1),
                    Rectangle(cr, self.re1, self.im0, self.im1)]
        if self.height > 4 * self.width:
            return [Rectangle(self.re0, self.re1, self.im0, ci),
                    Rectangle(self.re0, self.re1, ci, self.im1)]
        return [Rectangle(self.re0, cr, self.im0, ci), Rectangle(cr, self.re1, self.im0, ci),
                Rectangle(self.re0, cr, ci, self.im1), Rectangle(cr, self.re1, ci, self.im1)]

    def grown(self, pad: float) -> "Rectangle":
        return Rectangle(self.re0 - pad, self.re1 + pad, self.im0 - pad, self.im1 + pad)

    def to_dict(self) -> dict:
        return {"re0": self.re0, "re1": self.re1, "im0": self.im0, "im1": self.im1}

"""Uniform raster grids and scalar field samples.

The grid is node-centered: node (i, j) sits at
``origin + (i * spacing_x, j * spacing_y)`` with ``i in [0, nx)`` indexing x
and ``j in [0, ny)`` indexing y.  Arrays are stored with shape ``(ny, nx)``
(row = y) so they render naturally as images.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NaNField, SizeMismatch


@dataclass(frozen=True)
class Grid:
    """Uniform 2D evaluation grid with an inside-domain mask."""

    origin: np.ndarray          # (2,)
    spacing: np.ndarray         # (2,) positive
    nx: int
    ny: int
    mask: np.ndarray = None     # (ny, nx) bool; None means all inside

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        spacing = np.asarray(self.spacing, dtype=float)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        if origin.shape != (2,) or spacing.shape != (2,):
            raise ValueError("origin and spacing must be 2-vectors")
        if not (spacing > 0).all():
            raise ValueError("grid spacing must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one node per axis")
        if self.mask is None:
            object.__setattr__(self, "mask", np.ones((self.ny, self.nx), dtype=bool))
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (self.ny, self.nx):
                raise ValueError("mask shape must be (ny, nx)")
            object.__setattr__(self, "mask", mask)
        if not self.mask.any():
            raise ValueError("grid mask has no inside nodes")

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + self.spacing[0] * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + self.spacing[1] * np.arange(self.ny)

    @property
    def cell_area(self) -> float:
        return float(self.spacing[0] * self.spacing[1])

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the node lattice."""
        return (
            float(self.origin[0]),
            float(self.origin[0] + self.spacing[0] * (self.nx - 1)),
            float(self.origin[1]),
            float(self.origin[1] + self.spacing[1] * (self.ny - 1)),
        )

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape (ny*nx, 2), row-major over (y, x)."""
        xx, yy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def with_mask(self, mask: np.ndarray) -> "Grid":
        return replace(self, mask=np.asarray(mask, dtype=bool))

    def same_lattice(self, other: "Grid") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and np.allclose(self.origin, other.origin)
            and np.allclose(self.spacing, other.spacing)
        )


def reference_grid(box: tuple[float, float, float, float], nx: int, ny: int,
                   mask: np.ndarray | None = None) -> Grid:
    """Grid spanning the box (xmin, xmax, ymin, ymax) inclusive of both edges."""
    xmin, xmax, ymin, ymax = box
    spacing = np.array([(xmax - xmin) / (nx - 1), (ymax - ymin) / (ny - 1)])
    return Grid(origin=np.array([xmin, ymin]), spacing=spacing, nx=nx, ny=ny, mask=mask)


@dataclass
class FieldSample:
    """Scalar field sampled on a grid; ``integral_I`` is set by normalization."""

    grid: Grid
    values: np.ndarray                  # (ny, nx)
    integral_I: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.ny, self.grid.nx):
            raise SizeMismatch("values shape must match grid (ny, nx)")

    def require_finite(self):
        if not np.isfinite(self.values).all():
            raise NaNField("field contains non-finite values")

    def masked_integral(self) -> float:
        """Midpoint-rule quadrature over masked-in nodes."""
        return float(self.values[self.grid.mask].sum() * self.grid.cell_area)

    def copy_with(self, values: np.ndarray, integral_I: float | None = None) -> "FieldSample":
        return FieldSample(grid=self.grid, values=values, integral_I=integral_I,
                           meta=dict(self.meta))

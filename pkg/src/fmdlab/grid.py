"""Uniform cell-centered grids, scalar/vector fields, and ball geometry.

Everything downstream (maximal operators, distribution functions, norms,
solvers) works on a fixed 2-D lattice of square cells of side ``h``.  The
cell with index ``(i, j)`` has center ``(x0 + (i+0.5) h, y0 + (j+0.5) h)``.
A domain is a boolean mask over the lattice; the four built-in shapes are

* ``square``  -- every cell, origin at (0, 0);
* ``disk``    -- inscribed disk, grid centered at the origin;
* ``lshape``  -- square minus its upper-right quadrant;
* ``annulus`` -- inscribed ring with inner radius a quarter of the outer.

Fields are zero outside the mask (functions on the domain are extended by
zero to the whole plane).  Ball averages are means of ``|f|`` over lattice
cells whose centers lie strictly inside the ball; the divisor is the count
of those lattice cells, which realizes a discrete ``|B_rho|`` on the
available lattice.  Cell membership for lattice-aligned centers and radii
that are integer multiples of ``h`` is decided in exact integer arithmetic,
so ball contents never depend on floating-point rounding.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SHAPES = ("square", "disk", "lshape", "annulus")

__all__ = [
    "SHAPES",
    "DomainGrid",
    "ScalarField",
    "VectorField",
    "make_domain",
    "field_from_function",
    "vector_field_from_function",
    "gradient",
    "integrate",
    "mean",
    "ball_cells",
    "surface_ball",
    "ball_average",
    "save_field",
    "load_field",
]


def _frozen_array(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DomainGrid:
    """Immutable uniform lattice with a boolean domain mask.

    Attributes
    ----------
    nx, ny : lattice dimensions (cells along x and y).
    h      : cell side, > 0.
    origin : coordinates of the lower-left lattice corner.
    mask   : bool array of shape (nx, ny); True marks domain cells.
    shape_tag : which built-in shape produced the mask.
    """

    nx: int
    ny: int
    h: float
    origin: tuple[float, float]
    mask: np.ndarray
    shape_tag: str

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 cells per axis")
        if not (self.h > 0):
            raise ValueError("cell size h must be positive")
        if self.mask.shape != (self.nx, self.ny):
            raise ValueError("mask shape does not match (nx, ny)")
        if not self.mask.any():
            raise ValueError("domain mask is empty")
        object.__setattr__(self, "mask", _frozen_array(self.mask.astype(bool)))
        object.__setattr__(self, "_cache", {})

    # -- geometry -----------------------------------------------------------

    @property
    def xs(self) -> np.ndarray:
        """Cell-center x coordinates, shape (nx,)."""
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell centers, each of shape (nx, ny)."""
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def measure(self) -> float:
        """Lebesgue measure of the domain: mask count times h^2."""
        return int(self.mask.sum()) * self.cell_area

    @property
    def boundary(self) -> np.ndarray:
        """Mask cells with a 4-neighbor outside the mask or off the lattice."""
        cache = self._cache
        if "boundary" not in cache:
            m = self.mask
            inner = np.zeros_like(m)
            inner[1:-1, 1:-1] = (
                m[1:-1, 1:-1]
                & m[:-2, 1:-1]
                & m[2:, 1:-1]
                & m[1:-1, :-2]
                & m[1:-1, 2:]
            )
            cache["boundary"] = _frozen_array(m & ~inner)
        return cache["boundary"]

    @property
    def interior(self) -> np.ndarray:
        return self.mask & ~self.boundary

    def diameter(self) -> float:
        """Exact diameter of the set of domain cell centers.

        The farthest pair always sits on boundary cells, so only those are
        compared pairwise.
        """
        cache = self._cache
        if "diameter" not in cache:
            ii, jj = np.nonzero(self.boundary)
            px = self.xs[ii]
            py = self.ys[jj]
            d2 = (px[:, None] - px[None, :]) ** 2 + (py[:, None] - py[None, :]) ** 2
            cache["diameter"] = float(np.sqrt(d2.max()))
        return cache["diameter"]

    def index_of_point(self, point) -> tuple[int, int] | None:
        """Lattice index of the cell whose center is `point`, if aligned."""
        fi = (point[0] - self.origin[0]) / self.h - 0.5
        fj = (point[1] - self.origin[1]) / self.h - 0.5
        i, j = round(fi), round(fj)
        if abs(fi - i) <= 1e-9 and abs(fj - j) <= 1e-9:
            if 0 <= i < self.nx and 0 <= j < self.ny:
                return int(i), int(j)
        return None

    def padded(self, factor: int = 3) -> tuple["DomainGrid", tuple[int, int]]:
        """Embed this lattice centrally in a `factor`x larger one.

        Returns the padded grid (same mask content, shifted) and the index
        offset of the original lattice inside it.  Used to realize whole-plane
        maximal functions of zero-extended fields.
        """
        if factor < 1:
            raise ValueError("padding factor must be >= 1")
        pnx, pny = factor * self.nx, factor * self.ny
        oi = (pnx - self.nx) // 2
        oj = (pny - self.ny) // 2
        pmask = np.zeros((pnx, pny), dtype=bool)
        pmask[oi : oi + self.nx, oj : oj + self.ny] = self.mask
        porigin = (self.origin[0] - oi * self.h, self.origin[1] - oj * self.h)
        g = DomainGrid(pnx, pny, self.h, porigin, pmask, self.shape_tag)
        return g, (oi, oj)


def make_domain(shape: str, nx: int, ny: int, h: float) -> DomainGrid:
    """Build one of the four model domains on an nx-by-ny lattice.

    `square` and `lshape` sit on [0, nx*h] x [0, ny*h]; `disk` and `annulus`
    are centered at the origin so radial profiles read off |x| directly.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    if shape in ("square", "lshape"):
        origin = (0.0, 0.0)
    else:
        origin = (-0.5 * nx * h, -0.5 * ny * h)
    xs = origin[0] + (np.arange(nx) + 0.5) * h
    ys = origin[1] + (np.arange(ny) + 0.5) * h
    cx, cy = np.meshgrid(xs, ys, indexing="ij")
    if shape == "square":
        mask = np.ones((nx, ny), dtype=bool)
    elif shape == "lshape":
        mask = ~((cx > 0.5 * nx * h) & (cy > 0.5 * ny * h))
    else:
        r_out = 0.5 * min(nx, ny) * h
        d2 = cx * cx + cy * cy
        if shape == "disk":
            mask = d2 < r_out * r_out
        else:  # annulus
            r_in = 0.25 * r_out
            mask = (d2 < r_out * r_out) & (d2 >= r_in * r_in)
    return DomainGrid(nx, ny, h, origin, mask, shape)


# -- fields ------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """Scalar samples at cell centers, identically zero outside the mask."""

    grid: DomainGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.nx, self.grid.ny):
            raise ValueError("field shape does not match grid")
        if not np.isfinite(v[self.grid.mask]).all():
            raise ValueError("field contains non-finite values on the domain")
        v = np.where(self.grid.mask, v, 0.0)
        object.__setattr__(self, "values", _frozen_array(v))

    def __abs__(self) -> "ScalarField":
        return ScalarField(self.grid, np.abs(self.values))

    def on_mask(self) -> np.ndarray:
        """Values at domain cells, flattened in row-major order."""
        return self.values[self.grid.mask]


@dataclass(frozen=True)
class VectorField:
    """Vector samples (vx, vy) at cell centers, zero outside the mask."""

    grid: DomainGrid
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        for name in ("vx", "vy"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (self.grid.nx, self.grid.ny):
                raise ValueError("field shape does not match grid")
            if not np.isfinite(v[self.grid.mask]).all():
                raise ValueError("field contains non-finite values on the domain")
            v = np.where(self.grid.mask, v, 0.0)
            object.__setattr__(self, name, _frozen_array(v))

    def magnitude(self) -> ScalarField:
        return ScalarField(self.grid, np.hypot(self.vx, self.vy))


def field_from_function(grid: DomainGrid, fn) -> ScalarField:
    """Sample fn(x, y) at cell centers (vectorized over numpy arrays)."""
    cx, cy = grid.centers()
    vals = np.broadcast_to(np.asarray(fn(cx, cy), dtype=np.float64), cx.shape)
    return ScalarField(grid, np.where(grid.mask, vals, 0.0))


def vector_field_from_function(grid: DomainGrid, fn_x, fn_y) -> VectorField:
    cx, cy = grid.centers()
    vx = np.broadcast_to(np.asarray(fn_x(cx, cy), dtype=np.float64), cx.shape)
    vy = np.broadcast_to(np.asarray(fn_y(cx, cy), dtype=np.float64), cx.shape)
    zero = np.zeros_like(cx)
    return VectorField(
        grid, np.where(grid.mask, vx, zero), np.where(grid.mask, vy, zero)
    )


# -- calculus ----------------------------------------------------------------


def _axis_derivative(values: np.ndarray, mask: np.ndarray, h: float, axis: int):
    """Central difference where both neighbors are domain cells, one-sided
    (3-point where two inward neighbors exist, 2-point otherwise) elsewhere.
    Cells with no domain neighbor along the axis get derivative 0."""
    v = values if axis == 0 else values.T
    m = mask if axis == 0 else mask.T
    n = v.shape[0]
    out = np.zeros_like(v)

    def shifted(arr, k, fill):
        res = np.full_like(arr, fill)
        if k > 0:
            res[k:] = arr[:-k]
        elif k < 0:
            res[:k] = arr[-k:]
        else:
            res = arr.copy()
        return res

    has = lambda k: shifted(m, -k, False)  # has(k)[i] == m[i+k]
    val = lambda k: shifted(v, -k, 0.0)

    up1, dn1 = has(1), has(-1)
    up2, dn2 = has(2), has(-2)
    central = m & up1 & dn1
    fwd3 = m & ~central & up1 & up2
    bwd3 = m & ~central & ~fwd3 & dn1 & dn2
    fwd2 = m & ~central & ~fwd3 & ~bwd3 & up1
    bwd2 = m & ~central & ~fwd3 & ~bwd3 & ~fwd2 & dn1

    out[central] = ((val(1) - val(-1)) / (2 * h))[central]
    out[fwd3] = ((-3 * v + 4 * val(1) - val(2)) / (2 * h))[fwd3]
    out[bwd3] = ((3 * v - 4 * val(-1) + val(-2)) / (2 * h))[bwd3]
    out[fwd2] = ((val(1) - v) / h)[fwd2]
    out[bwd2] = ((v - val(-1)) / h)[bwd2]
    return out if axis == 0 else out.T


def gradient(u: ScalarField) -> VectorField:
    """Discrete gradient at every domain cell.

    Second-order central differences at cells with both axis neighbors in
    the domain; second-order one-sided stencils at boundary cells (falling
    back to first-order where the domain is only one cell deep).
    """
    gx = _axis_derivative(u.values, u.grid.mask, u.grid.h, axis=0)
    gy = _axis_derivative(u.values, u.grid.mask, u.grid.h, axis=1)
    return VectorField(u.grid, gx, gy)


def integrate(f: ScalarField, region: np.ndarray | None = None) -> float:
    """h^2-weighted sum of f over the domain (or over region & mask)."""
    sel = f.grid.mask if region is None else (f.grid.mask & region)
    return math.fsum(f.values[sel]) * f.grid.cell_area


def mean(f: ScalarField, region: np.ndarray | None = None) -> float:
    """Average of f over the domain (or over region & mask)."""
    sel = f.grid.mask if region is None else (f.grid.mask & region)
    n = int(sel.sum())
    if n == 0:
        raise ValueError("region contains no domain cells")
    return math.fsum(f.values[sel]) / n


# -- balls -------------------------------------------------------------------


def ball_cells(grid: DomainGrid, center, radius: float) -> np.ndarray:
    """Boolean lattice mask of cells with centers strictly inside the ball.

    When the center is lattice-aligned and the radius is an integer multiple
    of h the membership test runs in exact integers (di^2 + dj^2 < k^2).
    """
    if radius <= 0:
        return np.zeros((grid.nx, grid.ny), dtype=bool)
    idx = grid.index_of_point(center)
    k = radius / grid.h
    kr = round(k)
    if idx is not None and abs(k - kr) <= 1e-9 and kr >= 1:
        i0, j0 = idx
        di = np.arange(grid.nx) - i0
        dj = np.arange(grid.ny) - j0
        d2 = di[:, None] ** 2 + dj[None, :] ** 2
        return d2 < kr * kr
    cx, cy = grid.centers()
    return (cx - center[0]) ** 2 + (cy - center[1]) ** 2 < radius * radius


def surface_ball(grid: DomainGrid, center, radius: float) -> np.ndarray:
    """Intersection of the ball with the domain (a surface ball)."""
    return ball_cells(grid, center, radius) & grid.mask


def ball_average(f: ScalarField, center, radius: float) -> float:
    """Mean of |f| over lattice cells inside the ball.

    The sum runs over every lattice cell in the ball (zero extension does
    the right thing outside the domain) and the divisor is the number of
    those cells, i.e. the discrete ball measure divided by h^2.  The sum is
    correctly rounded, so this is the reference value the fast maximal
    paths must reproduce exactly.
    """
    cells = ball_cells(f.grid, center, radius)
    cnt = int(cells.sum())
    if cnt == 0:
        raise ValueError("ball contains no lattice cells")
    return math.fsum(np.abs(f.values[cells])) / cnt


# -- serialization -----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def save_field(
    field: ScalarField | VectorField,
    base: str | Path,
    vector: VectorField | None = None,
) -> tuple[Path, Path]:
    """Write `base`.csv (rows: domain cells, row-major) and `base`.json.

    Scalar rows are `i, j, x, y, value`; vector rows end with `vx, vy`; a
    scalar saved with a companion `vector` carries all three value columns.
    Output is deterministic byte-for-byte for identical fields.
    """
    base = Path(base)
    if base.name.endswith(".csv"):
        base = base.parent / base.name[:-4]
    grid = field.grid
    # append rather than substitute: base names may contain dots (a0.5)
    csv_path = base.parent / (base.name + ".csv")
    json_path = base.parent / (base.name + ".json")
    is_vec = isinstance(field, VectorField)
    if is_vec and vector is not None:
        raise ValueError("companion vector only applies to scalar fields")
    kind = "vector" if is_vec else ("scalar+vector" if vector is not None else "scalar")
    header = {
        "kind": kind,
        "shape": grid.shape_tag,
        "nx": grid.nx,
        "ny": grid.ny,
        "h": grid.h,
        "origin": list(grid.origin),
    }
    xs, ys = grid.xs, grid.ys
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        if is_vec:
            w.writerow(["i", "j", "x", "y", "vx", "vy"])
            for i, j in zip(*np.nonzero(grid.mask)):
                w.writerow(
                    [i, j, _fmt(xs[i]), _fmt(ys[j]),
                     _fmt(field.vx[i, j]), _fmt(field.vy[i, j])]
                )
        elif vector is not None:
            w.writerow(["i", "j", "x", "y", "value", "vx", "vy"])
            for i, j in zip(*np.nonzero(grid.mask)):
                w.writerow(
                    [i, j, _fmt(xs[i]), _fmt(ys[j]), _fmt(field.values[i, j]),
                     _fmt(vector.vx[i, j]), _fmt(vector.vy[i, j])]
                )
        else:
            w.writerow(["i", "j", "x", "y", "value"])
            for i, j in zip(*np.nonzero(grid.mask)):
                w.writerow(
                    [i, j, _fmt(xs[i]), _fmt(ys[j]), _fmt(field.values[i, j])]
                )
    with open(json_path, "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path


def load_field(base: str | Path) -> ScalarField | VectorField:
    """Read a field written by save_field (accepts base, .csv or .json path)."""
    base = Path(base)
    if base.name.endswith((".csv", ".json")):
        base = base.parent / base.name.rsplit(".", 1)[0]
    with open(base.parent / (base.name + ".json")) as fh:
        header = json.load(fh)
    grid = make_domain(header["shape"], header["nx"], header["ny"], header["h"])
    if list(grid.origin) != list(header["origin"]):
        raise ValueError("stored origin does not match the shape convention")
    kind = header["kind"]
    vals = np.zeros((grid.nx, grid.ny))
    vx = np.zeros((grid.nx, grid.ny))
    vy = np.zeros((grid.nx, grid.ny))
    with open(base.parent / (base.name + ".csv"), newline="") as fh:
        rd = csv.reader(fh)
        next(rd)  # header row
        for row in rd:
            i, j = int(row[0]), int(row[1])
            if kind == "vector":
                vx[i, j] = float(row[4])
                vy[i, j] = float(row[5])
            elif kind == "scalar+vector":
                vals[i, j] = float(row[4])
                vx[i, j] = float(row[5])
                vy[i, j] = float(row[6])
            else:
                vals[i, j] = float(row[4])
    if kind == "vector":
        return VectorField(grid, vx, vy)
    return ScalarField(grid, vals)

"""Reference raster, covariate grids, and design rows.

All geometry is in decimal degrees on a single fixed grid.  The raster
origin is the south-west corner; column index grows eastward and row index
grows northward, so the centroid of cell (col, row) is
``origin + (col + 0.5, row + 0.5) * cell_size``.  Cells are treated purely
as index units; no reprojection or geodesic area correction is performed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from shapely.geometry import Polygon, box

__all__ = [
    "ReferenceRaster",
    "CellKey",
    "CovariateGrid",
    "SiteCovariates",
    "SurveyRecord",
    "build_reference_raster",
    "cell_of",
    "resample_covariate",
    "extract_covariates",
    "generate_prediction_sites",
    "design_matrix",
    "DESIGN_COLUMNS",
    "read_ascii_grid",
    "write_ascii_grid",
    "read_reef_polygons",
    "read_survey_csv",
]

# Snap distance, in cell units, for points sitting on a shared cell edge.
_EDGE_EPS = 1e-9

NODATA_DEFAULT = -9999.0


@dataclass(frozen=True)
class CellKey:
    col: int
    row: int


@dataclass(frozen=True)
class ReferenceRaster:
    """Fixed analysis grid.  ``reef_mask`` is row-major (row * n_cols + col)."""

    origin_lon: float
    origin_lat: float
    cell_size: float
    n_cols: int
    n_rows: int
    reef_mask: np.ndarray

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("raster must have at least one cell")
        mask = np.asarray(self.reef_mask, dtype=bool)
        if mask.size != self.n_cols * self.n_rows:
            raise ValueError("mask length must be n_cols * n_rows")
        object.__setattr__(self, "reef_mask", mask.reshape(-1))

    def contains(self, lon: float, lat: float) -> bool:
        u = (lon - self.origin_lon) / self.cell_size
        v = (lat - self.origin_lat) / self.cell_size
        return -_EDGE_EPS <= u < self.n_cols - _EDGE_EPS and \
            -_EDGE_EPS <= v < self.n_rows - _EDGE_EPS

    def centroid(self, cell: CellKey) -> tuple[float, float]:
        return (
            self.origin_lon + (cell.col + 0.5) * self.cell_size,
            self.origin_lat + (cell.row + 0.5) * self.cell_size,
        )

    def cell_index(self, cell: CellKey) -> int:
        return cell.row * self.n_cols + cell.col

    def is_reef(self, cell: CellKey) -> bool:
        return bool(self.reef_mask[self.cell_index(cell)])


@dataclass(frozen=True)
class CovariateGrid:
    """One covariate layer on some grid.  ``year is None`` marks a static layer.

    Values are row-major from the grid's south-west origin, matching
    ReferenceRaster; nodata cells carry NaN and are never silently zero.
    """

    name: str
    origin_lon: float
    origin_lat: float
    cell_size: float
    n_cols: int
    n_rows: int
    values: np.ndarray
    year: int | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.n_cols * self.n_rows:
            raise ValueError(
                f"layer {self.name!r}: {vals.size} values for "
                f"{self.n_cols}x{self.n_rows} header"
            )
        object.__setattr__(self, "values", vals.reshape(-1))

    def value_at(self, lon: float, lat: float) -> float:
        """Value of the cell containing (lon, lat); NaN if outside or nodata."""
        u = (lon - self.origin_lon) / self.cell_size
        v = (lat - self.origin_lat) / self.cell_size
        col = int(math.floor(u + _EDGE_EPS))
        row = int(math.floor(v + _EDGE_EPS))
        if not (0 <= col < self.n_cols and 0 <= row < self.n_rows):
            return math.nan
        return float(self.values[row * self.n_cols + col])


@dataclass(frozen=True)
class SiteCovariates:
    """Covariate row for one (cell, year) site."""

    cell: CellKey
    year: int
    cyclone: int
    bleaching: int
    sst_anomaly: float
    shelf: int
    no_take: int

    def __post_init__(self):
        if self.cyclone not in (0, 1):
            raise ValueError(f"cyclone must be 0/1, got {self.cyclone}")
        if self.bleaching not in (0, 1):
            raise ValueError(f"bleaching must be 0/1, got {self.bleaching}")
        if self.shelf not in (1, 2, 3):
            raise ValueError(f"shelf must be 1/2/3, got {self.shelf}")
        if self.no_take not in (0, 1):
            raise ValueError(f"no_take must be 0/1, got {self.no_take}")


@dataclass(frozen=True)
class SurveyRecord:
    """One professional coral-cover estimate as read from the survey CSV."""

    source: str
    record_id: str
    lon: float
    lat: float
    year: int
    coral_cover: float
    image_extent_m2: float
    n_points: int
    n_images: int


def build_reference_raster(
    bbox: tuple[float, float, float, float],
    cell_size: float,
    reef_polygons: Sequence[Sequence[tuple[float, float]]],
) -> ReferenceRaster:
    """Lay a regular grid over ``bbox`` and mask cells overlapping any reef.

    A cell counts as reef iff its rectangle shares positive area with at
    least one polygon (touching along an edge alone does not mask).
    """
    lon_min, lat_min, lon_max, lat_max = bbox
    if not (lon_max > lon_min and lat_max > lat_min):
        raise ValueError("bbox must be non-degenerate")
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    n_cols = max(1, math.ceil((lon_max - lon_min) / cell_size - _EDGE_EPS))
    n_rows = max(1, math.ceil((lat_max - lat_min) / cell_size - _EDGE_EPS))
    mask = np.zeros(n_cols * n_rows, dtype=bool)
    polys = [Polygon(ring) for ring in reef_polygons]
    for poly in polys:
        if poly.is_empty:
            continue
        px0, py0, px1, py1 = poly.bounds
        c0 = max(0, int(math.floor((px0 - lon_min) / cell_size)))
        c1 = min(n_cols - 1, int(math.floor((px1 - lon_min) / cell_size)))
        r0 = max(0, int(math.floor((py0 - lat_min) / cell_size)))
        r1 = min(n_rows - 1, int(math.floor((py1 - lat_min) / cell_size)))
        for row in range(r0, r1 + 1):
            for col in range(c0, c1 + 1):
                cell_box = box(
                    lon_min + col * cell_size,
                    lat_min + row * cell_size,
                    lon_min + (col + 1) * cell_size,
                    lat_min + (row + 1) * cell_size,
                )
                if poly.intersection(cell_box).area > 0.0:
                    mask[row * n_cols + col] = True
    return ReferenceRaster(lon_min, lat_min, cell_size, n_cols, n_rows, mask)


def cell_of(lon: float, lat: float, raster: ReferenceRaster) -> CellKey:
    """Cell containing a point; shared edges tie-break to the larger index."""
    if not raster.contains(lon, lat):
        raise ValueError(f"point ({lon}, {lat}) outside raster extent")
    u = (lon - raster.origin_lon) / raster.cell_size
    v = (lat - raster.origin_lat) / raster.cell_size
    col = min(int(math.floor(u + _EDGE_EPS)), raster.n_cols - 1)
    row = min(int(math.floor(v + _EDGE_EPS)), raster.n_rows - 1)
    return CellKey(max(col, 0), max(row, 0))


def resample_covariate(src: CovariateGrid, dst: ReferenceRaster) -> CovariateGrid:
    """Nearest-neighbour resample of ``src`` onto the reference grid.

    Each destination cell takes the source cell containing its centroid,
    which keeps categorical layers (shelf position, disturbance flags)
    intact.  Nodata propagates as NaN.
    """
    src_lon1 = src.origin_lon + src.n_cols * src.cell_size
    src_lat1 = src.origin_lat + src.n_rows * src.cell_size
    dst_lon1 = dst.origin_lon + dst.n_cols * dst.cell_size
    dst_lat1 = dst.origin_lat + dst.n_rows * dst.cell_size
    if (src_lon1 <= dst.origin_lon or dst_lon1 <= src.origin_lon
            or src_lat1 <= dst.origin_lat or dst_lat1 <= src.origin_lat):
        raise ValueError(
            f"layer {src.name!r} does not overlap the reference raster"
        )
    out = np.full(dst.n_cols * dst.n_rows, np.nan)
    for row in range(dst.n_rows):
        lat = dst.origin_lat + (row + 0.5) * dst.cell_size
        for col in range(dst.n_cols):
            lon = dst.origin_lon + (col + 0.5) * dst.cell_size
            out[row * dst.n_cols + col] = src.value_at(lon, lat)
    return CovariateGrid(
        name=src.name,
        origin_lon=dst.origin_lon,
        origin_lat=dst.origin_lat,
        cell_size=dst.cell_size,
        n_cols=dst.n_cols,
        n_rows=dst.n_rows,
        values=out,
        year=src.year,
    )


class CovariateSet:
    """Lookup over named layers, temporal ones keyed additionally by year."""

    def __init__(self, layers: Iterable[CovariateGrid]):
        self._static: dict[str, CovariateGrid] = {}
        self._temporal: dict[tuple[str, int], CovariateGrid] = {}
        for layer in layers:
            if layer.year is None:
                self._static[layer.name] = layer
            else:
                self._temporal[(layer.name, layer.year)] = layer

    def lookup(self, name: str, year: int) -> CovariateGrid:
        if name in self._static:
            return self._static[name]
        try:
            return self._temporal[(name, year)]
        except KeyError:
            raise KeyError(f"no layer {name!r} for year {year}") from None


LAYER_NAMES = ("cyclone", "bleaching", "sst_anomaly", "shelf", "no_take")


def extract_covariates(
    sites: Sequence[tuple[CellKey, int]],
    layers: Iterable[CovariateGrid],
    raster: ReferenceRaster,
) -> tuple[list[SiteCovariates], list[str]]:
    """One covariate row per site; sites over nodata are dropped with a warning.

    Returns (rows, warnings) with len(rows) + len(warnings) == len(sites).
    Raises KeyError if a required (layer, year) is missing outright.
    """
    cov = layers if isinstance(layers, CovariateSet) else CovariateSet(layers)
    rows: list[SiteCovariates] = []
    warnings: list[str] = []
    for cell, year in sites:
        lon, lat = raster.centroid(cell)
        vals = {}
        bad = None
        for name in LAYER_NAMES:
            v = cov.lookup(name, year).value_at(lon, lat)
            if math.isnan(v):
                bad = name
                break
            vals[name] = v
        if bad is not None:
            warnings.append(
                f"cell ({cell.col},{cell.row}) year {year}: "
                f"nodata in layer {bad!r}, site excluded"
            )
            continue
        rows.append(SiteCovariates(
            cell=cell,
            year=year,
            cyclone=int(vals["cyclone"]),
            bleaching=int(vals["bleaching"]),
            sst_anomaly=float(vals["sst_anomaly"]),
            shelf=int(vals["shelf"]),
            no_take=int(vals["no_take"]),
        ))
    return rows, warnings


def generate_prediction_sites(
    raster: ReferenceRaster,
) -> list[tuple[CellKey, float, float]]:
    """One site at the centroid of every reef-masked cell."""
    sites = []
    for row in range(raster.n_rows):
        for col in range(raster.n_cols):
            if raster.reef_mask[row * raster.n_cols + col]:
                cell = CellKey(col, row)
                lon, lat = raster.centroid(cell)
                sites.append((cell, lon, lat))
    return sites


# Fixed-effect encoding: shelf enters as two indicators with inshore (1)
# as the baseline.
DESIGN_COLUMNS = (
    "intercept",
    "cyclone",
    "bleaching",
    "sst_anomaly",
    "shelf_mid",
    "shelf_outer",
    "no_take",
)


def design_matrix(rows: Sequence[SiteCovariates]) -> np.ndarray:
    """Stack covariate rows into the model design matrix."""
    x = np.empty((len(rows), len(DESIGN_COLUMNS)))
    for i, r in enumerate(rows):
        x[i] = (
            1.0,
            r.cyclone,
            r.bleaching,
            r.sst_anomaly,
            1.0 if r.shelf == 2 else 0.0,
            1.0 if r.shelf == 3 else 0.0,
            r.no_take,
        )
    return x


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

_ASC_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize",
             "nodata_value")


def read_ascii_grid(path, name: str | None = None,
                    year: int | None = None) -> CovariateGrid:
    """Read a 6-line-header ASCII grid.

    Data rows run north to south in the file and are flipped into the
    package's south-west-origin layout.  Lines starting with '#' after the
    header are skipped (pipeline outputs carry a manifest comment there).
    """
    header: dict[str, float] = {}
    data: list[float] = []
    with open(path) as fh:
        for _ in range(6):
            line = fh.readline()
            key, val = line.split(None, 1)
            header[key.lower()] = float(val)
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            data.extend(float(tok) for tok in line.split())
    missing = [k for k in _ASC_KEYS if k not in header]
    if missing:
        raise ValueError(f"{path}: missing header keys {missing}")
    n_cols = int(header["ncols"])
    n_rows = int(header["nrows"])
    vals = np.asarray(data, dtype=float)
    if vals.size != n_cols * n_rows:
        raise ValueError(
            f"{path}: {vals.size} values, header says {n_cols}x{n_rows}"
        )
    vals = vals.reshape(n_rows, n_cols)[::-1].reshape(-1)
    vals[vals == header["nodata_value"]] = np.nan
    return CovariateGrid(
        name=name if name is not None else "",
        origin_lon=header["xllcorner"],
        origin_lat=header["yllcorner"],
        cell_size=header["cellsize"],
        n_cols=n_cols,
        n_rows=n_rows,
        values=vals,
        year=year,
    )


def write_ascii_grid(path, grid: CovariateGrid,
                     nodata: float = NODATA_DEFAULT,
                     comment: str | None = None) -> None:
    """Write the 6-line-header ASCII grid format (rows north to south)."""
    vals = grid.values.reshape(grid.n_rows, grid.n_cols)[::-1]
    with open(path, "w") as fh:
        fh.write(f"ncols {grid.n_cols}\n")
        fh.write(f"nrows {grid.n_rows}\n")
        fh.write(f"xllcorner {grid.origin_lon:.10g}\n")
        fh.write(f"yllcorner {grid.origin_lat:.10g}\n")
        fh.write(f"cellsize {grid.cell_size:.10g}\n")
        fh.write(f"nodata_value {nodata:.10g}\n")
        if comment:
            fh.write(f"# {comment}\n")
        for row in vals:
            out = [f"{nodata:.10g}" if math.isnan(v) else f"{v:.10g}"
                   for v in row]
            fh.write(" ".join(out) + "\n")


def read_reef_polygons(path) -> list[list[tuple[float, float]]]:
    """Read line-delimited rings: each line ``ring_id,lon,lat`` in vertex
    order; rings close implicitly."""
    rings: dict[str, list[tuple[float, float]]] = {}
    order: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            ring_id, lon, lat = line.split(",")
            if ring_id not in rings:
                rings[ring_id] = []
                order.append(ring_id)
            rings[ring_id].append((float(lon), float(lat)))
    return [rings[rid] for rid in order]


def read_survey_csv(path) -> list[SurveyRecord]:
    """Read the professional survey observations CSV."""
    records = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(_skip_comments(fh))
        for i, row in enumerate(rows, start=2):
            cover = float(row["coral_cover"])
            if not 0.0 <= cover <= 1.0:
                raise ValueError(
                    f"{path}:{i}: coral_cover {cover} outside [0, 1]"
                )
            records.append(SurveyRecord(
                source=row["source"],
                record_id=row["record_id"],
                lon=float(row["lon"]),
                lat=float(row["lat"]),
                year=int(row["year"]),
                coral_cover=cover,
                image_extent_m2=float(row["image_extent_m2"]),
                n_points=int(row["n_points"]),
                n_images=int(row["n_images"]),
            ))
    return records


def _skip_comments(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line

"""Cell-level aggregation of image estimates and weight normalization.

Image estimates collapse to one observation per (cell, year, source): the
weighted mean of the member estimates with the summed weight.  Values are
then nudged into the open unit interval for the Beta likelihood, raw
weights are normalized to mean one over the observation set, and an extra
sum-to-one scaling is exposed for reporting.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .ingestion import CellKey, ReferenceRaster, cell_of
from .weighting import ImageEstimate

__all__ = [
    "CellObservation",
    "aggregate_cells",
    "adjust_to_open_interval",
    "normalize_weights",
    "scale_for_likelihood",
    "write_observations_csv",
    "read_observations_csv",
    "FALLBACK_DELTA",
]

# Adjustment used only when every aggregated value is exactly zero.
FALLBACK_DELTA = 0.0005


@dataclass(frozen=True)
class CellObservation:
    """One (cell, year, source) observation; y_adj/w_norm filled in stages."""

    cell: CellKey
    year: int
    source: str
    y_bar: float
    w_raw: float
    y_adj: float | None = None
    w_norm: float | None = None


def aggregate_cells(estimates: Sequence[ImageEstimate],
                    raster: ReferenceRaster) -> list[CellObservation]:
    """Group image estimates by (cell, year, source) and take weighted means.

    Output is sorted by (source, year, row, col) and group members are
    summed in media_id order, so the result is independent of input order.
    """
    groups: dict[tuple[str, int, int, int], list[ImageEstimate]] = {}
    for est in estimates:
        if est.weight <= 0:
            raise ValueError(f"estimate {est.media_id!r} has weight <= 0")
        cell = cell_of(est.lon, est.lat, raster)
        key = (est.source_id, est.year, cell.row, cell.col)
        groups.setdefault(key, []).append(est)
    observations = []
    for source, year, row, col in sorted(groups):
        members = sorted(groups[(source, year, row, col)],
                         key=lambda e: e.media_id)
        w = sum(e.weight for e in members)
        y = sum(e.weight * e.y_bar for e in members) / w
        observations.append(CellObservation(
            cell=CellKey(col, row), year=year, source=source,
            y_bar=y, w_raw=w,
        ))
    return observations


def adjust_to_open_interval(
    observations: Sequence[CellObservation],
    fallback_delta: float = FALLBACK_DELTA,
) -> tuple[list[CellObservation], float]:
    """Shift values into (0, 1) for the Beta likelihood.

    delta is the smallest positive aggregated value; each value gains delta
    and is then capped at 1 - delta (the shift alone could reach 1).  With
    no positive value at all, ``fallback_delta`` applies.
    """
    if not observations:
        raise ValueError("no observations to adjust")
    positive = [o.y_bar for o in observations if o.y_bar > 0]
    delta = min(positive) if positive else fallback_delta
    if not 0 < delta < 0.5:
        raise ValueError(f"adjustment delta {delta} outside (0, 0.5)")
    adjusted = [
        replace(o, y_adj=min(o.y_bar + delta, 1.0 - delta))
        for o in observations
    ]
    return adjusted, delta


def normalize_weights(observations: Sequence[CellObservation]
                      ) -> list[CellObservation]:
    """Scale raw weights so they sum to the observation count N."""
    if not observations:
        raise ValueError("no observations to normalize")
    total = sum(o.w_raw for o in observations)
    if total <= 0:
        raise ValueError("total raw weight must be positive")
    n = len(observations)
    return [replace(o, w_norm=n * o.w_raw / total) for o in observations]


def scale_for_likelihood(observations: Sequence[CellObservation]
                         ) -> np.ndarray:
    """Normalized weights rescaled to sum to exactly one (reporting scale)."""
    if any(o.w_norm is None for o in observations):
        raise ValueError("normalize_weights must run first")
    w = np.array([o.w_norm for o in observations], dtype=float)
    return w / w.sum()


def write_observations_csv(path, observations: Sequence[CellObservation],
                           comment: str | None = None) -> None:
    """Export: cell_col,cell_row,year,source,y_bar,y_adj,w_raw,w_norm."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["cell_col", "cell_row", "year", "source",
                         "y_bar", "y_adj", "w_raw", "w_norm"])
        for o in observations:
            writer.writerow([
                o.cell.col, o.cell.row, o.year, o.source,
                repr(o.y_bar),
                "" if o.y_adj is None else repr(o.y_adj),
                repr(o.w_raw),
                "" if o.w_norm is None else repr(o.w_norm),
            ])


def read_observations_csv(path) -> list[CellObservation]:
    observations = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            observations.append(CellObservation(
                cell=CellKey(int(row["cell_col"]), int(row["cell_row"])),
                year=int(row["year"]),
                source=row["source"],
                y_bar=float(row["y_bar"]),
                w_raw=float(row["w_raw"]),
                y_adj=float(row["y_adj"]) if row["y_adj"] else None,
                w_norm=float(row["w_norm"]) if row["w_norm"] else None,
            ))
    return observations

"""Mechanistic weights for coral-cover estimates.

Every estimate's weight is the product of four factors: image extent
relative to the largest extent in the active source set, the number of
classification points behind the estimate, the classifier's accuracy, and
an image-count factor for transect-level sources.  Professional sources use
fixed per-source factors; citizen estimates get per-user accuracy and
per-image point counts, and multiple citizens on one image pool into a
single weighted estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

from .elicitation import ClassificationRecord
from .ingestion import SurveyRecord

__all__ = [
    "SourceProfile",
    "SourceTable",
    "PerUserImageEstimate",
    "ImageEstimate",
    "extent_weight",
    "coral_fraction",
    "citizen_weight",
    "pool_image",
    "professional_weight",
    "default_source_table",
    "citizen_image_estimates",
    "professional_estimates",
    "write_image_estimates_csv",
    "read_image_estimates_csv",
]


@dataclass(frozen=True)
class SourceProfile:
    """Per-source weighting constants.

    ``n_points_effective`` is the configured effective count used in the
    weight product, not the raw number annotated (automated classification
    saturates around ten points, and extra manual points add little).
    """

    source_id: str
    w_N: float
    image_extent_m2: float
    n_points_effective: float
    method: str  # "manual" | "automated"

    def __post_init__(self):
        if self.w_N < 1:
            raise ValueError("w_N must be >= 1")
        if self.image_extent_m2 <= 0:
            raise ValueError("image extent must be positive")
        if self.n_points_effective < 1:
            raise ValueError("n_points_effective must be >= 1")
        if self.method not in ("manual", "automated"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class PerUserImageEstimate:
    """One citizen's coral fraction for one image, with its weight."""

    media_id: str
    user_id: str
    y: float
    n_points: int  # non-unknown answers behind y
    weight: float


@dataclass(frozen=True)
class ImageEstimate:
    """One weighted coral-cover estimate per image (or survey record)."""

    media_id: str
    source_id: str
    year: int
    lon: float
    lat: float
    y_bar: float
    weight: float


def extent_weight(area_m2: float, area_max_m2: float) -> float:
    """w_e = A / A_max, in (0, 1]."""
    if area_m2 <= 0 or area_max_m2 <= 0:
        raise ValueError("image extents must be positive")
    if area_m2 > area_max_m2:
        raise ValueError("area exceeds the maximum over the active sources")
    return area_m2 / area_max_m2


def coral_fraction(labels: Sequence[str]) -> tuple[float, int] | None:
    """Coral count over non-unknown answers: (y, n_non_unknown).

    Returns None when every answer is "unknown" (the estimate is dropped).
    """
    if not labels:
        raise ValueError("empty label list")
    kept = [lab for lab in labels if lab != "unknown"]
    if not kept:
        return None
    coral = sum(1 for lab in kept if lab == "coral")
    return coral / len(kept), len(kept)


def citizen_weight(w_e: float, w_n: float, w_a: float, w_N: float) -> float:
    """Weight of one citizen's classification of one image: w_e*w_n*w_a*w_N."""
    for name, val in (("w_e", w_e), ("w_n", w_n), ("w_a", w_a), ("w_N", w_N)):
        if val <= 0:
            raise ValueError(f"{name} must be positive, got {val}")
    return w_e * w_n * w_a * w_N


def pool_image(per_user: Sequence[PerUserImageEstimate],
               source_id: str, year: int, lon: float, lat: float
               ) -> ImageEstimate:
    """Pool several citizens' estimates of one image.

    The pooled value is the weight-weighted mean and the pooled weight is
    the plain sum, so every extra participant adds weight.
    """
    if not per_user:
        raise ValueError("no estimates to pool")
    media_ids = {e.media_id for e in per_user}
    if len(media_ids) != 1:
        raise ValueError(f"mixed media_ids in pool: {sorted(media_ids)}")
    ordered = sorted(per_user, key=lambda e: e.user_id)
    w_total = sum(e.weight for e in ordered)
    y_bar = sum(e.weight * e.y for e in ordered) / w_total
    return ImageEstimate(
        media_id=ordered[0].media_id, source_id=source_id, year=year,
        lon=lon, lat=lat, y_bar=y_bar, weight=w_total,
    )


class SourceTable:
    """The active source configuration; fixes A_max for extent weights."""

    def __init__(self, profiles: Iterable[SourceProfile]):
        self._profiles = {p.source_id: p for p in profiles}
        if not self._profiles:
            raise ValueError("source table is empty")

    def __getitem__(self, source_id: str) -> SourceProfile:
        try:
            return self._profiles[source_id]
        except KeyError:
            raise KeyError(f"unknown source {source_id!r}") from None

    def __contains__(self, source_id: str) -> bool:
        return source_id in self._profiles

    def profiles(self) -> list[SourceProfile]:
        return [self._profiles[k] for k in sorted(self._profiles)]

    @property
    def area_max(self) -> float:
        return max(p.image_extent_m2 for p in self._profiles.values())

    def weight_for(self, source_id: str) -> float:
        return professional_weight(self[source_id], self.area_max)

    @classmethod
    def from_csv(cls, path) -> "SourceTable":
        profiles = []
        with open(path, newline="") as fh:
            lines = (ln for ln in fh if not ln.lstrip().startswith("#"))
            for row in csv.DictReader(lines, skipinitialspace=True):
                profiles.append(SourceProfile(
                    source_id=row["source_id"],
                    w_N=float(row["w_N"]),
                    image_extent_m2=float(row["image_extent_m2"]),
                    n_points_effective=float(row["n_points_effective"]),
                    method=row["method"],
                ))
        return cls(profiles)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source_id", "w_N", "image_extent_m2",
                             "n_points_effective", "method"])
            for p in self.profiles():
                writer.writerow([
                    p.source_id, f"{p.w_N:.10g}",
                    f"{p.image_extent_m2:.10g}",
                    f"{p.n_points_effective:.10g}", p.method,
                ])


def professional_weight(profile: SourceProfile, area_max: float) -> float:
    """Weight of one professional estimate: w_e * w_n * 1 * w_N.

    Professional classifiers carry accuracy 1.
    """
    w_e = extent_weight(profile.image_extent_m2, area_max)
    return citizen_weight(w_e, profile.n_points_effective, 1.0, profile.w_N)


def default_source_table() -> SourceTable:
    """The standard five-source configuration.

    UQ-RSRC annotates 24 points manually but is configured at the
    10-point effective count used for whole-image professional
    classification, same as the automated Catlin pipeline.
    """
    return SourceTable([
        SourceProfile("UQ-RSRC", w_N=1, image_extent_m2=1.00,
                      n_points_effective=10, method="manual"),
        SourceProfile("Catlin", w_N=1, image_extent_m2=1.00,
                      n_points_effective=10, method="automated"),
        SourceProfile("LTMP", w_N=40, image_extent_m2=0.20,
                      n_points_effective=5, method="manual"),
        SourceProfile("MMP", w_N=32, image_extent_m2=0.20,
                      n_points_effective=5, method="manual"),
        SourceProfile("ReefCheck", w_N=1, image_extent_m2=0.12,
                      n_points_effective=20, method="manual"),
    ])


def citizen_image_estimates(
    records: Iterable[ClassificationRecord],
    accuracies: dict[str, float],
    image_years: dict[str, int],
    table: SourceTable,
    source_id: str = "ReefCheck",
) -> list[ImageEstimate]:
    """Run the citizen pipeline: per-user fractions, weights, per-image pooling.

    ``accuracies`` maps user_id -> w_a from validation scoring; users
    without a score contribute nothing.  Estimates where a user answered
    only "unknown" are dropped before pooling.
    """
    profile = table[source_id]
    w_e = extent_weight(profile.image_extent_m2, table.area_max)
    by_image: dict[str, dict[str, list[ClassificationRecord]]] = {}
    coords: dict[str, tuple[float, float]] = {}
    for rec in records:
        by_image.setdefault(rec.media_id, {}).setdefault(
            rec.user_id, []).append(rec)
        coords[rec.media_id] = (rec.lon, rec.lat)
    estimates = []
    for media_id in sorted(by_image):
        per_user = []
        for user_id in sorted(by_image[media_id]):
            if user_id not in accuracies:
                continue
            labels = [r.label for r in sorted(by_image[media_id][user_id],
                                              key=lambda r: r.point_id)]
            frac = coral_fraction(labels)
            if frac is None:
                continue
            y, n_pts = frac
            w = citizen_weight(w_e, n_pts, accuracies[user_id], profile.w_N)
            per_user.append(PerUserImageEstimate(
                media_id=media_id, user_id=user_id, y=y,
                n_points=n_pts, weight=w))
        if not per_user:
            continue
        lon, lat = coords[media_id]
        estimates.append(pool_image(
            per_user, source_id=source_id, year=image_years[media_id],
            lon=lon, lat=lat))
    return estimates


def professional_estimates(records: Iterable[SurveyRecord],
                           table: SourceTable) -> list[ImageEstimate]:
    """Attach the configured source weight to each professional record."""
    out = []
    for rec in records:
        if rec.source not in table:
            raise KeyError(f"unknown source {rec.source!r} in survey data")
        out.append(ImageEstimate(
            media_id=rec.record_id, source_id=rec.source, year=rec.year,
            lon=rec.lon, lat=rec.lat, y_bar=rec.coral_cover,
            weight=table.weight_for(rec.source),
        ))
    return out


def write_image_estimates_csv(path, estimates: Sequence[ImageEstimate],
                              comment: str | None = None) -> None:
    """Export: media_id,source,lon,lat,year,y_bar,w."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["media_id", "source", "lon", "lat", "year",
                         "y_bar", "w"])
        for e in estimates:
            writer.writerow([
                e.media_id, e.source_id, repr(e.lon), repr(e.lat),
                e.year, repr(e.y_bar), repr(e.weight),
            ])


def read_image_estimates_csv(path) -> list[ImageEstimate]:
    estimates = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            estimates.append(ImageEstimate(
                media_id=row["media_id"], source_id=row["source"],
                year=int(row["year"]), lon=float(row["lon"]),
                lat=float(row["lat"]), y_bar=float(row["y_bar"]),
                weight=float(row["w"]),
            ))
    return estimates

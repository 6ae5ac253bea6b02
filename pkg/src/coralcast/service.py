"""HTTP/JSON elicitation service consumed by the classification UI.

Endpoints
---------
GET  /api/images/next?user=<id>        next unfinished image for the user
GET  /api/images/{media_id}/points?user=<id>   issued classification points
POST /api/classifications              batch of point labels
GET  /api/users/{id}/accuracy          validation accuracy (null until scorable)

Validation images are served before survey images so a citizen's accuracy
weight exists as early as possible, and their point sets are pinned to a
canonical per-image draw so everyone classifies the locations the expert
labelled.  Point issuing is pure, record storage is serialized per
(media, user) by the store, and accuracy is recomputed from the stored
records on every request.
"""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .elicitation import (ClassificationRecord, ClassificationStore, LABELS,
                          accuracy_for_user)

__all__ = ["CatalogImage", "ElicitationService", "build_app",
           "read_catalog_csv", "read_expert_labels_csv"]


@dataclass(frozen=True)
class CatalogImage:
    media_id: str
    source: str
    lon: float
    lat: float
    year: int
    image_url: str
    validation: bool


class ElicitationService:
    """Catalog, point issuing, and scoring around one ClassificationStore."""

    def __init__(self, catalog: list[CatalogImage],
                 expert_labels: dict[str, dict[int, str]],
                 store: ClassificationStore | None = None,
                 n_points: int = 20, seed: int = 0):
        self.catalog = {img.media_id: img for img in catalog}
        # validation first, then catalog order
        self.order = sorted(catalog, key=lambda im: (not im.validation,))
        self.order = [im.media_id for im in self.order]
        self.expert_labels = expert_labels
        self.store = store if store is not None else ClassificationStore()
        self.n_points = n_points
        self.seed = seed

    def next_image(self, user_id: str) -> CatalogImage | None:
        for media_id in self.order:
            recs = self.store.records_for(media_id, user_id)
            if len(recs) < self.n_points:
                return self.catalog[media_id]
        return None

    def points(self, media_id: str, user_id: str):
        if media_id not in self.catalog:
            raise KeyError(f"unknown image {media_id!r}")
        img = self.catalog[media_id]
        return self.store.issue_points(
            media_id, user_id, n=self.n_points, seed=self.seed,
            shared=img.validation)

    def classify(self, items: list[dict]) -> int:
        """Validate and store a batch; rejects the whole batch on any error."""
        records = []
        now = datetime.datetime.now(datetime.timezone.utc).isoformat()
        for item in items:
            media_id = item["media_id"]
            if media_id not in self.catalog:
                raise KeyError(f"unknown image {media_id!r}")
            if item["label"] not in LABELS:
                raise ValueError(f"invalid label {item['label']!r}")
            img = self.catalog[media_id]
            issued = self.store.issued_for(media_id, item["user_id"])
            if issued is None or item["point_id"] not in issued:
                raise KeyError(
                    f"point {item['point_id']} was never issued to "
                    f"{item['user_id']!r} for {media_id!r}")
            records.append(ClassificationRecord(
                media_id=media_id, lon=img.lon, lat=img.lat,
                point_id=int(item["point_id"]), label=item["label"],
                user_id=item["user_id"], submitted_at=now))
        for rec in records:
            self.store.record(rec)
        return len(records)

    def accuracy(self, user_id: str):
        try:
            profile = accuracy_for_user(self.store, self.expert_labels,
                                        user_id)
        except ValueError:
            return None, 0
        return profile.w_a, len(profile.per_image_counts)


class _ClassificationIn(BaseModel):
    media_id: str
    point_id: int
    label: str
    user_id: str


def build_app(service: ElicitationService) -> FastAPI:
    app = FastAPI(title="coralcast elicitation service")

    @app.get("/api/images/next")
    def images_next(user: str):
        img = service.next_image(user)
        if img is None:
            raise HTTPException(status_code=404,
                                detail="no images remaining")
        return {"media_id": img.media_id, "image_url": img.image_url,
                "lon": img.lon, "lat": img.lat,
                "validation": img.validation}

    @app.get("/api/images/{media_id}/points")
    def image_points(media_id: str, user: str):
        try:
            points = service.points(media_id, user)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return [{"point_id": p.point_id, "x": p.x, "y": p.y}
                for p in points]

    @app.post("/api/classifications")
    def classifications(items: list[_ClassificationIn]):
        try:
            accepted = service.classify([item.model_dump()
                                         for item in items])
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"accepted": accepted}

    @app.get("/api/users/{user_id}/accuracy")
    def user_accuracy(user_id: str):
        w_a, n_images = service.accuracy(user_id)
        return {"w_a": w_a, "n_validation_images": n_images}

    return app


def read_catalog_csv(path) -> list[CatalogImage]:
    """Image catalog: media_id,source,lon,lat,year,image_url,validation."""
    images = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            images.append(CatalogImage(
                media_id=row["media_id"],
                source=row["source"],
                lon=float(row["lon"]),
                lat=float(row["lat"]),
                year=int(row["year"]),
                image_url=row["image_url"],
                validation=row["validation"].strip().lower()
                in ("1", "true", "yes"),
            ))
    return images


def read_expert_labels_csv(path) -> dict[str, dict[int, str]]:
    """Expert point labels: media_id,point_id,label."""
    labels: dict[str, dict[int, str]] = {}
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            labels.setdefault(row["media_id"], {})[int(row["point_id"])] = \
                row["label"]
    return labels

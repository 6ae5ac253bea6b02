"""Classification points, the label store, and citizen accuracy scoring.

Accuracy is binarized hard-coral vs everything else: the downstream model
consumes only coral presence.  "unknown" answers are excluded from scoring,
matching their removal from the cover estimates.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "LABELS",
    "ClassificationPoint",
    "ClassificationRecord",
    "CitizenProfile",
    "ClassificationStore",
    "sample_points",
    "confusion_counts",
    "score_accuracy",
    "accuracy_for_user",
]

LABELS = ("water", "coral", "algae", "sand", "unknown", "other")

# Shared point sets on validation images are issued under this user token.
CANONICAL_USER = "__canonical__"


@dataclass(frozen=True)
class ClassificationPoint:
    point_id: int
    x: float  # fraction of image width, in [0, 1)
    y: float  # fraction of image height, in [0, 1)


@dataclass(frozen=True)
class ClassificationRecord:
    media_id: str
    lon: float
    lat: float
    point_id: int
    label: str
    user_id: str
    submitted_at: str = ""

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"invalid label {self.label!r}")


@dataclass(frozen=True)
class CitizenProfile:
    user_id: str
    w_a: float
    per_image_counts: dict  # media_id -> (tp, tn, fp, fn)


def _grid_shape(n: int) -> tuple[int, int]:
    # near-square strata grid, wider than tall (n=20 -> 5 x 4)
    rows = int(math.floor(math.sqrt(n)))
    while rows > 1 and n % rows != 0:
        rows -= 1
    return n // rows, rows


def _rng_for(media_id: str, user_id: str, seed: int) -> np.random.Generator:
    digest = hashlib.blake2b(
        f"{media_id}|{user_id}|{seed}".encode(), digest_size=8
    ).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


def sample_points(media_id: str, user_id: str, n: int = 20,
                  seed: int = 0) -> list[ClassificationPoint]:
    """Issue a spatially balanced point set for one image and user.

    The image is split into a near-square grid of n strata and one point is
    drawn uniformly inside each, so no two points share a stratum.  The draw
    is a pure function of (media_id, user_id, seed); different users get
    different point sets on the same image.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    cols, rows = _grid_shape(n)
    rng = _rng_for(media_id, user_id, seed)
    points = []
    pid = 0
    for r in range(rows):
        for c in range(cols):
            x = (c + rng.random()) / cols
            y = (r + rng.random()) / rows
            points.append(ClassificationPoint(pid, x, y))
            pid += 1
    return points


class ClassificationStore:
    """Append-only record store with last-write-wins per point.

    Every accepted record is appended to ``log_path`` (when set) as a CSV
    line; replaying the log reproduces the stored state exactly.
    """

    def __init__(self, log_path=None):
        self._log_path = log_path
        self._records: dict[tuple[str, str, int], ClassificationRecord] = {}
        self._issued: dict[tuple[str, str], dict[int, ClassificationPoint]] = {}
        if log_path is not None:
            self._replay()

    def _replay(self):
        try:
            fh = open(self._log_path)
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                media_id, lon, lat, pid, label, user_id, ts = line.split(",")
                rec = ClassificationRecord(
                    media_id, float(lon), float(lat), int(pid), label,
                    user_id, ts)
                self._records[(media_id, user_id, int(pid))] = rec

    def issue_points(self, media_id: str, user_id: str, n: int = 20,
                     seed: int = 0, shared: bool = False
                     ) -> list[ClassificationPoint]:
        """Issue (or re-issue, identically) points for a (media, user) pair.

        ``shared`` pins the canonical point set used on validation images,
        so every citizen classifies the same locations the expert labelled.
        """
        token = CANONICAL_USER if shared else user_id
        points = sample_points(media_id, token, n=n, seed=seed)
        self._issued[(media_id, user_id)] = {p.point_id: p for p in points}
        return points

    def issued_for(self, media_id: str, user_id: str):
        return self._issued.get((media_id, user_id))

    def record(self, rec: ClassificationRecord) -> None:
        issued = self._issued.get((rec.media_id, rec.user_id))
        if issued is None or rec.point_id not in issued:
            raise KeyError(
                f"point {rec.point_id} was never issued to {rec.user_id!r} "
                f"for {rec.media_id!r}"
            )
        self._records[(rec.media_id, rec.user_id, rec.point_id)] = rec
        if self._log_path is not None:
            with open(self._log_path, "a") as fh:
                fh.write(",".join([
                    rec.media_id, f"{rec.lon:.10g}", f"{rec.lat:.10g}",
                    str(rec.point_id), rec.label, rec.user_id,
                    rec.submitted_at,
                ]) + "\n")

    def records_for(self, media_id: str, user_id: str
                    ) -> list[ClassificationRecord]:
        out = [r for (m, u, _), r in self._records.items()
               if m == media_id and u == user_id]
        return sorted(out, key=lambda r: r.point_id)

    def all_records(self) -> list[ClassificationRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def users(self) -> list[str]:
        return sorted({u for (_, u, _) in self._records})

    def __len__(self) -> int:
        return len(self._records)

    def export_csv(self, path, comment: str | None = None) -> None:
        """Write the classification export: media_id,lon,lat,point_id,label,user_id."""
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(
                ["media_id", "lon", "lat", "point_id", "label", "user_id"])
            for rec in self.all_records():
                writer.writerow([
                    rec.media_id, f"{rec.lon:.10g}", f"{rec.lat:.10g}",
                    rec.point_id, rec.label, rec.user_id,
                ])


def read_classification_csv(path) -> list[ClassificationRecord]:
    records = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        for row in csv.DictReader(lines):
            records.append(ClassificationRecord(
                media_id=row["media_id"],
                lon=float(row["lon"]),
                lat=float(row["lat"]),
                point_id=int(row["point_id"]),
                label=row["label"],
                user_id=row["user_id"],
            ))
    return records


def confusion_counts(user_labels: Sequence[str],
                     expert_labels: Sequence[str]
                     ) -> tuple[int, int, int, int]:
    """Per-image (TP, TN, FP, FN), coral vs non-coral.

    User "unknown" answers drop out of all four counts.  Expert labels must
    never be "unknown".
    """
    if len(user_labels) != len(expert_labels):
        raise ValueError("label lists must have equal length")
    tp = tn = fp = fn = 0
    for user, expert in zip(user_labels, expert_labels):
        if expert == "unknown":
            raise ValueError("expert labels must not be 'unknown'")
        if user == "unknown":
            continue
        u_coral = user == "coral"
        e_coral = expert == "coral"
        if u_coral and e_coral:
            tp += 1
        elif not u_coral and not e_coral:
            tn += 1
        elif u_coral:
            fp += 1
        else:
            fn += 1
    return tp, tn, fp, fn


def score_accuracy(per_image_counts: Iterable[tuple[int, int, int, int]]
                   ) -> float:
    """Mean per-image accuracy (TP+TN)/(TP+TN+FP+FN) over scorable images.

    Images whose four counts are all zero (everything "unknown") are
    excluded from the average; with no scorable image at all this raises.
    """
    accs = []
    for tp, tn, fp, fn in per_image_counts:
        denom = tp + tn + fp + fn
        if denom == 0:
            continue
        accs.append((tp + tn) / denom)
    if not accs:
        raise ValueError("no scorable validation images")
    return float(sum(accs) / len(accs))


def profiles_from_records(
    records: Iterable[ClassificationRecord],
    expert_labels: dict[str, dict[int, str]],
) -> dict[str, CitizenProfile]:
    """Score every user appearing in an exported record set.

    Users with no scorable validation answers are omitted.
    """
    by_user: dict[str, dict[str, list[ClassificationRecord]]] = {}
    for rec in records:
        if rec.media_id not in expert_labels:
            continue
        by_user.setdefault(rec.user_id, {}).setdefault(
            rec.media_id, []).append(rec)
    profiles = {}
    for user_id in sorted(by_user):
        counts = {}
        for media_id, recs in sorted(by_user[user_id].items()):
            expert = expert_labels[media_id]
            pairs = [(r.label, expert[r.point_id]) for r in recs
                     if r.point_id in expert]
            if pairs:
                counts[media_id] = confusion_counts(
                    [u for u, _ in pairs], [e for _, e in pairs])
        try:
            w_a = score_accuracy(counts.values())
        except ValueError:
            continue
        profiles[user_id] = CitizenProfile(user_id=user_id, w_a=w_a,
                                           per_image_counts=counts)
    return profiles


def accuracy_for_user(
    store: ClassificationStore,
    expert_labels: dict[str, dict[int, str]],
    user_id: str,
) -> CitizenProfile:
    """Score one citizen against expert labels on the validation images.

    ``expert_labels`` maps media_id -> {point_id: label}.  Only points the
    user actually answered enter the per-image counts; recomputed from the
    store on every call.
    """
    counts = {}
    for media_id, expert in expert_labels.items():
        recs = store.records_for(media_id, user_id)
        pairs = [(r.label, expert[r.point_id]) for r in recs
                 if r.point_id in expert]
        if not pairs:
            continue
        counts[media_id] = confusion_counts(
            [u for u, _ in pairs], [e for _, e in pairs])
    w_a = score_accuracy(counts.values())
    return CitizenProfile(user_id=user_id, w_a=w_a, per_image_counts=counts)

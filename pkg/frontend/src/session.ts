import {
  ClassificationUpload,
  IssuedPoint,
  Label,
  LABELS,
  NextImage,
} from "./types.js";

export type PointStatus = "pending" | "labelled";

/**
 * State of one classification session: the image being annotated, the
 * points exactly as issued by the service, and the labels chosen so far.
 * Submission stays disabled until every point carries a label ("unknown"
 * counts as a label).
 */
export class Session {
  readonly mediaId: string;
  readonly imageUrl: string;
  readonly lon: number;
  readonly lat: number;
  readonly validation: boolean;
  readonly points: readonly IssuedPoint[];
  private readonly labels = new Map<number, Label>();

  constructor(image: NextImage, points: IssuedPoint[]) {
    const ids = new Set(points.map((p) => p.point_id));
    if (ids.size !== points.length) {
      throw new Error("issued points must have distinct ids");
    }
    this.mediaId = image.media_id;
    this.imageUrl = image.image_url;
    this.lon = image.lon;
    this.lat = image.lat;
    this.validation = image.validation;
    // rendered points are exactly the issued ones, order preserved
    this.points = points.map((p) => ({ ...p }));
  }

  private requireKnown(pointId: number): void {
    if (!this.points.some((p) => p.point_id === pointId)) {
      throw new Error(`point ${pointId} was not issued for this image`);
    }
  }

  labelOf(pointId: number): Label | undefined {
    return this.labels.get(pointId);
  }

  statusOf(pointId: number): PointStatus {
    this.requireKnown(pointId);
    return this.labels.has(pointId) ? "labelled" : "pending";
  }

  setLabel(pointId: number, label: Label): void {
    this.requireKnown(pointId);
    this.labels.set(pointId, label);
  }

  /** Clicking a point walks the category list in order, then wraps. */
  cycleLabel(pointId: number): Label {
    this.requireKnown(pointId);
    const current = this.labels.get(pointId);
    const next =
      current === undefined
        ? LABELS[0]
        : LABELS[(LABELS.indexOf(current) + 1) % LABELS.length];
    this.labels.set(pointId, next);
    return next;
  }

  get progress(): { done: number; total: number } {
    return { done: this.labels.size, total: this.points.length };
  }

  get canSubmit(): boolean {
    return this.labels.size === this.points.length;
  }

  /** The full batch for POST /api/classifications; one record per point. */
  toUpload(userId: string): ClassificationUpload[] {
    if (!this.canSubmit) {
      const { done, total } = this.progress;
      throw new Error(`cannot submit: ${done}/${total} points labelled`);
    }
    return this.points.map((p) => ({
      media_id: this.mediaId,
      point_id: p.point_id,
      label: this.labels.get(p.point_id) as Label,
      user_id: userId,
    }));
  }
}

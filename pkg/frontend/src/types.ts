export const LABELS = [
  "water",
  "coral",
  "algae",
  "sand",
  "unknown",
  "other",
] as const;

export type Label = (typeof LABELS)[number];

export function isLabel(value: string): value is Label {
  return (LABELS as readonly string[]).includes(value);
}

/** One classification point as issued by the service (never invented here). */
export interface IssuedPoint {
  point_id: number;
  x: number;
  y: number;
}

export interface NextImage {
  media_id: string;
  image_url: string;
  lon: number;
  lat: number;
  validation: boolean;
}

export interface ClassificationUpload {
  media_id: string;
  point_id: number;
  label: Label;
  user_id: string;
}

export interface AccuracyInfo {
  w_a: number | null;
  n_validation_images: number;
}

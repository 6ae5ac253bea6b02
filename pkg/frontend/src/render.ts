import { Session } from "./session.js";
import { AccuracyInfo, LABELS } from "./types.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/**
 * SVG overlay for the image: pending points draw as green circles,
 * labelled points as white text at the same spot.  Coordinates come
 * straight from the issued points as fractions of width/height.
 */
export function renderPointOverlay(session: Session): string {
  const marks = session.points
    .map((p) => {
      const cx = (p.x * 100).toFixed(2);
      const cy = (p.y * 100).toFixed(2);
      const label = session.labelOf(p.point_id);
      if (label === undefined) {
        return (
          `<circle class="point pending" data-point-id="${p.point_id}"` +
          ` cx="${cx}" cy="${cy}" r="1.6"/>`
        );
      }
      return (
        `<text class="point labelled" data-point-id="${p.point_id}"` +
        ` x="${cx}" y="${cy}">${escapeHtml(label)}</text>`
      );
    })
    .join("");
  return (
    `<svg class="overlay" viewBox="0 0 100 100" preserveAspectRatio="none">` +
    `${marks}</svg>`
  );
}

/** Category list in the standard order; "unknown" is visually muted. */
export function renderLabelPicker(): string {
  const items = LABELS.map((label) => {
    const cls = label === "unknown" ? "label-option muted" : "label-option";
    return `<button class="${cls}" data-label="${label}">${label}</button>`;
  });
  return `<div class="label-picker">${items.join("")}</div>`;
}

export function renderProgress(session: Session): string {
  const { done, total } = session.progress;
  return `<span class="progress">${done} / ${total} points classified</span>`;
}

export function renderSubmitButton(session: Session): string {
  const disabled = session.canSubmit ? "" : " disabled";
  return `<button class="submit"${disabled}>Submit classifications</button>`;
}

export function formatAccuracy(info: AccuracyInfo): string {
  if (info.w_a === null || info.n_validation_images === 0) {
    return "No validation images classified yet";
  }
  const pct = (100 * info.w_a).toFixed(2);
  const n = info.n_validation_images;
  return `Accuracy ${pct}% over ${n} validation image${n === 1 ? "" : "s"}`;
}

export function renderAccuracyBanner(info: AccuracyInfo): string {
  return `<div class="accuracy">${escapeHtml(formatAccuracy(info))}</div>`;
}

export function renderBatchError(detail: string): string {
  return `<div class="batch-error">Submission rejected: ${escapeHtml(
    detail,
  )}</div>`;
}

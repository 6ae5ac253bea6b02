import { ApiError, ElicitationApi } from "./api.js";
import {
  renderAccuracyBanner,
  renderBatchError,
  renderLabelPicker,
  renderPointOverlay,
  renderProgress,
  renderSubmitButton,
} from "./render.js";
import { SubmitQueue } from "./retry.js";
import { Session } from "./session.js";
import { isLabel } from "./types.js";

/** Browser glue: wires the session state machine to the DOM and service. */
export async function mount(root: HTMLElement, baseUrl = ""): Promise<void> {
  const api = new ElicitationApi(baseUrl);
  const queue = new SubmitQueue(api);
  const userId =
    localStorage.getItem("coralcast_user") ??
    `citizen-${Math.random().toString(36).slice(2, 8)}`;
  localStorage.setItem("coralcast_user", userId);

  let session: Session | null = null;
  let selectedPoint: number | null = null;

  async function loadNext(): Promise<void> {
    const image = await api.nextImage(userId);
    if (image === null) {
      root.innerHTML = `<p>All images classified. Thank you!</p>`;
      session = null;
      return;
    }
    const points = await api.points(image.media_id, userId);
    session = new Session(image, points);
    selectedPoint = null;
    draw();
  }

  function draw(message = ""): void {
    if (session === null) return;
    root.innerHTML = `
      <div class="stage">
        <img src="${session.imageUrl}" alt="survey image"/>
        ${renderPointOverlay(session)}
      </div>
      ${renderLabelPicker()}
      <div class="controls">
        ${renderProgress(session)}
        ${renderSubmitButton(session)}
      </div>
      <div class="messages">${message}</div>`;
    wire();
  }

  function wire(): void {
    root.querySelectorAll<SVGElement>(".point").forEach((el) => {
      el.addEventListener("click", () => {
        if (session === null) return;
        selectedPoint = Number(el.dataset.pointId);
        session.cycleLabel(selectedPoint);
        draw();
      });
    });
    root.querySelectorAll<HTMLButtonElement>(".label-option").forEach((el) => {
      el.addEventListener("click", () => {
        const label = el.dataset.label ?? "";
        if (session === null || selectedPoint === null || !isLabel(label)) {
          return;
        }
        session.setLabel(selectedPoint, label);
        draw();
      });
    });
    root.querySelector<HTMLButtonElement>(".submit")?.addEventListener(
      "click",
      () => void submit(),
    );
  }

  async function submit(): Promise<void> {
    if (session === null || !session.canSubmit) return;
    const wasValidation = session.validation;
    try {
      const outcome = await queue.submit(session.toUpload(userId));
      if (outcome.kind === "retained") {
        draw(`<p>Offline; submission kept locally and will be retried.</p>`);
        setTimeout(() => void queue.retry(), 5000);
        return;
      }
    } catch (err) {
      if (err instanceof ApiError) {
        draw(renderBatchError(err.message));
        return;
      }
      throw err;
    }
    if (wasValidation) {
      const info = await api.accuracy(userId);
      root.innerHTML = renderAccuracyBanner(info) +
        `<button class="next">Next image</button>`;
      root.querySelector(".next")?.addEventListener(
        "click",
        () => void loadNext(),
      );
      return;
    }
    await loadNext();
  }

  await loadNext();
}

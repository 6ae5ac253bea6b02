import {
  AccuracyInfo,
  ClassificationUpload,
  IssuedPoint,
  NextImage,
} from "./types.js";

/** The server rejected the request (bad batch, unknown image, ...). */
export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function readDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    return typeof body.detail === "string"
      ? body.detail
      : JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

/**
 * Typed client for the elicitation service.  The fetch implementation is
 * injectable so tests can run against an in-memory server.
 */
export class ElicitationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get(path: string): Promise<Response> {
    return this.fetchFn(this.baseUrl + path);
  }

  /** Next unfinished image for the user; null once the catalog is done. */
  async nextImage(userId: string): Promise<NextImage | null> {
    const resp = await this.get(
      `/api/images/next?user=${encodeURIComponent(userId)}`,
    );
    if (resp.status === 404) return null;
    if (!resp.ok) throw new ApiError(await readDetail(resp), resp.status);
    return (await resp.json()) as NextImage;
  }

  async points(mediaId: string, userId: string): Promise<IssuedPoint[]> {
    const resp = await this.get(
      `/api/images/${encodeURIComponent(mediaId)}/points` +
        `?user=${encodeURIComponent(userId)}`,
    );
    if (!resp.ok) throw new ApiError(await readDetail(resp), resp.status);
    return (await resp.json()) as IssuedPoint[];
  }

  /** Submit a full batch; resolves to the accepted count. */
  async submit(batch: ClassificationUpload[]): Promise<number> {
    const resp = await this.fetchFn(this.baseUrl + "/api/classifications", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(batch),
    });
    if (!resp.ok) throw new ApiError(await readDetail(resp), resp.status);
    const body = (await resp.json()) as { accepted: number };
    return body.accepted;
  }

  async accuracy(userId: string): Promise<AccuracyInfo> {
    const resp = await this.get(
      `/api/users/${encodeURIComponent(userId)}/accuracy`,
    );
    if (!resp.ok) throw new ApiError(await readDetail(resp), resp.status);
    return (await resp.json()) as AccuracyInfo;
  }
}

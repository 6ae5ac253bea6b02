import { ApiError, ElicitationApi } from "./api.js";
import { ClassificationUpload } from "./types.js";

export type SubmitOutcome =
  | { kind: "accepted"; accepted: number }
  | { kind: "retained" };

/**
 * Submits batches, keeping the batch locally when the network fails so it
 * can be retried.  A server-side rejection (4xx) is not retried: the batch
 * is wrong, not lost, and the caller surfaces it per point.
 */
export class SubmitQueue {
  private pending: ClassificationUpload[] | null = null;

  constructor(private readonly api: ElicitationApi) {}

  get hasPending(): boolean {
    return this.pending !== null;
  }

  async submit(batch: ClassificationUpload[]): Promise<SubmitOutcome> {
    try {
      const accepted = await this.api.submit(batch);
      return { kind: "accepted", accepted };
    } catch (err) {
      if (err instanceof ApiError) throw err;
      this.pending = batch; // network failure: retain and retry later
      return { kind: "retained" };
    }
  }

  async retry(): Promise<SubmitOutcome | null> {
    if (this.pending === null) return null;
    const batch = this.pending;
    this.pending = null;
    const outcome = await this.submit(batch);
    return outcome;
  }
}

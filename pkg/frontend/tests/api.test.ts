import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { ApiError, ElicitationApi } from "../src/api.js";
import { SubmitQueue } from "../src/retry.js";
import { createMockServer, MockFixture } from "./mockServer.js";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/accuracy_crosscheck.json", import.meta.url), "utf8"),
) as MockFixture & { citizen_labels: Record<string, string>; user_id: string };

function makeApi() {
  const server = createMockServer(fixture);
  return { server, api: new ElicitationApi("http://mock", server.fetchFn) };
}

describe("ElicitationApi", () => {
  it("fetches the next image with the documented shape", async () => {
    const { api } = makeApi();
    const image = await api.nextImage("amy");
    expect(image).toMatchObject({
      media_id: fixture.media_id,
      image_url: fixture.image_url,
      lon: fixture.lon,
      lat: fixture.lat,
      validation: true,
    });
  });

  it("returns the issued points verbatim", async () => {
    const { api } = makeApi();
    const points = await api.points(fixture.media_id, "amy");
    expect(points).toEqual(fixture.points);
  });

  it("submits a batch and reports the accepted count", async () => {
    const { api, server } = makeApi();
    const batch = fixture.points.slice(0, 3).map((p) => ({
      media_id: fixture.media_id,
      point_id: p.point_id,
      label: "coral" as const,
      user_id: "amy",
    }));
    await expect(api.submit(batch)).resolves.toBe(3);
    expect(server.records.size).toBe(3);
  });

  it("raises ApiError with the server detail on a rejected batch", async () => {
    const { api } = makeApi();
    const bad = [{
      media_id: fixture.media_id,
      point_id: 9999,
      label: "coral" as const,
      user_id: "amy",
    }];
    await expect(api.submit(bad)).rejects.toThrowError(ApiError);
    await expect(api.submit(bad)).rejects.toThrow(/9999/);
  });

  it("maps 404 on next image to null (catalog finished)", async () => {
    const { api } = makeApi();
    const all = fixture.points.map((p) => ({
      media_id: fixture.media_id,
      point_id: p.point_id,
      label: "water" as const,
      user_id: "amy",
    }));
    await api.submit(all);
    await expect(api.nextImage("amy")).resolves.toBeNull();
  });

  it("reports null accuracy before any scorable answers", async () => {
    const { api } = makeApi();
    await expect(api.accuracy("ghost")).resolves.toEqual({
      w_a: null,
      n_validation_images: 0,
    });
  });
});

describe("SubmitQueue", () => {
  const batchFor = (user: string) =>
    fixture.points.map((p) => ({
      media_id: fixture.media_id,
      point_id: p.point_id,
      label: "algae" as const,
      user_id: user,
    }));

  it("retains the batch across a network failure and retries", async () => {
    const { api, server } = makeApi();
    const queue = new SubmitQueue(api);
    server.setNetworkDown(true);
    const outcome = await queue.submit(batchFor("amy"));
    expect(outcome).toEqual({ kind: "retained" });
    expect(queue.hasPending).toBe(true);
    expect(server.records.size).toBe(0);

    server.setNetworkDown(false);
    const retried = await queue.retry();
    expect(retried).toEqual({ kind: "accepted", accepted: 20 });
    expect(queue.hasPending).toBe(false);
    expect(server.records.size).toBe(20);
  });

  it("does not retain server-side rejections", async () => {
    const { api } = makeApi();
    const queue = new SubmitQueue(api);
    const bad = [{
      media_id: "nope",
      point_id: 0,
      label: "coral" as const,
      user_id: "amy",
    }];
    await expect(queue.submit(bad)).rejects.toThrowError(ApiError);
    expect(queue.hasPending).toBe(false);
  });
});

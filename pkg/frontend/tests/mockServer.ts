import { IssuedPoint, NextImage } from "../src/types.js";

export interface StoredRecord {
  media_id: string;
  lon: number;
  lat: number;
  point_id: number;
  label: string;
  user_id: string;
}

export interface MockFixture {
  media_id: string;
  lon: number;
  lat: number;
  image_url: string;
  validation: boolean;
  points: IssuedPoint[];
  service_accuracy: number;
  n_validation_images: number;
}

const LABELS = ["water", "coral", "algae", "sand", "unknown", "other"];

/**
 * In-memory stand-in for the elicitation service implementing the four
 * documented endpoints over a single-image catalog.  Records store with
 * last-write-wins per (media, user, point); the accuracy endpoint replays
 * the service-computed value carried by the fixture once the user has
 * answered every point.
 */
export function createMockServer(fixture: MockFixture) {
  const records = new Map<string, StoredRecord>();
  const issued = new Set(fixture.points.map((p) => p.point_id));
  let failNetwork = false;

  const image: NextImage = {
    media_id: fixture.media_id,
    image_url: fixture.image_url,
    lon: fixture.lon,
    lat: fixture.lat,
    validation: fixture.validation,
  };

  function json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  function answeredAll(userId: string): boolean {
    return fixture.points.every((p) =>
      records.has(`${fixture.media_id}|${userId}|${p.point_id}`),
    );
  }

  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    if (failNetwork) throw new TypeError("fetch failed");
    const url = typeof input === "string" ? input : input.toString();
    const { pathname, searchParams } = new URL(url, "http://mock");

    if (pathname === "/api/images/next") {
      const user = searchParams.get("user") ?? "";
      return answeredAll(user)
        ? json({ detail: "no images remaining" }, 404)
        : json(image);
    }
    if (pathname === `/api/images/${fixture.media_id}/points`) {
      return json(fixture.points);
    }
    if (pathname === "/api/classifications" && init?.method === "POST") {
      const batch = JSON.parse(String(init.body)) as Array<{
        media_id: string;
        point_id: number;
        label: string;
        user_id: string;
      }>;
      for (const item of batch) {
        if (item.media_id !== fixture.media_id) {
          return json({ detail: `unknown image '${item.media_id}'` }, 400);
        }
        if (!issued.has(item.point_id)) {
          return json(
            { detail: `point ${item.point_id} was never issued` },
            400,
          );
        }
        if (!LABELS.includes(item.label)) {
          return json({ detail: `invalid label '${item.label}'` }, 400);
        }
      }
      for (const item of batch) {
        records.set(`${item.media_id}|${item.user_id}|${item.point_id}`, {
          media_id: item.media_id,
          lon: fixture.lon,
          lat: fixture.lat,
          point_id: item.point_id,
          label: item.label,
          user_id: item.user_id,
        });
      }
      return json({ accepted: batch.length });
    }
    const accuracyMatch = pathname.match(/^\/api\/users\/(.+)\/accuracy$/);
    if (accuracyMatch) {
      const user = decodeURIComponent(accuracyMatch[1]);
      if (!fixture.validation || !answeredAll(user)) {
        return json({ w_a: null, n_validation_images: 0 });
      }
      return json({
        w_a: fixture.service_accuracy,
        n_validation_images: fixture.n_validation_images,
      });
    }
    return json({ detail: "not found" }, 404);
  }) as typeof fetch;

  return {
    fetchFn,
    records,
    setNetworkDown(down: boolean) {
      failNetwork = down;
    },
    exportCsvRows(): string[] {
      const rows = [...records.values()].sort(
        (a, b) =>
          a.media_id.localeCompare(b.media_id) ||
          a.user_id.localeCompare(b.user_id) ||
          a.point_id - b.point_id,
      );
      return [
        "media_id,lon,lat,point_id,label,user_id",
        ...rows.map(
          (r) =>
            `${r.media_id},${r.lon},${r.lat},${r.point_id},${r.label},` +
            r.user_id,
        ),
      ];
    },
  };
}

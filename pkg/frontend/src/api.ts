/** Typed client for the review service API. */

export interface VideoSummary {
  video_id: string;
  track_count: number;
  reviewed: number;
}

export interface TrackSummary {
  video_id: string;
  track_id: number;
  span_s: number;
  max_confidence: number;
  verdict: "labeled" | "rejected" | null;
  species: string | null;
  image_url: string;
}

export interface MaxnRow {
  video_id: string;
  species: string;
  maxn: number;
  frame_index_at_max: number;
  time_ms_at_max: number;
}

export interface AnnotationBody {
  verdict: "labeled" | "rejected";
  species?: string;
}

export const SPECIES_RE = /^[a-z0-9_]+$/;

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // fall through to the generic message
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(fetchFn?: FetchLike, private base = "") {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.base + path);
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return (await response.json()) as T;
  }

  listVideos(): Promise<VideoSummary[]> {
    return this.getJson("/api/videos");
  }

  listTracks(videoId: string): Promise<TrackSummary[]> {
    return this.getJson(`/api/videos/${encodeURIComponent(videoId)}/tracks`);
  }

  async getMaxn(videoId: string): Promise<MaxnRow[]> {
    const payload = await this.getJson<{ rows: MaxnRow[] }>(
      `/api/videos/${encodeURIComponent(videoId)}/maxn`,
    );
    return payload.rows;
  }

  async getSpecies(): Promise<string[]> {
    const payload = await this.getJson<{ species: string[] }>("/api/species");
    return payload.species;
  }

  /** Resolves only once the server has durably acknowledged the verdict. */
  async putAnnotation(
    videoId: string,
    trackId: number,
    body: AnnotationBody,
  ): Promise<AnnotationBody> {
    const response = await this.fetchFn(
      `${this.base}/api/tracks/${encodeURIComponent(videoId)}/${trackId}/annotation`,
      {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return (await response.json()) as AnnotationBody;
  }
}

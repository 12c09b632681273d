// Typed client for the engine review service. Every number the console
// displays (rms, matrices, overlays, stats) comes out of these responses;
// the client never recomputes geometry.

export interface LandmarkPoint {
  id: string;
  x: number;
  y: number;
}

export interface FieldInfo {
  model: Record<string, unknown>;
  plan_size: [number, number];
  landmarks: LandmarkPoint[];
  rms_gate: number;
}

export interface TrackRow {
  frame: number;
  track_id: number;
  class: string;
  bbox: [number, number, number, number];
  field_x: number | null;
  field_y: number | null;
  team: number | null;
  jersey: number | null;
  fallen: boolean;
}

export interface LandmarkDetection {
  id: string;
  center: [number, number];
  bbox: [number, number, number, number];
  confidence: number;
}

export interface TeamStats {
  goals: number;
  attempts: number;
  on_target: number;
  passes: number;
  illegal_defender: number;
  falls: number;
  possession_pct: number;
}

export type Scoreboard = Record<string, TeamStats>;

export interface CorrespondencePoint {
  image: [number, number];
  landmark: string;
}

export interface ManualFitResponse {
  rms: number;
  h: number[][];
  gate: number;
  above_gate: boolean;
  landmarks: string[];
  overlay: [number, number][][];
}

export interface AcceptResponse {
  stored: boolean;
  rms: number;
  path: string;
}

export interface StoredFit {
  h: number[][];
  rms: number;
  landmarks_used: string[];
  inlier_mask: boolean[];
}

export class EngineError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "EngineError";
  }
}

/** 409 from accept: the candidate fit is above the rms gate. */
export class NeedsForceError extends EngineError {
  constructor(message: string) {
    super(409, message);
    this.name = "NeedsForceError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class EngineClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new EngineError(0, `engine unreachable: ${err}`);
    }
    if (!resp.ok) {
      const body = await resp.text();
      if (resp.status === 409) throw new NeedsForceError(body);
      throw new EngineError(resp.status, body);
    }
    return resp;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    return (await resp.json()) as T;
  }

  getField(): Promise<FieldInfo> {
    return this.json<FieldInfo>("/field");
  }

  getTracks(frame: number): Promise<TrackRow[]> {
    return this.json<TrackRow[]>(`/tracks?frame=${frame}`);
  }

  getLandmarks(frame: number): Promise<LandmarkDetection[]> {
    return this.json<LandmarkDetection[]>(`/landmarks/${frame}`);
  }

  /** null when no game has been processed yet. */
  async getScoreboard(): Promise<Scoreboard | null> {
    try {
      return await this.json<Scoreboard>("/stats/scoreboard");
    } catch (err) {
      if (err instanceof EngineError && err.status === 404) return null;
      throw err;
    }
  }

  /** null until a fit has been accepted. */
  async getHomography(): Promise<StoredFit | null> {
    try {
      return await this.json<StoredFit>("/homography");
    } catch (err) {
      if (err instanceof EngineError && err.status === 404) return null;
      throw err;
    }
  }

  submitManual(points: CorrespondencePoint[]): Promise<ManualFitResponse> {
    return this.json<ManualFitResponse>("/homography/manual", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ points }),
    });
  }

  accept(force: boolean): Promise<AcceptResponse> {
    return this.json<AcceptResponse>("/homography/accept", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(force ? { force: true } : {}),
    });
  }

  frameUrl(n: number): string {
    return `${this.base}/frame/${n}`;
  }

  radarUrl(n: number): string {
    return `${this.base}/radar/${n}`;
  }

  heatmapUrl(entity: string): string {
    return `${this.base}/stats/heatmap?entity=${encodeURIComponent(entity)}`;
  }
}

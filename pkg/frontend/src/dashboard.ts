// Review dashboard state: one frame of tracks plus the scoreboard,
// fetched together so the scrubber, radar, and stat panels stay in
// sync. The dashboard computes nothing itself; every number shown is
// passed through from an engine response.

import { EngineClient, EngineError, Scoreboard, TrackRow } from "./api.js";

export interface DashboardState {
  frame: number;
  tracks: TrackRow[];
  scoreboard: Scoreboard | null;
  offline: boolean;
  error: string | null;
}

export class Dashboard {
  state: DashboardState = {
    frame: 0,
    tracks: [],
    scoreboard: null,
    offline: false,
    error: null,
  };

  constructor(private readonly api: EngineClient) {}

  get trackCount(): number {
    return this.state.tracks.length;
  }

  /** Scoreboard may legitimately be absent (stats not run yet). */
  get hasStats(): boolean {
    return this.state.scoreboard !== null;
  }

  async loadFrame(frame: number): Promise<DashboardState> {
    try {
      const [tracks, scoreboard] = await Promise.all([
        this.api.getTracks(frame),
        this.api.getScoreboard(),
      ]);
      this.state = { frame, tracks, scoreboard, offline: false, error: null };
    } catch (err) {
      const offline = err instanceof EngineError && err.status === 0;
      this.state = {
        ...this.state,
        frame,
        offline,
        error: err instanceof Error ? err.message : String(err),
      };
    }
    return this.state;
  }

  /** Re-issue the last request, e.g. from the offline banner. */
  async retry(): Promise<DashboardState> {
    return this.loadFrame(this.state.frame);
  }
}

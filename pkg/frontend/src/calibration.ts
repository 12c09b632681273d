// Correspondence editor state machine. The controller owns the draft set
// and the pending (submitted but not accepted) fit; the DOM layer only
// renders what it exposes. Rms, gate, matrix, and overlay all come from
// the engine response untouched.

import {
  EngineClient,
  EngineError,
  ManualFitResponse,
  NeedsForceError,
} from "./api.js";
import { DraftSet } from "./drafts.js";

export interface PendingFit {
  rms: number;
  gate: number;
  aboveGate: boolean;
  overlay: [number, number][][];
  landmarks: string[];
  h: number[][];
}

export type AcceptOutcome =
  | { ok: true; rms: number; path: string }
  | { ok: false; needsForce: true; message: string }
  | { ok: false; needsForce?: false; message: string };

export class CalibrationController {
  pending: PendingFit | null = null;
  lastError: string | null = null;

  constructor(
    private readonly api: EngineClient,
    readonly drafts: DraftSet,
  ) {}

  canSubmit(): boolean {
    return this.drafts.canSubmit();
  }

  /** POST the draft set; keep the returned fit as the pending candidate. */
  async submit(): Promise<PendingFit> {
    if (!this.canSubmit()) {
      throw new Error(`need at least 4 points, have ${this.drafts.size}`);
    }
    let resp: ManualFitResponse;
    try {
      resp = await this.api.submitManual(this.drafts.toRequest());
    } catch (err) {
      // 400s (duplicate landmark, degenerate points) surface inline
      this.lastError = err instanceof EngineError ? err.message : String(err);
      throw err;
    }
    this.lastError = null;
    this.drafts.markSubmitted();
    this.pending = {
      rms: resp.rms,
      gate: resp.gate,
      aboveGate: resp.above_gate,
      overlay: resp.overlay,
      landmarks: resp.landmarks,
      h: resp.h,
    };
    return this.pending;
  }

  /**
   * Accept the pending fit. Above the gate the first call returns a
   * needsForce outcome without touching the engine; the caller confirms
   * and calls again with force. A server 409 maps to the same outcome
   * in case the gate moved between submit and accept.
   */
  async accept(force = false): Promise<AcceptOutcome> {
    if (!this.pending) {
      return { ok: false, message: "no fit submitted yet" };
    }
    if (this.pending.aboveGate && !force) {
      return {
        ok: false,
        needsForce: true,
        message:
          `rms ${this.pending.rms.toFixed(2)} px is above the ` +
          `${this.pending.gate.toFixed(2)} px gate`,
      };
    }
    try {
      const resp = await this.api.accept(force);
      this.pending = null;
      this.lastError = null;
      return { ok: true, rms: resp.rms, path: resp.path };
    } catch (err) {
      if (err instanceof NeedsForceError) {
        return { ok: false, needsForce: true, message: err.message };
      }
      const message = err instanceof EngineError ? err.message : String(err);
      this.lastError = message;
      return { ok: false, message };
    }
  }

  /** Editing a point invalidates the pending fit until the next submit. */
  invalidatePending(): void {
    this.pending = null;
  }
}

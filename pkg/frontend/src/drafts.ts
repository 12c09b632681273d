// Correspondence drafts: the clicked image points and their landmark
// choices, kept while the operator works and persisted locally so a page
// reload does not lose the set. Acceptance state lives server-side; this
// is the only client-side state worth keeping.

import type { CorrespondencePoint } from "./api.js";

export type DraftStatus = "draft" | "submitted";

export interface CorrespondenceDraft {
  image: [number, number]; // native frame pixels
  landmark: string;
  status: DraftStatus;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export const MIN_POINTS = 4;
const STORAGE_KEY = "fieldvision.drafts.v1";

export class DuplicateLandmarkError extends Error {
  constructor(landmark: string) {
    super(`landmark ${landmark} is already placed`);
    this.name = "DuplicateLandmarkError";
  }
}

export class DraftSet {
  private drafts: CorrespondenceDraft[] = [];

  constructor(private readonly storage?: StorageLike) {
    if (storage) this.drafts = load(storage);
  }

  list(): readonly CorrespondenceDraft[] {
    return this.drafts;
  }

  get size(): number {
    return this.drafts.length;
  }

  /** Submit stays disabled until the minimum point count is placed. */
  canSubmit(): boolean {
    return this.drafts.length >= MIN_POINTS;
  }

  has(landmark: string): boolean {
    return this.drafts.some((d) => d.landmark === landmark);
  }

  /** Each landmark may be used at most once per draft set. */
  add(image: [number, number], landmark: string): CorrespondenceDraft {
    if (this.has(landmark)) throw new DuplicateLandmarkError(landmark);
    const draft: CorrespondenceDraft = { image, landmark, status: "draft" };
    this.drafts.push(draft);
    this.persist();
    return draft;
  }

  /** Re-click with the same landmark selected moves its point. */
  place(image: [number, number], landmark: string): CorrespondenceDraft {
    const existing = this.drafts.find((d) => d.landmark === landmark);
    if (!existing) return this.add(image, landmark);
    existing.image = image;
    existing.status = "draft";
    this.persist();
    return existing;
  }

  remove(landmark: string): boolean {
    const before = this.drafts.length;
    this.drafts = this.drafts.filter((d) => d.landmark !== landmark);
    this.persist();
    return this.drafts.length !== before;
  }

  clear(): void {
    this.drafts = [];
    this.persist();
  }

  markSubmitted(): void {
    for (const d of this.drafts) d.status = "submitted";
    this.persist();
  }

  /** Any edit after a submit drops the set back to draft status. */
  isSubmitted(): boolean {
    return this.drafts.length > 0 && this.drafts.every((d) => d.status === "submitted");
  }

  toRequest(): CorrespondencePoint[] {
    return this.drafts.map((d) => ({ image: d.image, landmark: d.landmark }));
  }

  private persist(): void {
    if (this.storage) this.storage.setItem(STORAGE_KEY, JSON.stringify(this.drafts));
  }
}

function load(storage: StorageLike): CorrespondenceDraft[] {
  const raw = storage.getItem(STORAGE_KEY);
  if (!raw) return [];
  try {
    const parsed = JSON.parse(raw) as unknown;
    if (!Array.isArray(parsed)) return [];
    const seen = new Set<string>();
    const out: CorrespondenceDraft[] = [];
    for (const item of parsed) {
      const d = item as Partial<CorrespondenceDraft>;
      if (
        !d ||
        typeof d.landmark !== "string" ||
        !Array.isArray(d.image) ||
        d.image.length !== 2 ||
        typeof d.image[0] !== "number" ||
        typeof d.image[1] !== "number" ||
        seen.has(d.landmark)
      ) {
        continue; // drop corrupt entries instead of failing the session
      }
      seen.add(d.landmark);
      out.push({
        image: [d.image[0], d.image[1]],
        landmark: d.landmark,
        status: d.status === "submitted" ? "submitted" : "draft",
      });
    }
    return out;
  } catch {
    return [];
  }
}

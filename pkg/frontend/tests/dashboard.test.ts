import { describe, expect, it } from "vitest";

import { EngineClient } from "../src/api.js";
import { Dashboard } from "../src/dashboard.js";
import { MockEngine } from "./mock_engine.js";

function setup(engine = new MockEngine()) {
  const api = new EngineClient("", engine.fetch);
  return { engine, api, dashboard: new Dashboard(api) };
}

describe("Dashboard", () => {
  it("shows as many tracks as the engine reports", async () => {
    const { api, dashboard } = setup();
    const state = await dashboard.loadFrame(42);
    const reference = await api.getTracks(42);
    expect(dashboard.trackCount).toBe(reference.length);
    expect(state.tracks).toEqual(reference);
    expect(state.offline).toBe(false);
    expect(state.error).toBeNull();
  });

  it("renders the same frame identically when scrubbed twice", async () => {
    const { dashboard } = setup();
    const first = await dashboard.loadFrame(7);
    const snapshot = JSON.stringify(first);
    await dashboard.loadFrame(120);
    const second = await dashboard.loadFrame(7);
    expect(JSON.stringify(second)).toBe(snapshot);
  });

  it("treats missing statistics as an empty state, not an error", async () => {
    const engine = new MockEngine();
    engine.statsAvailable = false;
    const { dashboard } = setup(engine);
    const state = await dashboard.loadFrame(3);
    expect(state.scoreboard).toBeNull();
    expect(dashboard.hasStats).toBe(false);
    // tracks still load; the missing scoreboard is not a failure
    expect(state.error).toBeNull();
    expect(dashboard.trackCount).toBe(3);
  });

  it("flags an unreachable engine and recovers on retry", async () => {
    const engine = new MockEngine();
    engine.offline = true;
    const { dashboard } = setup(engine);

    const down = await dashboard.loadFrame(9);
    expect(down.offline).toBe(true);
    expect(down.error).toContain("unreachable");
    expect(dashboard.trackCount).toBe(0);

    engine.offline = false;
    const up = await dashboard.retry();
    expect(up.offline).toBe(false);
    expect(up.frame).toBe(9);
    expect(dashboard.trackCount).toBe(3);
    expect(dashboard.hasStats).toBe(true);
  });

  it("keeps the scoreboard numbers exactly as the engine sent them", async () => {
    const { dashboard } = setup();
    const state = await dashboard.loadFrame(0);
    expect(state.scoreboard?.["0"]?.possession_pct).toBe(57.5);
    expect(state.scoreboard?.["1"]?.illegal_defender).toBe(1);
  });
});

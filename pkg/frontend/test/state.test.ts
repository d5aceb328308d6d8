import { describe, expect, it } from "vitest";

import type { FrameMsg, FrameStats } from "../src/protocol.js";
import {
  CAMERA_MSG_MIN_INTERVAL_MS,
  applyDrag,
  applyZoom,
  backoffDelayMs,
  cameraMessage,
  clampElevation,
  deriveFps,
  formatPercentage,
  formatStats,
  initialState,
  orbitToCamera,
  reduceFrame,
  sliderToTau,
  tauToSlider,
  toleranceMessage,
  withFrameRequest,
} from "../src/state.js";

const stats = (over: Partial<FrameStats> = {}): FrameStats => ({
  selectedCount: 561532,
  residentCount: 1638400,
  percentage: 34.28,
  selectMs: 12.5,
  renderMs: 37.5,
  tau: 2048,
  mode: "lod",
  ...over,
});

const frame = (frameId: number, over: Partial<FrameStats> = {}): FrameMsg => ({
  type: "frame",
  frameId,
  stats: stats(over),
  png: "AAAA",
});

describe("tolerance slider", () => {
  it("maps slider position 11 to tau 2048", () => {
    expect(toleranceMessage(11)).toEqual({ type: "setTolerance", tau: 2048 });
  });

  it("spans 512..8192 over the default slider range", () => {
    expect(sliderToTau(9)).toBe(512);
    expect(sliderToTau(13)).toBe(8192);
  });

  it("is monotone and invertible", () => {
    for (let v = 9; v <= 13; v += 0.5) {
      expect(sliderToTau(v + 0.25)).toBeGreaterThan(sliderToTau(v));
      expect(tauToSlider(sliderToTau(v))).toBeCloseTo(v, 9);
    }
  });
});

describe("orbit camera", () => {
  it("keeps the eye at the configured radius from the target", () => {
    const msg = orbitToCamera({ azimuthDeg: 35, elevationDeg: 40, radius: 12, target: [1, 2, 3] });
    const d = Math.hypot(
      msg.position[0] - 1,
      msg.position[1] - 2,
      msg.position[2] - 3,
    );
    expect(d).toBeCloseTo(12, 9);
    expect(msg.up).toEqual([0, 0, 1]);
  });

  it("clamps elevation inside (-89, 89)", () => {
    expect(clampElevation(120)).toBe(89);
    expect(clampElevation(-200)).toBe(-89);
    const dragged = applyDrag(
      { azimuthDeg: 0, elevationDeg: 88, radius: 5, target: [0, 0, 0] },
      0,
      50,
    );
    expect(dragged.elevationDeg).toBe(89);
  });

  it("zoom keeps the radius positive", () => {
    let orbit = { azimuthDeg: 0, elevationDeg: 0, radius: 0.01, target: [0, 0, 0] as [number, number, number] };
    for (let i = 0; i < 50; i++) orbit = applyZoom(orbit, -5000);
    expect(orbit.radius).toBeGreaterThan(0);
  });
});

describe("camera message emission", () => {
  const orbit = { azimuthDeg: -90, elevationDeg: 25, radius: 30, target: [0, 0, 0] as [number, number, number] };

  it("suppresses no-op poses below the epsilon", () => {
    const first = cameraMessage(orbit, null, 0, 1000);
    expect(first).not.toBeNull();
    const again = cameraMessage(orbit, first, 1000, 2000);
    expect(again).toBeNull();
  });

  it("throttles to at most 30 messages per second", () => {
    const first = cameraMessage(orbit, null, 0, 1000);
    const moved = applyDrag(orbit, 25, 0);
    const tooSoon = cameraMessage(moved, first, 1000, 1000 + CAMERA_MSG_MIN_INTERVAL_MS / 2);
    expect(tooSoon).toBeNull();
    const later = cameraMessage(moved, first, 1000, 1000 + CAMERA_MSG_MIN_INTERVAL_MS + 1);
    expect(later).not.toBeNull();
  });

  it("follows every emission with a frame request", () => {
    const msgs = withFrameRequest(toleranceMessage(11));
    expect(msgs).toHaveLength(2);
    expect(msgs[1]).toEqual({ type: "requestFrame" });
  });
});

describe("frame reduction", () => {
  it("drops frames arriving out of order", () => {
    const state = initialState();
    expect(reduceFrame(state, frame(2))).not.toBeNull();
    expect(reduceFrame(state, frame(1))).toBeNull();
    expect(state.lastFrameId).toBe(2);
    expect(reduceFrame(state, frame(3))).not.toBeNull();
  });

  it("exposes the png as a data url and keeps stats attached", () => {
    const state = initialState();
    const update = reduceFrame(state, frame(1))!;
    expect(update.imageDataUrl.startsWith("data:image/png;base64,")).toBe(true);
    expect(update.stats.selectedCount).toBe(561532);
    expect(state.lastStats?.tau).toBe(2048);
  });
});

describe("stats formatting", () => {
  it("renders percentages with one decimal", () => {
    expect(formatPercentage(34.28)).toBe("34.3%");
    expect(formatPercentage(100)).toBe("100.0%");
  });

  it("derives fps from the per-stage timings", () => {
    expect(deriveFps(stats())).toBeCloseTo(20, 9);
    const line = formatStats(stats());
    expect(line).toContain("34.3%");
    expect(line).toContain("20.0 fps");
  });
});

describe("reconnect backoff", () => {
  it("doubles from 500ms and saturates at 8s", () => {
    expect(backoffDelayMs(0)).toBe(500);
    expect(backoffDelayMs(1)).toBe(1000);
    expect(backoffDelayMs(4)).toBe(8000);
    expect(backoffDelayMs(12)).toBe(8000);
  });
});

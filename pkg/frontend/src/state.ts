// Pure view-state logic: orbit camera math, the logarithmic tolerance
// slider, outgoing-message throttling/dedup, and frame/stats reduction.
// Everything here is side-effect free so it can be unit tested headlessly.

import type { ClientMsg, FrameMsg, FrameStats, RenderMode, SetCameraMsg } from "./protocol.js";

export interface OrbitState {
  azimuthDeg: number;
  elevationDeg: number;
  radius: number;
  target: [number, number, number];
}

export interface UIState {
  orbit: OrbitState;
  sliderValue: number; // tau = 2^sliderValue
  mode: RenderMode;
  lastStats: FrameStats | null;
  lastFrameId: number;
  connected: boolean;
}

export const SLIDER_MIN = 9; // tau 512
export const SLIDER_MAX = 13; // tau 8192
export const MIN_ELEVATION = -89;
export const MAX_ELEVATION = 89;
export const CAMERA_MSG_MIN_INTERVAL_MS = 1000 / 30;
export const POSE_EPSILON = 1e-6;

export function initialState(): UIState {
  return {
    orbit: { azimuthDeg: -90, elevationDeg: 25, radius: 30, target: [0, 0, 0] },
    sliderValue: 11, // tau 2048, the default tolerance
    mode: "lod",
    lastStats: null,
    lastFrameId: 0,
    connected: false,
  };
}

export function clampElevation(deg: number): number {
  return Math.min(MAX_ELEVATION, Math.max(MIN_ELEVATION, deg));
}

export function clampRadius(radius: number): number {
  return Math.max(1e-3, radius);
}

export function sliderToTau(value: number): number {
  return Math.pow(2, value);
}

export function tauToSlider(tau: number): number {
  return Math.log2(Math.max(tau, 1e-12));
}

export function orbitToCamera(orbit: OrbitState): SetCameraMsg {
  const az = (orbit.azimuthDeg * Math.PI) / 180;
  const el = (clampElevation(orbit.elevationDeg) * Math.PI) / 180;
  const r = clampRadius(orbit.radius);
  const [tx, ty, tz] = orbit.target;
  return {
    type: "setCamera",
    position: [
      tx + r * Math.cos(el) * Math.cos(az),
      ty + r * Math.cos(el) * Math.sin(az),
      tz + r * Math.sin(el),
    ],
    target: [tx, ty, tz],
    up: [0, 0, 1],
  };
}

export function applyDrag(orbit: OrbitState, dxPixels: number, dyPixels: number): OrbitState {
  return {
    ...orbit,
    azimuthDeg: orbit.azimuthDeg - dxPixels * 0.4,
    elevationDeg: clampElevation(orbit.elevationDeg + dyPixels * 0.4),
  };
}

export function applyZoom(orbit: OrbitState, wheelDelta: number): OrbitState {
  return { ...orbit, radius: clampRadius(orbit.radius * Math.exp(wheelDelta * 0.001)) };
}

function poseDiffers(a: SetCameraMsg, b: SetCameraMsg, eps = POSE_EPSILON): boolean {
  const fields: Array<[number, number, number]> = [a.position, a.target, a.up];
  const other: Array<[number, number, number]> = [b.position, b.target, b.up];
  for (let i = 0; i < fields.length; i++) {
    for (let k = 0; k < 3; k++) {
      if (Math.abs(fields[i][k] - other[i][k]) > eps) return true;
    }
  }
  return false;
}

/** Camera drags are throttled to at most 30 messages per second and
 * suppressed entirely when the pose has not meaningfully changed. */
export function cameraMessage(
  next: OrbitState,
  lastSent: SetCameraMsg | null,
  lastSentAtMs: number,
  nowMs: number,
): SetCameraMsg | null {
  const msg = orbitToCamera(next);
  if (lastSent !== null && !poseDiffers(msg, lastSent)) return null;
  if (nowMs - lastSentAtMs < CAMERA_MSG_MIN_INTERVAL_MS) return null;
  return msg;
}

export function toleranceMessage(sliderValue: number): ClientMsg {
  return { type: "setTolerance", tau: sliderToTau(sliderValue) };
}

export function modeMessage(mode: RenderMode): ClientMsg {
  return { type: "setMode", mode };
}

/** Every state-changing emission is followed by an explicit frame request. */
export function withFrameRequest(msg: ClientMsg): ClientMsg[] {
  return [msg, { type: "requestFrame" }];
}

export interface FrameUpdate {
  imageDataUrl: string;
  stats: FrameStats;
  frameId: number;
}

/** Frames arriving out of order are dropped: only a frameId above the last
 * displayed one produces an update. */
export function reduceFrame(state: UIState, msg: FrameMsg): FrameUpdate | null {
  if (msg.frameId <= state.lastFrameId) return null;
  state.lastFrameId = msg.frameId;
  state.lastStats = msg.stats;
  return {
    imageDataUrl: `data:image/png;base64,${msg.png}`,
    stats: msg.stats,
    frameId: msg.frameId,
  };
}

export function formatPercentage(value: number): string {
  return `${value.toFixed(1)}%`;
}

export function formatStats(stats: FrameStats): string {
  const fps = deriveFps(stats);
  return (
    `${stats.selectedCount.toLocaleString("en-US")} / ` +
    `${stats.residentCount.toLocaleString("en-US")} splats ` +
    `(${formatPercentage(stats.percentage)}) | ` +
    `select ${stats.selectMs.toFixed(1)} ms, render ${stats.renderMs.toFixed(1)} ms ` +
    `(${fps.toFixed(1)} fps) | tau ${stats.tau} | ${stats.mode}`
  );
}

export function deriveFps(stats: FrameStats): number {
  const total = stats.selectMs + stats.renderMs;
  return total > 0 ? 1000 / total : 0;
}

/** Reconnect backoff: 500 ms doubling to an 8 s ceiling. */
export function backoffDelayMs(attempt: number): number {
  return Math.min(500 * Math.pow(2, Math.max(0, attempt)), 8000);
}

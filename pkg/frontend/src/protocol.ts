// Wire types for the viewer service WebSocket protocol.

export type RenderMode = "lod" | "vanilla" | "radius-clip" | "layer-debug";

export interface SetCameraMsg {
  type: "setCamera";
  position: [number, number, number];
  target: [number, number, number];
  up: [number, number, number];
}

export interface SetToleranceMsg {
  type: "setTolerance";
  tau: number;
}

export interface SetModeMsg {
  type: "setMode";
  mode: RenderMode;
}

export interface SetResolutionMsg {
  type: "setResolution";
  w: number;
  h: number;
}

export interface RequestFrameMsg {
  type: "requestFrame";
}

export type ClientMsg =
  | SetCameraMsg
  | SetToleranceMsg
  | SetModeMsg
  | SetResolutionMsg
  | RequestFrameMsg;

export interface FrameStats {
  selectedCount: number;
  residentCount: number;
  percentage: number;
  selectMs: number;
  renderMs: number;
  tau: number;
  mode: string;
}

export interface FrameMsg {
  type: "frame";
  frameId: number;
  stats: FrameStats;
  png: string; // base64-encoded image
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type ServerMsg = FrameMsg | ErrorMsg;

export interface SceneMeta {
  assets: string[];
  instanceCount: number;
  boundingBox: { min: [number, number, number]; max: [number, number, number] };
  residentCount: number;
}

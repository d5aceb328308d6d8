// Browser console for the viewer service: orbit/zoom camera, logarithmic
// tolerance slider, render-mode toggle, and a live stats panel.

import type { RenderMode, SceneMeta, ServerMsg, SetCameraMsg } from "./protocol.js";
import {
  SLIDER_MAX,
  SLIDER_MIN,
  UIState,
  applyDrag,
  applyZoom,
  backoffDelayMs,
  cameraMessage,
  formatStats,
  initialState,
  modeMessage,
  reduceFrame,
  sliderToTau,
  toleranceMessage,
  withFrameRequest,
} from "./state.js";

const state: UIState = initialState();
let ws: WebSocket | null = null;
let reconnectAttempt = 0;
let lastSentCamera: SetCameraMsg | null = null;
let lastCameraSentAt = 0;
let pendingCameraTimer: number | null = null;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const frameImg = $("frame") as unknown as HTMLImageElement;
const statsPanel = $("stats");
const statusBar = $("status");
const slider = $("tau-slider") as unknown as HTMLInputElement;
const tauLabel = $("tau-label");

function send(msgs: object | object[]): void {
  if (!ws || ws.readyState !== WebSocket.OPEN) return;
  for (const msg of Array.isArray(msgs) ? msgs : [msgs]) {
    ws.send(JSON.stringify(msg));
  }
}

function pushCamera(): void {
  const now = performance.now();
  const msg = cameraMessage(state.orbit, lastSentCamera, lastCameraSentAt, now);
  if (msg !== null) {
    lastSentCamera = msg;
    lastCameraSentAt = now;
    send(withFrameRequest(msg));
  } else if (pendingCameraTimer === null) {
    // Re-check once the throttle window has passed so the final pose of a
    // fast drag is never lost.
    pendingCameraTimer = window.setTimeout(() => {
      pendingCameraTimer = null;
      pushCamera();
    }, 40);
  }
}

function setStatus(text: string, bad = false): void {
  statusBar.textContent = text;
  statusBar.className = bad ? "bad" : "ok";
}

function connect(): void {
  const url = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
  setStatus("connecting…");
  ws = new WebSocket(url);

  ws.onopen = () => {
    state.connected = true;
    reconnectAttempt = 0;
    setStatus("connected");
    lastSentCamera = null;
    lastCameraSentAt = 0;
    pushCamera();
    send(withFrameRequest(toleranceMessage(state.sliderValue)));
  };

  ws.onmessage = (event) => {
    let msg: ServerMsg;
    try {
      msg = JSON.parse(event.data as string) as ServerMsg;
    } catch {
      setStatus("malformed frame from server", true);
      return;
    }
    if (msg.type === "error") {
      setStatus(msg.message, true);
      return;
    }
    if (msg.type === "frame") {
      const update = reduceFrame(state, msg);
      if (update) {
        frameImg.src = update.imageDataUrl;
        statsPanel.textContent = formatStats(update.stats);
      }
    }
  };

  ws.onclose = () => {
    state.connected = false;
    const delay = backoffDelayMs(reconnectAttempt++);
    setStatus(`disconnected — retrying in ${(delay / 1000).toFixed(1)}s`, true);
    window.setTimeout(connect, delay);
  };

  ws.onerror = () => ws?.close();
}

function initControls(): void {
  slider.min = String(SLIDER_MIN);
  slider.max = String(SLIDER_MAX);
  slider.step = "0.25";
  slider.value = String(state.sliderValue);
  tauLabel.textContent = `tau ${sliderToTau(state.sliderValue)}`;
  slider.addEventListener("input", () => {
    state.sliderValue = Number(slider.value);
    tauLabel.textContent = `tau ${Math.round(sliderToTau(state.sliderValue))}`;
    send(withFrameRequest(toleranceMessage(state.sliderValue)));
  });

  for (const mode of ["lod", "vanilla", "radius-clip", "layer-debug"] as RenderMode[]) {
    $(`mode-${mode}`).addEventListener("click", () => {
      state.mode = mode;
      send(withFrameRequest(modeMessage(mode)));
      document.querySelectorAll(".mode-btn").forEach((b) => b.classList.remove("active"));
      $(`mode-${mode}`).classList.add("active");
    });
  }

  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  frameImg.addEventListener("pointerdown", (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
    frameImg.setPointerCapture(e.pointerId);
  });
  frameImg.addEventListener("pointermove", (e) => {
    if (!dragging) return;
    state.orbit = applyDrag(state.orbit, e.clientX - lastX, e.clientY - lastY);
    lastX = e.clientX;
    lastY = e.clientY;
    pushCamera();
  });
  frameImg.addEventListener("pointerup", () => {
    dragging = false;
  });
  frameImg.addEventListener("wheel", (e) => {
    e.preventDefault();
    state.orbit = applyZoom(state.orbit, e.deltaY);
    pushCamera();
  });
}

async function initScene(): Promise<void> {
  try {
    const meta = (await (await fetch("/scene")).json()) as SceneMeta;
    const { min, max } = meta.boundingBox;
    const center: [number, number, number] = [
      (min[0] + max[0]) / 2,
      (min[1] + max[1]) / 2,
      (min[2] + max[2]) / 2,
    ];
    const span = Math.hypot(max[0] - min[0], max[1] - min[1], max[2] - min[2]);
    state.orbit = { ...state.orbit, target: center, radius: Math.max(span, 1) };
    $("scene-name").textContent =
      `${meta.assets.join(", ")} — ${meta.instanceCount} instances, ` +
      `${meta.residentCount.toLocaleString("en-US")} splats`;
  } catch {
    setStatus("could not load /scene metadata", true);
  }
}

initControls();
void initScene().then(connect);

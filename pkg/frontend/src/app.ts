// Browser glue: canvas drawing on the scene image, rotation sliders with
// the live wireframe, gripper buttons, queue progress, stage buttons and
// the event log. All protocol work goes through the tested modules.

import { Client } from "./api.js";
import { Pt, resamplePolyline } from "./geometry.js";
import { buildSegmentTable, renderSegmentTable, ReportRecord } from "./report.js";
import { streamEvents } from "./sse.js";
import { Annotations, StrokeRecorder } from "./stroke.js";
import { SceneInfo, ProgressEvent } from "./types.js";
import { validateStroke } from "./validate.js";
import { projectWireframe } from "./wireframe.js";

const STAGES = ["compile", "train", "ground", "evaluate"] as const;

class App {
  client = new Client("");
  recorder = new StrokeRecorder();
  annotations = new Annotations();
  sessionId: string | null = null;
  scene: SceneInfo | null = null;
  sceneImage: HTMLImageElement | null = null;
  sliders: [number, number, number] = [0, 0, 0];
  losses: number[] = [];
  drawing = false;

  private el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
  }

  async start(): Promise<void> {
    this.el<HTMLButtonElement>("create").onclick = () => this.createSession();
    this.el<HTMLButtonElement>("undo").onclick = () => {
      this.recorder.undo();
      this.redraw();
    };
    this.el<HTMLButtonElement>("submit").onclick = () => this.submit();
    this.el<HTMLButtonElement>("grip-close").onclick = () => this.gripper(1);
    this.el<HTMLButtonElement>("grip-open").onclick = () => this.gripper(0);
    for (const axis of ["rx", "ry", "rz"] as const) {
      this.el<HTMLInputElement>(axis).oninput = () => this.sliderChanged();
    }
    for (const stage of STAGES) {
      this.el<HTMLButtonElement>(`stage-${stage}`).onclick = () =>
        this.runStage(stage);
    }
    const canvas = this.el<HTMLCanvasElement>("scene");
    canvas.onpointerdown = (e) => {
      if (e.shiftKey) {
        this.annotations.select(this.canvasPoint(e), this.recorder.samples);
        this.redraw();
        return;
      }
      this.drawing = true;
      this.recorder.begin(this.canvasPoint(e));
    };
    canvas.onpointermove = (e) => {
      if (this.drawing) {
        this.recorder.extend(this.canvasPoint(e));
        this.redraw();
      }
    };
    canvas.onpointerup = () => (this.drawing = false);
    this.drawWireframe();
  }

  private canvasPoint(e: PointerEvent): Pt {
    const rect = (e.target as HTMLCanvasElement).getBoundingClientRect();
    return [e.clientX - rect.left, e.clientY - rect.top];
  }

  async createSession(): Promise<void> {
    const task = this.el<HTMLInputElement>("task").value;
    const m = parseInt(this.el<HTMLInputElement>("scenes").value, 10);
    const seed = parseInt(this.el<HTMLInputElement>("seed").value, 10);
    const state = await this.client.createSession(task, m, seed);
    this.sessionId = state.session_id;
    this.log(`session ${state.session_id} created with ${m} scenes`);
    this.followEvents();
    await this.advance();
  }

  async advance(): Promise<void> {
    if (!this.sessionId) return;
    const scene = await this.client.nextScene(this.sessionId);
    if (scene.done) {
      this.scene = null;
      this.log("queue empty; pipeline stages unlocked");
      this.el<HTMLDivElement>("stages").style.display = "block";
      this.updateProgress(0);
      return;
    }
    this.scene = scene;
    this.recorder = new StrokeRecorder();
    this.annotations = new Annotations();
    this.sliders = scene.initial_rotation;
    const img = new Image();
    img.src = this.client.imageUrl(scene);
    await img.decode();
    this.sceneImage = img;
    this.updateProgress(scene.remaining);
    this.redraw();
  }

  sliderChanged(): void {
    this.sliders = [
      parseFloat(this.el<HTMLInputElement>("rx").value),
      parseFloat(this.el<HTMLInputElement>("ry").value),
      parseFloat(this.el<HTMLInputElement>("rz").value),
    ];
    this.annotations.setRotation(this.sliders);
    this.drawWireframe();
    this.redraw();
  }

  gripper(value: number): void {
    this.annotations.addGripperEvent(value);
    this.redraw();
  }

  async submit(): Promise<void> {
    if (!this.sessionId || !this.scene) return;
    const stroke = this.recorder.decimated();
    const verdict = validateStroke(
      stroke,
      this.scene.end_effector_pixel,
      this.scene.width,
      this.scene.height
    );
    if (!verdict.ok) {
      this.log(`rejected locally: ${verdict.reason}`);
      return;
    }
    try {
      const response = await this.client.submitDrawing(this.sessionId, {
        scene_id: this.scene.scene_id,
        stroke,
        rotation_keypoints: this.annotations.keypoints.map((k) => [
          k.index,
          k.rotation,
        ]),
        gripper_events: this.annotations.gripperEvents.map((e) => [
          e.index,
          e.value,
        ]),
        idempotency_key: `${this.scene.scene_id}:${Date.now()}`,
      });
      this.log(
        `drawing accepted for ${response.scene_id} (${response.n_waypoints} waypoints)`
      );
      await this.advance();
    } catch (e) {
      this.log(`server rejected: ${String(e)}`);
    }
  }

  async runStage(stage: string): Promise<void> {
    if (!this.sessionId) return;
    await this.client.runStage(this.sessionId, stage, `${stage}:once`);
    this.log(`stage ${stage} started`);
  }

  followEvents(): void {
    if (!this.sessionId) return;
    const id = this.sessionId;
    void streamEvents(
      (after) => this.client.eventsUrl(id, after),
      (msg) => {
        const ev = JSON.parse(msg.data) as ProgressEvent;
        this.handleEvent(ev);
      }
    );
  }

  handleEvent(ev: ProgressEvent): void {
    if (ev.type === "progress" && typeof ev.loss === "number") {
      this.losses.push(ev.loss);
      this.drawLossPlot();
    }
    if (ev.type === "progress" && ev.stage === "evaluate" && ev.segments) {
      // Individual instance rows stream in; the full table renders when
      // artifacts land (below) or incrementally from these events.
      this.log(
        `eval ${String(ev.policy)} instance ${ev.instance}: success ${ev.success}`
      );
    }
    if (ev.type === "stage_complete" && ev.stage === "evaluate") {
      void this.renderReports();
    }
    if (ev.type === "stage_failed") {
      this.log(`stage ${ev.stage} failed: ${ev.error}`);
    }
    this.log(JSON.stringify(ev));
  }

  async renderReports(): Promise<void> {
    if (!this.sessionId) return;
    const state = await this.client.sessionState(this.sessionId);
    const container = this.el<HTMLDivElement>("reports");
    container.innerHTML = "";
    for (const name of Object.keys(state.artifacts)) {
      if (!name.startsWith("eval_") || !name.endsWith(".report")) continue;
      const r = await fetch(`/v1/sessions/${this.sessionId}/artifacts/${name}`);
      if (!r.ok) continue;
      const records = (await r.text()).split("\n");
      try {
        const parsed = records
          .slice(1)
          .filter((l) => l.trim())
          .map((l) => JSON.parse(l) as ReportRecord);
        container.innerHTML += renderSegmentTable(buildSegmentTable(parsed));
      } catch {
        // not a report file; skip it
      }
    }
  }

  updateProgress(remaining: number): void {
    this.el<HTMLSpanElement>("remaining").textContent = String(remaining);
  }

  log(line: string): void {
    const panel = this.el<HTMLPreElement>("log");
    panel.textContent = `${line}\n${panel.textContent ?? ""}`.slice(0, 20000);
  }

  redraw(): void {
    if (!this.scene) return;
    const canvas = this.el<HTMLCanvasElement>("scene");
    canvas.width = this.scene.width;
    canvas.height = this.scene.height;
    const ctx = canvas.getContext("2d")!;
    if (this.sceneImage) ctx.drawImage(this.sceneImage, 0, 0);
    const stroke = this.recorder.samples;
    if (stroke.length >= 2) {
      ctx.strokeStyle = "#d22";
      ctx.lineWidth = 3;
      ctx.beginPath();
      ctx.moveTo(stroke[0][0], stroke[0][1]);
      for (const [u, v] of stroke.slice(1)) ctx.lineTo(u, v);
      ctx.stroke();
      const preview = resamplePolyline(stroke, Math.min(75, stroke.length));
      ctx.fillStyle = "#d22";
      for (const [u, v] of preview) ctx.fillRect(u - 1, v - 1, 2, 2);
    }
    const [eu, ev] = this.scene.end_effector_pixel;
    ctx.strokeStyle = "#0a0";
    ctx.lineWidth = 2;
    ctx.strokeRect(eu - 8, ev - 8, 16, 16);
    for (const k of this.annotations.keypoints) {
      const p = stroke[Math.min(k.index, stroke.length - 1)];
      if (p) {
        ctx.fillStyle = "#06c";
        ctx.beginPath();
        ctx.arc(p[0], p[1], 5, 0, 2 * Math.PI);
        ctx.fill();
      }
    }
  }

  drawWireframe(): void {
    const canvas = this.el<HTMLCanvasElement>("wireframe");
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.save();
    ctx.translate(canvas.width / 2, canvas.height / 2);
    const projected = projectWireframe(this.sliders);
    ctx.strokeStyle = "#333";
    ctx.lineWidth = 3;
    for (const seg of projected.segments) {
      ctx.beginPath();
      ctx.moveTo(seg[0][0], seg[0][1]);
      ctx.lineTo(seg[1][0], seg[1][1]);
      ctx.stroke();
    }
    ctx.strokeStyle = "#d22";
    ctx.beginPath();
    ctx.moveTo(0, 0);
    ctx.lineTo(projected.forward[0] * 45, projected.forward[1] * 45);
    ctx.stroke();
    ctx.restore();
  }

  drawLossPlot(): void {
    const canvas = this.el<HTMLCanvasElement>("loss-plot");
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (this.losses.length < 2) return;
    const max = Math.max(...this.losses);
    ctx.strokeStyle = "#06c";
    ctx.beginPath();
    this.losses.forEach((v, i) => {
      const x = (i / (this.losses.length - 1)) * canvas.width;
      const y = canvas.height - (v / max) * (canvas.height - 4) - 2;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
}

if (typeof document !== "undefined") {
  const app = new App();
  void app.start();
  (window as unknown as Record<string, unknown>).l2d2App = app;
}

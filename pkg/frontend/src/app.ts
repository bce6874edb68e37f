/** Browser wiring: one canvas, a toolbar, file-based load/save.
 *
 * Single user, single session; every control is a thin call into
 * AnnotationSession followed by a redraw. No server round-trips: the frame
 * comes from a file input and the annotation leaves as a JSON download.
 */

import { CATEGORY_IDS, CATEGORY_LABELS, PALETTE } from "./categories.js";
import { exportAnnotation, importAnnotation } from "./io.js";
import { previewColors } from "./raster.js";
import { AnnotationSession } from "./session.js";

const PREVIEW_W = 64;
const PREVIEW_H = 36;

type Mode = "polygon" | "porch-line";

class App {
  private session: AnnotationSession | null = null;
  private image: HTMLImageElement | null = null;
  private mode: Mode = "polygon";
  private showPreview = false;

  private readonly canvas: HTMLCanvasElement;
  private readonly status: HTMLElement;

  constructor(root: HTMLElement) {
    this.canvas = root.querySelector("#frame") as HTMLCanvasElement;
    this.status = root.querySelector("#status") as HTMLElement;

    const select = root.querySelector("#category") as HTMLSelectElement;
    for (const id of CATEGORY_IDS) {
      const opt = document.createElement("option");
      opt.value = CATEGORY_LABELS[id];
      opt.textContent = CATEGORY_LABELS[id];
      select.appendChild(opt);
    }

    (root.querySelector("#load-frame") as HTMLInputElement).addEventListener(
      "change", (e) => this.loadFrame(e));
    (root.querySelector("#load-json") as HTMLInputElement).addEventListener(
      "change", (e) => this.loadJson(e));
    (root.querySelector("#close-polygon") as HTMLButtonElement).addEventListener(
      "click", () => this.withSession((s) => void s.closePolygon()));
    (root.querySelector("#assign") as HTMLButtonElement).addEventListener(
      "click", () => this.withSession((s) => void s.assignCategory(select.value)));
    (root.querySelector("#undo") as HTMLButtonElement).addEventListener(
      "click", () => this.withSession((s) => void s.undo()));
    (root.querySelector("#mode") as HTMLButtonElement).addEventListener(
      "click", () => this.toggleMode());
    (root.querySelector("#preview") as HTMLButtonElement).addEventListener(
      "click", () => { this.showPreview = !this.showPreview; this.redraw(); });
    (root.querySelector("#export") as HTMLButtonElement).addEventListener(
      "click", () => this.download());
    this.canvas.addEventListener("click", (e) => this.click(e));
  }

  private withSession(f: (s: AnnotationSession) => void): void {
    if (this.session === null) {
      this.report("load a frame first");
      return;
    }
    f(this.session);
    this.report(this.session.warning ?? "");
    this.redraw();
  }

  private report(message: string): void {
    this.status.textContent = message;
  }

  private loadFrame(event: Event): void {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const img = new Image();
    img.onload = () => {
      this.image = img;
      this.canvas.width = img.naturalWidth;
      this.canvas.height = img.naturalHeight;
      this.session = new AnnotationSession(
        file.name.replace(/\.[^.]*$/, ""), img.naturalWidth, img.naturalHeight);
      this.report(`frame ${img.naturalWidth}x${img.naturalHeight} loaded`);
      this.redraw();
    };
    img.src = URL.createObjectURL(file);
  }

  private loadJson(event: Event): void {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (!file) return;
    file.text().then((text) => {
      this.session = importAnnotation(text);
      this.canvas.width = this.session.imageWidth;
      this.canvas.height = this.session.imageHeight;
      this.report(`imported ${this.session.regions.length} regions`);
      this.redraw();
    }).catch((err) => this.report(String(err)));
  }

  private toggleMode(): void {
    this.mode = this.mode === "polygon" ? "porch-line" : "polygon";
    this.report(`mode: ${this.mode}`);
  }

  private click(event: MouseEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const x = ((event.clientX - rect.left) * this.canvas.width) / rect.width;
    const y = ((event.clientY - rect.top) * this.canvas.height) / rect.height;
    this.withSession((s) => {
      if (this.mode === "porch-line") {
        s.addPorchPoint(x, y);
      } else {
        s.addPoint(x, y);
      }
    });
  }

  private download(): void {
    if (this.session === null) {
      this.report("nothing to export");
      return;
    }
    const result = exportAnnotation(this.session);
    if (!result.ok) {
      this.report(result.diagnostics.join("; "));
      return;
    }
    const blob = new Blob([result.json], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `${this.session.sceneId}.json`;
    a.click();
    this.report("exported");
  }

  private redraw(): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null || this.session === null) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image !== null) {
      ctx.drawImage(this.image, 0, 0);
    }

    if (this.showPreview) {
      const raster = this.session.previewRasterization(PREVIEW_W, PREVIEW_H);
      if (raster !== null) {
        const colors = previewColors(raster);
        const cw = this.canvas.width / raster.width;
        const ch = this.canvas.height / raster.height;
        ctx.globalAlpha = 0.55;
        for (let i = 0; i < raster.height; i++) {
          for (let j = 0; j < raster.width; j++) {
            ctx.fillStyle = colors[i * raster.width + j]!;
            ctx.fillRect(j * cw, i * ch, cw, ch);
          }
        }
        ctx.globalAlpha = 1.0;
      }
    }

    for (const reg of this.session.regions) {
      this.tracePath(ctx, reg.polygon, PALETTE[reg.category ?? 0]!, true);
    }
    if (this.session.draft.length > 0) {
      this.tracePath(ctx, this.session.draft, "#ffffff", false);
    }
    if (this.session.porchLine.length === 2) {
      this.tracePath(ctx, this.session.porchLine, PALETTE[4]!, false);
    }
  }

  private tracePath(
    ctx: CanvasRenderingContext2D,
    points: readonly (readonly [number, number])[],
    color: string,
    closed: boolean,
  ): void {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    if (closed) ctx.closePath();
    ctx.stroke();
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("annotator");
  if (root !== null) {
    new App(root);
  }
}

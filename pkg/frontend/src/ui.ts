/**
 * DOM wiring for the light-editing console. No rendering happens here: every
 * pixel shown comes from the service, so the console can never disagree with
 * the batch pipeline.
 */

import { DebouncedRigSender, HttpRelightService, RigDiagnostics, SessionInfo } from "./client.js";
import { LightRig, RigEditorState, validateRig } from "./rig.js";

const SH_LABELS = ["ambient", "left-right", "bottom-top", "back-front"];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (HTMLElement | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  for (const child of children) node.append(child);
  return node;
}

export class Console {
  private readonly service = new HttpRelightService("");
  private session: SessionInfo | null = null;
  private state: RigEditorState | null = null;
  private sender: DebouncedRigSender | null = null;
  private originalUrl: string | null = null;
  private showOriginal = false;

  private readonly preview = el("img", { id: "preview", alt: "preview" });
  private readonly status = el("div", { id: "status" });
  private readonly toasts = el("div", { id: "toasts" });
  private readonly controls = el("div", { id: "controls" });

  mount(root: HTMLElement): void {
    const bundleInput = el("input", {
      type: "text",
      id: "bundle-path",
      placeholder: "path to a recovered bundle directory",
    });
    const openBtn = el("button", {}, "Open session");
    openBtn.addEventListener("click", () => void this.open(bundleInput.value));
    root.append(
      el("div", { id: "open-bar" }, bundleInput, openBtn),
      el("div", { id: "stage" }, this.preview),
      this.status,
      this.controls,
      this.toasts,
    );
  }

  private toast(message: string): void {
    const node = el("div", { class: "toast" }, message);
    this.toasts.append(node);
    setTimeout(() => node.remove(), 4000);
  }

  private async open(bundle: string): Promise<void> {
    try {
      this.session = await this.service.openBundle(bundle);
    } catch (err) {
      this.toast(err instanceof Error ? err.message : String(err));
      return;
    }
    this.state = new RigEditorState(this.session.rig);
    this.sender = new DebouncedRigSender(this.service, this.session.id, {
      onAcknowledged: (_rig, diag) => this.refreshPreview(diag),
      onError: (message) => this.toast(message),
    });
    const blob = await this.service.fetchPreview(this.session.id);
    this.originalUrl = URL.createObjectURL(blob);
    this.preview.src = this.originalUrl;
    this.buildControls();
  }

  private refreshPreview(diag: RigDiagnostics): void {
    if (!this.session || this.showOriginal) return;
    this.preview.src = `${this.service.previewUrl(this.session.id)}?g=${diag.generation}`;
    this.status.textContent =
      `generation ${diag.generation} · ${Math.round(diag.render_seconds * 1000)} ms` +
      ` · ${diag.clamped_pixels} clamped px`;
  }

  private push(): void {
    if (!this.state || !this.sender) return;
    const rig = this.state.serialize();
    const problems = validateRig(rig);
    if (problems.length) {
      this.toast(problems.join("; "));
      return;
    }
    this.sender.update(rig);
  }

  private buildControls(): void {
    if (!this.state) return;
    this.controls.replaceChildren();

    // SH sliders
    const shBox = el("fieldset", {}, el("legend", {}, "spherical harmonics"));
    for (let i = 0; i < 4; i++) {
      const slider = el("input", {
        type: "range",
        min: "-2",
        max: "4",
        step: "0.01",
        value: String(this.state.shCoefficient(i)),
      });
      slider.addEventListener("input", () => {
        this.state?.setShCoefficient(i, parseFloat(slider.value));
        this.push();
      });
      shBox.append(el("label", {}, SH_LABELS[i] ?? `c${i}`, slider));
    }
    this.controls.append(shBox);

    // directional light ball
    const ball = el("canvas", { width: "120", height: "120", class: "light-ball" });
    const ballBox = el("fieldset", {}, el("legend", {}, "directional light"), ball);
    const addDir = el("button", {}, "Add directional");
    addDir.addEventListener("click", () => {
      this.state?.addDirectional();
      this.push();
    });
    ballBox.append(addDir);
    ball.addEventListener("pointerdown", (down) => {
      const drag = (move: PointerEvent) => {
        if (!this.state) return;
        const rect = ball.getBoundingClientRect();
        const nx = ((move.clientX - rect.left) / rect.width) * 2 - 1;
        const ny = 1 - ((move.clientY - rect.top) / rect.height) * 2;
        const sel = this.state.selection;
        const index = sel.kind === "directional" ? sel.index : 0;
        if (!this.state.rig.directionals.length) this.state.addDirectional();
        this.state.setDirectionalAngles(index, nx * Math.PI, (ny * Math.PI) / 2);
        this.push();
      };
      drag(down);
      const up = () => {
        window.removeEventListener("pointermove", drag);
        window.removeEventListener("pointerup", up);
      };
      window.addEventListener("pointermove", drag);
      window.addEventListener("pointerup", up);
    });
    this.controls.append(ballBox);

    // spot lights: click the preview to place, picker for color
    const spotBox = el("fieldset", {}, el("legend", {}, "spot lights"));
    const color = el("input", { type: "color", value: "#fff2dd" });
    const strength = el("input", { type: "range", min: "0", max: "3", step: "0.05", value: "1" });
    const cone = el("input", { type: "range", min: "0.05", max: "1.5", step: "0.01", value: "0.5" });
    spotBox.append(el("label", {}, "color", color), el("label", {}, "strength", strength),
                   el("label", {}, "cone", cone));
    this.preview.addEventListener("click", (ev) => {
      if (!this.state || !this.session) return;
      const rect = this.preview.getBoundingClientRect();
      const px = ((ev.clientX - rect.left) / rect.width) * this.session.width;
      const py = ((ev.clientY - rect.top) / rect.height) * this.session.height;
      const index = this.state.addSpot([px, -py, 400]);
      this.state.setSpotColor(index, color.value, parseFloat(strength.value));
      this.state.setSpotCone(index, parseFloat(cone.value));
      this.push();
    });
    const tweak = () => {
      if (!this.state) return;
      const sel = this.state.selection;
      if (sel.kind !== "spot") return;
      this.state.setSpotColor(sel.index, color.value, parseFloat(strength.value));
      this.state.setSpotCone(sel.index, parseFloat(cone.value));
      this.push();
    };
    color.addEventListener("input", tweak);
    strength.addEventListener("input", tweak);
    cone.addEventListener("input", tweak);
    this.controls.append(spotBox);

    // reset / export / compare
    const reset = el("button", {}, "Reset lighting");
    reset.addEventListener("click", () => {
      if (!this.state || !this.sender) return;
      this.state.reset();
      this.sender.updateNow(this.state.serialize());
    });
    const exportBtn = el("button", {}, "Export full resolution");
    exportBtn.addEventListener("click", () => void this.export());
    const compare = el("button", {}, "Hold to compare original");
    compare.addEventListener("pointerdown", () => {
      if (!this.originalUrl) return;
      this.showOriginal = true;
      this.preview.src = this.originalUrl;
    });
    compare.addEventListener("pointerup", () => {
      this.showOriginal = false;
      if (this.session && this.sender?.acknowledged) {
        this.preview.src = `${this.service.previewUrl(this.session.id)}?g=latest`;
      }
    });
    this.controls.append(el("div", { id: "actions" }, reset, exportBtn, compare));
  }

  private async export(): Promise<void> {
    if (!this.session || !this.sender) return;
    await this.sender.settled();
    try {
      const blob = await this.service.exportFull(this.session.id);
      const a = el("a", { download: "relit.png" });
      a.href = URL.createObjectURL(blob);
      a.click();
      URL.revokeObjectURL(a.href);
    } catch (err) {
      this.toast(err instanceof Error ? err.message : String(err));
    }
  }
}

export function start(): void {
  const root = document.getElementById("app");
  if (root) new Console().mount(root);
}

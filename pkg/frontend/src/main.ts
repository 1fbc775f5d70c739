/** DOM wiring: upload, sliders, preset, view modes, and the grid view. */

import { ApiClient, ApiError } from "./api.js";
import { RestoreController } from "./controller.js";
import { renderGrid } from "./grid.js";
import { SCALE_MAX, SCALE_MIN, SCALE_STEP, clampScale, initialState } from "./state.js";

const baseUrl = (window as { DUALSR_BASE_URL?: string }).DUALSR_BASE_URL
  ?? "http://127.0.0.1:8000";
const api = new ApiClient(baseUrl);
const state = initialState();
let controller: RestoreController | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const fileInput = el<HTMLInputElement>("file-input");
const pixSlider = el<HTMLInputElement>("pix-slider");
const semSlider = el<HTMLInputElement>("sem-slider");
const pixValue = el<HTMLSpanElement>("pix-value");
const semValue = el<HTMLSpanElement>("sem-value");
const lqPreview = el<HTMLImageElement>("lq-preview");
const resultImage = el<HTMLImageElement>("result-image");
const resultLabel = el<HTMLDivElement>("result-label");
const errorBox = el<HTMLDivElement>("error-box");
const defaultButton = el<HTMLButtonElement>("default-button");
const gridButton = el<HTMLButtonElement>("grid-button");
const gridContainer = el<HTMLDivElement>("grid-container");

for (const slider of [pixSlider, semSlider]) {
  slider.min = String(SCALE_MIN);
  slider.max = String(SCALE_MAX);
  slider.step = String(SCALE_STEP);
  slider.disabled = true;
}

function showError(message: string): void {
  errorBox.textContent = message;
  errorBox.hidden = false;
}

function clearError(): void {
  errorBox.hidden = true;
}

function describeUploadError(err: unknown): string {
  if (err instanceof ApiError && (err.status === 413 || err.status === 422)) {
    return `${err.message} — crop or resize so both dimensions are `
      + "multiples of 4 (and within the server's size limit).";
  }
  return String(err);
}

function currentScales() {
  return {
    lambdaPix: clampScale(Number(pixSlider.value)),
    lambdaSem: clampScale(Number(semSlider.value)),
  };
}

function updateScaleLabels(): void {
  const scales = currentScales();
  pixValue.textContent = scales.lambdaPix.toFixed(1);
  semValue.textContent = scales.lambdaSem.toFixed(1);
}

function attachController(imageId: string): void {
  controller = new RestoreController(api, imageId, {
    onResult: (result, scales) => {
      state.inFlight = false;
      resultImage.src = URL.createObjectURL(result.blob);
      resultLabel.textContent =
        `λ_pix=${scales.lambdaPix.toFixed(1)}  λ_sem=${scales.lambdaSem.toFixed(1)}`;
    },
    onError: (err) => {
      state.inFlight = false;
      showError(String(err));
    },
  });
}

fileInput.addEventListener("change", async () => {
  clearError();
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const upload = await api.uploadImage(file);
    state.imageId = upload.imageId;
    lqPreview.src = URL.createObjectURL(file);
    attachController(upload.imageId);
    pixSlider.disabled = false;
    semSlider.disabled = false;
    updateScaleLabels();
    await controller!.restoreNow(currentScales());
  } catch (err) {
    showError(describeUploadError(err));
  }
});

for (const slider of [pixSlider, semSlider]) {
  slider.addEventListener("input", () => {
    updateScaleLabels();
    if (controller) {
      state.inFlight = true;
      controller.scheduleRestore(currentScales());
    }
  });
}

defaultButton.addEventListener("click", () => {
  pixSlider.value = "1";
  semSlider.value = "1";
  updateScaleLabels();
  if (controller) void controller.restoreNow(currentScales());
});

gridButton.addEventListener("click", async () => {
  if (!state.imageId) return;
  state.viewMode = "grid";
  gridContainer.innerHTML = "";
  const pixList = [0.5, 1.0];
  const semList = [0.0, 0.5, 1.0, 1.5];
  const tiles = await renderGrid(api, state.imageId, pixList, semList);
  const table = document.createElement("table");
  for (const row of tiles) {
    const tr = document.createElement("tr");
    for (const tile of row) {
      const td = document.createElement("td");
      const label = `λ_pix=${tile.scales.lambdaPix} λ_sem=${tile.scales.lambdaSem}`;
      if (tile.blob) {
        const img = document.createElement("img");
        img.src = URL.createObjectURL(tile.blob);
        img.alt = label;
        td.appendChild(img);
      } else {
        td.textContent = `error: ${tile.error}`;
        td.className = "error-tile";
      }
      const caption = document.createElement("div");
      caption.textContent = label;
      td.appendChild(caption);
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  gridContainer.appendChild(table);
});

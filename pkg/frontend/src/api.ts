/** Thin typed client for the restoration service's HTTP contract. */

import { Scales } from "./state.js";

export interface UploadResult {
  imageId: string;
  width: number;
  height: number;
}

export interface RestoreResult {
  blob: Blob;
  denoiserEvals: number;
}

export interface ModelsInfo {
  checkpointTag: string;
  scheduleT: number;
  loraRanks: { pixel: number | null; semantic: number | null };
  uiScaleRange: [number, number];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async errorMessage(res: Response): Promise<string> {
    try {
      const body = await res.json();
      return typeof body.error === "string" ? body.error : res.statusText;
    } catch {
      return res.statusText;
    }
  }

  async uploadImage(data: Blob): Promise<UploadResult> {
    const res = await this.fetchImpl(`${this.baseUrl}/images`, {
      method: "POST",
      body: data,
    });
    if (!res.ok) throw new ApiError(res.status, await this.errorMessage(res));
    const body = await res.json();
    return { imageId: body.image_id, width: body.width, height: body.height };
  }

  async restore(imageId: string, scales: Scales): Promise<RestoreResult> {
    const res = await this.fetchImpl(`${this.baseUrl}/restore`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        image_id: imageId,
        lambda_pix: scales.lambdaPix,
        lambda_sem: scales.lambdaSem,
      }),
    });
    if (!res.ok) throw new ApiError(res.status, await this.errorMessage(res));
    return {
      blob: await res.blob(),
      denoiserEvals: Number(res.headers.get("X-Denoiser-Evals") ?? "-1"),
    };
  }

  async models(): Promise<ModelsInfo> {
    const res = await this.fetchImpl(`${this.baseUrl}/models`);
    if (!res.ok) throw new ApiError(res.status, await this.errorMessage(res));
    const body = await res.json();
    return {
      checkpointTag: body.checkpoint_tag,
      scheduleT: body.schedule.T,
      loraRanks: body.lora_ranks,
      uiScaleRange: body.ui_scale_range,
    };
  }
}

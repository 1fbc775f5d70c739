/**
 * Fig-1-style grid: every (pix, sem) combination restored sequentially so a
 * slow server is not hammered; per-tile failures become error tiles and the
 * grid always completes.
 */

import { RestoreApi } from "./controller.js";
import { Scales } from "./state.js";

export interface GridTile {
  scales: Scales;
  blob: Blob | null;
  error: string | null;
}

export interface GridProgress {
  done: number;
  total: number;
}

export async function renderGrid(
  api: RestoreApi,
  imageId: string,
  pixList: number[],
  semList: number[],
  onProgress?: (p: GridProgress) => void,
): Promise<GridTile[][]> {
  const total = pixList.length * semList.length;
  let done = 0;
  const rows: GridTile[][] = [];
  for (const lambdaPix of pixList) {
    const row: GridTile[] = [];
    for (const lambdaSem of semList) {
      const scales: Scales = { lambdaPix, lambdaSem };
      try {
        const result = await api.restore(imageId, scales);
        row.push({ scales, blob: result.blob, error: null });
      } catch (err) {
        row.push({ scales, blob: null, error: String(err) });
      }
      done += 1;
      onProgress?.({ done, total });
    }
    rows.push(row);
  }
  return rows;
}

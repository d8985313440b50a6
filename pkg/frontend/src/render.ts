import { Cell, GridRender, QueryPayload, StatusPayload } from "./types.js";

/** One CSS class per cell; the DOM mirrors this matrix 1:1. */
export function gridModel(grid: GridRender): string[][] {
  return grid.map((row) => row.map((cell: Cell) => `cell cell-${cell.kind}`));
}

export interface TileModel {
  label: string;
  choiceIndex: number;
  isPrevious: boolean;
  cells: string[][];
}

export interface SlateModel {
  queryId: number;
  tiles: TileModel[];
}

/**
 * Tiles in presentation order: the N candidates first, the previous-goal
 * tile (when present) always right-most, carrying choice index N.
 */
export function slateModel(payload: QueryPayload): SlateModel {
  const tiles: TileModel[] = payload.candidates.map((cand) => ({
    label: `${cand.index}`,
    choiceIndex: cand.index,
    isPrevious: false,
    cells: gridModel(cand.grid_render),
  }));
  if (payload.previous_goal !== null) {
    tiles.push({
      label: "keep previous",
      choiceIndex: payload.candidates.length,
      isPrevious: true,
      cells: gridModel(payload.previous_goal.grid_render),
    });
  }
  return { queryId: payload.query_id, tiles };
}

export function gridToHtml(cells: string[][]): string {
  const rows = cells
    .map((row) => `<div class="grid-row">${row.map((c) => `<div class="${c}"></div>`).join("")}</div>`)
    .join("");
  return `<div class="grid">${rows}</div>`;
}

export function tileToHtml(tile: TileModel, selected: boolean): string {
  const classes = ["tile"];
  if (tile.isPrevious) classes.push("tile-previous");
  if (selected) classes.push("tile-selected");
  return (
    `<button class="${classes.join(" ")}" data-choice="${tile.choiceIndex}">` +
    `${gridToHtml(tile.cells)}<span class="tile-label">${tile.label}</span></button>`
  );
}

export function slateToHtml(model: SlateModel, selected: number | null): string {
  const tiles = model.tiles
    .map((t) => tileToHtml(t, selected === t.choiceIndex))
    .join("");
  return `<div class="slate" data-query="${model.queryId}">${tiles}</div>`;
}

/** Polyline points for the recent final-distance curve on the idle screen. */
export function curvePoints(status: StatusPayload, width = 560, height = 160): string {
  const curve = status.curve;
  if (curve.length === 0) {
    return "";
  }
  const max = Math.max(...curve, 1);
  const dx = curve.length > 1 ? width / (curve.length - 1) : 0;
  return curve
    .map((v, i) => `${(i * dx).toFixed(1)},${(height - (v / max) * height).toFixed(1)}`)
    .join(" ");
}

export function statusToHtml(status: StatusPayload): string {
  const points = curvePoints(status);
  const chart = points
    ? `<svg viewBox="0 0 560 160" class="curve"><polyline points="${points}"/></svg>`
    : `<p class="muted">no episodes finished yet</p>`;
  return (
    `<div class="status">` +
    `<p>episode ${status.episode} | env steps ${status.env_steps} | ` +
    `goal ${status.current_goal ?? "none"} | queries used ${status.queries_used}</p>` +
    `${chart}</div>`
  );
}

import { describe, expect, it } from "vitest";

import { curvePoints, gridModel, gridToHtml, slateModel, slateToHtml } from "../src/render.js";
import { candidateGrid, firstQueryFixture, slateFixture } from "./fixtures.js";

describe("gridModel", () => {
  it("mirrors the received cell matrix cell-for-cell", () => {
    const grid = candidateGrid(1, 1);
    const model = gridModel(grid);
    expect(model.length).toBe(grid.length);
    for (let r = 0; r < grid.length; r++) {
      expect(model[r].length).toBe(grid[r].length);
      for (let c = 0; c < grid[r].length; c++) {
        expect(model[r][c]).toBe(`cell cell-${grid[r][c].kind}`);
      }
    }
  });

  it("renders the fixture grid to a stable snapshot", () => {
    expect(gridToHtml(gridModel(candidateGrid(1, 1)))).toMatchSnapshot();
  });
});

describe("slateModel", () => {
  it("keeps the previous-goal tile right-most with the keep index", () => {
    const model = slateModel(slateFixture);
    expect(model.queryId).toBe(7);
    expect(model.tiles.length).toBe(4);
    const last = model.tiles[model.tiles.length - 1];
    expect(last.isPrevious).toBe(true);
    expect(last.choiceIndex).toBe(3); // == number of candidates
    expect(model.tiles.slice(0, 3).map((t) => t.choiceIndex)).toEqual([0, 1, 2]);
  });

  it("omits the previous tile on the very first query", () => {
    const model = slateModel(firstQueryFixture);
    expect(model.tiles.length).toBe(1);
    expect(model.tiles[0].isPrevious).toBe(false);
  });

  it("renders each tile's cells exactly as received", () => {
    const model = slateModel(slateFixture);
    slateFixture.candidates.forEach((cand, i) => {
      expect(model.tiles[i].cells).toEqual(gridModel(cand.grid_render));
    });
    expect(model.tiles[3].cells).toEqual(
      gridModel(slateFixture.previous_goal!.grid_render),
    );
  });

  it("renders the full fixture slate to a stable snapshot", () => {
    expect(slateToHtml(slateModel(slateFixture), null)).toMatchSnapshot();
  });

  it("marks the selected tile", () => {
    const html = slateToHtml(slateModel(slateFixture), 2);
    expect(html).toContain('tile-selected" data-choice="2"');
  });
});

describe("curvePoints", () => {
  it("is empty with no curve data", () => {
    expect(
      curvePoints({ env_steps: 0, episode: 0, current_goal: null, queries_used: 0, curve: [] }),
    ).toBe("");
  });

  it("maps the highest value to the top of the chart", () => {
    const points = curvePoints(
      { env_steps: 1, episode: 1, current_goal: 0, queries_used: 0, curve: [0, 10] },
      100,
      50,
    );
    expect(points).toBe("0.0,50.0 100.0,0.0");
  });
});

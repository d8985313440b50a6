import { Cell, GridRender, QueryPayload } from "../src/types.js";

function cell(kind: Cell["kind"], value: number | null = null): Cell {
  return { kind, value };
}

/** 3x3 maze render with one wall and the candidate's final cell marked. */
export function candidateGrid(markRow: number, markCol: number): GridRender {
  const grid: GridRender = [
    [cell("start"), cell("free"), cell("wall")],
    [cell("free"), cell("free"), cell("free")],
    [cell("free"), cell("free"), cell("goal")],
  ];
  grid[markRow][markCol] = cell("candidate");
  return grid;
}

export const slateFixture: QueryPayload = {
  query_id: 7,
  candidates: [
    { index: 0, grid_render: candidateGrid(1, 1) },
    { index: 1, grid_render: candidateGrid(2, 0) },
    { index: 2, grid_render: candidateGrid(0, 1) },
  ],
  previous_goal: { grid_render: candidateGrid(2, 1) },
};

export const firstQueryFixture: QueryPayload = {
  query_id: 0,
  candidates: [{ index: 0, grid_render: candidateGrid(1, 0) }],
  previous_goal: null,
};

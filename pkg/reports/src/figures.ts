import { CsvTable, numeric, readCsv } from "./csv.js";

export const FIGURE_KINDS = [
  "latency_vs_v",
  "queue_vs_t",
  "cost_vs_t",
  "latency_distribution",
  "density_latency",
  "runtime_vs_density",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface Series {
  name: string;
  points: [number, number][];
}

export interface FigureData {
  kind: FigureKind;
  title: string;
  xLabel: string;
  yLabel: string;
  chart: "line" | "scatter" | "bar";
  xLog?: boolean;
  series: Series[];
}

/** Columns each figure kind needs in its input CSVs. */
export const REQUIRED_COLUMNS: Record<FigureKind, string[]> = {
  latency_vs_v: ["policy", "v", "avg_latency_s"],
  queue_vs_t: ["t", "queue"],
  cost_vs_t: ["t", "migration_cost"],
  latency_distribution: ["avg_latency_s"],
  density_latency: ["policy", "users", "avg_latency_s"],
  runtime_vs_density: ["policy", "users", "running_time_s"],
};

function groupedSeries(
  tables: CsvTable[],
  keyColumn: string,
  xColumn: string,
  yColumn: string,
): Series[] {
  const groups = new Map<string, [number, number][]>();
  for (const table of tables) {
    for (const row of table.rows) {
      const key = row[keyColumn];
      if (!groups.has(key)) groups.set(key, []);
      groups.get(key)!.push([numeric(row, xColumn, table.path), numeric(row, yColumn, table.path)]);
    }
  }
  return [...groups.entries()].map(([name, points]) => ({
    name,
    points: points.sort((a, b) => a[0] - b[0]),
  }));
}

function singleSeries(tables: CsvTable[], xColumn: string, yColumn: string, name: string): Series {
  const points: [number, number][] = [];
  for (const table of tables) {
    for (const row of table.rows) {
      points.push([numeric(row, xColumn, table.path), numeric(row, yColumn, table.path)]);
    }
  }
  return { name, points: points.sort((a, b) => a[0] - b[0]) };
}

function runningMean(points: [number, number][]): [number, number][] {
  let acc = 0;
  return points.map(([x, y], i) => {
    acc += y;
    return [x, acc / (i + 1)] as [number, number];
  });
}

function histogram(values: number[], bins: number): Series {
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const width = hi > lo ? (hi - lo) / bins : 1;
  const counts = new Array(bins).fill(0);
  for (const v of values) {
    const idx = Math.min(Math.floor((v - lo) / width), bins - 1);
    counts[idx] += 1;
  }
  return {
    name: "slots",
    points: counts.map((c, i) => [lo + (i + 0.5) * width, c] as [number, number]),
  };
}

/** Load the input CSVs for a figure kind and shape them into plot series. */
export function buildFigure(kind: FigureKind, inputPaths: string[]): FigureData {
  const required = REQUIRED_COLUMNS[kind];
  if (required === undefined) {
    throw new Error(`unknown figure kind '${kind}'`);
  }
  const tables = inputPaths.map((p) => readCsv(p, required));
  switch (kind) {
    case "latency_vs_v":
      return {
        kind,
        title: "Average latency vs control parameter v",
        xLabel: "v",
        yLabel: "average latency (s)",
        chart: "line",
        xLog: true,
        series: groupedSeries(tables, "policy", "v", "avg_latency_s"),
      };
    case "queue_vs_t":
      return {
        kind,
        title: "Cost queue backlog over time",
        xLabel: "slot",
        yLabel: "queue (cost units)",
        chart: "line",
        series: [singleSeries(tables, "t", "queue", "queue")],
      };
    case "cost_vs_t": {
      const raw = singleSeries(tables, "t", "migration_cost", "per-slot cost");
      return {
        kind,
        title: "Migration cost over time",
        xLabel: "slot",
        yLabel: "migration cost (cost units)",
        chart: "line",
        series: [raw, { name: "running average", points: runningMean(raw.points) }],
      };
    }
    case "latency_distribution": {
      const values: number[] = [];
      for (const table of tables) {
        for (const row of table.rows) {
          values.push(numeric(row, "avg_latency_s", table.path));
        }
      }
      return {
        kind,
        title: "Distribution of per-slot average latency",
        xLabel: "average latency (s)",
        yLabel: "slots",
        chart: "bar",
        series: [histogram(values, 20)],
      };
    }
    case "density_latency":
      return {
        kind,
        title: "Average latency vs user density",
        xLabel: "users",
        yLabel: "average latency (s)",
        chart: "line",
        series: groupedSeries(tables, "policy", "users", "avg_latency_s"),
      };
    case "runtime_vs_density":
      return {
        kind,
        title: "Decision runtime vs user density",
        xLabel: "users",
        yLabel: "running time (s)",
        chart: "line",
        series: groupedSeries(tables, "policy", "users", "running_time_s"),
      };
  }
}

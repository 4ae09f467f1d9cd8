#!/usr/bin/env node
import { writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { CsvFormatError, MissingColumnError } from "./csv.js";
import { FIGURE_KINDS, FigureKind, buildFigure } from "./figures.js";
import { renderSvg } from "./render.js";

const USAGE = `usage: render --spec <kind> --in <csv> [--in <csv> ...] --out <file.svg>
kinds: ${FIGURE_KINDS.join(", ")}`;

/** Entry point shared by the binary and the tests; returns the exit code. */
export function run(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        spec: { type: "string" },
        in: { type: "string", multiple: true },
        out: { type: "string" },
        width: { type: "string" },
        height: { type: "string" },
      },
      allowPositionals: true,
    });
  } catch (err) {
    console.error(String(err));
    console.error(USAGE);
    return 2;
  }
  const { spec, in: inputs, out } = parsed.values;
  const positionals = parsed.positionals.filter((p) => p !== "render");
  if (positionals.length > 0) {
    console.error(`unexpected argument '${positionals[0]}'`);
    console.error(USAGE);
    return 2;
  }
  if (!spec || !inputs || inputs.length === 0 || !out) {
    console.error(USAGE);
    return 2;
  }
  if (!(FIGURE_KINDS as readonly string[]).includes(spec)) {
    console.error(`unknown figure kind '${spec}'; expected one of ${FIGURE_KINDS.join(", ")}`);
    return 2;
  }
  if (out.toLowerCase().endsWith(".png")) {
    console.error("raster output is not supported; use an .svg output path");
    return 2;
  }
  try {
    const figure = buildFigure(spec as FigureKind, inputs);
    const svg = renderSvg(figure, {
      width: parsed.values.width ? Number(parsed.values.width) : undefined,
      height: parsed.values.height ? Number(parsed.values.height) : undefined,
    });
    writeFileSync(out, svg, "utf-8");
  } catch (err) {
    if (err instanceof MissingColumnError) {
      console.error(`error: missing column '${err.column}': ${err.message}`);
      return 1;
    }
    if (err instanceof CsvFormatError || err instanceof Error) {
      console.error(`error: ${err instanceof Error ? err.message : String(err)}`);
      return 1;
    }
    throw err;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  (process.argv[1].endsWith("cli.js") || process.argv[1].endsWith("placement-render"));
if (invokedDirectly) {
  process.exit(run(process.argv.slice(2)));
}

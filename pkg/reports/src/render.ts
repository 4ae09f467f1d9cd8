import * as echarts from "echarts";
import { FigureData } from "./figures.js";

export interface RenderOptions {
  width?: number;
  height?: number;
}

/** Render a figure to an SVG string (server-side, no DOM). */
export function renderSvg(figure: FigureData, options: RenderOptions = {}): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width: options.width ?? 800,
    height: options.height ?? 520,
  });
  try {
    chart.setOption({
      animation: false,
      title: { text: figure.title, left: "center" },
      legend: figure.series.length > 1 ? { bottom: 0 } : undefined,
      grid: { left: 70, right: 30, top: 60, bottom: figure.series.length > 1 ? 70 : 50 },
      xAxis: {
        type: figure.xLog ? "log" : "value",
        name: figure.xLabel,
        nameLocation: "middle",
        nameGap: 28,
      },
      yAxis: {
        type: "value",
        name: figure.yLabel,
        nameLocation: "middle",
        nameGap: 50,
      },
      series: figure.series.map((s) => ({
        name: s.name,
        type: figure.chart,
        data: s.points,
        showSymbol: true,
        symbolSize: 6,
        ...(figure.chart === "bar" ? { barWidth: "90%" } : {}),
      })),
    });
    return chart.renderToSVGString();
  } finally {
    chart.dispose();
  }
}

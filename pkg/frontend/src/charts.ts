// Hand-rolled SVG charts. Pixel placement is the only arithmetic done here;
// the numbers themselves are rendered as received.

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Series {
  name: string;
  values: number[];
  color: string;
  startIndex?: number; // x offset of the first point
}

function svgElement<K extends keyof SVGElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const el = doc.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, String(value));
  }
  return el;
}

function extent(all: number[]): [number, number] {
  let lo = Math.min(...all);
  let hi = Math.max(...all);
  if (!Number.isFinite(lo) || !Number.isFinite(hi)) {
    lo = 0;
    hi = 1;
  }
  if (hi - lo < 1e-12) {
    hi = lo + 1;
  }
  return [lo, hi];
}

export interface BarChartOptions {
  width?: number;
  height?: number;
  selected?: number;
  badges?: boolean[]; // e.g. degenerate-feature markers
  onSelect?: (index: number) => void;
}

export function renderBarChart(container: HTMLElement, values: number[], options: BarChartOptions = {}): void {
  const doc = container.ownerDocument;
  const width = options.width ?? 460;
  const height = options.height ?? 180;
  const pad = 18;
  container.textContent = "";
  const svg = svgElement(doc, "svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    role: "img",
  });
  const [lo, hi] = extent([...values, 0]);
  const scaleY = (v: number) => height - pad - ((v - lo) / (hi - lo)) * (height - 2 * pad);
  const zeroY = scaleY(0);
  const slot = (width - 2 * pad) / values.length;

  svg.appendChild(
    svgElement(doc, "line", { x1: pad, x2: width - pad, y1: zeroY, y2: zeroY, class: "axis" }),
  );
  values.forEach((value, index) => {
    const x = pad + index * slot + slot * 0.15;
    const y = Math.min(zeroY, scaleY(value));
    const bar = svgElement(doc, "rect", {
      x,
      y,
      width: slot * 0.7,
      height: Math.abs(zeroY - scaleY(value)),
      class:
        (value >= 0 ? "bar positive" : "bar negative") +
        (options.selected === index ? " selected" : ""),
      "data-index": index,
    });
    bar.addEventListener("click", () => options.onSelect?.(index));
    const label = doc.createElementNS(SVG_NS, "title");
    label.textContent = `feature ${index}: ${value}`;
    bar.appendChild(label);
    svg.appendChild(bar);
    if (options.badges?.[index]) {
      svg.appendChild(
        svgElement(doc, "circle", {
          cx: x + slot * 0.35,
          cy: pad / 2,
          r: 4,
          class: "badge degenerate",
          "data-index": index,
        }),
      );
    }
    const tick = svgElement(doc, "text", {
      x: x + slot * 0.35,
      y: height - 4,
      class: "tick",
      "text-anchor": "middle",
    });
    tick.textContent = String(index);
    svg.appendChild(tick);
  });
  container.appendChild(svg);
}

export interface LineChartOptions {
  width?: number;
  height?: number;
  xStart?: number; // value of the first x tick
}

export function renderLineChart(container: HTMLElement, series: Series[], options: LineChartOptions = {}): void {
  const doc = container.ownerDocument;
  const width = options.width ?? 460;
  const height = options.height ?? 180;
  const pad = 18;
  container.textContent = "";
  const svg = svgElement(doc, "svg", {
    viewBox: `0 0 ${width} ${height}`,
    width,
    height,
    role: "img",
  });
  const allValues = series.flatMap((s) => s.values);
  if (allValues.length === 0) {
    container.appendChild(svg);
    return;
  }
  const [lo, hi] = extent(allValues);
  const maxX = Math.max(...series.map((s) => (s.startIndex ?? 0) + s.values.length - 1), 1);
  const minX = Math.min(...series.map((s) => s.startIndex ?? 0));
  const scaleX = (i: number) => pad + ((i - minX) / Math.max(1, maxX - minX)) * (width - 2 * pad);
  const scaleY = (v: number) => height - pad - ((v - lo) / (hi - lo)) * (height - 2 * pad);

  if (lo <= 0 && hi >= 0) {
    const zeroY = scaleY(0);
    svg.appendChild(svgElement(doc, "line", { x1: pad, x2: width - pad, y1: zeroY, y2: zeroY, class: "axis" }));
  }
  for (const s of series) {
    const offset = s.startIndex ?? 0;
    const points = s.values
      .map((v, i) => `${scaleX(offset + i).toFixed(1)},${scaleY(v).toFixed(1)}`)
      .join(" ");
    const line = svgElement(doc, "polyline", {
      points,
      class: "series",
      "data-name": s.name,
      fill: "none",
      stroke: s.color,
      "stroke-width": 1.6,
    });
    svg.appendChild(line);
    s.values.forEach((v, i) => {
      svg.appendChild(
        svgElement(doc, "circle", {
          cx: scaleX(offset + i),
          cy: scaleY(v),
          r: 1.8,
          fill: s.color,
          class: "dot",
          "data-name": s.name,
          "data-step": offset + i,
        }),
      );
    });
  }
  const startLabel = svgElement(doc, "text", { x: pad, y: height - 4, class: "tick" });
  startLabel.textContent = String(options.xStart ?? minX);
  svg.appendChild(startLabel);
  const endLabel = svgElement(doc, "text", {
    x: width - pad,
    y: height - 4,
    class: "tick",
    "text-anchor": "end",
  });
  endLabel.textContent = String((options.xStart ?? minX) + (maxX - minX));
  svg.appendChild(endLabel);
  container.appendChild(svg);
}

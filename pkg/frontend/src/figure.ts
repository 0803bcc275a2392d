import { writeFileSync } from 'fs';
import { extname } from 'path';
import { loadResults } from './csv';
import { TrialRow } from './schema';
import { availableMethods, coverageSeries, lengthSeries, MethodSeries } from './series';

export interface FigureSpec {
  inputCsv: string;
  sweepName: string;
  methods: string[];
  /** Horizontal reference drawn on the coverage panel, normally 1 - alpha. */
  targetCoverageLine: number;
  outputImage: string;
}

export interface RenderedFigure {
  coverage: MethodSeries[];
  length: MethodSeries[];
  svg: string;
}

const PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b'];

const PANEL = { width: 430, height: 320, top: 46, gap: 70, left: 62, bottom: 56 };

interface Scale {
  (value: number): number;
}

function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  return (value: number) => r0 + ((value - d0) / span) * (r1 - r0);
}

function bounds(series: MethodSeries[], pick: (p: { min: number; max: number }) => number[]): number[] {
  return series.flatMap((s) => s.points.flatMap(pick));
}

function ticks(low: number, high: number, count = 5): number[] {
  const out: number[] = [];
  for (let i = 0; i <= count; i += 1) out.push(low + ((high - low) * i) / count);
  return out;
}

function formatTick(value: number): string {
  if (Math.abs(value) >= 1000) return value.toFixed(0);
  return Number(value.toPrecision(4)).toString();
}

function panelSvg(
  series: MethodSeries[],
  title: string,
  yLabel: string,
  xLabel: string,
  originX: number,
  reference: number | null,
  colors: Map<string, string>,
): string {
  const xs = bounds(series, (p) => [p.min, p.max]).length
    ? series.flatMap((s) => s.points.map((p) => p.sweepValue))
    : [0, 1];
  const ysRaw = bounds(series, (p) => [p.min, p.max]);
  const ys = ysRaw.length ? ysRaw : [0, 1];
  if (reference !== null) ys.push(reference);
  const xDomain: [number, number] = [Math.min(...xs), Math.max(...xs)];
  const yPad = (Math.max(...ys) - Math.min(...ys)) * 0.08 || 0.05;
  const yDomain: [number, number] = [Math.min(...ys) - yPad, Math.max(...ys) + yPad];

  const x = linearScale(xDomain, [originX, originX + PANEL.width]);
  const y = linearScale(yDomain, [PANEL.top + PANEL.height, PANEL.top]);

  const parts: string[] = [];
  parts.push(
    `<rect x="${originX}" y="${PANEL.top}" width="${PANEL.width}" height="${PANEL.height}" fill="none" stroke="#333"/>`,
  );
  parts.push(
    `<text x="${originX + PANEL.width / 2}" y="${PANEL.top - 14}" text-anchor="middle" font-size="15" font-weight="bold">${title}</text>`,
  );
  for (const tick of ticks(xDomain[0], xDomain[1])) {
    const px = x(tick);
    parts.push(`<line x1="${px}" y1="${PANEL.top + PANEL.height}" x2="${px}" y2="${PANEL.top + PANEL.height + 5}" stroke="#333"/>`);
    parts.push(
      `<text x="${px}" y="${PANEL.top + PANEL.height + 20}" text-anchor="middle" font-size="11">${formatTick(tick)}</text>`,
    );
  }
  for (const tick of ticks(yDomain[0], yDomain[1])) {
    const py = y(tick);
    parts.push(`<line x1="${originX - 5}" y1="${py}" x2="${originX}" y2="${py}" stroke="#333"/>`);
    parts.push(
      `<text x="${originX - 8}" y="${py + 4}" text-anchor="end" font-size="11">${formatTick(tick)}</text>`,
    );
  }
  parts.push(
    `<text x="${originX + PANEL.width / 2}" y="${PANEL.top + PANEL.height + 42}" text-anchor="middle" font-size="13">${xLabel}</text>`,
  );
  parts.push(
    `<text transform="translate(${originX - 44}, ${PANEL.top + PANEL.height / 2}) rotate(-90)" text-anchor="middle" font-size="13">${yLabel}</text>`,
  );

  if (reference !== null) {
    const py = y(reference);
    parts.push(
      `<line class="reference-line" x1="${originX}" y1="${py}" x2="${originX + PANEL.width}" y2="${py}" stroke="#555" stroke-dasharray="6,4"/>`,
    );
  }

  for (const { method, points } of series) {
    const color = colors.get(method)!;
    if (points.length === 0) continue;
    for (const p of points) {
      // Repetition spread as min-max whiskers.
      parts.push(
        `<line x1="${x(p.sweepValue)}" y1="${y(p.min)}" x2="${x(p.sweepValue)}" y2="${y(p.max)}" stroke="${color}" stroke-opacity="0.45"/>`,
      );
    }
    const path = points.map((p) => `${x(p.sweepValue)},${y(p.mean)}`).join(' ');
    parts.push(
      `<polyline class="series" data-method="${method}" points="${path}" fill="none" stroke="${color}" stroke-width="1.8"/>`,
    );
    for (const p of points) {
      parts.push(`<circle cx="${x(p.sweepValue)}" cy="${y(p.mean)}" r="3" fill="${color}"/>`);
    }
  }
  return parts.join('\n');
}

function buildSvg(spec: FigureSpec, coverage: MethodSeries[], length: MethodSeries[]): string {
  const colors = new Map(spec.methods.map((m, i) => [m, PALETTE[i % PALETTE.length]]));
  const width = PANEL.left * 2 + PANEL.width * 2 + PANEL.gap;
  const height = PANEL.top + PANEL.height + PANEL.bottom + 28;
  const legend = spec.methods
    .map((method, i) => {
      const lx = PANEL.left + i * 150;
      const ly = height - 16;
      return (
        `<line x1="${lx}" y1="${ly - 4}" x2="${lx + 22}" y2="${ly - 4}" stroke="${colors.get(method)}" stroke-width="2"/>` +
        `<text x="${lx + 28}" y="${ly}" font-size="12">${method}</text>`
      );
    })
    .join('\n');
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
    panelSvg(
      coverage,
      'Coverage',
      'empirical coverage',
      spec.sweepName,
      PANEL.left,
      spec.targetCoverageLine,
      colors,
    ),
    panelSvg(
      length,
      'Interval length',
      'mean interval length',
      spec.sweepName,
      PANEL.left + PANEL.width + PANEL.gap,
      null,
      colors,
    ),
    legend,
    '</svg>',
  ].join('\n');
}

/**
 * Render the two-panel figure for a results CSV and write it to
 * `spec.outputImage`. Returns the plotted data tables alongside the SVG so
 * callers can assert on the extracted series rather than pixels.
 */
export function render(spec: FigureSpec): RenderedFigure {
  const format = extname(spec.outputImage).toLowerCase();
  if (format !== '.svg') {
    throw new Error(`unsupported output format ${format || '(none)'}; use a .svg path`);
  }
  const rows = loadResults(spec.inputCsv).filter((row) => row.sweepName === spec.sweepName);
  if (rows.length === 0) {
    throw new Error(`no rows with sweep_name=${JSON.stringify(spec.sweepName)} in ${spec.inputCsv}`);
  }
  const present = availableMethods(rows);
  const methods = spec.methods.filter((m) => present.includes(m));
  if (methods.length === 0) {
    throw new Error(
      `none of the requested methods [${spec.methods.join(', ')}] appear in the CSV; ` +
        `available: [${present.join(', ')}]`,
    );
  }
  const coverage = coverageSeries(rows, methods);
  const length = lengthSeries(rows, methods);
  const svg = buildSvg({ ...spec, methods }, coverage, length);
  writeFileSync(spec.outputImage, svg, 'utf8');
  return { coverage, length, svg };
}

export function inferTarget(rows: TrialRow[]): number {
  for (const row of rows) {
    if (row.alpha > 0) return 1 - row.alpha;
  }
  return 0.9;
}

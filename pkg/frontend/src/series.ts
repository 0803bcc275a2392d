import { TrialRow } from './schema';

/** One plotted point: per-cell mean plus the spread across repetitions. */
export interface SeriesPoint {
  sweepValue: number;
  mean: number;
  min: number;
  max: number;
  trials: number;
}

export interface MethodSeries {
  method: string;
  points: SeriesPoint[];
}

function naiveMean(values: number[]): number {
  let total = 0;
  for (const value of values) total += value;
  return total / values.length;
}

function buildSeries(
  rows: TrialRow[],
  methods: string[],
  value: (row: TrialRow) => number,
  include: (row: TrialRow) => boolean,
): MethodSeries[] {
  return methods.map((method) => {
    const cells = new Map<number, number[]>();
    for (const row of rows) {
      if (row.method !== method || !include(row)) continue;
      const cell = cells.get(row.sweepValue);
      if (cell === undefined) {
        cells.set(row.sweepValue, [value(row)]);
      } else {
        cell.push(value(row));
      }
    }
    const points = [...cells.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([sweepValue, values]) => ({
        sweepValue,
        mean: naiveMean(values),
        min: Math.min(...values),
        max: Math.max(...values),
        trials: values.length,
      }));
    return { method, points };
  });
}

/**
 * Per-method coverage series: mean over all repetitions of a cell, values
 * accumulated in CSV row order so the result is bit-reproducible.
 */
export function coverageSeries(rows: TrialRow[], methods: string[]): MethodSeries[] {
  return buildSeries(rows, methods, (row) => row.coverage, () => true);
}

/**
 * Per-method interval-length series over trials with finite length; cells
 * where every repetition fell back to the whole line produce no point.
 */
export function lengthSeries(rows: TrialRow[], methods: string[]): MethodSeries[] {
  return buildSeries(
    rows,
    methods,
    (row) => row.meanLength,
    (row) => Number.isFinite(row.meanLength),
  );
}

export function availableMethods(rows: TrialRow[]): string[] {
  const seen: string[] = [];
  for (const row of rows) {
    if (!seen.includes(row.method)) seen.push(row.method);
  }
  return seen;
}

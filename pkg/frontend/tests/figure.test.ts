import assert from 'node:assert/strict';
import { test } from 'node:test';
import { existsSync, mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { render } from '../src/figure';

const FIXTURE = join(__dirname, '..', '..', 'tests', 'fixtures', 'fig1_results.csv');
const METHODS = ['oracle', 'split', 'differential', 'dpcp', 'pscp'];

function outPath(name: string): string {
  return join(mkdtempSync(join(tmpdir(), 'dpcp-fig-')), name);
}

/**
 * Independent mean recomputation straight off the CSV text: same grouping,
 * same first-to-last accumulation order, no shared code with the series
 * builder.
 */
function csvCoverageMeans(method: string): Map<number, number> {
  const lines = readFileSync(FIXTURE, 'utf8').split('\n').filter((l) => l.length > 0);
  const header = lines[0].split(',');
  const methodIdx = header.indexOf('method');
  const valueIdx = header.indexOf('sweep_value');
  const coverageIdx = header.indexOf('coverage');
  const sums = new Map<number, { total: number; count: number }>();
  for (const line of lines.slice(1)) {
    const cells = line.split(',');
    if (cells[methodIdx] !== method) continue;
    const value = Number(cells[valueIdx]);
    const entry = sums.get(value) ?? { total: 0, count: 0 };
    entry.total += Number(cells[coverageIdx]);
    entry.count += 1;
    sums.set(value, entry);
  }
  return new Map([...sums.entries()].map(([v, e]) => [v, e.total / e.count]));
}

test('fig1 fixture renders a two-panel figure with exact coverage series', () => {
  const output = outPath('fig1.svg');
  const figure = render({
    inputCsv: FIXTURE,
    sweepName: 'sample-size',
    methods: METHODS,
    targetCoverageLine: 0.9,
    outputImage: output,
  });
  assert.ok(existsSync(output));
  assert.equal(figure.coverage.length, METHODS.length);

  for (const series of figure.coverage) {
    const expected = csvCoverageMeans(series.method);
    assert.equal(series.points.length, expected.size);
    for (const point of series.points) {
      // Exact equality: identical grouping and accumulation order.
      assert.equal(point.mean, expected.get(point.sweepValue));
    }
  }

  const svg = readFileSync(output, 'utf8');
  assert.ok(svg.includes('reference-line'));
  assert.ok(svg.includes('Coverage'));
  assert.ok(svg.includes('Interval length'));
  for (const method of METHODS) {
    assert.ok(svg.includes(`data-method="${method}"`), `series for ${method}`);
  }
});

test('coverage stays at or above the reference for large sample sizes', () => {
  const figure = render({
    inputCsv: FIXTURE,
    sweepName: 'sample-size',
    methods: METHODS,
    targetCoverageLine: 0.9,
    outputImage: outPath('fig1-large-n.svg'),
  });
  for (const series of figure.coverage) {
    for (const point of series.points) {
      if (point.sweepValue >= 2000) {
        assert.ok(
          point.mean >= 0.9 - 0.01,
          `${series.method} at n=${point.sweepValue}: ${point.mean}`,
        );
      }
    }
  }
});

test('re-rendering the same CSV extracts an identical data table', () => {
  const spec = {
    inputCsv: FIXTURE,
    sweepName: 'sample-size',
    methods: ['dpcp', 'pscp'],
    targetCoverageLine: 0.9,
  };
  const first = render({ ...spec, outputImage: outPath('a.svg') });
  const second = render({ ...spec, outputImage: outPath('b.svg') });
  assert.deepEqual(first.coverage, second.coverage);
  assert.deepEqual(first.length, second.length);
  assert.equal(first.svg, second.svg);
});

test('whole-line cells leave gaps in the length panel but not coverage', () => {
  const figure = render({
    inputCsv: FIXTURE,
    sweepName: 'sample-size',
    methods: ['dpcp'],
    targetCoverageLine: 0.9,
    outputImage: outPath('gaps.svg'),
  });
  const coveragePoints = figure.coverage[0].points.map((p) => p.sweepValue);
  const lengthPoints = figure.length[0].points.map((p) => p.sweepValue);
  assert.ok(coveragePoints.includes(200)); // infeasible cell still has coverage
  assert.ok(!lengthPoints.includes(200)); // but no finite length
});

test('empty method filter lists the available methods', () => {
  assert.throws(
    () =>
      render({
        inputCsv: FIXTURE,
        sweepName: 'sample-size',
        methods: ['nonexistent'],
        targetCoverageLine: 0.9,
        outputImage: outPath('nope.svg'),
      }),
    /available: \[oracle, split, differential, dpcp, pscp\]/,
  );
});

test('mismatched sweep name is rejected', () => {
  assert.throws(
    () =>
      render({
        inputCsv: FIXTURE,
        sweepName: 'privacy-budget',
        methods: METHODS,
        targetCoverageLine: 0.9,
        outputImage: outPath('sweep.svg'),
      }),
    /no rows with sweep_name="privacy-budget"/,
  );
});

test('unsupported output extensions are rejected', () => {
  assert.throws(
    () =>
      render({
        inputCsv: FIXTURE,
        sweepName: 'sample-size',
        methods: METHODS,
        targetCoverageLine: 0.9,
        outputImage: outPath('figure.png'),
      }),
    /unsupported output format \.png/,
  );
});

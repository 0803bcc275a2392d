import { readFileSync } from 'fs';
import { RESULT_COLUMNS, SchemaMismatchError, TrialRow } from './schema';

function parseNumber(token: string): number {
  if (token === 'inf') return Infinity;
  if (token === '-inf') return -Infinity;
  const value = Number(token);
  if (Number.isNaN(value)) {
    throw new Error(`cannot parse ${JSON.stringify(token)} as a number`);
  }
  return value;
}

/** Parse results-CSV text into trial rows, preserving file order. */
export function parseResults(text: string): TrialRow[] {
  const lines = text.split('\n').filter((line) => line.length > 0);
  if (lines.length === 0) {
    throw new Error('results CSV is empty');
  }
  const header = lines[0].split(',');
  const missing = RESULT_COLUMNS.filter((column) => !header.includes(column));
  if (missing.length > 0) {
    throw new SchemaMismatchError(missing, header);
  }
  const index = new Map(header.map((name, i) => [name, i]));
  const at = (cells: string[], column: string) => cells[index.get(column)!];

  return lines.slice(1).map((line, row) => {
    const cells = line.split(',');
    if (cells.length !== header.length) {
      throw new Error(`row ${row}: expected ${header.length} cells, got ${cells.length}`);
    }
    return {
      method: at(cells, 'method'),
      sweepName: at(cells, 'sweep_name'),
      sweepValue: parseNumber(at(cells, 'sweep_value')),
      repetition: Number(at(cells, 'repetition')),
      alpha: parseNumber(at(cells, 'alpha')),
      coverage: parseNumber(at(cells, 'coverage')),
      meanLength: parseNumber(at(cells, 'mean_length')),
      infeasible: at(cells, 'infeasible_flag') === 'true',
    };
  });
}

export function loadResults(path: string): TrialRow[] {
  return parseResults(readFileSync(path, 'utf8'));
}

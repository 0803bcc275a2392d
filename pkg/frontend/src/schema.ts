/** Column contract of the experiment results CSV. */

export const RESULT_COLUMNS = [
  'method',
  'sweep_name',
  'sweep_value',
  'repetition',
  'n',
  'epsilon',
  'epsilon1',
  'epsilon2',
  'alpha',
  'delta',
  'coverage',
  'mean_length',
  'threshold',
  'infeasible_flag',
  'data_hash',
  'seed',
] as const;

export type ResultColumn = (typeof RESULT_COLUMNS)[number];

export interface TrialRow {
  method: string;
  sweepName: string;
  sweepValue: number;
  repetition: number;
  alpha: number;
  coverage: number;
  meanLength: number;
  infeasible: boolean;
}

export class SchemaMismatchError extends Error {
  constructor(public readonly missing: string[], header: string[]) {
    super(
      `results CSV is missing required columns: ${missing.join(', ')} ` +
        `(header has: ${header.join(', ')})`,
    );
  }
}

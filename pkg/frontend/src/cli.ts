import { loadResults } from './csv';
import { FigureSpec, inferTarget, render } from './figure';
import { availableMethods } from './series';

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`expected --key value pairs, got ${JSON.stringify(argv[i])}`);
    }
    args.set(key.slice(2), argv[i + 1]);
  }
  return args;
}

function main(argv: string[]): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
  } catch (error) {
    console.error(`usage error: ${(error as Error).message}`);
    return 2;
  }
  const input = args.get('input');
  const output = args.get('out');
  if (!input || !output) {
    console.error(
      'usage: render --input results.csv --out figure.svg ' +
        '[--methods a,b] [--sweep name] [--target 0.9]',
    );
    return 2;
  }
  try {
    const rows = loadResults(input);
    const sweepName = args.get('sweep') ?? rows[0]?.sweepName ?? 'sample-size';
    const methods = args.get('methods')?.split(',').map((m) => m.trim()) ?? availableMethods(rows);
    const target = args.has('target') ? Number(args.get('target')) : inferTarget(rows);
    const spec: FigureSpec = {
      inputCsv: input,
      sweepName,
      methods,
      targetCoverageLine: target,
      outputImage: output,
    };
    const figure = render(spec);
    const cells = figure.coverage.reduce((sum, s) => sum + s.points.length, 0);
    console.log(`wrote ${output} (${cells} coverage cells, methods: ${methods.join(', ')})`);
    return 0;
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    return 1;
  }
}

process.exitCode = main(process.argv.slice(2));

"""
===============================================================================
ARCHIVO: apps/evalkit/management/commands/bench.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Benchmark de latencia de una sola secuencia: NAR frente a AR sobre el
    conjunto de test, y opcionalmente el escalado con la longitud emitida.

USO:
    python manage.py bench --checkpoint runs/nli-full-none-s0/model.cnat --data runs/data/nli
    python manage.py bench --checkpoint ... --baseline runs/nli-full-no_nar-s0/model.cnat \\
        --csv runs/bench.csv --scaling
    python manage.py bench --checkpoint ... --modes nar

NOTAS:
    Sin --baseline, el modelo AR es el mismo checkpoint en modo AR (mismos
    pesos), la comparación de arquitectura idéntica.

===============================================================================
"""

import json
from pathlib import Path

from apps.appshell.datadir import load_split, load_vocab
from apps.appshell.management.base import CnatCommand
from apps.appshell.vocab import encode_input
from apps.cnat_model.checkpoint import load_checkpoint
from apps.cnat_model.config import Mode
from apps.evalkit.bench import bench_callables, bench_latency, length_scaling, write_csv
from apps.numcore.exceptions import BadConfig, EmptyEval

MODES = ('nar', 'ar')


class Command(CnatCommand):
    help = 'Mide la latencia de decodificación NAR vs AR (lote 1, un hilo)'

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True, help='Checkpoint NAR')
        parser.add_argument('--baseline', help='Checkpoint AR (default: el mismo en modo AR)')
        parser.add_argument('--data', required=True, help='Directorio de datos')
        parser.add_argument('--split', default='test')
        parser.add_argument('--limit', type=int, help='Usa solo los N primeros registros')
        parser.add_argument('--modes', default='nar,ar', help='Modos a medir, separados por comas')
        parser.add_argument('--csv', help='CSV con una fila por medición')
        parser.add_argument('--scaling', action='store_true', help='Escalado de la latencia con T')
        parser.add_argument('--out', help='Fichero JSON con el resumen')
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        config = self.load_config(options)
        eval_cfg = config['eval']
        modes = [mode.strip() for mode in options['modes'].split(',') if mode.strip()]
        if not modes or any(mode not in MODES for mode in modes):
            raise BadConfig(f'--modes admite {MODES}, recibido {options["modes"]!r}')

        vocab = load_vocab(options['data'])
        examples = load_split(options['data'], options['split'])
        if options['limit']:
            examples = examples[:options['limit']]
        sources = [encode_input(e.segment_a, e.segment_b, vocab) for e in examples]
        if not sources:
            raise EmptyEval('Conjunto de benchmark vacío')

        model = load_checkpoint(options['checkpoint'])
        if model.config.mode != Mode.NAR:
            raise BadConfig('--checkpoint debe ser un modelo NAR')
        baseline = load_checkpoint(options['baseline']) if options['baseline'] else model.with_mode(Mode.AR)
        warmup, groups = eval_cfg['WARMUP'], eval_cfg['BENCH_GROUPS']

        self.progress(f'Benchmark de {len(sources)} entradas ({", ".join(modes)}), warmup {warmup}')
        if set(modes) == set(MODES):
            result = bench_latency(model, baseline, sources, warmup=warmup, groups=groups)
        else:
            only = modes[0]
            fn = (lambda x: model.generate(x)) if only == 'nar' else (lambda x: baseline.generate_autoregressive(x))
            result = bench_callables(fn, fn, sources, warmup=warmup, groups=groups, names=(only, f'{only}_repeat'),
                                     lengths=lambda output: output.length)
        summary = result.to_dict()

        if options['scaling']:
            longest = max(sources, key=len)
            summary['scaling'] = length_scaling(
                model, baseline, longest, eval_cfg['BENCH_LENGTHS'], warmup=warmup, groups=groups,
            )
        if options['csv']:
            write_csv(result.rows, options['csv'])
        if options['out']:
            out = Path(options['out'])
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(summary, indent=2) + '\n', encoding='utf-8')

        for key, value in summary.items():
            if key != 'scaling':
                self.stdout.write(f'{key:<20} {value}')
        if 'scaling' in summary:
            scaling = summary['scaling']
            self.stdout.write(f'{"T":>4} {"NAR (ms)":>10} {"AR (ms)":>10}')
            for length, nar, ar in zip(scaling['lengths'], scaling['nar_ns'], scaling['ar_ns']):
                self.stdout.write(f'{length:>4} {nar / 1e6:>10.3f} {ar / 1e6:>10.3f}')
            self.stdout.write(f'Pendientes: NAR {scaling["nar_slope"]} ns/token, AR {scaling["ar_slope"]} ns/token '
                              f'(cociente {scaling["slope_ratio"]})')
        if set(modes) == set(MODES):
            self.success(f'Speedup NAR sobre AR: {result.speedup:.2f}x')

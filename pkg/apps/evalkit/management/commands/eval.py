"""
===============================================================================
ARCHIVO: apps/evalkit/management/commands/eval.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Evalúa un checkpoint (o las explicaciones gold con --reference) con la
    batería de métricas: Acc, NE-Acc, BLEU, PPL, Inter-Rep, Rationality,
    latencia media y, con --baseline, speedup frente a un modelo AR.

USO:
    python manage.py eval --checkpoint runs/nli-full-none-s0/model.cnat --data runs/data/nli
    python manage.py eval --reference --data runs/data/nli
    python manage.py eval --checkpoint ... --baseline runs/nli-full-no_nar-s0/model.cnat --json

NOTAS:
    - PPL usa el LM evaluador de --lm (default: <data>/lm.cnat si existe)
    - El juez de racionalidad se carga de --judge (default:
      <data>/judge.cnat); si no existe se entrena con train y se guarda

===============================================================================
"""

from pathlib import Path

from apps.appshell.config import model_preset
from apps.appshell.datadir import load_split, load_task_meta, load_vocab
from apps.appshell.management.base import CnatCommand
from apps.appshell.vocab import encode_input
from apps.cnat_model.checkpoint import load_checkpoint
from apps.cnat_model.config import ModelConfig, Mode
from apps.evalkit.bench import bench_latency
from apps.evalkit.judge import RationalityJudge
from apps.evalkit.report import evaluate_model, evaluate_reference
from apps.numcore.exceptions import BadConfig, VocabMismatch


class Command(CnatCommand):
    help = 'Evalúa un modelo (o la referencia gold) con la batería de métricas'

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', help='Checkpoint del modelo a evaluar')
        parser.add_argument('--data', required=True, help='Directorio de datos')
        parser.add_argument('--split', default='test')
        parser.add_argument('--limit', type=int, help='Evalúa solo los N primeros registros')
        parser.add_argument('--reference', action='store_true', help='Puntúa las explicaciones gold')
        parser.add_argument('--lm', help='Checkpoint del LM evaluador (PPL)')
        parser.add_argument('--judge', help='Checkpoint del juez de racionalidad')
        parser.add_argument('--no-judge', action='store_true', help='No calcula Rationality')
        parser.add_argument('--baseline', help='Checkpoint AR para el speedup')
        parser.add_argument('--out', help='Fichero JSON del informe')
        parser.add_argument('--json', action='store_true', help='Imprime el informe como JSON')
        parser.add_argument('--progress', action='store_true', help='Barra de progreso del juez')
        self.add_seed_argument(parser)
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        if not options['reference'] and not options['checkpoint']:
            raise BadConfig('Indique --checkpoint o --reference')
        config = self.load_config(options)
        data_dir = Path(options['data'])
        vocab = load_vocab(data_dir)
        labels = load_task_meta(data_dir)['labels']
        examples = load_split(data_dir, options['split'])
        if options['limit']:
            examples = examples[:options['limit']]

        scorer_lm = self.load_scorer(options, data_dir)
        judge = None if options['no_judge'] else self.load_judge(options, config, data_dir, vocab, len(labels))

        if options['reference']:
            report = evaluate_reference(examples, vocab, scorer_lm=scorer_lm, judge=judge)
        else:
            model = load_checkpoint(options['checkpoint'])
            if model.config.vocab_size != len(vocab):
                raise VocabMismatch(f'Checkpoint con V={model.config.vocab_size}, vocabulario con {len(vocab)}')
            name = Path(options['checkpoint']).parent.name or 'model'
            report = evaluate_model(model, examples, vocab, scorer_lm=scorer_lm, judge=judge, name=name)
            if options['baseline']:
                baseline = load_checkpoint(options['baseline'])
                if baseline.config.mode != Mode.AR or model.config.mode != Mode.NAR:
                    raise BadConfig('--baseline compara un modelo NAR con un checkpoint AR')
                sources = [encode_input(e.segment_a, e.segment_b, vocab) for e in examples]
                result = bench_latency(
                    model, baseline, sources,
                    warmup=config['eval']['WARMUP'], groups=config['eval']['BENCH_GROUPS'],
                )
                report.speedup = result.speedup
                report.baseline = Path(options['baseline']).parent.name or 'baseline'

        if options['out']:
            out = Path(options['out'])
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(report.to_json() + '\n', encoding='utf-8')
        self.stdout.write(report.to_json() if options['json'] else report.as_table())

    def load_scorer(self, options, data_dir):
        path = Path(options['lm']) if options['lm'] else data_dir / 'lm.cnat'
        if path.exists():
            return load_checkpoint(path)
        if options['lm']:
            raise BadConfig(f'No existe el LM evaluador {path}')
        self.progress(f'Sin LM evaluador en {path}: PPL no se calcula')
        return None

    def load_judge(self, options, config, data_dir, vocab, num_labels):
        path = Path(options['judge']) if options['judge'] else data_dir / 'judge.cnat'
        if path.exists():
            return RationalityJudge.load(path)
        if options['judge']:
            raise BadConfig(f'No existe el juez {path}')

        eval_cfg, train_cfg = config['eval'], config['train']
        model_config = ModelConfig.from_preset(
            model_preset(config), len(vocab), num_labels, config['model'], mode=Mode.NAR,
        )
        self.progress(f'Entrenando el juez de racionalidad ({eval_cfg["JUDGE_STEPS"]} pasos)')
        judge = RationalityJudge.train(
            load_split(data_dir, 'train'), vocab, model_config,
            steps=eval_cfg['JUDGE_STEPS'], batch_size=train_cfg['BATCH_SIZE'],
            learning_rate=train_cfg['DESK_LEARNING_RATE'], swap_rate=eval_cfg['JUDGE_SWAP_RATE'],
            seed=options['seed'], grad_clip=train_cfg['GRAD_CLIP'], show_progress=options['progress'],
        )
        judge.save(path)
        self.progress(f'Juez guardado en {path}')
        return judge

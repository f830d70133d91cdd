"""
===============================================================================
ARCHIVO: apps/appshell/management/commands/gen_data.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Genera el dataset sintético (train/val/test), el vocabulario compartido
    y los metadatos de la tarea.

USO:
    python manage.py gen_data --task nli --seed 0
    python manage.py gen_data --task sp --out runs/data/sp --train-size 4096

NOTAS:
    El vocabulario incluye, además de las palabras del dataset, las de las
    plantillas de supervisión débil y las del parafraseador, para que las
    pseudo-explicaciones no produzcan UNK.

===============================================================================
"""

from pathlib import Path

from apps.appshell.datadir import default_data_dir, save_split, save_task_meta
from apps.appshell.management.base import CnatCommand
from apps.appshell.synthetic import SPLIT_ORDER, SyntheticTaskConfig, generate_synthetic
from apps.appshell.vocab import Vocab
from apps.unsup.paraphrase import surrogate_words
from apps.weaksup.rules import load_labeling_functions, template_words


class Command(CnatCommand):
    help = 'Genera el dataset sintético, el vocabulario y los metadatos de la tarea'

    def add_arguments(self, parser):
        parser.add_argument('--task', choices=['nli', 'sp'], help='Familia de tareas (default: settings)')
        parser.add_argument('--out', help='Directorio de salida (default: runs/data/<task>)')
        parser.add_argument('--train-size', type=int)
        parser.add_argument('--val-size', type=int)
        parser.add_argument('--test-size', type=int)
        self.add_seed_argument(parser)
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        config = self.load_config(options)
        data_cfg = config['data']
        task = options['task'] or data_cfg['TASK']
        sizes = dict(data_cfg['SPLITS'])
        for split in SPLIT_ORDER:
            if options.get(f'{split}_size') is not None:
                sizes[split] = options[f'{split}_size']

        task_config = SyntheticTaskConfig.from_settings(task=task, seed=options['seed'], sizes=sizes)
        task_config.balance_tolerance = data_cfg['BALANCE_TOLERANCE']
        splits = generate_synthetic(task_config)

        out = Path(options['out']) if options['out'] else default_data_dir(task)
        out.mkdir(parents=True, exist_ok=True)
        for split, examples in splits.items():
            save_split(examples, out, split)

        extra = [word for words in task_config.inventories.values() for word in words]
        lf_file = config['weaksup']['LF_FILES'].get(task)
        if lf_file and Path(lf_file).exists():
            extra += template_words(load_labeling_functions(lf_file, task_config.labels))
        extra += surrogate_words(config['unsup'])

        texts = []
        for examples in splits.values():
            for example in examples:
                texts += [example.segment_a, example.segment_b, example.explanation]
        vocab = Vocab.build(texts, extra_tokens=extra)
        vocab.save(out / 'vocab.txt')
        save_task_meta(out, task, task_config.labels)

        counts = ', '.join(f'{split}={len(examples)}' for split, examples in splits.items())
        self.success(f'Dataset {task} en {out}: {counts}; vocabulario de {len(vocab)} tokens')

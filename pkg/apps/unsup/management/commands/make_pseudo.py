"""
===============================================================================
ARCHIVO: apps/unsup/management/commands/make_pseudo.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Construye el dataset del régimen no supervisado: los registros de train
    conservan su etiqueta y su explicación humana se sustituye por una
    pseudo-explicación retro-traducida.

USO:
    python manage.py make_pseudo --data runs/data/nli --seed 0
    python manage.py make_pseudo --data runs/data/nli \\
        --backend apps.unsup.backends.HttpTranslationBackend --seed 0

===============================================================================
"""

from pathlib import Path

from apps.appshell.datadir import default_data_dir, load_split
from apps.appshell.management.base import CnatCommand
from apps.appshell.records import save_examples
from apps.unsup.paraphrase import Paraphraser, build_unsup_dataset


class Command(CnatCommand):
    help = 'Genera el dataset de pseudo-explicaciones del régimen no supervisado'

    def add_arguments(self, parser):
        parser.add_argument('--data', help='Directorio de datos (default: runs/data/<task>)')
        parser.add_argument('--split', default='train', help='Partición de origen')
        parser.add_argument('--out', help='JSONL de salida (default: <data>/unsup.jsonl)')
        parser.add_argument('--backend', help='Ruta del backend de traducción (default: settings)')
        parser.add_argument('--progress', action='store_true', help='Barra de progreso')
        self.add_seed_argument(parser)
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        config = self.load_config(options)
        data_dir = Path(options['data']) if options['data'] else default_data_dir(config['data']['TASK'])
        examples = load_split(data_dir, options['split'])

        paraphraser = Paraphraser.from_settings(config, seed=options['seed'], backend_path=options['backend'])
        self.progress(f'Parafraseando {len(examples)} registros (modo {paraphraser.mode})')
        dataset = build_unsup_dataset(
            examples, paraphraser, threads=config['parallel']['THREADS'], show_progress=options['progress'],
        )

        out = Path(options['out']) if options['out'] else data_dir / 'unsup.jsonl'
        save_examples(dataset, out)
        fallback = f', {paraphraser.fallbacks} con el sustituto por fallo del backend' if paraphraser.fallbacks else ''
        self.success(f'Dataset no supervisado en {out}: {len(dataset)} registros{fallback}')

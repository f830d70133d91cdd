"""
===============================================================================
ARCHIVO: apps/weaksup/management/commands/weak_label.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Construye el dataset combinado del régimen débil: conserva N registros
    anotados de train, quita etiqueta y explicación al resto y los etiqueta
    con las LFs y el modelo de etiquetas.

USO:
    python manage.py weak_label --data runs/data/nli --seed 0
    python manage.py weak_label --data runs/data/sp --annotated 64 \\
        --lf-file config/labeling_functions_sp.cfg --seed 1

SALIDA:
    <out>                     registros anotados + pseudo (JSONL)
    <out>.report.json         cobertura, precisión de las pseudo-etiquetas
                              y análisis por LF

===============================================================================
"""

import json
from pathlib import Path

import numpy as np

from apps.appshell.datadir import default_data_dir, load_split, load_task_meta
from apps.appshell.management.base import CnatCommand
from apps.appshell.records import save_examples
from apps.numcore.exceptions import BadConfig
from apps.weaksup.label_model import LabelModel
from apps.weaksup.pseudo import build_combined_dataset, split_annotated
from apps.weaksup.rules import load_labeling_functions


class Command(CnatCommand):
    help = 'Genera el dataset combinado (anotados + pseudo) del régimen de supervisión débil'

    def add_arguments(self, parser):
        parser.add_argument('--data', help='Directorio de datos (default: runs/data/<task>)')
        parser.add_argument('--annotated', type=int, help='Registros humanos que se conservan')
        parser.add_argument('--lf-file', help='Fichero de LFs (default: el de la tarea en settings)')
        parser.add_argument('--out', help='JSONL de salida (default: <data>/combined.jsonl)')
        parser.add_argument('--progress', action='store_true', help='Barra de progreso')
        self.add_seed_argument(parser)
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        config = self.load_config(options, {'weaksup': {'ANNOTATED_SIZE': options['annotated']}})
        weak_cfg = config['weaksup']
        data_dir = Path(options['data']) if options['data'] else default_data_dir(config['data']['TASK'])
        meta = load_task_meta(data_dir)
        labels = meta['labels']

        lf_file = options['lf_file'] or weak_cfg['LF_FILES'].get(meta['task'])
        if not lf_file:
            raise BadConfig(f'No hay fichero de LFs para la tarea {meta["task"]!r}')
        lfs = load_labeling_functions(lf_file, labels)

        rng = np.random.default_rng(options['seed'])
        annotated, unlabeled, gold = split_annotated(load_split(data_dir, 'train'), weak_cfg['ANNOTATED_SIZE'], rng)
        self.progress(f'{len(lfs)} LFs sobre {len(unlabeled)} registros sin etiquetar ({len(annotated)} anotados)')

        combined, report = build_combined_dataset(
            annotated, unlabeled, lfs, len(labels),
            label_model=LabelModel.from_settings(len(labels), weak_cfg),
            threads=config['parallel']['THREADS'], gold_labels=gold, show_progress=options['progress'],
        )

        out = Path(options['out']) if options['out'] else data_dir / 'combined.jsonl'
        save_examples(combined, out)
        report_path = out.with_name(out.name + '.report.json')
        report_path.write_text(json.dumps(report.to_dict(), indent=2) + '\n', encoding='utf-8')

        self.stdout.write(f'{"LF":<32} {"cobertura":>9} {"solapes":>8} {"conflictos":>10} {"w":>6}')
        for entry in report.lfs:
            flag = '  (sin votos)' if entry['silent'] else ''
            self.stdout.write(
                f'{entry["lf"]:<32} {entry["coverage"]:>9.3f} {entry["overlaps"]:>8.3f} '
                f'{entry["conflicts"]:>10.3f} {entry["weight"]:>6.3f}{flag}'
            )
        accuracy = '' if report.pseudo_accuracy is None else f', precisión pseudo {report.pseudo_accuracy:.3f}'
        self.success(
            f'Dataset combinado en {out}: {len(combined)} registros '
            f'(cobertura {report.coverage:.3f}{accuracy})'
        )

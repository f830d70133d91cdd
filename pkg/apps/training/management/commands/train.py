"""
===============================================================================
ARCHIVO: apps/training/management/commands/train.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Entrena un modelo C-NAT en uno de los tres regímenes y guarda el
    checkpoint (model.cnat) y el historial de métricas (history.jsonl).

USO:
    python manage.py train --data runs/data/nli --seed 0
    python manage.py train --data runs/data/nli --seed 0 --lm runs/data/nli/lm.cnat
    python manage.py train --data runs/data/sp --regime weak \\
        --train-file runs/data/sp/combined.jsonl --seed 1
    python manage.py train --data runs/data/nli --regime unsup \\
        --train-file runs/data/nli/unsup.jsonl --ablation no_pseudo --seed 0

===============================================================================
"""

from pathlib import Path

from django.conf import settings

from apps.appshell.config import model_preset
from apps.appshell.datadir import default_data_dir, load_split, load_task_meta, load_vocab
from apps.appshell.management.base import CnatCommand
from apps.appshell.records import load_examples
from apps.cnat_model.checkpoint import load_checkpoint
from apps.cnat_model.config import ModelConfig
from apps.cnat_model.model import CnatModel
from apps.numcore.exceptions import BadRecord
from apps.training.trainer import ABLATIONS, REGIMES, Trainer, TrainConfig


class Command(CnatCommand):
    help = 'Entrena un modelo C-NAT (regímenes full / weak / unsup y ablaciones)'

    def add_arguments(self, parser):
        parser.add_argument('--data', help='Directorio de datos (default: runs/data/<task>)')
        parser.add_argument('--train-file', help='JSONL de entrenamiento alternativo (dataset combinado o pseudo)')
        parser.add_argument('--regime', choices=REGIMES, default='full')
        parser.add_argument('--ablation', choices=ABLATIONS, default='none')
        parser.add_argument('--preset', help='Preset de arquitectura (desk, full)')
        parser.add_argument('--lm', help='Checkpoint del LM discriminador (pretrain_lm)')
        parser.add_argument('--steps', type=int)
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--out', help='Directorio de salida (default: runs/<task>-<regime>-<ablation>-s<seed>)')
        parser.add_argument('--progress', action='store_true', help='Barra de progreso')
        self.add_seed_argument(parser, required=True)
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        config = self.load_config(options, {
            'train': {'STEPS': options['steps'], 'BATCH_SIZE': options['batch_size']},
        })
        task = config['data']['TASK']
        data_dir = Path(options['data']) if options['data'] else default_data_dir(task)
        meta = load_task_meta(data_dir)
        vocab = load_vocab(data_dir)

        if options['train_file']:
            train_path = Path(options['train_file'])
            if not train_path.exists():
                raise BadRecord(f'No existe {train_path}')
            train_examples = load_examples(train_path)
        else:
            train_examples = load_split(data_dir, 'train')
        val_examples = load_split(data_dir, 'val')

        preset_name = options['preset'] or config['model']['PRESET']
        train_config = TrainConfig.from_settings(
            config['train'], regime=options['regime'], ablation=options['ablation'],
            seed=options['seed'], preset=preset_name,
        )
        model_config = ModelConfig.from_preset(
            model_preset(config, preset_name), len(vocab), len(meta['labels']), config['model'],
            mode=train_config.mode,
        )
        model = CnatModel(model_config, seed=options['seed'])
        lm = load_checkpoint(options['lm']) if options['lm'] else None

        out_dir = Path(options['out']) if options['out'] else (
            Path(settings.RUNS_DIR) / f'{meta["task"]}-{options["regime"]}-{options["ablation"]}-s{options["seed"]}'
        )
        self.progress(
            f'Entrenando {meta["task"]} ({options["regime"]}, {options["ablation"]}), '
            f'{model.num_parameters()} parámetros, {train_config.steps} pasos'
        )
        result = Trainer(model, vocab, train_config, lm=lm).train(
            train_examples, val_examples, out_dir=out_dir, show_progress=options['progress'],
        )
        final = result.final
        self.success(
            f'Checkpoint en {result.checkpoint}; loss final {final.get("loss", float("nan")):.4f}, '
            f'val_accuracy {final.get("val_accuracy", float("nan")):.3f}'
        )

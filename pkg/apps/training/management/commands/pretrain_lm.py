"""
===============================================================================
ARCHIVO: apps/training/management/commands/pretrain_lm.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Preentrena el LM causal sobre las explicaciones de entrenamiento. El
    mismo comando produce el discriminador de L_LM y, con otra semilla, el
    LM evaluador de perplejidad.

USO:
    python manage.py pretrain_lm --data runs/data/nli --seed 0
    python manage.py pretrain_lm --data runs/data/nli --seed 7 --out runs/data/nli/scorer.cnat

===============================================================================
"""

import json
from pathlib import Path

from apps.appshell.datadir import default_data_dir, load_split, load_vocab
from apps.appshell.management.base import CnatCommand
from apps.cnat_model.checkpoint import save_checkpoint
from apps.training.lm_pretrain import explanation_corpus, pretrain_lm


class Command(CnatCommand):
    help = 'Preentrena el LM causal solo-decodificador'

    def add_arguments(self, parser):
        parser.add_argument('--data', help='Directorio de datos (default: runs/data/<task>)')
        parser.add_argument('--out', help='Checkpoint de salida (default: <data>/lm.cnat)')
        parser.add_argument('--steps', type=int)
        parser.add_argument('--progress', action='store_true')
        self.add_seed_argument(parser, required=True)
        self.add_config_argument(parser)

    def handle(self, *args, **options):
        config = self.load_config(options, {'train': {'LM_STEPS': options['steps']}})
        train_cfg = config['train']
        data_dir = Path(options['data']) if options['data'] else default_data_dir(config['data']['TASK'])
        vocab = load_vocab(data_dir)
        max_length = config['model']['MAX_LENGTH']
        corpus = explanation_corpus(load_split(data_dir, 'train'), vocab, max_length)
        held_out = explanation_corpus(load_split(data_dir, 'val'), vocab, max_length)

        lm, history = pretrain_lm(
            corpus, len(vocab), config['model'],
            steps=train_cfg['LM_STEPS'],
            batch_size=train_cfg['LM_BATCH_SIZE'],
            learning_rate=train_cfg['LM_LEARNING_RATE'],
            seed=options['seed'],
            grad_clip=train_cfg['GRAD_CLIP'],
            held_out=held_out,
            show_progress=options['progress'],
        )
        out = Path(options['out']) if options['out'] else data_dir / 'lm.cnat'
        save_checkpoint(lm, out)
        with open(out.with_suffix('.history.jsonl'), 'w', encoding='utf-8') as handle:
            for record in history:
                handle.write(json.dumps(record) + '\n')
        final = history[-1]
        self.success(f'LM en {out}: ppl {final["ppl"]:.2f}, val_ppl {final.get("val_ppl", float("nan")):.2f}')

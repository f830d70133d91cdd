"""
===============================================================================
ARCHIVO: apps/cnat_model/management/commands/generate.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Clasifica una entrada y genera su explicación con un checkpoint
    entrenado. Muestra etiqueta, explicación, fertilidades y latencia.

USO:
    python manage.py generate --checkpoint runs/nli/model.cnat \\
        --data runs/data/nli "a red cat sits and a big dog runs" "a cat sits"
    python manage.py generate ... --no-explain    # camino NE-Acc
    python manage.py generate ... --json

===============================================================================
"""

import json

from apps.appshell.datadir import load_task_meta, load_vocab
from apps.appshell.management.base import CnatCommand
from apps.appshell.vocab import encode_input
from apps.cnat_model.checkpoint import load_checkpoint
from apps.numcore.exceptions import VocabMismatch


class Command(CnatCommand):
    help = 'Genera etiqueta + explicación para una entrada (uno o dos segmentos)'

    def add_arguments(self, parser):
        parser.add_argument('segment_a')
        parser.add_argument('segment_b', nargs='?')
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--data', required=True, help='Directorio de datos (vocab.txt, task.json)')
        parser.add_argument('--no-explain', action='store_true', help='Omite la proyección al vocabulario')
        parser.add_argument('--json', action='store_true', help='Salida como objeto JSON')

    def handle(self, *args, **options):
        vocab = load_vocab(options['data'])
        labels = load_task_meta(options['data'])['labels']
        model = load_checkpoint(options['checkpoint'])
        if model.config.vocab_size != len(vocab):
            raise VocabMismatch(f'Checkpoint con V={model.config.vocab_size}, vocabulario con {len(vocab)}')

        ids = encode_input(options['segment_a'], options['segment_b'], vocab)
        output = model.generate_any(ids, explain=not options['no_explain'])

        if options['json']:
            self.stdout.write(json.dumps(output.to_dict(vocab, labels), ensure_ascii=False))
            return
        self.stdout.write(f'Etiqueta:     {labels[output.label]} ({output.label_probs[output.label]:.3f})')
        if output.tokens:
            self.stdout.write(f'Explicación:  {output.explanation(vocab)}')
        if output.fertility is not None and output.fertility.size:
            self.stdout.write(f'Fertilidades: {" ".join(str(int(f)) for f in output.fertility)}')
        flag = ' (recortada)' if output.truncated else ''
        self.stdout.write(f'Latencia:     {output.latency_ns / 1e6:.3f} ms, '
                          f'{output.decoder_passes} pasada(s) del decodificador{flag}')

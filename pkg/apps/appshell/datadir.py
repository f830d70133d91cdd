"""
===============================================================================
ARCHIVO: apps/appshell/datadir.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Estructura de un directorio de datos generado por gen_data:

        <dir>/train.jsonl, val.jsonl, test.jsonl   registros
        <dir>/vocab.txt                            vocabulario compartido
        <dir>/task.json                            tarea y nombres de etiqueta

    El resto de comandos reciben --data <dir> y leen de aquí el vocabulario
    y las etiquetas.

===============================================================================
"""

import json
from pathlib import Path

from django.conf import settings

from apps.numcore.exceptions import BadRecord

from .records import load_examples, save_examples
from .vocab import Vocab


def default_data_dir(task: str) -> Path:
    return Path(settings.RUNS_DIR) / 'data' / task


def split_path(data_dir, split: str) -> Path:
    return Path(data_dir) / f'{split}.jsonl'


def load_split(data_dir, split: str) -> list:
    path = split_path(data_dir, split)
    if not path.exists():
        raise BadRecord(f'No existe la partición {path}')
    return load_examples(path)


def save_split(examples, data_dir, split: str) -> Path:
    return save_examples(examples, split_path(data_dir, split))


def load_vocab(data_dir) -> Vocab:
    path = Path(data_dir) / 'vocab.txt'
    if not path.exists():
        raise BadRecord(f'No existe el vocabulario {path}')
    return Vocab.load(path)


def save_task_meta(data_dir, task: str, labels):
    path = Path(data_dir) / 'task.json'
    path.write_text(json.dumps({'task': task, 'labels': list(labels)}, indent=2) + '\n', encoding='utf-8')
    return path


def load_task_meta(data_dir) -> dict:
    path = Path(data_dir) / 'task.json'
    if not path.exists():
        raise BadRecord(f'No existe {path}')
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise BadRecord(f'{path}: JSON inválido ({exc.msg})') from exc

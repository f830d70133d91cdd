"""
===============================================================================
ARCHIVO: apps/evalkit/judge.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Juez de racionalidad: clasificador independiente que recibe
    (entrada, explicación) empaquetados como 'entrada [SEP] explicación' y
    devuelve una etiqueta.

ENTRENAMIENTO:
    Pares (entrada, explicación gold) → etiqueta gold. En una fracción
    JUDGE_SWAP_RATE de los pares la explicación se cambia por la de otro
    registro y la etiqueta pasa a ser la de ese registro, de modo que el
    juez decida por la explicación y no por la entrada sola.

    Arquitectura: un CnatModel NAR con la entrada empaquetada copiada una
    vez (fertilidad 1) al decodificador; solo se entrena la pérdida de
    etiqueta.

===============================================================================
"""

import logging

import numpy as np
from tqdm import tqdm

from apps.appshell.vocab import SEP, encode_input
from apps.cnat_model.checkpoint import load_checkpoint, save_checkpoint
from apps.cnat_model.model import CnatModel
from apps.numcore import ops
from apps.numcore.exceptions import BadConfig, EmptyInput
from apps.numcore.optim import Adam, clip_grad_norm
from apps.numcore.tensor import no_grad
from apps.training.batching import pad_rows

logger = logging.getLogger(__name__)


def pack(source, explanation, max_length: int) -> np.ndarray:
    """'entrada [SEP] explicación' recortado a T_max."""
    ids = np.concatenate([np.asarray(source, dtype=np.int64), [SEP], np.asarray(explanation, dtype=np.int64)])
    return ids[:max_length]


def judge_pairs(examples, vocab, swap_rate: float, rng):
    """
    RETORNA:
        (entradas, explicaciones, etiquetas) con una fracción de
        explicaciones intercambiadas
    """
    usable = [e for e in examples if e.label is not None and e.explanation]
    if not usable:
        raise EmptyInput('No hay registros con etiqueta y explicación para entrenar el juez')
    sources = [encode_input(e.segment_a, e.segment_b, vocab) for e in usable]
    explanations = [vocab.encode(e.explanation) for e in usable]
    labels = [int(e.label) for e in usable]
    donors = rng.permutation(len(usable))
    swapped = rng.random(len(usable)) < swap_rate
    for i in np.flatnonzero(swapped):
        j = int(donors[i])
        explanations[i] = vocab.encode(usable[j].explanation)
        labels[i] = int(usable[j].label)
    return sources, explanations, np.asarray(labels, dtype=np.int64)


class RationalityJudge:
    """
    USO:
        >>> judge = RationalityJudge.train(train_examples, vocab, model_config, steps=600)
        >>> judge(source_ids, explanation_ids)
        2
        >>> judge.predict(sources, explanations)
        array([2, 0, 1])
    """

    def __init__(self, model: CnatModel, batch_size=64):
        if model.config.decoder_only or model.config.is_autoregressive:
            raise BadConfig('El juez es un CnatModel NAR con cabeza de etiqueta')
        self.model = model.eval()
        self.batch_size = batch_size

    @classmethod
    def train(cls, examples, vocab, model_config, steps=600, batch_size=32, learning_rate=0.0005,
              swap_rate=0.5, seed=0, grad_clip=1.0, show_progress=False) -> 'RationalityJudge':
        rng = np.random.default_rng(seed)
        sources, explanations, labels = judge_pairs(examples, vocab, swap_rate, rng)
        model = CnatModel(model_config, seed=seed)
        packed = [pack(s, e, model_config.max_length) for s, e in zip(sources, explanations)]
        optimizer = Adam(model.trainable_parameters(), lr=learning_rate)
        logger.info(f'Entrenando el juez: {len(packed)} pares, {steps} pasos, semilla {seed}')

        model.train()
        for _ in tqdm(range(steps), desc='juez', disable=not show_progress):
            rows = rng.integers(0, len(packed), size=min(batch_size, len(packed)))
            ids = pad_rows([packed[i] for i in rows], max(len(packed[i]) for i in rows))
            optimizer.zero_grad()
            out = model.forward(ids, ids)
            loss = ops.cross_entropy(out.label_probs, labels[rows], from_logits=False)
            loss.backward()
            clip_grad_norm(optimizer.params, grad_clip)
            optimizer.step()
        model.eval()
        model.freeze()

        judge = cls(model)
        train_accuracy = float(np.mean(judge.predict(sources, explanations) == labels))
        logger.info(f'Juez entrenado: exactitud en entrenamiento {100 * train_accuracy:.1f}%')
        return judge

    def predict(self, sources, explanations) -> np.ndarray:
        packed = [pack(s, e, self.model.config.max_length) for s, e in zip(sources, explanations)]
        verdicts = []
        with no_grad(), self.model.inference():
            for start in range(0, len(packed), self.batch_size):
                chunk = packed[start:start + self.batch_size]
                ids = pad_rows(chunk, max(len(row) for row in chunk))
                probs = self.model.forward(ids, ids).label_probs.data
                verdicts.append(probs.argmax(axis=-1))
        return np.concatenate(verdicts) if verdicts else np.zeros(0, dtype=np.int64)

    def __call__(self, source, explanation) -> int:
        return int(self.predict([source], [explanation])[0])

    def save(self, path):
        return save_checkpoint(self.model, path)

    @classmethod
    def load(cls, path) -> 'RationalityJudge':
        return cls(load_checkpoint(path))


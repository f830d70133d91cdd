"""
===============================================================================
ARCHIVO: apps/training/batching.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Codificación de registros y montaje de lotes con relleno.

ENTRADA DEL DECODIFICADOR (teacher forcing):
    - NAR: copia de la entrada según las fertilidades objetivo de la
      explicación gold/pseudo; objetivo = la explicación (misma longitud).
    - AR: BOS + explicación; objetivo = explicación + EOS.
    - Registro sin explicación (ablación sin pseudo-objetivos): la entrada
      del decodificador es la propia entrada (NAR) o BOS (AR) y L_E / L_F no
      cuentan para él.

===============================================================================
"""

import logging
from dataclasses import dataclass

import numpy as np

from apps.appshell.vocab import BOS, EOS, PAD, encode_input
from apps.cnat_model.config import Mode
from apps.cnat_model.model import copy_by_fertility
from apps.numcore.exceptions import InfeasibleLength

from .fertility import target_fertility

logger = logging.getLogger(__name__)


@dataclass
class EncodedExample:
    id: str
    source: np.ndarray
    decoder_input: np.ndarray
    target: np.ndarray
    fertility: np.ndarray
    label: int
    explanation_length: int

    @property
    def has_explanation(self) -> bool:
        return self.explanation_length > 0


@dataclass
class Batch:
    src_ids: np.ndarray
    src_mask: np.ndarray
    dec_ids: np.ndarray
    dec_mask: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray
    explanation_mask: np.ndarray
    fertility: np.ndarray
    fertility_mask: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.src_ids.shape[0]


def encode_example(example, vocab, mode, max_fertility: int, max_length: int, use_explanation=True) -> EncodedExample:
    """
    EXCEPCIONES:
        InfeasibleLength: la explicación no cabe en S·F_max (modo NAR)
    """
    mode = Mode(mode)
    source = np.asarray(encode_input(example.segment_a, example.segment_b, vocab), dtype=np.int64)
    explanation = vocab.encode(example.explanation) if use_explanation and example.explanation else []
    alignment = example.alignment
    limit = max_length - 1 if mode == Mode.AR else max_length
    if len(explanation) > limit:
        explanation = explanation[:limit]
        alignment = alignment[:limit] if alignment else None
    explanation = np.asarray(explanation, dtype=np.int64)
    n = len(explanation)

    fertility = np.zeros(len(source), dtype=np.int64)
    if mode == Mode.AR:
        decoder_input = np.concatenate([[BOS], explanation]).astype(np.int64)
        target = np.concatenate([explanation, [EOS]]).astype(np.int64) if n else np.zeros(1, dtype=np.int64)
    elif n:
        fertility = target_fertility(len(source), n, alignment, max_fertility)
        decoder_input = copy_by_fertility(source, fertility)
        target = explanation
    else:
        decoder_input = source.copy()
        target = np.zeros(len(source), dtype=np.int64)

    label = -1 if example.label is None else int(example.label)
    return EncodedExample(example.id, source, decoder_input, target, fertility, label, n)


def encode_examples(examples, vocab, mode, max_fertility: int, max_length: int, use_explanation=True) -> list:
    """Codifica una lista; los registros cuya explicación no cabe se descartan con aviso."""
    encoded, dropped = [], 0
    for example in examples:
        try:
            encoded.append(encode_example(example, vocab, mode, max_fertility, max_length, use_explanation))
        except InfeasibleLength as exc:
            dropped += 1
            logger.debug(f'{example.id}: {exc}')
    if dropped:
        logger.warning(f'{dropped} registros descartados: explicación más larga que S·F_max')
    return encoded


def pad_rows(rows, length: int) -> np.ndarray:
    out = np.full((len(rows), length), PAD, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, :len(row)] = row
    return out


def collate(items, mode) -> Batch:
    mode = Mode(mode)
    src_len = max(len(item.source) for item in items)
    dec_len = max(len(item.decoder_input) for item in items)
    batch = len(items)

    src_mask = np.zeros((batch, src_len), dtype=bool)
    dec_mask = np.zeros((batch, dec_len), dtype=bool)
    target_mask = np.zeros((batch, dec_len), dtype=bool)
    explanation_mask = np.zeros((batch, dec_len), dtype=bool)
    fertility_mask = np.zeros((batch, src_len), dtype=bool)
    for i, item in enumerate(items):
        src_mask[i, :len(item.source)] = True
        dec_mask[i, :len(item.decoder_input)] = True
        if item.has_explanation:
            target_mask[i, :len(item.target)] = True
            explanation_mask[i, :item.explanation_length] = True
            if mode == Mode.NAR:
                fertility_mask[i, :len(item.source)] = True

    return Batch(
        src_ids=pad_rows([item.source for item in items], src_len),
        src_mask=src_mask,
        dec_ids=pad_rows([item.decoder_input for item in items], dec_len),
        dec_mask=dec_mask,
        targets=pad_rows([item.target for item in items], dec_len),
        target_mask=target_mask,
        explanation_mask=explanation_mask,
        fertility=pad_rows([item.fertility for item in items], src_len),
        fertility_mask=fertility_mask,
        labels=np.asarray([item.label for item in items], dtype=np.int64),
    )


def batch_stream(items, batch_size: int, rng: np.random.Generator, mode):
    """Lotes infinitos: una permutación nueva por época."""
    if not items:
        return
    while True:
        order = rng.permutation(len(items))
        for start in range(0, len(order), batch_size):
            yield collate([items[i] for i in order[start:start + batch_size]], mode)

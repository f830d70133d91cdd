"""
===============================================================================
ARCHIVO: apps/cnat_model/lm.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Verosimilitud bajo el LM causal (CnatModel con decoder_only=True).

ENCUADRE:
    Cada frase x1..xT se puntúa como BOS x1..xT → x1..xT EOS: hay T+1
    posiciones puntuadas y el término de EOS se incluye.

CAMINOS:
    - ids: embedding de la tabla del LM.
    - embeddings suaves: P_t · Tabla(LM) como entrada, P_t como objetivo
      (log-verosimilitud esperada Σ_v P_t(v)·log p_LM(v | prefijo)). Con P
      one-hot coincide exactamente con el camino de ids. Es diferenciable
      respecto a las entradas.

===============================================================================
"""

import numpy as np

from apps.appshell.vocab import BOS, EOS, PAD
from apps.numcore import ops
from apps.numcore.exceptions import LengthOverflow, VocabMismatch
from apps.numcore.tensor import Tensor


def one_hot(ids, size: int, dtype=np.float32) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros(ids.shape + (size,), dtype=dtype)
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def soft_log_likelihood(lm, vectors, target_probs, mask=None) -> Tensor:
    """
    Log-verosimilitud por secuencia de un lote de entradas suaves.

    PARÁMETROS:
        lm: CnatModel causal solo-decodificador
        vectors: Tensor [B, T, d] (filas de la tabla del LM o mezclas)
        target_probs: Tensor o array [B, T, V] con la distribución de cada x_t
        mask: [B, T] booleana; las posiciones falsas son relleno al final

    RETORNA:
        Tensor [B]: Σ_t log p(x_t | prefijo) + log p(EOS | x_1..x_T).
    """
    batch, length = vectors.shape[0], vectors.shape[1]
    vocab_size = lm.config.vocab_size
    if target_probs.shape[-1] != vocab_size:
        raise VocabMismatch(f'Distribución sobre {target_probs.shape[-1]} tokens; el LM tiene {vocab_size}')
    if length + 1 > lm.config.max_length:
        raise LengthOverflow(f'Secuencia de {length} tokens + EOS > T_max del LM ({lm.config.max_length})')
    mask = np.ones((batch, length), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    bos = np.broadcast_to(lm.embedding.table.data[BOS], (batch, 1, lm.config.d_model))
    inputs = ops.concat([Tensor(bos.astype(vectors.dtype)), vectors], axis=1)
    input_mask = np.concatenate([np.ones((batch, 1), dtype=bool), mask], axis=1)
    hidden = lm.decode_batch(vectors=inputs, dec_mask=input_mask)
    log_probs = ops.log_softmax(lm.explanation_logits(hidden), axis=-1)

    lengths = mask.sum(axis=1)
    valid = mask[..., None].astype(log_probs.dtype)
    targets = ops.concat(
        [ops.as_tensor(target_probs) * valid, Tensor(np.zeros((batch, 1, vocab_size), dtype=log_probs.dtype))],
        axis=1,
    )
    eos = np.zeros((batch, length + 1, vocab_size), dtype=log_probs.dtype)
    eos[np.arange(batch), lengths, EOS] = 1.0
    return ((targets + eos) * log_probs).sum(axis=(1, 2))


def lm_log_likelihood(lm, ids=None, *, embeddings=None, targets=None) -> Tensor:
    """
    Σ_t log p_LM(token_t | prefijo) de una frase, EOS incluido.

    PARÁMETROS:
        ids: tokens [T] (camino discreto), o bien
        embeddings: Tensor [T×d] de entrada y targets: ids [T] o
                    distribuciones [T×V] (camino suave)

    EXCEPCIONES:
        LengthOverflow: T + 1 > T_max del LM
    """
    vocab_size = lm.config.vocab_size
    if embeddings is None:
        ids = np.asarray(ids, dtype=np.int64).reshape(1, -1)
        vectors = lm.embedding(ids)
        target_probs = one_hot(ids, vocab_size, dtype=vectors.dtype)
    else:
        vectors = embeddings.reshape(1, *embeddings.shape)
        if targets is None:
            raise ValueError('El camino suave necesita targets (ids o distribuciones)')
        targets_array = targets.data if isinstance(targets, Tensor) else np.asarray(targets)
        if targets_array.ndim == 1:
            target_probs = one_hot(targets_array, vocab_size, dtype=vectors.dtype)[None]
        else:
            target_probs = ops.as_tensor(targets).reshape(1, *targets_array.shape)
    return soft_log_likelihood(lm, vectors, target_probs)[0]


def lm_batch_nll(lm, ids, mask=None) -> Tensor:
    """
    NLL media por posición puntuada (tokens + EOS) de un lote de frases
    rellenas con PAD. Camino de entrenamiento del LM.
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = ids != PAD if mask is None else np.asarray(mask, dtype=bool)
    batch, length = ids.shape
    if length + 1 > lm.config.max_length:
        raise LengthOverflow(f'Secuencia de {length} tokens + EOS > T_max del LM ({lm.config.max_length})')
    lengths = mask.sum(axis=1)

    inputs = np.concatenate([np.full((batch, 1), BOS), np.where(mask, ids, PAD)], axis=1)
    input_mask = np.concatenate([np.ones((batch, 1), dtype=bool), mask], axis=1)
    targets = np.concatenate([np.where(mask, ids, PAD), np.full((batch, 1), PAD)], axis=1)
    targets[np.arange(batch), lengths] = EOS
    target_mask = np.zeros_like(input_mask)
    for row, n in enumerate(lengths):
        target_mask[row, :n + 1] = True

    hidden = lm.decode_batch(inputs, input_mask)
    return ops.cross_entropy(lm.explanation_logits(hidden), targets, mask=target_mask)


def token_log_probs(lm, ids) -> np.ndarray:
    """log p_LM de cada posición puntuada (T tokens + EOS) de una frase, sin gradiente."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    inputs = np.concatenate([[BOS], ids])[None]
    targets = np.concatenate([ids, [EOS]])
    hidden = lm.decode_batch(inputs, np.ones(inputs.shape, dtype=bool))
    log_probs = ops.log_softmax(lm.explanation_logits(hidden), axis=-1).data[0]
    return log_probs[np.arange(len(targets)), targets]

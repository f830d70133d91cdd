"""
Preentrenamiento del LM causal (discriminador de fluidez y LM evaluador de
perplejidad).

Entropía cruzada del siguiente token sobre un corpus de explicaciones.
Devuelve el LM congelado y en modo evaluación.
"""

import logging
import math

import numpy as np
from tqdm import tqdm

from apps.cnat_model.config import ModelConfig
from apps.cnat_model.lm import lm_batch_nll
from apps.cnat_model.model import CnatModel
from apps.numcore.exceptions import EmptyInput
from apps.numcore.optim import Adam, clip_grad_norm
from apps.numcore.tensor import no_grad

from .batching import pad_rows

logger = logging.getLogger(__name__)


def explanation_corpus(examples, vocab, max_length: int) -> list:
    """Explicaciones tokenizadas (recortadas para que quepa EOS)."""
    corpus = []
    for example in examples:
        if example.explanation:
            ids = vocab.encode(example.explanation)[:max_length - 1]
            if ids:
                corpus.append(ids)
    return corpus


def corpus_nll(lm, corpus, batch_size=64) -> float:
    """NLL media por posición puntuada (tokens + EOS) sin gradiente."""
    total, positions = 0.0, 0
    with no_grad(), lm.inference():
        for start in range(0, len(corpus), batch_size):
            chunk = corpus[start:start + batch_size]
            scored = sum(len(ids) + 1 for ids in chunk)
            total += lm_batch_nll(lm, pad_rows(chunk, max(len(ids) for ids in chunk))).item() * scored
            positions += scored
    return total / max(positions, 1)


def pretrain_lm(corpus, vocab_size: int, model_section: dict, steps=1500, batch_size=32,
                learning_rate=0.001, seed=0, grad_clip=1.0, held_out=None, eval_every=100,
                show_progress=False):
    """
    Entrena un CnatModel solo-decodificador con máscara causal.

    PARÁMETROS:
        corpus: lista de frases (listas de ids)
        held_out: frases para la perplejidad de validación (opcional)

    RETORNA:
        (lm congelado, historial [{step, nll, ppl, val_ppl?}])

    EXCEPCIONES:
        EmptyInput: corpus vacío
    """
    corpus = [list(ids) for ids in corpus if len(ids)]
    if not corpus:
        raise EmptyInput('El corpus del LM está vacío')
    lm = CnatModel(ModelConfig.for_lm(vocab_size, model_section), seed=seed)
    limit = lm.config.max_length - 1
    corpus = [ids[:limit] for ids in corpus]
    optimizer = Adam(lm.trainable_parameters(), lr=learning_rate)
    rng = np.random.default_rng(seed)
    logger.info(f'Preentrenamiento del LM: {len(corpus)} frases, {steps} pasos, semilla {seed}')

    history = []
    for step in tqdm(range(1, steps + 1), desc='pretrain_lm', disable=not show_progress):
        lm.train()
        rows = rng.integers(0, len(corpus), size=min(batch_size, len(corpus)))
        chunk = [corpus[i] for i in rows]
        optimizer.zero_grad()
        loss = lm_batch_nll(lm, pad_rows(chunk, max(len(ids) for ids in chunk)))
        loss.backward()
        clip_grad_norm(optimizer.params, grad_clip)
        optimizer.step()
        nll = loss.item()
        record = {'step': step, 'nll': round(nll, 6), 'ppl': round(math.exp(min(nll, 50.0)), 4)}
        if held_out and (step % eval_every == 0 or step == steps):
            record['val_ppl'] = round(math.exp(min(corpus_nll(lm, held_out), 50.0)), 4)
            logger.info(f'LM paso {step}: ppl={record["ppl"]:.2f} val_ppl={record["val_ppl"]:.2f}')
        history.append(record)

    lm.eval()
    lm.freeze()
    return lm, history

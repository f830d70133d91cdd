"""
===============================================================================
ARCHIVO: apps/evalkit/metrics.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Métricas de evaluación: exactitud, BLEU de corpus, perplejidad con el LM
    evaluador, repetición entre ejemplos (Inter-Rep) y racionalidad.

DEFINICIONES:
    - accuracy: 100 · aciertos / total
    - bleu: BLEU-4 de corpus (nltk) con penalización por brevedad y sin
      suavizado. Los órdenes sin ningún n-grama en los candidatos
      (denominador 0) no entran en la media geométrica.
    - perplexity: exp(NLL media por posición puntuada, EOS incluido)
    - inter_rep: media, sobre las explicaciones en orden, de la fracción de
      sus bigramas distintos ya vistos en explicaciones anteriores
    - rationality: 100 · fracción de ítems en los que el juez, dado
      (entrada, explicación generada), devuelve la etiqueta predicha

    Todas son funciones puras.

===============================================================================
"""

import logging
import math
import warnings

import numpy as np
from nltk.translate.bleu_score import corpus_bleu

from apps.appshell.vocab import UNK
from apps.cnat_model.lm import token_log_probs
from apps.numcore.exceptions import EmptyEval, LengthMismatch
from apps.numcore.tensor import no_grad

logger = logging.getLogger(__name__)

# Con un orden sin coincidencias nltk devuelve ~1e-77 en lugar de 0
ZERO_BLEU = 1e-12


def _tokens(item) -> list:
    return item.split() if isinstance(item, str) else list(item)


def accuracy(predictions, golds) -> float:
    """
    EJEMPLO:
        >>> accuracy([0, 1, 2, 2], [0, 1, 2, 0])
        75.0
    """
    predictions, golds = np.asarray(predictions), np.asarray(golds)
    if predictions.shape != golds.shape:
        raise LengthMismatch(f'{len(predictions)} predicciones para {len(golds)} etiquetas')
    if not predictions.size:
        raise EmptyEval('accuracy() sobre un conjunto vacío')
    return 100.0 * float((predictions == golds).mean())


# =============================================================================
# BLEU
# =============================================================================

def bleu(candidates, references, max_order=4) -> float:
    """
    BLEU de corpus en [0, 100] (nltk corpus_bleu, una referencia por
    candidato). Candidatos y referencias son textos o listas de tokens,
    emparejados por posición.

    Los pesos se reparten entre los órdenes que algún candidato alcanza;
    sin suavizado, un orden sin coincidencias deja el corpus en 0.

    EJEMPLO:
        >>> round(bleu(['the cat sat'], ['the cat sat down']), 2)
        71.65
    """
    candidates = [_tokens(c) for c in candidates]
    references = [_tokens(r) for r in references]
    if len(candidates) != len(references):
        raise LengthMismatch(f'{len(candidates)} candidatos para {len(references)} referencias')
    if not candidates:
        raise EmptyEval('bleu() sobre un corpus vacío')

    orders = min(int(max_order), max(len(c) for c in candidates))
    if orders == 0:
        return 0.0
    with warnings.catch_warnings():
        # nltk avisa de cada orden sin coincidencias
        warnings.simplefilter('ignore', UserWarning)
        score = corpus_bleu([[r] for r in references], candidates, weights=(1.0 / orders,) * orders)
    return 100.0 * score if score > ZERO_BLEU else 0.0


# =============================================================================
# PERPLEJIDAD
# =============================================================================

def perplexity(explanations, scorer_lm) -> float:
    """
    exp(NLL media por posición puntuada) del corpus bajo el LM evaluador.

    Los ids fuera del vocabulario del LM pasan a UNK; las frases demasiado
    largas se recortan a T_max − 1 tokens.
    """
    explanations = [np.asarray(_tokens(e), dtype=np.int64) for e in explanations]
    if not explanations:
        raise EmptyEval('perplexity() sobre un corpus vacío')
    vocab_size = scorer_lm.config.vocab_size
    limit = scorer_lm.config.max_length - 1
    total_nll, positions = 0.0, 0
    with no_grad(), scorer_lm.inference():
        for ids in explanations:
            ids = np.where((ids >= 0) & (ids < vocab_size), ids, UNK)[:limit]
            log_probs = token_log_probs(scorer_lm, ids)
            total_nll -= float(log_probs.sum())
            positions += len(log_probs)
    return math.exp(total_nll / positions)


# =============================================================================
# DIVERSIDAD Y RACIONALIDAD
# =============================================================================

def inter_rep(explanations) -> float:
    """
    Repetición de bigramas entre ejemplos, en [0, 1]; menor = más diverso.

    EJEMPLO:
        >>> inter_rep(['a b c', 'a b c', 'a b c'])
        0.666...
    """
    explanations = [_tokens(e) for e in explanations]
    if not explanations:
        raise EmptyEval('inter_rep() sobre un conjunto vacío')
    seen, scores = set(), []
    for tokens in explanations:
        bigrams = set(zip(tokens, tokens[1:]))
        scores.append(len(bigrams & seen) / len(bigrams) if bigrams else 0.0)
        seen |= bigrams
    return float(np.mean(scores))


def rationality(inputs, predicted_labels, explanations, judge) -> float:
    """
    PARÁMETROS:
        judge: callable (entrada, explicación) → etiqueta, u objeto con
               predict(entradas, explicaciones) → etiquetas (por lotes)
    """
    inputs, explanations = list(inputs), list(explanations)
    predicted_labels = np.asarray(predicted_labels)
    if not (len(inputs) == len(explanations) == len(predicted_labels)):
        raise LengthMismatch('rationality(): entradas, etiquetas y explicaciones de distinta longitud')
    if not inputs:
        raise EmptyEval('rationality() sobre un conjunto vacío')
    if hasattr(judge, 'predict'):
        verdicts = np.asarray(judge.predict(inputs, explanations))
    else:
        verdicts = np.asarray([judge(x, e) for x, e in zip(inputs, explanations)])
    return 100.0 * float((verdicts == predicted_labels).mean())

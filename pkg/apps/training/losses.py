"""
===============================================================================
ARCHIVO: apps/training/losses.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Términos del objetivo de entrenamiento:

        L = λ_L·L_L + λ_E·L_E + λ_F·L_F + λ_LM·L_LM

    con λ_L = 1 salvo en la ablación sin pérdida de etiqueta.

TÉRMINOS:
    - L_L: entropía cruzada de la distribución de etiqueta
    - L_E: entropía cruzada media por token de la explicación (sin PAD)
    - L_F: entropía cruzada media por posición de las fertilidades
    - L_LM: discriminador de fluidez; la explicación predicha entra al LM
      congelado como embedding suave P_t · Tabla(LM)

Todos los términos son no negativos.

===============================================================================
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from apps.cnat_model.lm import soft_log_likelihood
from apps.numcore import ops
from apps.numcore.exceptions import BadConfig, FertilityOverflow, LengthMismatch, NonFiniteLoss, VocabMismatch
from apps.numcore.tensor import Tensor

logger = logging.getLogger(__name__)

TERMS = ('label', 'explanation', 'fertility', 'lm')


@dataclass(frozen=True)
class LossWeights:
    explanation: float = 1.0
    fertility: float = 0.5
    lm: float = 0.1
    label: float = 1.0

    def __post_init__(self):
        for name in TERMS:
            value = getattr(self, name)
            if value < 0 or not math.isfinite(value):
                raise BadConfig(f'Peso de pérdida inválido: λ_{name}={value}')

    @classmethod
    def from_settings(cls, train_section: dict) -> 'LossWeights':
        return cls(
            explanation=float(train_section['LAMBDA_E']),
            fertility=float(train_section['LAMBDA_F']),
            lm=float(train_section['LAMBDA_LM']),
        )

    def weight(self, term: str) -> float:
        return getattr(self, term)


# =============================================================================
# TÉRMINOS
# =============================================================================

def label_loss(label_probs, gold_label) -> Tensor:
    """
    −log p(gold). label_probs es una distribución [C] o un lote [B, C].

    EJEMPLO:
        >>> label_loss(Tensor([0.7, 0.2, 0.1]), 0).item()
        0.3566749...
    """
    return ops.cross_entropy(label_probs, gold_label, from_logits=False)


def explanation_loss(token_scores, gold_tokens, mask=None, from_logits=True) -> Tensor:
    """
    Entropía cruzada media por token de la explicación.

    PARÁMETROS:
        token_scores: logits (o probabilidades con from_logits=False) [.., T, V]
        gold_tokens: ids [.., T]
        mask: posiciones que cuentan; por defecto, las que no son PAD

    EXCEPCIONES:
        LengthMismatch: la explicación gold no tiene la longitud decodificada
    """
    gold = np.asarray(gold_tokens, dtype=np.int64)
    if gold.shape != tuple(token_scores.shape[:-1]):
        raise LengthMismatch(
            f'Explicación gold de forma {gold.shape}; el decodificador produjo {tuple(token_scores.shape[:-1])}'
        )
    if mask is None:
        mask = gold != 0
    return ops.cross_entropy(token_scores, gold, from_logits=from_logits, mask=mask)


def fertility_loss(fertility_logits, target_fertility, mask=None) -> Tensor:
    """
    Entropía cruzada media por posición sobre las clases 0..F_max.

    EXCEPCIONES:
        LengthMismatch: |F objetivo| ≠ S
        FertilityOverflow: alguna fertilidad objetivo fuera de [0, F_max]
    """
    target = np.asarray(target_fertility, dtype=np.int64)
    if target.shape != tuple(fertility_logits.shape[:-1]):
        raise LengthMismatch(f'Fertilidades objetivo {target.shape} para logits {tuple(fertility_logits.shape)}')
    max_fertility = fertility_logits.shape[-1] - 1
    checked = target if mask is None else target[np.asarray(mask, dtype=bool)]
    if checked.size and (checked.min() < 0 or checked.max() > max_fertility):
        raise FertilityOverflow(f'Fertilidad objetivo fuera de [0, {max_fertility}]')
    return ops.cross_entropy(fertility_logits, target, mask=mask)


def lm_fluency_loss(explanation_logits, lm, mask=None) -> Tensor:
    """
    L_LM = −media_b [ log p_LM(explicación suave_b) / (T_b + 1) ].

    La distribución P_t = softmax(logits_t) se convierte en el embedding
    suave P_t · Tabla(LM). El LM está congelado: el gradiente solo llega a
    los parámetros del C-NAT a través de P.

    PARÁMETROS:
        explanation_logits: Tensor [B, T, V] (o [T, V])
        lm: CnatModel causal solo-decodificador
        mask: [B, T] posiciones de la explicación (relleno al final)

    EXCEPCIONES:
        VocabMismatch: el LM no comparte vocabulario con el modelo
    """
    if explanation_logits.ndim == 2:
        explanation_logits = explanation_logits.reshape(1, *explanation_logits.shape)
    batch, length, vocab_size = explanation_logits.shape
    if vocab_size != lm.config.vocab_size:
        raise VocabMismatch(f'El modelo produce {vocab_size} tokens; el LM tiene {lm.config.vocab_size}')
    mask = np.ones((batch, length), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    limit = lm.config.max_length - 1
    if length > limit:
        logger.debug(f'L_LM: explicaciones recortadas de {length} a {limit} posiciones')
        explanation_logits = explanation_logits[:, :limit]
        mask = mask[:, :limit]

    probs = ops.softmax(explanation_logits, axis=-1)
    vectors = ops.matmul(probs, lm.embedding.table)
    log_likelihood = soft_log_likelihood(lm, vectors, probs, mask)
    scored = mask.sum(axis=1).astype(log_likelihood.dtype) + 1.0
    return -(log_likelihood / scored).mean()


# =============================================================================
# OBJETIVO TOTAL
# =============================================================================

def total_loss(parts: dict, weights: LossWeights) -> Tensor:
    """
    Combinación lineal de los términos presentes en 'parts'.

    EJEMPLO:
        parts (1, 2, 3, 4), pesos λ_E=1, λ_F=0.5, λ_LM=0.1 → 1 + 2 + 1.5 + 0.4 = 4.9

    EXCEPCIONES:
        NonFiniteLoss: algún término es NaN o infinito
    """
    total = None
    for term in TERMS:
        part = parts.get(term)
        if part is None:
            continue
        value = part.item() if isinstance(part, Tensor) else float(part)
        if not math.isfinite(value):
            raise NonFiniteLoss(f'Término {term} no finito ({value})')
        contribution = ops.as_tensor(part) * weights.weight(term)
        total = contribution if total is None else total + contribution
    if total is None:
        raise NonFiniteLoss('No hay ningún término de pérdida')
    return total

"""
===============================================================================
ARCHIVO: apps/weaksup/label_model.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Matriz de votos y modelo de etiquetas de data programming con LFs
    independientes.

MODELO GENERATIVO:
    - etiqueta latente y uniforme sobre C clases
    - cada LF que vota acierta con probabilidad w_m; si falla, emite una
      de las otras C−1 etiquetas al azar
    - las abstenciones no dependen de y

    P(votos_i) = Σ_y (1/C) Π_{m vota} [w_m si v_im = y; (1−w_m)/(C−1) si no]

APRENDIZAJE:
    Ascenso de gradiente proyectado de la log-verosimilitud marginal media,
    con w ∈ [0.05, 0.95] e inicio en 0.7. Una LF que nunca vota queda en el
    prior (0.5) y se marca.

AGREGACIÓN:
    Suma de w_m de los votantes por etiqueta; gana la mayor. Empate → id
    de etiqueta más bajo. Sin votos → ABSTAIN.

===============================================================================
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from .rules import ABSTAIN, InputView

logger = logging.getLogger(__name__)


# =============================================================================
# MATRIZ DE VOTOS
# =============================================================================

def apply_lfs(example, lfs) -> np.ndarray:
    """Fila de votos de un registro: etiqueta de cada LF que dispara, ABSTAIN si no."""
    view = InputView.of(example)
    return np.asarray([lf.vote(view) for lf in lfs], dtype=np.int64)


@dataclass
class VoteMatrix:
    votes: np.ndarray
    lf_ids: list
    num_labels: int

    @classmethod
    def build(cls, examples, lfs, num_labels: int, threads=1, show_progress=False) -> 'VoteMatrix':
        """Aplica las LFs en paralelo sobre los registros (el orden se conserva)."""
        if not lfs:
            return cls(np.full((len(examples), 0), ABSTAIN, dtype=np.int64), [], num_labels)
        with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
            rows = list(tqdm(
                pool.map(lambda example: apply_lfs(example, lfs), examples),
                total=len(examples), desc='LFs', disable=not show_progress,
            ))
        votes = np.stack(rows) if rows else np.full((0, len(lfs)), ABSTAIN, dtype=np.int64)
        return cls(votes, [lf.id for lf in lfs], num_labels)

    @property
    def shape(self):
        return self.votes.shape

    def coverage(self) -> float:
        """Fracción de registros con al menos un voto."""
        if not self.votes.size:
            return 0.0
        return float((self.votes != ABSTAIN).any(axis=1).mean())

    def lf_summary(self) -> list:
        """Cobertura, solapes y conflictos por LF (al estilo de un análisis de LFs)."""
        voted = self.votes != ABSTAIN
        summary = []
        for m, lf_id in enumerate(self.lf_ids):
            mine = voted[:, m]
            others = np.delete(voted, m, axis=1)
            overlaps = mine & others.any(axis=1)
            conflict_rows = np.zeros(len(self.votes), dtype=bool)
            for j in range(self.votes.shape[1]):
                if j != m:
                    conflict_rows |= mine & voted[:, j] & (self.votes[:, j] != self.votes[:, m])
            n = max(len(self.votes), 1)
            summary.append({
                'lf': lf_id,
                'coverage': float(mine.sum() / n),
                'overlaps': float(overlaps.sum() / n),
                'conflicts': float(conflict_rows.sum() / n),
            })
        return summary


# =============================================================================
# MODELO DE ETIQUETAS
# =============================================================================

def _likelihood_terms(votes: np.ndarray, weights: np.ndarray, num_labels: int) -> np.ndarray:
    """log Π_m p(v_im | y) para cada registro y cada y: [N, C]."""
    voted = votes != ABSTAIN
    wrong = (1.0 - weights) / max(num_labels - 1, 1)
    log_right = np.log(weights)
    log_wrong = np.log(wrong)
    terms = np.zeros((len(votes), num_labels))
    for y in range(num_labels):
        agree = voted & (votes == y)
        disagree = voted & (votes != y)
        terms[:, y] = agree @ log_right + disagree @ log_wrong
    return terms


def marginal_log_likelihood(votes, weights, num_labels: int) -> float:
    """Σ_i log Σ_y (1/C) Π_m p(v_im | y)."""
    votes = np.asarray(votes, dtype=np.int64)
    terms = _likelihood_terms(votes, np.asarray(weights, dtype=np.float64), num_labels) - np.log(num_labels)
    peak = terms.max(axis=1, keepdims=True)
    return float((peak[:, 0] + np.log(np.exp(terms - peak).sum(axis=1))).sum())


@dataclass
class LabelModel:
    """
    USO:
        >>> model = LabelModel(num_labels=3).fit(matrix.votes)
        >>> model.weights
        array([0.91, 0.64, 0.58])
        >>> model.predict(matrix.votes)
    """

    num_labels: int
    init_accuracy: float = 0.7
    prior_accuracy: float = 0.5
    bounds: tuple = (0.05, 0.95)
    epochs: int = 500
    learning_rate: float = 0.05
    weights: np.ndarray = None
    silent: list = field(default_factory=list)

    @classmethod
    def from_settings(cls, num_labels: int, weaksup_section: dict) -> 'LabelModel':
        return cls(
            num_labels=num_labels,
            init_accuracy=float(weaksup_section['INIT_ACCURACY']),
            prior_accuracy=float(weaksup_section['PRIOR_ACCURACY']),
            bounds=tuple(weaksup_section['WEIGHT_BOUNDS']),
            epochs=int(weaksup_section['EPOCHS']),
            learning_rate=float(weaksup_section['LEARNING_RATE']),
        )

    def fit(self, votes) -> 'LabelModel':
        self.weights = learn_weights(
            votes, self.num_labels, init=self.init_accuracy, prior=self.prior_accuracy,
            bounds=self.bounds, epochs=self.epochs, learning_rate=self.learning_rate,
        )
        votes = np.asarray(votes)
        self.silent = [m for m in range(votes.shape[1]) if not (votes[:, m] != ABSTAIN).any()] if votes.size else []
        return self

    def predict(self, votes) -> np.ndarray:
        return np.asarray([aggregate(row, self.weights, self.num_labels) for row in np.asarray(votes)], dtype=np.int64)


def learn_weights(votes, num_labels: int, init=0.7, prior=0.5, bounds=(0.05, 0.95), epochs=500,
                  learning_rate=0.05) -> np.ndarray:
    """
    Precisión w_m de cada LF por ascenso de gradiente proyectado.

    RETORNA:
        np.ndarray [M]; las LFs que nunca votan quedan en 'prior'.
    """
    votes = np.asarray(votes, dtype=np.int64)
    n_items, n_lfs = votes.shape if votes.ndim == 2 else (0, 0)
    weights = np.full(n_lfs, float(init))
    if n_lfs == 0:
        return weights
    voted = votes != ABSTAIN
    active = voted.any(axis=0)
    for m in np.flatnonzero(~active):
        logger.warning(f'La LF {m} no vota en ningún registro: precisión fijada en {prior}')
    if not active.any():
        return np.full(n_lfs, float(prior))

    low, high = bounds
    weights[~active] = prior
    for _ in range(int(epochs)):
        terms = _likelihood_terms(votes, weights, num_labels)
        posterior = np.exp(terms - terms.max(axis=1, keepdims=True))
        posterior /= posterior.sum(axis=1, keepdims=True)
        grad = np.zeros(n_lfs)
        for y in range(num_labels):
            agree = voted & (votes == y)
            disagree = voted & (votes != y)
            grad += posterior[:, y] @ (agree / weights - disagree / (1.0 - weights))
        grad /= n_items
        grad[~active] = 0.0
        weights = np.clip(weights + learning_rate * grad, low, high)
    weights[~active] = prior
    return weights


def aggregate(row, weights, num_labels: int) -> int:
    """
    Etiqueta con mayor suma de w_m entre sus votantes.

    EJEMPLO:
        votos {A: 0.6, A: 0.3, B: 0.8} → A (0.9 > 0.8)
    """
    row = np.asarray(row, dtype=np.int64)
    voted = row != ABSTAIN
    if not voted.any():
        return ABSTAIN
    scores = np.zeros(num_labels)
    np.add.at(scores, row[voted], np.asarray(weights, dtype=np.float64)[voted])
    scores = np.round(scores, 12)
    return int(np.argmax(scores))

"""
===============================================================================
ARCHIVO: apps/weaksup/pseudo.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Pseudo-etiquetas y pseudo-explicaciones por supervisión débil, y montaje
    del dataset combinado (pocos registros humanos + registros pseudo).

FLUJO:
    1. Votos de las LFs sobre los registros sin etiquetar
    2. Aprendizaje de las precisiones w_m
    3. Agregación: pseudo-etiqueta o ABSTAIN
    4. Plantilla de la LF ganadora con mayor w_m → pseudo-explicación
    5. Registros humanos tal cual + registros pseudo cubiertos

    Los registros ABSTAIN y los de ranura sin rellenar quedan fuera.

===============================================================================
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .label_model import LabelModel, VoteMatrix, aggregate
from .rules import ABSTAIN, InputView

logger = logging.getLogger(__name__)


def split_annotated(examples, annotated_size: int, rng):
    """
    Elige al azar los registros que conservan su anotación humana.

    RETORNA:
        (anotados, sin_etiquetar, etiquetas_reales_de_sin_etiquetar)
    """
    examples = list(examples)
    order = rng.permutation(len(examples))
    size = max(0, min(int(annotated_size), len(examples)))
    annotated = [examples[i] for i in sorted(order[:size])]
    rest = [examples[i] for i in sorted(order[size:])]
    unlabeled = [replace(example, label=None, explanation=None, alignment=None) for example in rest]
    return annotated, unlabeled, [example.label for example in rest]


def winning_lf(row, weights, label: int):
    """Índice de la LF con mayor w_m entre las que votaron 'label' (empate → la primera)."""
    row = np.asarray(row)
    voters = np.flatnonzero(row == label)
    if not voters.size:
        return None
    return int(voters[np.argmax(np.asarray(weights)[voters])])


def make_pseudo_explanation(example, row, weights, lfs, num_labels: int):
    """
    Pseudo-explicación de un registro a partir de sus votos.

    RETORNA:
        (etiqueta, texto) o (etiqueta, None) si la ranura no se pudo rellenar;
        (ABSTAIN, None) si ninguna LF votó.
    """
    label = aggregate(row, weights, num_labels)
    if label == ABSTAIN:
        return ABSTAIN, None
    lf = lfs[winning_lf(row, weights, label)]
    return label, lf.explain(InputView.of(example))


@dataclass
class WeakSupervisionReport:
    total: int = 0
    covered: int = 0
    dropped: int = 0
    annotated: int = 0
    lfs: list = field(default_factory=list)
    pseudo_accuracy: float = None

    @property
    def coverage(self) -> float:
        return self.covered / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            'total': self.total,
            'covered': self.covered,
            'dropped': self.dropped,
            'annotated': self.annotated,
            'coverage': round(self.coverage, 6),
            'pseudo_accuracy': self.pseudo_accuracy,
            'lfs': self.lfs,
        }


def build_combined_dataset(annotated, unlabeled, lfs, num_labels: int, label_model=None, threads=1,
                           gold_labels=None, show_progress=False):
    """
    Dataset combinado para el régimen débil.

    PARÁMETROS:
        annotated: registros humanos (se conservan tal cual)
        unlabeled: registros sin etiqueta ni explicación
        gold_labels: etiquetas reales de 'unlabeled', solo para informar de la
                     precisión de las pseudo-etiquetas (las abstenciones
                     cuentan como error)

    RETORNA:
        (lista de Example, WeakSupervisionReport)
    """
    annotated = list(annotated)
    report = WeakSupervisionReport(total=len(unlabeled), annotated=len(annotated))
    if not lfs or not unlabeled:
        logger.info('Sin LFs o sin registros sin etiquetar: dataset = registros anotados')
        return annotated, report

    matrix = VoteMatrix.build(unlabeled, lfs, num_labels, threads=threads, show_progress=show_progress)
    label_model = label_model or LabelModel(num_labels=num_labels)
    label_model.fit(matrix.votes)
    weights = label_model.weights

    pseudo, predicted = [], []
    for example, row in zip(unlabeled, matrix.votes):
        label, explanation = make_pseudo_explanation(example, row, weights, lfs, num_labels)
        predicted.append(label)
        if label == ABSTAIN:
            continue
        if not explanation:
            report.dropped += 1
            logger.debug(f'{example.id}: ranura de plantilla sin valor, registro descartado')
            continue
        pseudo.append(example.with_pseudo(label=label, explanation=explanation))
    report.covered = len(pseudo)

    summary = matrix.lf_summary()
    for m, entry in enumerate(summary):
        entry['weight'] = round(float(weights[m]), 6)
        entry['silent'] = m in label_model.silent
    report.lfs = summary
    if gold_labels is not None and len(gold_labels):
        report.pseudo_accuracy = round(float(np.mean(np.asarray(predicted) == np.asarray(gold_labels))), 6)
    if report.dropped:
        logger.warning(f'{report.dropped} registros descartados por ranuras sin rellenar')
    logger.info(
        f'Supervisión débil: {report.covered}/{report.total} registros pseudo '
        f'(cobertura {report.coverage:.3f}) + {report.annotated} anotados'
    )
    return annotated + pseudo, report

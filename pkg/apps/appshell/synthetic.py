"""
===============================================================================
ARCHIVO: apps/appshell/synthetic.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Tareas sintéticas con etiqueta y explicación de referencia, a escala de
    escritorio. Sustituyen a los corpus reales, que usan el mismo formato
    de registro.

TAREAS:
    - nli: dos segmentos (premisa / hipótesis).
        Hecho: "a {attr} {noun} {verb}"; la premisa une dos hechos con "and".
        entailment    → la hipótesis es un hecho de la premisa (con o sin
                        atributo)
        contradiction → mismo sustantivo con atributo distinto
        neutral       → sustantivo que no aparece en la premisa
    - sp: un segmento con dos entidades marcadas con '@'.
        spouse     → entre las entidades hay una palabra clave conyugal
        not_spouse → entre las entidades hay otra relación

EXPLICACIONES:
    Una plantilla por etiqueta; cada palabra de la explicación guarda la
    posición de la entrada de la que procede (alineamiento de referencia
    para las fertilidades de entrenamiento).

GARANTÍAS:
    - Determinista dada la semilla.
    - Clases equilibradas dentro de la tolerancia configurada.
    - La etiqueta de cada registro es recalculable desde los segmentos
      (recompute_label).

===============================================================================
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from apps.numcore.exceptions import BalanceInfeasible, BadConfig

from .records import HUMAN, Example

logger = logging.getLogger(__name__)

SPLIT_ORDER = ('train', 'val', 'test')
SEP_POSITION_NLI = 9    # 'a attr noun verb and a attr noun verb <sep>'


@dataclass
class SyntheticTaskConfig:
    task: str
    inventories: dict
    labels: list
    seed: int = 0
    sizes: dict = field(default_factory=lambda: {'train': 2048, 'val': 256, 'test': 256})
    balance_tolerance: float = 0.05
    distractor_rate: float = 0.2

    @classmethod
    def from_settings(cls, task=None, seed=0, sizes=None):
        data_settings = settings.CNAT_DATA
        task = (task or data_settings['TASK']).lower()
        key = task.upper()
        if key not in data_settings:
            raise BadConfig(f'Tarea sintética desconocida: {task!r}')
        block = {k.lower(): list(v) for k, v in data_settings[key].items()}
        labels = block.pop('labels')
        return cls(
            task=task,
            inventories=block,
            labels=labels,
            seed=seed,
            sizes=dict(sizes or data_settings['SPLITS']),
            balance_tolerance=data_settings['BALANCE_TOLERANCE'],
        )


# =============================================================================
# EQUILIBRIO DE CLASES
# =============================================================================

def balanced_counts(size: int, n_labels: int, tolerance: float) -> list:
    """
    Reparto exacto de 'size' registros entre 'n_labels' clases.

    EXCEPCIONES:
        BalanceInfeasible: si alguna clase se aleja más de 'tolerance' de
        la proporción 1/n_labels.
    """
    counts = [size // n_labels + (1 if i < size % n_labels else 0) for i in range(n_labels)]
    if size:
        worst = max(abs(c / size - 1.0 / n_labels) for c in counts)
        if worst > tolerance:
            raise BalanceInfeasible(
                f'{size} registros no se pueden repartir entre {n_labels} clases '
                f'con tolerancia ±{tolerance:.0%} (desviación {worst:.1%})'
            )
    return counts


# =============================================================================
# TAREA NLI
# =============================================================================

def _check_nli_inventories(inv):
    if not inv.get('verbs'):
        raise BalanceInfeasible('Inventario de verbos vacío')
    if len(inv.get('nouns', [])) < 3:
        raise BalanceInfeasible('Neutral necesita al menos 3 sustantivos')
    if len(inv.get('attributes', [])) < 2:
        raise BalanceInfeasible('Contradiction necesita al menos 2 atributos')


def _pick(rng, items, exclude=()):
    choices = [item for item in items if item not in exclude]
    return choices[int(rng.integers(len(choices)))]


def _nli_example(rng, inv, label_name, record_id, label_id):
    nouns, attrs, verbs = inv['nouns'], inv['attributes'], inv['verbs']
    n1 = _pick(rng, nouns)
    n2 = _pick(rng, nouns, exclude=(n1,))
    facts = [(_pick(rng, attrs), n1, _pick(rng, verbs)), (_pick(rng, attrs), n2, _pick(rng, verbs))]
    premise = ' and '.join(f'a {a} {n} {v}' for a, n, v in facts)
    i = int(rng.integers(2))
    attr, noun, verb = facts[i]
    base = 5 * i    # primera posición del hecho i en la premisa
    hyp = SEP_POSITION_NLI + 1

    if label_name == 'entailment':
        with_attr = bool(rng.integers(2))
        hypothesis = f'a {attr} {noun} {verb}' if with_attr else f'a {noun} {verb}'
        explanation = f'a {attr} {noun} {verb} implies {hypothesis}'
        hyp_len = 4 if with_attr else 3
        alignment = [base, base + 1, base + 2, base + 3, SEP_POSITION_NLI] + list(range(hyp, hyp + hyp_len))
    elif label_name == 'contradiction':
        other = _pick(rng, attrs, exclude=(attr,))
        hypothesis = f'a {other} {noun} {verb}'
        explanation = f'the {noun} is {attr} not {other}'
        alignment = [base, base + 2, base + 3, base + 1, SEP_POSITION_NLI, hyp + 1]
    else:
        novel = _pick(rng, nouns, exclude=(n1, n2))
        hypothesis = f'a {_pick(rng, attrs)} {novel} {_pick(rng, verbs)}'
        explanation = f'the {novel} is not mentioned'
        alignment = [hyp, hyp + 2, hyp + 3, SEP_POSITION_NLI, SEP_POSITION_NLI]

    return Example(
        id=record_id, segment_a=premise, segment_b=hypothesis, label=label_id,
        explanation=explanation, provenance=HUMAN, alignment=alignment,
    )


def nli_label(premise: str, hypothesis: str) -> str:
    """Regla de etiquetado NLI aplicada sobre el texto."""
    facts = {}
    for fact in premise.lower().split(' and '):
        tokens = fact.split()
        if len(tokens) == 4:
            facts[tokens[2]] = (tokens[1], tokens[3])
    tokens = hypothesis.lower().split()
    attr, noun, verb = (None, tokens[1], tokens[2]) if len(tokens) == 3 else tokens[1:4]
    if noun not in facts:
        return 'neutral'
    premise_attr, premise_verb = facts[noun]
    if attr is not None and attr != premise_attr:
        return 'contradiction'
    return 'entailment' if verb == premise_verb else 'neutral'


# =============================================================================
# TAREA SP (SPOUSE PREDICTION)
# =============================================================================

def _check_sp_inventories(inv):
    if len(inv.get('names', [])) < 2:
        raise BalanceInfeasible('Se necesitan al menos 2 nombres')
    if not inv.get('spouse_cues') or not inv.get('other_cues'):
        raise BalanceInfeasible('Faltan palabras clave de alguna clase')
    if len(inv.get('fillers', [])) < 2:
        raise BalanceInfeasible('Se necesitan al menos 2 palabras de relleno')


def _sp_example(rng, inv, label_name, record_id, label_id, distractor_rate):
    e1 = _pick(rng, inv['names'])
    e2 = _pick(rng, inv['names'], exclude=(e1,))
    spouse = label_name == 'spouse'
    cue = _pick(rng, inv['spouse_cues'] if spouse else inv['other_cues'])
    fillers = inv['fillers']

    middle = [cue]
    if rng.random() < 0.5:
        middle.insert(0, _pick(rng, fillers))
    if rng.random() < 0.5:
        middle.append(_pick(rng, fillers))
    tail = [_pick(rng, fillers) for _ in range(2 + int(rng.integers(2)))]
    if rng.random() < distractor_rate:
        # Palabra clave de la otra clase fuera de la ventana entre entidades
        tail[-1] = _pick(rng, inv['other_cues'] if spouse else inv['spouse_cues'])

    tokens = [f'@{e1}'] + middle + [f'@{e2}'] + tail
    cue_pos = 1 + middle.index(cue)
    e2_pos = 1 + len(middle)
    tail0 = e2_pos + 1

    if spouse:
        explanation = f'@{e1} {cue} @{e2} so they are spouses'
        alignment = [0, cue_pos, e2_pos, e2_pos, e2_pos, tail0, tail0 + 1]
    else:
        explanation = f'@{e1} {cue} @{e2} so they are not spouses'
        alignment = [0, cue_pos, e2_pos, e2_pos, e2_pos, tail0, tail0, tail0 + 1]

    return Example(
        id=record_id, segment_a=' '.join(tokens), label=label_id,
        explanation=explanation, provenance=HUMAN, alignment=alignment,
    )


def sp_label(sentence: str, spouse_cues) -> str:
    """spouse si hay una palabra clave conyugal entre las dos entidades marcadas."""
    tokens = sentence.lower().split()
    marked = [i for i, token in enumerate(tokens) if token.startswith('@')]
    if len(marked) < 2:
        return 'not_spouse'
    window = tokens[marked[0] + 1:marked[1]]
    return 'spouse' if any(token in spouse_cues for token in window) else 'not_spouse'


# =============================================================================
# GENERACIÓN
# =============================================================================

def recompute_label(example: Example, config: SyntheticTaskConfig) -> int:
    """Recalcula la etiqueta aplicando las reglas de la tarea."""
    if config.task == 'nli':
        name = nli_label(example.segment_a, example.segment_b)
    else:
        name = sp_label(example.segment_a, config.inventories['spouse_cues'])
    return config.labels.index(name)


def generate_synthetic(config: SyntheticTaskConfig) -> dict:
    """
    Genera las particiones train/val/test.

    RETORNA:
        dict: {'train': [Example], 'val': [...], 'test': [...]}

    EXCEPCIONES:
        BalanceInfeasible: inventarios insuficientes o tamaño no equilibrable.
    """
    if config.task == 'nli':
        _check_nli_inventories(config.inventories)
    elif config.task == 'sp':
        _check_sp_inventories(config.inventories)
    else:
        raise BadConfig(f'Tarea sintética desconocida: {config.task!r}')
    if len(config.labels) < 2:
        raise BalanceInfeasible('Se necesitan al menos 2 etiquetas')

    rng = np.random.default_rng(config.seed)
    splits = {}
    for split in SPLIT_ORDER:
        size = int(config.sizes.get(split, 0))
        counts = balanced_counts(size, len(config.labels), config.balance_tolerance)
        label_ids = np.repeat(np.arange(len(config.labels)), counts)
        label_ids = label_ids[rng.permutation(len(label_ids))]
        records = []
        for i, label_id in enumerate(label_ids):
            record_id = f'{config.task}-{split}-{i:05d}'
            label_name = config.labels[int(label_id)]
            if config.task == 'nli':
                records.append(_nli_example(rng, config.inventories, label_name, record_id, int(label_id)))
            else:
                records.append(_sp_example(
                    rng, config.inventories, label_name, record_id, int(label_id), config.distractor_rate,
                ))
        splits[split] = records
        logger.info(f'Partición {split}: {len(records)} registros ({config.task}, semilla {config.seed})')
    return splits

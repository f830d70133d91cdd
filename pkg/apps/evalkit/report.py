"""
===============================================================================
ARCHIVO: apps/evalkit/report.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Informe de evaluación (EvalReport) y su cálculo sobre un conjunto de
    registros, para un modelo entrenado o para las explicaciones gold
    (fila de referencia).

CAMINOS:
    - Acc: etiqueta de generate() completo (o AR)
    - NE-Acc: etiqueta de generate(explain=False), sin proyección al
      vocabulario. En modo AR no existe este atajo y NE-Acc = Acc.
    - BLEU, PPL, Inter-Rep y Rationality sobre las explicaciones generadas

===============================================================================
"""

import json
import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from apps.appshell.vocab import encode_input, normalize
from apps.cnat_model.config import Mode
from apps.numcore.exceptions import BadConfig, EmptyEval

from .metrics import accuracy, bleu, inter_rep, perplexity, rationality

logger = logging.getLogger(__name__)

COLUMNS = (
    ('accuracy', 'Acc', '{:.2f}'),
    ('ne_accuracy', 'NE-Acc', '{:.2f}'),
    ('bleu', 'BLEU', '{:.2f}'),
    ('perplexity', 'PPL', '{:.2f}'),
    ('inter_rep', 'Inter-Rep', '{:.3f}'),
    ('rationality', 'Rationality', '{:.2f}'),
    ('latency_ns', 'Latency (ms)', None),
    ('speedup', 'Speedup', '{:.2f}x'),
)


@dataclass
class EvalReport:
    name: str = 'model'
    examples: int = 0
    accuracy: float = None
    ne_accuracy: float = None
    bleu: float = None
    perplexity: float = None
    inter_rep: float = None
    rationality: float = None
    latency_ns: float = None
    speedup: float = None
    baseline: str = None

    def __post_init__(self):
        for name in ('accuracy', 'ne_accuracy', 'rationality', 'bleu'):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 100.0:
                raise BadConfig(f'{name} fuera de [0, 100]: {value}')
        if self.inter_rep is not None and not 0.0 <= self.inter_rep <= 1.0:
            raise BadConfig(f'inter_rep fuera de [0, 1]: {self.inter_rep}')
        if self.perplexity is not None and self.perplexity < 1.0 - 1e-9:
            raise BadConfig(f'perplexity < 1: {self.perplexity}')

    def to_dict(self) -> dict:
        return {key: (round(value, 6) if isinstance(value, float) else value) for key, value in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def as_table(self) -> str:
        """Tabla de texto de dos columnas (métrica, valor)."""
        lines = [f'{"Métrica":<14} {self.name}']
        for key, title, fmt in COLUMNS:
            value = getattr(self, key)
            if value is None:
                text = '-'
            elif key == 'latency_ns':
                text = f'{value / 1e6:.3f}'
            else:
                text = fmt.format(value)
            if key == 'speedup' and value is not None and self.baseline:
                text += f' vs {self.baseline}'
            lines.append(f'{title:<14} {text}')
        return '\n'.join(lines)


def _sources(examples, vocab) -> list:
    return [np.asarray(encode_input(e.segment_a, e.segment_b, vocab), dtype=np.int64) for e in examples]


def evaluate_model(model, examples, vocab, scorer_lm=None, judge=None, name='model') -> EvalReport:
    """
    Evalúa un modelo C-NAT (NAR o AR) sobre registros con etiqueta gold.

    PARÁMETROS:
        scorer_lm: LM evaluador para PPL (opcional)
        judge: juez de racionalidad (opcional)
    """
    examples = [e for e in examples if e.label is not None]
    if not examples:
        raise EmptyEval('No hay registros etiquetados que evaluar')
    sources = _sources(examples, vocab)
    golds = [int(e.label) for e in examples]

    predictions, explanations, latencies = [], [], []
    for source in sources:
        start = time.perf_counter_ns()
        output = model.generate_any(source, explain=True)
        latencies.append(time.perf_counter_ns() - start)
        predictions.append(output.label)
        explanations.append(list(output.tokens))

    if model.config.mode == Mode.AR:
        ne_predictions = predictions
    else:
        ne_predictions = [model.generate(source, explain=False).label for source in sources]

    report = EvalReport(
        name=name,
        examples=len(examples),
        accuracy=accuracy(predictions, golds),
        ne_accuracy=accuracy(ne_predictions, golds),
        latency_ns=float(np.mean(latencies)),
    )
    # Las salidas decodificadas ya vienen normalizadas; las referencias también
    references = [' '.join(normalize(e.explanation)) for e in examples if e.explanation]
    if len(references) == len(examples):
        report.bleu = bleu([vocab.decode(ids) for ids in explanations], references)
    else:
        logger.warning('Registros sin explicación gold: no se calcula BLEU')
    _fill_explanation_metrics(report, sources, predictions, explanations, scorer_lm, judge)
    logger.info(f'Evaluación de {name}: Acc {report.accuracy:.2f}, NE-Acc {report.ne_accuracy:.2f}')
    return report


def evaluate_reference(examples, vocab, scorer_lm=None, judge=None) -> EvalReport:
    """Fila de referencia: las explicaciones gold puntuadas con las mismas métricas."""
    examples = [e for e in examples if e.label is not None and e.explanation]
    if not examples:
        raise EmptyEval('No hay registros con etiqueta y explicación gold')
    sources = _sources(examples, vocab)
    golds = [int(e.label) for e in examples]
    explanations = [vocab.encode(e.explanation) for e in examples]
    texts = [' '.join(normalize(e.explanation)) for e in examples]
    report = EvalReport(
        name='reference',
        examples=len(examples),
        accuracy=accuracy(golds, golds),
        bleu=bleu(texts, texts),
    )
    _fill_explanation_metrics(report, sources, golds, explanations, scorer_lm, judge)
    return report


def _fill_explanation_metrics(report, sources, predictions, explanations, scorer_lm, judge):
    report.inter_rep = inter_rep(explanations)
    if scorer_lm is not None:
        report.perplexity = perplexity(explanations, scorer_lm)
    if judge is not None:
        report.rationality = rationality(sources, predictions, explanations, judge)

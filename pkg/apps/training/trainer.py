"""
===============================================================================
ARCHIVO: apps/training/trainer.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Bucle de entrenamiento de los tres regímenes (full, weak, unsup) y de
    las ablaciones.

REGÍMENES:
    - full:   etiqueta y explicación humanas en todos los registros
    - weak:   etiqueta y explicación, humanas o pseudo (dataset combinado)
    - unsup:  etiqueta gold + pseudo-explicación parafraseada

ABLACIONES:
    - none
    - no_lm:         λ_LM = 0
    - no_nar:        decodificador AR (máscara causal, BOS + explicación)
    - no_label_loss: coeficiente de L_L a 0
    - no_pseudo:     régimen unsup sin pseudo-objetivos (λ_E = λ_F = 0)

FLUJO DE UN PASO:
    lote → entrada del decodificador forzada → pérdidas → backward →
    recorte de norma → Adam. Cada EVAL_EVERY pasos (y al final) se evalúa
    sobre validación. El historial (una línea JSON por paso) es idéntico
    con la misma semilla.

===============================================================================
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from tqdm import tqdm

from apps.cnat_model.checkpoint import save_checkpoint
from apps.cnat_model.config import Mode
from apps.numcore.exceptions import BadConfig, RegimeDataMismatch
from apps.numcore.optim import Adam, clip_grad_norm
from apps.numcore.tensor import no_grad

from .batching import batch_stream, collate, encode_examples
from .losses import LossWeights, explanation_loss, fertility_loss, label_loss, lm_fluency_loss, total_loss

logger = logging.getLogger(__name__)

REGIMES = ('full', 'weak', 'unsup')
ABLATIONS = ('none', 'no_lm', 'no_nar', 'no_label_loss', 'no_pseudo')


# =============================================================================
# CONFIGURACIÓN
# =============================================================================

@dataclass
class TrainConfig:
    regime: str = 'full'
    ablation: str = 'none'
    seed: int = 0
    steps: int = 2000
    batch_size: int = 32
    eval_every: int = 40
    eval_size: int = 256
    learning_rate: float = 0.00004
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    grad_clip: float = 1.0
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.steps < 1:
            raise BadConfig(f'El presupuesto de pasos debe ser ≥ 1 (steps={self.steps})')
        if self.batch_size < 1:
            raise BadConfig(f'batch_size debe ser ≥ 1 (batch_size={self.batch_size})')
        if self.regime not in REGIMES:
            raise BadConfig(f'Régimen desconocido: {self.regime!r} (disponibles: {REGIMES})')
        if self.ablation not in ABLATIONS:
            raise BadConfig(f'Ablación desconocida: {self.ablation!r} (disponibles: {ABLATIONS})')
        if self.ablation == 'no_pseudo' and self.regime != 'unsup':
            raise BadConfig('La ablación no_pseudo solo aplica al régimen unsup')

    @classmethod
    def from_settings(cls, train_section: dict, regime='full', ablation='none', seed=0, preset='desk'):
        desk = str(preset).lower() == 'desk'
        return cls(
            regime=regime,
            ablation=ablation,
            seed=seed,
            steps=int(train_section['STEPS']),
            batch_size=int(train_section['BATCH_SIZE']),
            eval_every=int(train_section['EVAL_EVERY']),
            eval_size=int(train_section['EVAL_SIZE']),
            learning_rate=float(train_section['DESK_LEARNING_RATE' if desk else 'LEARNING_RATE']),
            beta1=float(train_section['BETA1']),
            beta2=float(train_section['BETA2']),
            epsilon=float(train_section['EPSILON']),
            grad_clip=float(train_section['GRAD_CLIP']),
            weights=LossWeights.from_settings(train_section),
        )

    @property
    def mode(self) -> Mode:
        return Mode.AR if self.ablation == 'no_nar' else Mode.NAR

    @property
    def uses_explanations(self) -> bool:
        return self.ablation != 'no_pseudo'

    def effective_weights(self) -> LossWeights:
        """Pesos tras aplicar la ablación."""
        weights = self.weights
        if self.ablation == 'no_lm':
            weights = replace(weights, lm=0.0)
        elif self.ablation == 'no_label_loss':
            weights = replace(weights, label=0.0)
        elif self.ablation == 'no_pseudo':
            weights = replace(weights, explanation=0.0, fertility=0.0, lm=0.0)
        return weights


def check_regime_data(examples, config: TrainConfig):
    """
    Comprueba que los registros traen lo que el régimen necesita.

    EXCEPCIONES:
        RegimeDataMismatch: en el primer registro que no cumple
    """
    if not examples:
        raise RegimeDataMismatch('El conjunto de entrenamiento está vacío')
    for example in examples:
        if example.label is None:
            raise RegimeDataMismatch(f'{example.id}: sin etiqueta (régimen {config.regime})')
        if config.uses_explanations and not example.explanation:
            raise RegimeDataMismatch(f'{example.id}: sin explicación (régimen {config.regime})')
        if config.regime == 'full' and example.provenance != 'human':
            raise RegimeDataMismatch(f'{example.id}: registro {example.provenance} en el régimen full')


# =============================================================================
# PÉRDIDAS DE UN LOTE
# =============================================================================

def batch_losses(model, batch, weights: LossWeights, lm=None) -> dict:
    """Calcula cada término presente para el lote (Tensores escalares)."""
    output = model.forward(batch.src_ids, batch.dec_ids, batch.src_mask, batch.dec_mask)
    parts = {'label': label_loss(output.label_probs, batch.labels)}
    if batch.target_mask.any():
        parts['explanation'] = explanation_loss(output.explanation_logits, batch.targets, batch.target_mask)
    if batch.fertility_mask.any():
        parts['fertility'] = fertility_loss(output.fertility_logits, batch.fertility, batch.fertility_mask)
    if lm is not None and weights.lm > 0:
        rows = np.flatnonzero(batch.explanation_mask.any(axis=1))
        if rows.size:
            parts['lm'] = lm_fluency_loss(
                output.explanation_logits[rows], lm, batch.explanation_mask[rows],
            )
    return parts


@dataclass
class TrainResult:
    history: list
    checkpoint: Path = None

    @property
    def final(self) -> dict:
        return self.history[-1] if self.history else {}


# =============================================================================
# ENTRENADOR
# =============================================================================

class Trainer:
    """
    Entrena un CnatModel con la configuración dada.

    USO:
        >>> trainer = Trainer(model, vocab, TrainConfig(steps=200, seed=0), lm=lm)
        >>> result = trainer.train(train_examples, val_examples, out_dir='runs/nli-full')
    """

    def __init__(self, model, vocab, config: TrainConfig, lm=None):
        self.config = config
        self.vocab = vocab
        self.model = model if model.config.mode == config.mode else model.with_mode(config.mode)
        self.weights = config.effective_weights()
        self.lm = None
        if lm is not None and self.weights.lm > 0:
            self.lm = lm.eval()
            self.lm.freeze()
        elif self.weights.lm > 0:
            logger.warning('Sin LM discriminador: L_LM desactivada')
            self.weights = replace(self.weights, lm=0.0)
        self.optimizer = Adam(
            self.model.trainable_parameters(),
            lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2, eps=config.epsilon,
        )

    def _encode(self, examples):
        model_config = self.model.config
        return encode_examples(
            examples, self.vocab, self.config.mode, model_config.max_fertility, model_config.max_length,
            use_explanation=self.config.uses_explanations,
        )

    def step(self, batch) -> dict:
        """Un paso de optimización; devuelve el valor de cada término y del total."""
        self.model.train()
        self.optimizer.zero_grad()
        parts = batch_losses(self.model, batch, self.weights, self.lm)
        loss = total_loss(parts, self.weights)
        loss.backward()
        grad_norm = clip_grad_norm(self.optimizer.params, self.config.grad_clip)
        self.optimizer.step()
        record = {f'loss_{name}': round(part.item(), 6) for name, part in parts.items()}
        record['loss'] = round(loss.item(), 6)
        record['grad_norm'] = round(grad_norm, 6)
        return record

    def evaluate(self, encoded) -> dict:
        """Pérdida total con teacher forcing y precisión de la etiqueta generada."""
        if not encoded:
            return {}
        size = min(self.config.eval_size, len(encoded))
        metrics = {}
        with no_grad(), self.model.inference():
            losses = []
            for start in range(0, size, self.config.batch_size):
                batch = collate(encoded[start:start + self.config.batch_size], self.config.mode)
                losses.append(total_loss(batch_losses(self.model, batch, self.weights, self.lm), self.weights).item())
            metrics['val_loss'] = round(float(np.mean(losses)), 6)
            correct = 0
            for item in encoded[:size]:
                output = self.model.generate_any(item.source, explain=False)
                correct += int(output.label == item.label)
            metrics['val_accuracy'] = round(correct / size, 6)
        return metrics

    def train(self, train_examples, val_examples=None, out_dir=None, show_progress=False) -> TrainResult:
        """Entrena config.steps pasos; con out_dir guarda history.jsonl y el modelo del último paso."""
        check_regime_data(train_examples, self.config)
        train_items = self._encode(train_examples)
        if not train_items:
            raise RegimeDataMismatch('Ningún registro de entrenamiento es utilizable')
        val_items = self._encode(val_examples or [])

        rng = np.random.default_rng(self.config.seed)
        stream = batch_stream(train_items, self.config.batch_size, rng, self.config.mode)
        out_dir = Path(out_dir) if out_dir else None
        history_file = None
        if out_dir:
            out_dir.mkdir(parents=True, exist_ok=True)
            history_file = open(out_dir / 'history.jsonl', 'w', encoding='utf-8')

        logger.info(
            f'Entrenamiento {self.config.regime}/{self.config.ablation}: {len(train_items)} registros, '
            f'{self.config.steps} pasos, semilla {self.config.seed}, modo {self.config.mode.value}'
        )
        history = []
        try:
            for step in tqdm(range(1, self.config.steps + 1), desc='train', disable=not show_progress):
                record = {'step': step, **self.step(next(stream))}
                if step % self.config.eval_every == 0 or step == self.config.steps:
                    record.update(self.evaluate(val_items))
                    logger.info(
                        f'Paso {step}: loss={record["loss"]:.4f} '
                        f'val_loss={record.get("val_loss", float("nan")):.4f} '
                        f'val_acc={record.get("val_accuracy", float("nan")):.3f}'
                    )
                history.append(record)
                if history_file:
                    history_file.write(json.dumps(record) + '\n')
        finally:
            if history_file:
                history_file.close()

        checkpoint = save_checkpoint(self.model, out_dir / 'model.cnat') if out_dir else None
        return TrainResult(history=history, checkpoint=checkpoint)

"""
Tests para la app training.

Batería de pruebas que cubre:
- Términos de pérdida (L_L, L_E, L_F, L_LM) y combinación total
- Fertilidades objetivo
- Codificación de registros y lotes
- Entrenador: determinismo, ablaciones, LM congelado, regímenes
- Preentrenamiento del LM
- Reproducción a escala de escritorio (slow): sobreajuste, L_LM, supervisión
  débil y pseudo-explicaciones
"""

import json
import math
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from django.conf import settings
from django.test import SimpleTestCase

from apps.appshell.config import load_config, model_preset
from apps.appshell.records import Example
from apps.appshell.testing import tiny_lm, tiny_model_config, tiny_world
from apps.appshell.vocab import BOS, EOS, Vocab, encode_input, normalize
from apps.cnat_model.checkpoint import load_checkpoint
from apps.cnat_model.config import Mode, ModelConfig
from apps.cnat_model.lm import lm_log_likelihood
from apps.cnat_model.model import CnatModel
from apps.evalkit.judge import RationalityJudge
from apps.evalkit.metrics import accuracy
from apps.evalkit.report import evaluate_model
from apps.numcore.exceptions import (
    BadConfig, EmptyInput, FertilityOverflow, InfeasibleLength, LengthMismatch, NonFiniteLoss,
    RegimeDataMismatch, VocabMismatch,
)
from apps.numcore.gradcheck import numerical_gradient, relative_error
from apps.numcore.tensor import Tensor, no_grad, precision
from apps.unsup.paraphrase import Paraphraser, build_unsup_dataset
from apps.weaksup.pseudo import build_combined_dataset, split_annotated
from apps.weaksup.rules import load_labeling_functions

from .batching import collate, encode_example, encode_examples
from .fertility import target_fertility
from .lm_pretrain import corpus_nll, explanation_corpus, pretrain_lm
from .losses import LossWeights, explanation_loss, fertility_loss, label_loss, lm_fluency_loss, total_loss
from .trainer import Trainer, TrainConfig, check_regime_data


# =============================================================================
# TESTS DE PÉRDIDAS
# =============================================================================

class LabelLossTest(SimpleTestCase):

    def test_perfect_prediction(self):
        """Test: Predicción perfecta → 0."""
        self.assertAlmostEqual(label_loss(Tensor([1.0, 0.0, 0.0]), 0).item(), 0.0, places=6)

    def test_uniform(self):
        """Test: Uniforme sobre 3 etiquetas → ln 3."""
        self.assertAlmostEqual(label_loss(Tensor([1 / 3, 1 / 3, 1 / 3]), 2).item(), math.log(3), places=5)

    def test_hand_value(self):
        """Test: [0.7, 0.2, 0.1], gold 0 → −ln 0.7."""
        self.assertAlmostEqual(label_loss(Tensor([0.7, 0.2, 0.1]), 0).item(), 0.3566749, places=5)


class ExplanationLossTest(SimpleTestCase):

    def test_uniform_logits(self):
        """Test: Logits constantes → ln V."""
        loss = explanation_loss(Tensor(np.zeros((4, 10))), [5, 6, 7, 8])
        self.assertAlmostEqual(loss.item(), math.log(10), places=5)

    def test_perfect(self):
        """Test: Toda la masa en el token gold → 0."""
        logits = np.full((2, 8), -50.0)
        logits[0, 5] = logits[1, 6] = 50.0
        self.assertAlmostEqual(explanation_loss(Tensor(logits), [5, 6]).item(), 0.0, places=5)

    def test_two_token_hand_case(self):
        """Test: Caso de dos tokens contra una evaluación independiente."""
        logits = np.array([[2.0, 0.0, 1.0, 0.5, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 3.0, -1.0]])
        gold = [2, 4]
        log_z = np.log(np.exp(logits).sum(axis=1))
        expected = -((logits[0, 2] - log_z[0]) + (logits[1, 4] - log_z[1])) / 2
        self.assertAlmostEqual(explanation_loss(Tensor(logits), gold).item(), expected, places=5)

    def test_pad_is_excluded(self):
        """Test: Las posiciones PAD no cuentan."""
        logits = np.zeros((3, 10))
        logits[2] = np.arange(10)
        padded = explanation_loss(Tensor(logits), [5, 6, 0]).item()
        self.assertAlmostEqual(padded, math.log(10), places=5)

    def test_length_mismatch(self):
        """Test: Gold de otra longitud → LengthMismatch."""
        with self.assertRaises(LengthMismatch):
            explanation_loss(Tensor(np.zeros((3, 10))), [5, 6])


class FertilityLossTest(SimpleTestCase):

    def test_uniform(self):
        """Test: Uniforme sobre F_max+1 = 4 clases → ln 4."""
        self.assertAlmostEqual(fertility_loss(Tensor(np.zeros((3, 4))), [0, 1, 3]).item(), math.log(4), places=5)

    def test_hand_case(self):
        """Test: Caso a mano contra el oráculo."""
        logits = np.array([[0.0, 2.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
        log_z = np.log(np.exp(logits).sum(axis=1))
        expected = -((2.0 - log_z[0]) + (1.0 - log_z[1])) / 2
        self.assertAlmostEqual(fertility_loss(Tensor(logits), [1, 0]).item(), expected, places=5)

    def test_overflow(self):
        """Test: Fertilidad objetivo > F_max → FertilityOverflow."""
        with self.assertRaises(FertilityOverflow):
            fertility_loss(Tensor(np.zeros((2, 4))), [1, 4])


class TotalLossTest(SimpleTestCase):

    def parts(self, *values):
        return {name: Tensor(value) for name, value in zip(('label', 'explanation', 'fertility', 'lm'), values)}

    def test_weighted_sum(self):
        """Test: partes (1,2,3,4), pesos (1, 0.5, 0.1) → 4.9."""
        weights = LossWeights(explanation=1.0, fertility=0.5, lm=0.1)
        self.assertAlmostEqual(total_loss(self.parts(1, 2, 3, 4), weights).item(), 4.9, places=5)

    def test_zero_weights(self):
        """Test: Pesos (0,0,0) → total = L_L."""
        weights = LossWeights(explanation=0.0, fertility=0.0, lm=0.0)
        self.assertAlmostEqual(total_loss(self.parts(1, 2, 3, 4), weights).item(), 1.0, places=6)

    def test_linearity(self):
        """Test: Duplicar λ_E duplica exactamente su contribución."""
        parts = self.parts(1.5, 2.25, 0.5, 0.75)
        base = LossWeights(explanation=0.0, fertility=0.0, lm=0.0)
        one = total_loss(parts, LossWeights(explanation=1.0, fertility=0.0, lm=0.0)).item() - total_loss(parts, base).item()
        two = total_loss(parts, LossWeights(explanation=2.0, fertility=0.0, lm=0.0)).item() - total_loss(parts, base).item()
        self.assertAlmostEqual(two, 2 * one, places=6)

    def test_non_finite(self):
        """Test: Un término NaN → NonFiniteLoss."""
        with self.assertRaises(NonFiniteLoss):
            total_loss(self.parts(1, float('nan')), LossWeights())

    def test_negative_weight(self):
        """Test: λ negativo → BadConfig."""
        with self.assertRaises(BadConfig):
            LossWeights(explanation=-1.0)


class LmFluencyLossTest(SimpleTestCase):

    def setUp(self):
        self.world = tiny_world()
        self.vocab = self.world[1]
        self.lm = tiny_lm(self.vocab, seed=2)

    def test_one_hot_matches_sentence_nll(self):
        """Test: P casi one-hot → NLL del LM / (T+1) de esa frase."""
        sentence = self.vocab.encode('the cat is red not blue')
        logits = np.full((len(sentence), len(self.vocab)), -60.0, dtype=np.float32)
        logits[np.arange(len(sentence)), sentence] = 60.0
        with no_grad():
            loss = lm_fluency_loss(Tensor(logits), self.lm).item()
            expected = -lm_log_likelihood(self.lm, sentence).item() / (len(sentence) + 1)
        self.assertAlmostEqual(loss, expected, places=4)

    def test_uniform_soft_embedding_is_mean_row(self):
        """Test: P uniforme → embedding suave = fila media de la tabla."""
        table = self.lm.embedding.table.data
        uniform = np.full(len(self.vocab), 1.0 / len(self.vocab), dtype=np.float32)
        np.testing.assert_allclose(uniform @ table, table.mean(axis=0), atol=1e-6)

    def test_gradient_wrt_logits(self):
        """Test: Gradiente de L_LM respecto a los logits (error < 1e-3)."""
        self.lm.astype(np.float64)
        rng = np.random.default_rng(0)
        with precision('float64'):
            logits = Tensor(rng.normal(size=(1, 3, len(self.vocab))), requires_grad=True)

            def fn():
                return lm_fluency_loss(logits, self.lm)

            fn().backward()
            numeric = numerical_gradient(fn, logits)
        self.assertLess(relative_error(logits.grad, numeric), 1e-3)

    def test_vocab_mismatch(self):
        """Test: LM con otro vocabulario → VocabMismatch."""
        with self.assertRaises(VocabMismatch):
            lm_fluency_loss(Tensor(np.zeros((2, len(self.vocab) + 1))), self.lm)

    def test_non_negative(self):
        """Test: L_LM ≥ 0."""
        logits = Tensor(np.random.default_rng(1).normal(size=(2, 4, len(self.vocab))).astype(np.float32))
        with no_grad():
            self.assertGreaterEqual(lm_fluency_loss(logits, self.lm).item(), 0.0)


# =============================================================================
# TESTS DE FERTILIDADES OBJETIVO
# =============================================================================

class TargetFertilityTest(SimpleTestCase):

    def test_even_split(self):
        """Test: S=2, T=4 → [2, 2]."""
        self.assertEqual(list(target_fertility(2, 4)), [2, 2])

    def test_remainder_goes_first(self):
        """Test: S=3, T=4 → [2, 1, 1]."""
        self.assertEqual(list(target_fertility(3, 4)), [2, 1, 1])

    def test_alignment_spills_right(self):
        """Test: Tres tokens alineados con la posición 0 y F_max=2 → [2, 1, ...]."""
        self.assertEqual(list(target_fertility(3, 3, alignment=[0, 0, 0], max_fertility=2)), [2, 1, 0])

    def test_spill_at_the_end_goes_left(self):
        """Test: El exceso en la última posición se reparte hacia la izquierda."""
        self.assertEqual(list(target_fertility(3, 5, alignment=[2, 2, 2, 2, 2], max_fertility=2)), [1, 2, 2])

    def test_infeasible(self):
        """Test: T > S·F_max → InfeasibleLength."""
        with self.assertRaises(InfeasibleLength):
            target_fertility(2, 7, max_fertility=3)

    def test_sum_and_bounds(self):
        """Test: ΣF = T y 0 ≤ f ≤ F_max en una rejilla de casos."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            source = int(rng.integers(1, 8))
            target = int(rng.integers(1, source * 3 + 1))
            alignment = rng.integers(0, source, size=target) if rng.random() < 0.5 else None
            fertility = target_fertility(source, target, alignment, 3)
            self.assertEqual(int(fertility.sum()), target)
            self.assertTrue((fertility >= 0).all() and (fertility <= 3).all())


# =============================================================================
# TESTS DE LOTES
# =============================================================================

class BatchingTest(SimpleTestCase):

    def setUp(self):
        self.splits, self.vocab, _ = tiny_world()
        self.example = self.splits['train'][0]

    def test_nar_encoding(self):
        """Test: NAR: la entrada del decodificador tiene la longitud de la explicación."""
        item = encode_example(self.example, self.vocab, 'nar', 3, 32)
        self.assertEqual(len(item.decoder_input), len(item.target))
        self.assertEqual(int(item.fertility.sum()), item.explanation_length)
        self.assertEqual(list(item.target), self.vocab.encode(self.example.explanation))

    def test_ar_encoding(self):
        """Test: AR: BOS + explicación → explicación + EOS."""
        item = encode_example(self.example, self.vocab, 'ar', 3, 32)
        self.assertEqual(item.decoder_input[0], BOS)
        self.assertEqual(item.target[-1], EOS)
        self.assertEqual(list(item.decoder_input[1:]), list(item.target[:-1]))

    def test_collate_masks(self):
        """Test: Las máscaras cubren exactamente las posiciones reales."""
        items = encode_examples(self.splits['train'][:4], self.vocab, 'nar', 3, 32)
        batch = collate(items, 'nar')
        for i, item in enumerate(items):
            self.assertEqual(int(batch.src_mask[i].sum()), len(item.source))
            self.assertEqual(int(batch.dec_mask[i].sum()), len(item.decoder_input))
            self.assertEqual(int(batch.target_mask[i].sum()), item.explanation_length)

    def test_infeasible_records_are_dropped(self):
        """Test: Una explicación que no cabe en S·F_max se descarta."""
        long_one = Example(id='x', segment_a='a cat', label=0, explanation=' '.join(['cat'] * 9))
        self.assertEqual(encode_examples([long_one], self.vocab, 'nar', 3, 32), [])


# =============================================================================
# TESTS DEL ENTRENADOR
# =============================================================================

def small_train_config(**overrides):
    values = dict(steps=3, batch_size=4, eval_every=2, eval_size=4, learning_rate=0.001, seed=0)
    values.update(overrides)
    return TrainConfig(**values)


class TrainerTest(SimpleTestCase):

    def setUp(self):
        self.splits, self.vocab, _ = tiny_world()
        self.model_config = tiny_model_config(self.vocab)

    def run_training(self, seed=0, out_dir=None, **overrides):
        model = CnatModel(self.model_config, seed=seed)
        trainer = Trainer(model, self.vocab, small_train_config(seed=seed, **overrides))
        return trainer.train(self.splits['train'], self.splits['val'], out_dir=out_dir)

    def test_same_seed_same_history(self):
        """Test: Misma semilla dos veces → historial idéntico."""
        self.assertEqual(self.run_training().history, self.run_training().history)

    def test_history_and_checkpoint_files(self):
        """Test: history.jsonl una línea por paso y checkpoint cargable."""
        with tempfile.TemporaryDirectory() as tmp:
            result = self.run_training(out_dir=tmp)
            lines = Path(tmp, 'history.jsonl').read_text().splitlines()
            self.assertEqual(len(lines), 3)
            self.assertIn('loss_explanation', json.loads(lines[0]))
            self.assertIn('val_accuracy', json.loads(lines[-1]))
            self.assertEqual(load_checkpoint(result.checkpoint).config, self.model_config)

    def test_checkpoint_holds_final_weights(self):
        """Test: El checkpoint guarda los pesos del último paso."""
        with tempfile.TemporaryDirectory() as tmp:
            trainer = Trainer(CnatModel(self.model_config, seed=0), self.vocab, small_train_config(seed=0))
            result = trainer.train(self.splits['train'], self.splits['val'], out_dir=tmp)
            saved = load_checkpoint(result.checkpoint).state_dict()
        for name, values in trainer.model.state_dict().items():
            np.testing.assert_allclose(saved[name], values, rtol=1e-6, err_msg=name)

    def test_pure_classifier_has_no_explanation_gradient(self):
        """Test: λ_E = λ_F = λ_LM = 0 → gradiente nulo en la cabeza de explicación."""
        weights = LossWeights(explanation=0.0, fertility=0.0, lm=0.0)
        trainer = Trainer(CnatModel(self.model_config), self.vocab, small_train_config(weights=weights))
        items = encode_examples(self.splits['train'][:4], self.vocab, 'nar', 3, 32)
        trainer.step(collate(items, 'nar'))
        head = trainer.model.explanation_head
        self.assertFalse(np.any(head.weight.grad))
        self.assertFalse(np.any(head.bias.grad))

    def test_lm_stays_frozen(self):
        """Test: Los parámetros del LM no cambian tras un paso con L_LM."""
        lm = tiny_lm(self.vocab, seed=3)
        before = {name: p.data.copy() for name, p in lm.named_parameters()}
        trainer = Trainer(CnatModel(self.model_config), self.vocab, small_train_config(), lm=lm)
        items = encode_examples(self.splits['train'][:4], self.vocab, 'nar', 3, 32)
        record = trainer.step(collate(items, 'nar'))
        self.assertIn('loss_lm', record)
        for name, param in lm.named_parameters():
            np.testing.assert_array_equal(param.data, before[name], err_msg=name)

    def test_no_nar_ablation_trains_ar_view(self):
        """Test: La ablación no_nar entrena en modo AR."""
        trainer = Trainer(CnatModel(self.model_config), self.vocab, small_train_config(ablation='no_nar'))
        self.assertEqual(trainer.model.config.mode, Mode.AR)
        result = trainer.train(self.splits['train'], self.splits['val'])
        self.assertNotIn('loss_fertility', result.history[0])

    def test_no_label_loss_ablation(self):
        """Test: La ablación no_label_loss anula el coeficiente de L_L."""
        config = small_train_config(ablation='no_label_loss')
        self.assertEqual(config.effective_weights().label, 0.0)

    def test_regime_data_mismatch(self):
        """Test: Un registro pseudo en el régimen full o sin explicación → RegimeDataMismatch."""
        pseudo = self.splits['train'][0].with_pseudo(label=1, explanation='the cat is red')
        with self.assertRaises(RegimeDataMismatch):
            check_regime_data([pseudo], small_train_config())
        bare = Example(id='y', segment_a='a cat sits', label=0)
        with self.assertRaises(RegimeDataMismatch):
            check_regime_data([bare], small_train_config(regime='weak'))
        check_regime_data([bare], small_train_config(regime='unsup', ablation='no_pseudo'))

    def test_no_pseudo_trains_without_explanations(self):
        """Test: unsup sin pseudo-objetivos: solo L_L en el historial."""
        bare = [Example(id=e.id, segment_a=e.segment_a, segment_b=e.segment_b, label=e.label)
                for e in self.splits['train']]
        trainer = Trainer(CnatModel(self.model_config), self.vocab,
                          small_train_config(regime='unsup', ablation='no_pseudo'))
        history = trainer.train(bare, self.splits['val']).history
        self.assertEqual({k for k in history[0] if k.startswith('loss_')}, {'loss_label'})

    def test_invalid_configs(self):
        """Test: steps < 1 o no_pseudo fuera de unsup → BadConfig."""
        with self.assertRaises(BadConfig):
            small_train_config(steps=0)
        with self.assertRaises(BadConfig):
            small_train_config(ablation='no_pseudo')

    @pytest.mark.slow
    def test_overfit_loss_decreases(self):
        """Test: 256 registros: la pérdida de evaluación baja casi monótonamente."""
        splits, vocab, _ = tiny_world(train=256, val=48, test=6)
        model = CnatModel(tiny_model_config(vocab, d_model=32, ffn_dim=64), seed=0)
        config = small_train_config(steps=1000, batch_size=32, eval_every=20, eval_size=48, learning_rate=0.002)
        history = Trainer(model, vocab, config).train(splits['train'], splits['train'][:48]).history
        evals = [r['val_loss'] for r in history if 'val_loss' in r]
        rises = sum(1 for a, b in zip(evals, evals[1:]) if b >= a)
        self.assertEqual(len(evals), 50)
        self.assertLessEqual(rises, 5)


# =============================================================================
# TESTS DEL PREENTRENAMIENTO DEL LM
# =============================================================================

class PretrainLmTest(SimpleTestCase):

    def setUp(self):
        self.splits, self.vocab, _ = tiny_world(train=48)
        self.corpus = explanation_corpus(self.splits['train'], self.vocab, 32)
        self.section = {'MAX_LENGTH': 32, 'LM': {'d_model': 16, 'n_heads': 2, 'decoder_layers': 1,
                                                 'ffn_dim': 32, 'dropout': 0.0}}

    def test_deterministic(self):
        """Test: Misma semilla → mismo historial y mismos pesos."""
        lm_a, history_a = pretrain_lm(self.corpus, len(self.vocab), self.section, steps=3, batch_size=8, seed=1)
        lm_b, history_b = pretrain_lm(self.corpus, len(self.vocab), self.section, steps=3, batch_size=8, seed=1)
        self.assertEqual(history_a, history_b)
        np.testing.assert_array_equal(lm_a.embedding.table.data, lm_b.embedding.table.data)
        self.assertFalse(lm_a.embedding.table.requires_grad)

    def test_empty_corpus(self):
        """Test: Corpus vacío → EmptyInput."""
        with self.assertRaises(EmptyInput):
            pretrain_lm([], len(self.vocab), self.section, steps=1)

    @pytest.mark.slow
    def test_perplexity_drops_below_vocab_size(self):
        """Test: La perplejidad baja desde ≈V y la de validación es finita y < V."""
        held_out = explanation_corpus(self.splits['val'], self.vocab, 32)
        lm, history = pretrain_lm(self.corpus, len(self.vocab), self.section, steps=300,
                                  batch_size=16, learning_rate=0.003, seed=0, held_out=held_out)
        self.assertLess(history[-1]['ppl'], history[0]['ppl'])
        val_ppl = math.exp(corpus_nll(lm, held_out))
        self.assertTrue(math.isfinite(val_ppl))
        self.assertLess(val_ppl, len(self.vocab))


# =============================================================================
# TESTS DE REPRODUCCIÓN A ESCALA DE ESCRITORIO
# =============================================================================
# Entrenamientos completos del preset desk (2+2 capas, d=128). Comprueban la
# dirección de los efectos, no valores absolutos.

def desk_model(vocab, num_labels=3, seed=0, mode='nar'):
    config = load_config()
    model_config = ModelConfig.from_preset(model_preset(config, 'desk'), len(vocab), num_labels, config['model'],
                                           mode=mode)
    return CnatModel(model_config, seed=seed)


def desk_train_config(regime='full', ablation='none', seed=0, **overrides):
    config = TrainConfig.from_settings(load_config()['train'], regime=regime, ablation=ablation, seed=seed,
                                       preset='desk')
    return replace(config, **overrides)


def train_desk(examples, vocab, num_labels=3, lm=None, val=None, **config_overrides):
    config = desk_train_config(**config_overrides)
    trainer = Trainer(desk_model(vocab, num_labels, seed=config.seed), vocab, config, lm=lm)
    trainer.train(examples, val)
    return trainer.model.eval()


def with_texts(vocab, examples):
    """Vocabulario ampliado con las palabras de las explicaciones pseudo."""
    words = dict.fromkeys(word for e in examples for word in normalize(e.explanation or ''))
    return Vocab(vocab.itos + [word for word in words if word not in vocab])


def pretrain_desk_lm(examples, vocab, seed):
    model_section = load_config()['model']
    corpus = explanation_corpus(examples, vocab, model_section['MAX_LENGTH'])
    lm, _ = pretrain_lm(corpus, len(vocab), model_section, steps=600, seed=seed)
    return lm


@pytest.mark.slow
class DeskReproductionTest(SimpleTestCase):

    def test_overfit_reaches_full_accuracy(self):
        """Test: 256 registros, 2000 pasos → Acc ≥ 99% y coincidencia exacta de explicación ≥ 95%."""
        splits, vocab, _ = tiny_world(train=256, val=32, test=6)
        model = train_desk(splits['train'], vocab, val=splits['val'], steps=2000, eval_every=500, eval_size=32)
        predictions, exact = [], 0
        for example in splits['train']:
            output = model.generate(encode_input(example.segment_a, example.segment_b, vocab))
            predictions.append(output.label)
            exact += int(vocab.decode(output.tokens) == ' '.join(normalize(example.explanation)))
        self.assertGreaterEqual(accuracy(predictions, [e.label for e in splits['train']]), 99.0)
        self.assertGreaterEqual(exact / len(splits['train']), 0.95)

    def test_lm_loss_lowers_perplexity(self):
        """Test: Con λ_LM > 0 la PPL del LM evaluador sobre las generaciones es menor que sin L_LM."""
        splits, vocab, _ = tiny_world(train=512, val=32, test=128)
        scorer = pretrain_desk_lm(splits['train'] + splits['val'], vocab, seed=100)
        for seed in range(3):
            discriminator = pretrain_desk_lm(splits['train'], vocab, seed=seed)
            scores = {}
            for ablation in ('none', 'no_lm'):
                model = train_desk(splits['train'], vocab, lm=discriminator, ablation=ablation, seed=seed,
                                   steps=1000, eval_every=1000)
                scores[ablation] = evaluate_model(model, splits['test'], vocab, scorer_lm=scorer).perplexity
            self.assertLess(scores['none'], scores['no_lm'], f'semilla {seed}: {scores}')

    def test_weak_supervision_beats_annotated_only(self):
        """Test: 32 anotados + pseudo-registros superan a los 32 anotados solos en ≥ 5 puntos."""
        splits, vocab, _ = tiny_world(task='sp', train=2080, val=32, test=256)
        lfs = load_labeling_functions(settings.CNAT_WEAKSUP['LF_FILES']['sp'], ['not_spouse', 'spouse'])
        gains = []
        for seed in range(3):
            annotated, unlabeled, _ = split_annotated(splits['train'], 32, np.random.default_rng(seed))
            combined, _ = build_combined_dataset(annotated, unlabeled, lfs, 2)
            vocab = with_texts(vocab, combined)
            weak = train_desk(combined, vocab, num_labels=2, regime='weak', seed=seed, steps=1000, eval_every=1000)
            alone = train_desk(annotated, vocab, num_labels=2, seed=seed, steps=1000, eval_every=1000)
            gains.append(evaluate_model(weak, splits['test'], vocab).accuracy
                         - evaluate_model(alone, splits['test'], vocab).accuracy)
        self.assertGreaterEqual(float(np.mean(gains)), 5.0, gains)

    def test_pseudo_targets_raise_rationality(self):
        """Test: Entrenar con pseudo-explicaciones sube Rationality ≥ 20 puntos frente a no_pseudo."""
        splits, vocab, _ = tiny_world(train=512, val=32, test=128)
        config = load_config()
        pseudo = build_unsup_dataset(splits['train'], Paraphraser.from_settings(config, seed=0))
        vocab = with_texts(vocab, pseudo)
        judge = RationalityJudge.train(splits['train'], vocab, desk_model(vocab).config,
                                       steps=config['eval']['JUDGE_STEPS'], seed=7)
        bare = [Example(id=e.id, segment_a=e.segment_a, segment_b=e.segment_b, label=e.label)
                for e in splits['train']]
        with_targets = train_desk(pseudo, vocab, regime='unsup', steps=1000, eval_every=1000)
        without = train_desk(bare, vocab, regime='unsup', ablation='no_pseudo', steps=1000, eval_every=1000)
        gap = (evaluate_model(with_targets, splits['test'], vocab, judge=judge).rationality
               - evaluate_model(without, splits['test'], vocab, judge=judge).rationality)
        self.assertGreaterEqual(gap, 20.0)

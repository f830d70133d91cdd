"""
Tests para la app evalkit.

Batería de pruebas que cubre:
- Métricas: Acc, BLEU, PPL, Inter-Rep, Rationality
- Benchmark de latencia: mediana de medias, speedup de callables idénticos
- Latencia NAR vs AR y escalado con la longitud (preset desk, lentos)
- Juez de racionalidad
- EvalReport y evaluación de modelo / referencia
- Comandos eval y bench
"""

import csv
import json
import math
import tempfile
from dataclasses import replace
from io import StringIO
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.appshell.config import load_config, model_preset
from apps.appshell.datadir import load_split, load_task_meta, load_vocab
from apps.appshell.testing import tiny_lm, tiny_model_config, tiny_world
from apps.appshell.vocab import encode_input
from apps.cnat_model.checkpoint import save_checkpoint
from apps.cnat_model.config import Mode, ModelConfig
from apps.cnat_model.model import CnatModel
from apps.numcore.exceptions import BadConfig, EmptyEval, EmptyInput, LengthMismatch

from .bench import bench_callables, length_scaling, median_of_means, spread_fertility
from .judge import RationalityJudge, judge_pairs, pack
from .metrics import accuracy, bleu, inter_rep, perplexity, rationality
from .report import EvalReport, evaluate_model, evaluate_reference


# =============================================================================
# TESTS DE MÉTRICAS
# =============================================================================

class AccuracyTest(SimpleTestCase):

    def test_values(self):
        """Test: Acc en porcentaje."""
        self.assertEqual(accuracy([0, 1, 2], [0, 1, 2]), 100.0)
        self.assertEqual(accuracy([0, 1], [0, 0]), 50.0)
        self.assertEqual(accuracy([0, 1, 2, 2], [0, 1, 2, 0]), 75.0)

    def test_empty(self):
        """Test: Conjunto vacío → EmptyEval."""
        with self.assertRaises(EmptyEval):
            accuracy([], [])

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatch):
            accuracy([0, 1], [0])


class BleuTest(SimpleTestCase):

    def test_identity(self):
        """Test: Candidatos idénticos a las referencias → 100."""
        texts = ['a cat is sitting on the mat', 'the dog runs in the park today']
        self.assertAlmostEqual(bleu(texts, texts), 100.0)

    def test_disjoint(self):
        """Test: Sin unigramas en común → 0."""
        self.assertEqual(bleu(['red green blue'], ['one two three']), 0.0)

    def test_brevity_penalty(self):
        """Test: Candidato corto con precisión perfecta → 100·exp(1 − 4/3)."""
        self.assertAlmostEqual(bleu(['the cat sat'], ['the cat sat down']), 71.65, delta=1e-2)

    def test_accepts_token_lists(self):
        self.assertAlmostEqual(bleu([[5, 6, 7, 8]], [[5, 6, 7, 8]]), 100.0)

    def test_empty_corpus(self):
        with self.assertRaises(EmptyEval):
            bleu([], [])


class PerplexityTest(SimpleTestCase):

    def setUp(self):
        _, self.vocab, _ = tiny_world(train=8, val=2, test=2)

    def test_uniform_lm(self):
        """Test: Un LM con logits constantes tiene PPL = V."""
        lm = tiny_lm(self.vocab)
        lm.explanation_head.weight.data[...] = 0.0
        lm.explanation_head.bias.data[...] = 0.0
        ppl = perplexity([[5, 6, 7], [8, 9]], lm)
        self.assertAlmostEqual(ppl, len(self.vocab), delta=1e-3 * len(self.vocab))

    def test_at_least_one(self):
        """Test: PPL ≥ 1 para un LM cualquiera."""
        self.assertGreaterEqual(perplexity([self.vocab.encode('a cat')], tiny_lm(self.vocab)), 1.0)

    def test_out_of_range_ids(self):
        """Test: Ids fuera del vocabulario del LM se puntúan como UNK."""
        lm = tiny_lm(self.vocab)
        self.assertTrue(math.isfinite(perplexity([[len(self.vocab) + 50, 5]], lm)))

    def test_long_sentence_is_trimmed(self):
        lm = tiny_lm(self.vocab)
        self.assertTrue(math.isfinite(perplexity([[5] * (lm.config.max_length + 10)], lm)))


class InterRepTest(SimpleTestCase):

    def test_identical(self):
        """Test: N explicaciones idénticas → (N − 1)/N."""
        self.assertAlmostEqual(inter_rep(['a b c'] * 4), 0.75)

    def test_disjoint(self):
        self.assertEqual(inter_rep(['a b c', 'd e f', 'g h i']), 0.0)

    def test_half_shared(self):
        """Test: La segunda explicación repite la mitad de sus bigramas."""
        self.assertAlmostEqual(inter_rep(['a b c d e', 'a b c x y']), 0.25)

    def test_single_tokens(self):
        """Test: Explicaciones sin bigramas puntúan 0."""
        self.assertEqual(inter_rep(['a', 'a']), 0.0)

    def test_empty(self):
        with self.assertRaises(EmptyEval):
            inter_rep([])


class RationalityTest(SimpleTestCase):

    def test_degenerate_judge(self):
        """Test: Juez que siempre responde la etiqueta predicha → 100."""
        inputs = [[5, 6], [7, 8], [9]]
        self.assertEqual(rationality(inputs, [1, 1, 1], [[5], [6], [7]], lambda x, e: 1), 100.0)

    def test_batched_judge(self):
        """Test: Se usa predict() cuando el juez lo ofrece."""

        class Judge:
            def predict(self, inputs, explanations):
                return np.zeros(len(inputs), dtype=np.int64)

        self.assertEqual(rationality([[5], [6]], [0, 1], [[5], [6]], Judge()), 50.0)

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatch):
            rationality([[5]], [0, 1], [[5]], lambda x, e: 0)


# =============================================================================
# TESTS DEL BENCHMARK
# =============================================================================

class BenchTest(SimpleTestCase):

    def test_median_of_means(self):
        """Test: Un valor atípico en un grupo no mueve la mediana."""
        self.assertEqual(median_of_means([1, 1, 100, 1, 1, 1], groups=3), 1.0)

    def test_median_of_means_empty(self):
        with self.assertRaises(EmptyEval):
            median_of_means([], groups=5)

    def test_spread_fertility(self):
        """Test: Fertilidades uniformes con ΣF = T."""
        fertility = spread_fertility(5, 12, 3)
        self.assertEqual(fertility.sum(), 12)
        self.assertLessEqual(fertility.max() - fertility.min(), 1)

    def test_spread_fertility_infeasible(self):
        with self.assertRaises(BadConfig):
            spread_fertility(4, 13, 3)

    @pytest.mark.slow
    def test_identical_callables(self):
        """Test: Dos variantes idénticas dan un speedup cercano a 1."""
        matrix = np.random.default_rng(0).normal(size=(80, 80))

        def work(_):
            return np.linalg.svd(matrix, compute_uv=False)

        result = bench_callables(work, work, range(300), warmup=10, groups=5)
        self.assertGreaterEqual(result.speedup, 0.9)
        self.assertLessEqual(result.speedup, 1.1)
        self.assertEqual(len(result.rows), 600)

    def test_rows_interleave_variants(self):
        result = bench_callables(len, len, [[1], [1, 2]], warmup=0, groups=1, names=('x', 'y'))
        self.assertEqual([row['variant'] for row in result.rows], ['x', 'y', 'x', 'y'])
        self.assertEqual(set(result.to_dict()), {'latency_x_ns', 'latency_y_ns', 'speedup', 'examples'})


@pytest.mark.slow
class DeskLatencyTest(SimpleTestCase):
    """Preset desk sin entrenar: la latencia no depende de los pesos."""

    def setUp(self):
        splits, self.vocab, _ = tiny_world(train=8, val=2, test=16)
        config = load_config()
        model_config = ModelConfig.from_preset(model_preset(config, 'desk'), len(self.vocab), 3, config['model'])
        self.nar = CnatModel(model_config, seed=0).eval()
        self.ar = self.nar.with_mode('ar')
        self.sources = [encode_input(e.segment_a, e.segment_b, self.vocab) for e in splits['test']]

    def test_nar_speedup_at_length_16(self):
        """Test: Con T = 16 tokens emitidos el NAR es ≥ 5 veces más rápido que el AR."""
        fertility = {len(s): spread_fertility(len(s), 16, 3) for s in self.sources}
        result = bench_callables(
            lambda x: self.nar.generate(x, fertility=fertility[len(x)]),
            lambda x: self.ar.generate_autoregressive(x, max_length=16, ignore_eos=True),
            self.sources, warmup=10, groups=5, names=('nar', 'ar'),
        )
        self.assertGreaterEqual(result.speedup, 5.0)

    def test_ar_latency_grows_with_length(self):
        """Test: La pendiente latencia ~ T del AR es ≥ 4 veces la del NAR."""
        source = max(self.sources, key=len)
        scaling = length_scaling(self.nar, self.ar, source, [4, 8, 16, 32], repeats=10)
        self.assertGreater(scaling['ar_slope'], 0)
        self.assertGreaterEqual(scaling['slope_ratio'], 4.0)


# =============================================================================
# TESTS DEL JUEZ
# =============================================================================

class JudgeTest(SimpleTestCase):

    def setUp(self):
        self.splits, self.vocab, _ = tiny_world(train=16, val=4, test=4)

    def test_pack(self):
        """Test: 'entrada [SEP] explicación' recortado a T_max."""
        self.assertEqual(pack([5, 6], [7, 8, 9], 4).tolist(), [5, 6, 4, 7])

    def test_swapped_pairs(self):
        """Test: Con swap_rate = 0 las parejas conservan su etiqueta gold."""
        rng = np.random.default_rng(0)
        _, _, labels = judge_pairs(self.splits['train'], self.vocab, 0.0, rng)
        self.assertEqual(labels.tolist(), [e.label for e in self.splits['train']])

    def test_no_usable_pairs(self):
        with self.assertRaises(EmptyInput):
            judge_pairs([], self.vocab, 0.5, np.random.default_rng(0))

    def test_rejects_ar_model(self):
        model = CnatModel(tiny_model_config(self.vocab, mode='ar'))
        with self.assertRaises(BadConfig):
            RationalityJudge(model)

    def test_train_predict_and_reload(self):
        """Test: El juez predice etiquetas válidas y sobrevive a guardar/cargar."""
        judge = RationalityJudge.train(self.splits['train'], self.vocab, tiny_model_config(self.vocab), steps=3)
        sources = [encode_input(e.segment_a, e.segment_b, self.vocab) for e in self.splits['test']]
        explanations = [self.vocab.encode(e.explanation) for e in self.splits['test']]
        verdicts = judge.predict(sources, explanations)
        self.assertEqual(len(verdicts), len(sources))
        self.assertTrue(set(verdicts.tolist()) <= {0, 1, 2})
        with tempfile.TemporaryDirectory() as tmp:
            judge.save(Path(tmp) / 'judge.cnat')
            again = RationalityJudge.load(Path(tmp) / 'judge.cnat')
            np.testing.assert_array_equal(again.predict(sources, explanations), verdicts)
        self.assertEqual(judge(sources[0], explanations[0]), verdicts[0])


# =============================================================================
# TESTS DEL INFORME
# =============================================================================

class EvalReportTest(SimpleTestCase):

    def test_range_validation(self):
        """Test: Métricas fuera de rango → BadConfig."""
        with self.assertRaises(BadConfig):
            EvalReport(accuracy=120.0)
        with self.assertRaises(BadConfig):
            EvalReport(inter_rep=1.5)
        with self.assertRaises(BadConfig):
            EvalReport(perplexity=0.5)

    def test_table(self):
        """Test: La tabla muestra '-' para métricas sin calcular."""
        table = EvalReport(name='nar', accuracy=81.5, latency_ns=2.5e6).as_table()
        self.assertIn('81.50', table)
        self.assertIn('2.500', table)
        self.assertIn('Rationality    -', table)

    def test_json(self):
        self.assertEqual(json.loads(EvalReport(name='x', examples=3).to_json())['examples'], 3)


class GoldModel:
    """Modelo fijo que devuelve, en orden, la etiqueta y la explicación gold de cada registro."""

    config = SimpleNamespace(mode=Mode.NAR)

    def __init__(self, examples, vocab):
        outputs = [SimpleNamespace(label=e.label, tokens=vocab.encode(e.explanation)) for e in examples]
        self.explained = iter(outputs)
        self.unexplained = iter(outputs)

    def generate_any(self, x, explain=True):
        return next(self.explained)

    def generate(self, x, explain=True):
        return next(self.unexplained if not explain else self.explained)


class EvaluateTest(SimpleTestCase):

    def setUp(self):
        self.splits, self.vocab, _ = tiny_world(train=8, val=2, test=6)

    def test_model_nar(self):
        """Test: En NAR la etiqueta sin explicación coincide con la completa."""
        model = CnatModel(tiny_model_config(self.vocab), seed=0).eval()
        report = evaluate_model(model, self.splits['test'], self.vocab, scorer_lm=tiny_lm(self.vocab),
                                judge=lambda x, e: 0)
        self.assertEqual(report.examples, 6)
        self.assertEqual(report.accuracy, report.ne_accuracy)
        self.assertGreaterEqual(report.perplexity, 1.0)
        self.assertIsNotNone(report.bleu)
        self.assertGreater(report.latency_ns, 0)

    def test_model_ar(self):
        model = CnatModel(tiny_model_config(self.vocab, mode='ar'), seed=0).eval()
        report = evaluate_model(model, self.splits['test'], self.vocab)
        self.assertEqual(report.accuracy, report.ne_accuracy)
        self.assertIsNone(report.rationality)

    def test_reference(self):
        """Test: La fila de referencia tiene Acc y BLEU de 100."""
        report = evaluate_reference(self.splits['test'], self.vocab, judge=lambda x, e: 0)
        self.assertEqual(report.accuracy, 100.0)
        self.assertAlmostEqual(report.bleu, 100.0)
        self.assertEqual(report.name, 'reference')

    def test_bleu_ignores_reference_case(self):
        """Test: Un modelo que reproduce el gold obtiene BLEU 100 aunque el gold venga en mayúsculas."""
        examples = [replace(e, explanation=e.explanation.upper()) for e in self.splits['test']]
        report = evaluate_model(GoldModel(examples, self.vocab), examples, self.vocab)
        self.assertAlmostEqual(report.bleu, 100.0)
        self.assertEqual(report.accuracy, 100.0)

    def test_no_labels(self):
        """Test: Sin registros etiquetados → EmptyEval."""
        unlabeled = [e.with_pseudo() for e in self.splits['test']]
        model = CnatModel(tiny_model_config(self.vocab), seed=0).eval()
        with self.assertRaises(EmptyEval):
            evaluate_model(model, unlabeled, self.vocab)


# =============================================================================
# TESTS DE LOS COMANDOS
# =============================================================================

def prepare_run(tmp):
    """gen_data pequeño + un checkpoint NAR sin entrenar en <tmp>/nli-full-none-s0."""
    call_command('gen_data', task='nli', out=tmp, train_size=16, val_size=4, test_size=6,
                 seed=0, stdout=StringIO())
    vocab = load_vocab(tmp)
    labels = load_task_meta(tmp)['labels']
    checkpoint = Path(tmp) / 'nli-full-none-s0' / 'model.cnat'
    save_checkpoint(CnatModel(tiny_model_config(vocab, num_labels=len(labels)), seed=0), checkpoint)
    return vocab, checkpoint


@pytest.mark.integration
class EvalCommandTest(SimpleTestCase):

    def test_eval_checkpoint(self):
        """Test: eval escribe un informe JSON con las métricas del checkpoint."""
        with tempfile.TemporaryDirectory() as tmp:
            vocab, checkpoint = prepare_run(tmp)
            out = Path(tmp) / 'report.json'
            stdout = StringIO()
            call_command('eval', checkpoint=str(checkpoint), data=tmp, no_judge=True, out=str(out), stdout=stdout)
            report = json.loads(out.read_text(encoding='utf-8'))
            self.assertEqual(report['name'], 'nli-full-none-s0')
            self.assertEqual(report['examples'], 6)
            self.assertIsNone(report['perplexity'])
            self.assertIn('NE-Acc', stdout.getvalue())

    def test_eval_with_saved_judge(self):
        """Test: eval usa el juez guardado en <data>/judge.cnat."""
        with tempfile.TemporaryDirectory() as tmp:
            vocab, checkpoint = prepare_run(tmp)
            labels = load_task_meta(tmp)['labels']
            judge_config = tiny_model_config(vocab, num_labels=len(labels))
            RationalityJudge.train(load_split(tmp, 'train'), vocab, judge_config, steps=2).save(
                Path(tmp) / 'judge.cnat')
            stdout = StringIO()
            call_command('eval', checkpoint=str(checkpoint), data=tmp, json=True, stdout=stdout)
            self.assertIsNotNone(json.loads(stdout.getvalue())['rationality'])

    def test_eval_reference(self):
        with tempfile.TemporaryDirectory() as tmp:
            prepare_run(tmp)
            stdout = StringIO()
            call_command('eval', reference=True, data=tmp, no_judge=True, json=True, stdout=stdout)
            report = json.loads(stdout.getvalue())
            self.assertEqual(report['accuracy'], 100.0)
            self.assertAlmostEqual(report['bleu'], 100.0)

    def test_eval_requires_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            prepare_run(tmp)
            with self.assertRaises(CommandError):
                call_command('eval', data=tmp, no_judge=True, stdout=StringIO())


@pytest.mark.integration
class BenchCommandTest(SimpleTestCase):

    def test_bench_csv(self):
        """Test: bench escribe una fila CSV por medición y el resumen JSON."""
        with tempfile.TemporaryDirectory() as tmp:
            vocab, checkpoint = prepare_run(tmp)
            csv_path, out = Path(tmp) / 'bench.csv', Path(tmp) / 'bench.json'
            stdout = StringIO()
            call_command('bench', checkpoint=str(checkpoint), data=tmp, limit=3, csv=str(csv_path),
                         out=str(out), stdout=stdout)
            with open(csv_path, encoding='utf-8') as handle:
                rows = list(csv.DictReader(handle))
            self.assertEqual(len(rows), 6)
            self.assertEqual({row['variant'] for row in rows}, {'nar', 'ar'})
            self.assertGreater(json.loads(out.read_text(encoding='utf-8'))['speedup'], 0)
            self.assertIn('Speedup', stdout.getvalue())

    def test_bench_single_mode(self):
        with tempfile.TemporaryDirectory() as tmp:
            vocab, checkpoint = prepare_run(tmp)
            stdout = StringIO()
            call_command('bench', checkpoint=str(checkpoint), data=tmp, limit=2, modes='nar', stdout=stdout)
            self.assertIn('latency_nar_ns', stdout.getvalue())

    def test_bench_unknown_mode(self):
        with tempfile.TemporaryDirectory() as tmp:
            vocab, checkpoint = prepare_run(tmp)
            with self.assertRaises(CommandError):
                call_command('bench', checkpoint=str(checkpoint), data=tmp, modes='nar,beam', stdout=StringIO())

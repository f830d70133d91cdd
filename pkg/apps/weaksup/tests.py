"""
Tests para la app weaksup.

Batería de pruebas que cubre:
- Lenguaje de reglas y plantillas de las LFs
- Carga de ficheros de LFs
- Matriz de votos y análisis por LF
- Modelo de etiquetas: aprendizaje de precisiones y agregación
- Dataset combinado (anotados + pseudo)
- Comando weak_label de extremo a extremo
"""

import itertools
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
import pytest
from django.conf import settings
from django.core.management import call_command
from django.test import SimpleTestCase

from apps.appshell.records import PSEUDO, Example, load_examples
from apps.appshell.testing import tiny_world
from apps.numcore.exceptions import BadRule

from .label_model import LabelModel, VoteMatrix, aggregate, learn_weights, marginal_log_likelihood
from .pseudo import build_combined_dataset, make_pseudo_explanation, split_annotated, winning_lf
from .rules import ABSTAIN, InputView, Template, compile_rule, load_labeling_functions

NLI_LABELS = ['entailment', 'contradiction', 'neutral']
SP_LABELS = ['not_spouse', 'spouse']


def view_of(segment_a, segment_b=None):
    return InputView.of(Example(id='r', segment_a=segment_a, segment_b=segment_b))


def run_rule(text, segment_a, segment_b=None):
    node, _ = compile_rule(text)
    return node(view_of(segment_a, segment_b))


def write_lf_file(directory, content):
    path = Path(directory) / 'lfs.cfg'
    path.write_text(content, encoding='utf-8')
    return path


def simulated_votes(rng, size, num_labels, accuracies, coverages):
    """Votos de LFs independientes con precisión y cobertura dadas."""
    truth = rng.integers(num_labels, size=size)
    votes = np.full((size, len(accuracies)), ABSTAIN, dtype=np.int64)
    for m, (accuracy, coverage) in enumerate(zip(accuracies, coverages)):
        for i in range(size):
            if rng.random() >= coverage:
                continue
            if rng.random() < accuracy:
                votes[i, m] = truth[i]
            else:
                wrong = [label for label in range(num_labels) if label != truth[i]]
                votes[i, m] = wrong[int(rng.integers(len(wrong)))]
    return votes, truth


# =============================================================================
# TESTS DEL LENGUAJE DE REGLAS
# =============================================================================

class RuleLanguageTest(SimpleTestCase):

    def test_subset_fires(self):
        """Test: subset(b, a) dispara si la hipótesis está contenida en la premisa."""
        self.assertEqual(run_rule('subset(b, a)', 'a red cat sits', 'a cat sits'), {})
        self.assertIsNone(run_rule('subset(b, a)', 'a red cat sits', 'a dog sits'))

    def test_subset_empty_segment_does_not_fire(self):
        """Test: Un segmento vacío no está 'contenido'."""
        self.assertIsNone(run_rule('subset(b, a)', 'a red cat sits'))

    def test_missing_binds_keyword(self):
        """Test: missing() liga el primer token ausente."""
        self.assertEqual(run_rule('missing(b, a, 1)', 'a red cat sits', 'a blue cat sits'), {'keyword': 'blue'})
        self.assertIsNone(run_rule('missing(b, a, 2, 4)', 'a red cat sits', 'a blue cat sits'))

    def test_has_binds_keyword(self):
        """Test: has() liga el token encontrado (en minúsculas)."""
        self.assertEqual(run_rule('has(a, "married", "wed")', '@ann WED @bob'), {'keyword': 'wed'})

    def test_window(self):
        """Test: window() respeta la distancia y las palabras entre entidades."""
        sentence = '@ann married @bob in paris'
        self.assertEqual(run_rule('window(4, "married")', sentence), {'keyword': 'married'})
        self.assertIsNone(run_rule('window(1)', sentence))
        self.assertIsNone(run_rule('window(4, "paris")', sentence))
        self.assertIsNone(run_rule('window(4)', 'ann married bob'))

    def test_boolean_operators(self):
        """Test: and / or / not y paréntesis."""
        self.assertEqual(run_rule('has(a, "cat") and not has(a, "dog")', 'a cat sits'), {'keyword': 'cat'})
        self.assertIsNone(run_rule('has(a, "cat") and not has(a, "sits")', 'a cat sits'))
        self.assertEqual(run_rule('has(a, "dog") or has(a, "cat")', 'a cat sits'), {'keyword': 'cat'})
        self.assertEqual(run_rule('not (has(a, "dog") or has(a, "fish"))', 'a cat sits'), {})

    def test_keyword_binding_flag(self):
        """Test: Solo has/window/missing permiten {keyword}."""
        self.assertTrue(compile_rule('has(a, "x")')[1])
        self.assertFalse(compile_rule('subset(a, b) and substr(a, "x y")')[1])

    def test_malformed_rules(self):
        """Test: Reglas mal formadas → BadRule al compilar."""
        for text in ['', 'subset(b)', 'foo(a)', 'has(a, "x"', 'has(c, "x")', 'missing(b, a, 3, 1)',
                     'window("x")', 'has(a, "x") and', 'has(a, "x") has(a, "y")', 'has(a, "x") $']:
            with self.subTest(rule=text), self.assertRaises(BadRule):
                compile_rule(text)


class TemplateTest(SimpleTestCase):

    def test_fill(self):
        """Test: Las ranuras se rellenan con segmentos, entidades y keyword."""
        template = Template.parse('{E1} {keyword} {E2} so they are spouses', True, 'lf')
        text = template.fill(view_of('@ann married @bob today'), {'keyword': 'married'})
        self.assertEqual(text, '@ann married @bob so they are spouses')

    def test_missing_slot_returns_none(self):
        """Test: Sin segunda entidad la plantilla no se instancia."""
        template = Template.parse('{E1} and {E2}', False, 'lf')
        self.assertIsNone(template.fill(view_of('@ann sits alone'), {}))

    def test_unknown_slot(self):
        """Test: Ranura desconocida → BadRule."""
        with self.assertRaises(BadRule):
            Template.parse('{C} is here', False, 'lf')

    def test_keyword_without_binding_atom(self):
        """Test: {keyword} con una regla que no lo liga → BadRule."""
        with self.assertRaises(BadRule):
            Template.parse('the {keyword} is missing', False, 'lf')

    def test_literal_words(self):
        """Test: Palabras literales de la plantilla (para el vocabulario)."""
        self.assertEqual(Template.parse('{B} is contained in {A}', False, 'lf').words(), ['is', 'contained', 'in'])


class LoadLabelingFunctionsTest(SimpleTestCase):

    def test_task_files_load(self):
        """Test: Los ficheros de LFs de ambas tareas cargan y quedan ligados."""
        for task, labels in (('nli', NLI_LABELS), ('sp', SP_LABELS)):
            with self.subTest(task=task):
                lfs = load_labeling_functions(settings.CNAT_WEAKSUP['LF_FILES'][task], labels)
                self.assertGreaterEqual(len(lfs), 3)
                self.assertTrue(all(lf.label_id == labels.index(lf.label) for lf in lfs))

    def test_unknown_label(self):
        """Test: Etiqueta fuera de la tarea → BadRule."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_lf_file(tmp, '[lf:x]\nrule = has(a, "a")\nlabel = maybe\ntemplate = {A}\n')
            with self.assertRaises(BadRule):
                load_labeling_functions(path, NLI_LABELS)

    def test_missing_field(self):
        """Test: Sección sin plantilla → BadRule."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_lf_file(tmp, '[lf:x]\nrule = has(a, "a")\nlabel = neutral\n')
            with self.assertRaises(BadRule):
                load_labeling_functions(path, NLI_LABELS)

    def test_bad_section_name(self):
        """Test: Sección que no es [lf:<id>] → BadRule."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_lf_file(tmp, '[rule]\nrule = has(a, "a")\nlabel = neutral\ntemplate = {A}\n')
            with self.assertRaises(BadRule):
                load_labeling_functions(path, NLI_LABELS)

    def test_unreadable_file(self):
        """Test: Fichero inexistente → BadRule."""
        with self.assertRaises(BadRule):
            load_labeling_functions('/nonexistent/lfs.cfg', NLI_LABELS)

    def test_task_without_labels(self):
        """Test: Sin etiquetas de tarea el fallo ocurre al cargar, no al votar."""
        with self.assertRaises(BadRule):
            load_labeling_functions(settings.CNAT_WEAKSUP['LF_FILES']['sp'], [])

    def test_loaded_lfs_vote_bound_ids(self):
        """Test: Las LFs cargadas votan con el id de su etiqueta en la tarea."""
        lfs = load_labeling_functions(settings.CNAT_WEAKSUP['LF_FILES']['sp'], SP_LABELS)
        splits, _, _ = tiny_world(task='sp', train=12)
        votes = VoteMatrix.build(splits['train'], lfs, 2).votes
        self.assertTrue(set(np.unique(votes)).issubset({ABSTAIN, 0, 1}))
        self.assertTrue(all(isinstance(lf.label_id, int) for lf in lfs))


# =============================================================================
# TESTS DE LA MATRIZ DE VOTOS
# =============================================================================

class VoteMatrixTest(SimpleTestCase):

    def test_summary_hand_case(self):
        """Test: Cobertura, solapes y conflictos en un caso a mano."""
        matrix = VoteMatrix(np.array([[0, 0], [0, 1], [-1, 1], [-1, -1]]), ['a', 'b'], 2)
        self.assertAlmostEqual(matrix.coverage(), 0.75)
        first, second = matrix.lf_summary()
        self.assertEqual(first, {'lf': 'a', 'coverage': 0.5, 'overlaps': 0.5, 'conflicts': 0.25})
        self.assertEqual(second, {'lf': 'b', 'coverage': 0.5, 'overlaps': 0.5, 'conflicts': 0.25})

    def test_threads_preserve_order(self):
        """Test: El número de hilos no cambia la matriz."""
        splits, _, _ = tiny_world(task='sp', train=30)
        lfs = load_labeling_functions(settings.CNAT_WEAKSUP['LF_FILES']['sp'], SP_LABELS)
        single = VoteMatrix.build(splits['train'], lfs, 2, threads=1)
        pooled = VoteMatrix.build(splits['train'], lfs, 2, threads=4)
        np.testing.assert_array_equal(single.votes, pooled.votes)
        self.assertEqual(single.shape, (30, len(lfs)))


# =============================================================================
# TESTS DEL MODELO DE ETIQUETAS
# =============================================================================

class AggregateTest(SimpleTestCase):

    def test_weighted_sum_wins(self):
        """Test: {A: 0.6, A: 0.3, B: 0.8} → A (0.9 > 0.8)."""
        self.assertEqual(aggregate([0, 0, 1], [0.6, 0.3, 0.8], 2), 0)

    def test_tie_goes_to_lowest_label(self):
        """Test: Empate → id de etiqueta más bajo, sin importar el orden de las LFs."""
        self.assertEqual(aggregate([1, 0], [0.5, 0.5], 2), 0)
        self.assertEqual(aggregate([2, 1, -1], [0.7, 0.7, 0.9], 3), 1)

    def test_all_abstain(self):
        """Test: Nadie vota → ABSTAIN."""
        self.assertEqual(aggregate([-1, -1, -1], [0.9, 0.9, 0.9], 3), ABSTAIN)

    def test_winning_lf(self):
        """Test: La LF ganadora es la de mayor w entre las que votaron la etiqueta."""
        self.assertEqual(winning_lf([0, 0, 1], [0.3, 0.6, 0.9], 0), 1)
        self.assertIsNone(winning_lf([0, 0, 1], [0.3, 0.6, 0.9], 2))


class LearnWeightsTest(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_ordering_follows_true_accuracy(self):
        """Test: LFs más precisas reciben mayor w."""
        votes, _ = simulated_votes(self.rng, 600, 3, [0.95, 0.7, 0.45], [1.0, 1.0, 1.0])
        weights = learn_weights(votes, 3)
        self.assertGreater(weights[0], weights[1])
        self.assertGreater(weights[1], weights[2])

    def test_bounds(self):
        """Test: w queda dentro de [0.05, 0.95]."""
        votes, _ = simulated_votes(self.rng, 300, 2, [1.0, 1.0, 1.0], [1.0, 1.0, 1.0])
        weights = learn_weights(votes, 2)
        self.assertTrue(np.all(weights >= 0.05) and np.all(weights <= 0.95))
        np.testing.assert_allclose(weights, 0.95)

    def test_symmetric_lfs_get_equal_weights(self):
        """Test: LFs con votos idénticos reciben el mismo w."""
        column, _ = simulated_votes(self.rng, 200, 3, [0.8], [0.9])
        weights = learn_weights(np.hstack([column, column]), 3)
        self.assertAlmostEqual(weights[0], weights[1], places=10)

    def test_permutation_equivariance(self):
        """Test: Permutar las columnas permuta los pesos."""
        votes, _ = simulated_votes(self.rng, 300, 3, [0.9, 0.7, 0.6], [0.8, 0.9, 0.7])
        order = [2, 0, 1]
        np.testing.assert_allclose(learn_weights(votes[:, order], 3), learn_weights(votes, 3)[order], atol=1e-8)

    def test_disagreeing_lf_gets_smallest_weight(self):
        """Test: Una LF que contradice a las demás queda con el menor w."""
        votes, truth = simulated_votes(self.rng, 400, 2, [0.9, 0.85], [1.0, 1.0])
        contrarian = np.where(self.rng.random(400) < 0.8, 1 - truth, truth)
        weights = learn_weights(np.hstack([votes, contrarian[:, None]]), 2)
        self.assertEqual(int(np.argmin(weights)), 2)

    def test_silent_lf_gets_prior(self):
        """Test: Una LF que nunca vota queda en 0.5 y no altera a las demás."""
        votes, _ = simulated_votes(self.rng, 200, 3, [0.9, 0.7], [0.8, 0.8])
        silent = np.full((200, 1), ABSTAIN)
        with self.assertLogs('apps.weaksup.label_model', level='WARNING'):
            weights = learn_weights(np.hstack([votes, silent]), 3)
        self.assertEqual(weights[2], 0.5)
        np.testing.assert_allclose(weights[:2], learn_weights(votes, 3), atol=1e-10)

        model = LabelModel(num_labels=3).fit(np.hstack([votes, silent]))
        self.assertEqual(model.silent, [2])

    def test_matches_grid_search(self):
        """Test: La log-verosimilitud alcanzada no es peor que la del mejor punto de una rejilla."""
        votes, _ = simulated_votes(self.rng, 150, 3, [0.85, 0.7, 0.6], [0.9, 0.8, 0.9])
        learned = marginal_log_likelihood(votes, learn_weights(votes, 3), 3)
        grid = np.round(np.arange(0.05, 0.951, 0.05), 2)
        best = max(marginal_log_likelihood(votes, np.array(point), 3) for point in itertools.product(grid, repeat=3))
        self.assertGreaterEqual(learned, best - 1e-3 * len(votes))

    def test_aggregate_beats_best_single_lf(self):
        """Test: La agregación supera a la mejor LF individual (abstenciones = error)."""
        votes, truth = simulated_votes(self.rng, 1000, 3, [0.9, 0.7, 0.7], [0.5, 0.9, 0.9])
        model = LabelModel(num_labels=3).fit(votes)
        aggregated = float(np.mean(model.predict(votes) == truth))
        best_single = max(float(np.mean(votes[:, m] == truth)) for m in range(votes.shape[1]))
        self.assertGreaterEqual(aggregated, best_single)

    def test_from_settings(self):
        """Test: El modelo toma sus hiperparámetros de settings."""
        model = LabelModel.from_settings(3, settings.CNAT_WEAKSUP)
        self.assertEqual(model.bounds, (0.05, 0.95))
        self.assertEqual(model.init_accuracy, 0.7)

    def test_no_lfs(self):
        """Test: Sin columnas → vector de pesos vacío."""
        self.assertEqual(learn_weights(np.zeros((5, 0), dtype=np.int64), 3).shape, (0,))


# =============================================================================
# TESTS DEL DATASET COMBINADO
# =============================================================================

class SplitAnnotatedTest(SimpleTestCase):

    def test_split(self):
        """Test: Partición disjunta, determinista y sin anotación en la parte no etiquetada."""
        splits, _, _ = tiny_world(train=24)
        train = splits['train']
        annotated, unlabeled, gold = split_annotated(train, 5, np.random.default_rng(3))
        again, _, _ = split_annotated(train, 5, np.random.default_rng(3))
        self.assertEqual([e.id for e in annotated], [e.id for e in again])
        self.assertEqual(len(annotated), 5)
        self.assertEqual(len(unlabeled), 19)
        self.assertFalse({e.id for e in annotated} & {e.id for e in unlabeled})
        self.assertTrue(all(e.label is None and e.explanation is None for e in unlabeled))
        by_id = {e.id: e.label for e in train}
        self.assertEqual(gold, [by_id[e.id] for e in unlabeled])

    def test_oversized_request(self):
        """Test: Pedir más anotados que registros los conserva todos."""
        splits, _, _ = tiny_world(train=24)
        annotated, unlabeled, _ = split_annotated(splits['train'], 100, np.random.default_rng(0))
        self.assertEqual((len(annotated), len(unlabeled)), (24, 0))


class CombinedDatasetTest(SimpleTestCase):

    def setUp(self):
        splits, _, _ = tiny_world(task='sp', train=40)
        self.annotated, self.unlabeled, self.gold = split_annotated(splits['train'], 6, np.random.default_rng(0))
        self.lfs = load_labeling_functions(settings.CNAT_WEAKSUP['LF_FILES']['sp'], SP_LABELS)

    def test_size_and_provenance(self):
        """Test: |combinado| = anotados + cubiertos; los pseudo llevan etiqueta y explicación."""
        combined, report = build_combined_dataset(self.annotated, self.unlabeled, self.lfs, 2, gold_labels=self.gold)
        self.assertEqual(len(combined), len(self.annotated) + report.covered)
        self.assertEqual(combined[:len(self.annotated)], self.annotated)
        for example in combined[len(self.annotated):]:
            self.assertEqual(example.provenance, PSEUDO)
            self.assertIn(example.label, (0, 1))
            self.assertTrue(example.explanation)
        self.assertLessEqual(report.covered + report.dropped, report.total)

    def test_pseudo_labels_are_accurate(self):
        """Test: En la tarea de cónyuges las pseudo-etiquetas aciertan casi siempre."""
        _, report = build_combined_dataset(self.annotated, self.unlabeled, self.lfs, 2, gold_labels=self.gold)
        self.assertGreaterEqual(report.pseudo_accuracy, 0.9)
        self.assertEqual(len(report.lfs), len(self.lfs))
        self.assertTrue(all('weight' in entry and 'silent' in entry for entry in report.lfs))

    def test_explanation_comes_from_winning_template(self):
        """Test: La pseudo-explicación es la plantilla de la LF ganadora."""
        example = Example(id='r', segment_a='@ann married @bob today')
        row = np.array([1, ABSTAIN, 1, ABSTAIN])
        label, text = make_pseudo_explanation(example, row, [0.9, 0.5, 0.6, 0.5], self.lfs, 2)
        self.assertEqual(label, 1)
        self.assertEqual(text, '@ann married @bob so they are spouses')

    def test_no_lfs(self):
        """Test: Sin LFs el dataset es solo el de anotados."""
        combined, report = build_combined_dataset(self.annotated, self.unlabeled, [], 2)
        self.assertEqual(combined, self.annotated)
        self.assertEqual(report.covered, 0)

    def test_unfillable_slot_drops_records(self):
        """Test: Si la plantilla no se puede rellenar el registro se descarta y se cuenta."""
        splits, _, _ = tiny_world(task='nli', train=12)
        _, unlabeled, _ = split_annotated(splits['train'], 0, np.random.default_rng(0))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_lf_file(tmp, '[lf:entity]\nrule = has(a, "a")\nlabel = neutral\ntemplate = {E1} here\n')
            lfs = load_labeling_functions(path, NLI_LABELS)
        combined, report = build_combined_dataset([], unlabeled, lfs, 3)
        self.assertEqual(combined, [])
        self.assertEqual(report.dropped, 12)
        self.assertEqual(report.coverage, 0.0)


# =============================================================================
# TESTS DE INTEGRACIÓN
# =============================================================================

@pytest.mark.integration
class WeakLabelCommandTest(SimpleTestCase):

    def test_end_to_end(self):
        """Test: gen_data + weak_label producen el dataset combinado y su informe."""
        with tempfile.TemporaryDirectory() as tmp:
            call_command('gen_data', task='sp', out=tmp, train_size=40, val_size=8, test_size=8,
                         seed=0, stdout=StringIO())
            out = StringIO()
            call_command('weak_label', data=tmp, annotated=8, seed=0, stdout=out)
            combined = load_examples(Path(tmp) / 'combined.jsonl')
            self.assertTrue((Path(tmp) / 'combined.jsonl.report.json').exists())
            self.assertGreaterEqual(len(combined), 8)
            self.assertEqual(sum(1 for e in combined if e.provenance != PSEUDO), 8)
            self.assertIn('spouse_cue_between', out.getvalue())

"""
Tests para la app unsup.

Batería de pruebas que cubre:
- Tabla de sinónimos
- Parafraseador sustituto: identidad, sinónimos, reordenación, conectores
- Determinismo y lista blanca de palabras de salida
- Backend de traducción externo (con urlopen simulado) y caída al sustituto
- Dataset no supervisado y comando make_pseudo
"""

import copy
import json
import tempfile
import urllib.error
from io import StringIO
from pathlib import Path
from unittest.mock import MagicMock, patch

import pytest
from django.conf import settings
from django.core.management import call_command
from django.test import SimpleTestCase

from apps.appshell.records import PSEUDO, Example, load_examples
from apps.appshell.testing import tiny_world
from apps.appshell.vocab import normalize
from apps.numcore.exceptions import BadConfig, EmptyInput

from .backends import HttpTranslationBackend, SurrogateBackend, get_backend
from .paraphrase import Paraphraser, build_unsup_dataset, load_synonyms, surrogate_words


def plain(**overrides):
    values = dict(synonyms={}, reorder_probability=0.0, connective_probability=0.0)
    values.update(overrides)
    return Paraphraser(**values)


def external_section(endpoint='http://translate.test/translate'):
    section = copy.deepcopy(settings.CNAT_UNSUP)
    section['EXTERNAL']['ENDPOINT'] = endpoint
    section['EXTERNAL']['RETRIES'] = 1
    return section


def fake_response(text):
    response = MagicMock()
    response.read.return_value = json.dumps({'translatedText': text}).encode('utf-8')
    response.__enter__.return_value = response
    return response


# =============================================================================
# TESTS DE LA TABLA DE SINÓNIMOS
# =============================================================================

class SynonymTableTest(SimpleTestCase):

    def test_project_table(self):
        """Test: La tabla del proyecto carga y admite varias alternativas."""
        table = load_synonyms(settings.CNAT_UNSUP['SYNONYMS_FILE'])
        self.assertEqual(table['cat'], ('feline',))
        self.assertEqual(table['child'], ('kid', 'youngster'))

    def test_malformed_line(self):
        """Test: Línea con tres columnas → BadConfig."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'syn.tsv'
            path.write_text('cat\tfeline\tpuss\n', encoding='utf-8')
            with self.assertRaises(BadConfig):
                load_synonyms(path)

    def test_missing_file(self):
        """Test: Fichero inexistente → BadConfig."""
        with self.assertRaises(BadConfig):
            load_synonyms('/nonexistent/synonyms.tsv')

    def test_surrogate_words(self):
        """Test: Las palabras del sustituto incluyen conectores y sinónimos."""
        words = surrogate_words(settings.CNAT_UNSUP)
        self.assertIn('feline', words)
        self.assertIn('then', words)


# =============================================================================
# TESTS DEL PARAFRASEADOR SUSTITUTO
# =============================================================================

class SurrogateParaphraseTest(SimpleTestCase):

    def test_identity(self):
        """Test: Sin sinónimos ni reordenación → la entrada reescrita."""
        example = Example(id='x', segment_a='A cat sits', segment_b='a cat')
        self.assertEqual(plain().pseudo_target(example), 'a cat sits a cat')

    def test_synonym(self):
        """Test: {cat→feline} sobre 'a cat sits' → 'a feline sits'."""
        paraphraser = plain(synonyms={'cat': ('feline',)})
        self.assertEqual(paraphraser.pseudo_target(Example(id='x', segment_a='a cat sits')), 'a feline sits')

    def test_reorder(self):
        """Test: Con probabilidad 1 las cláusulas se invierten."""
        paraphraser = plain(reorder_probability=1.0)
        example = Example(id='x', segment_a='a red cat sits and a dog runs')
        self.assertEqual(paraphraser.pseudo_target(example), 'a dog runs and a red cat sits')

    def test_connective(self):
        """Test: Con probabilidad 1 se inserta el conector entre segmentos."""
        paraphraser = plain(connective_probability=1.0, connectives=('so',))
        example = Example(id='x', segment_a='a cat sits', segment_b='a cat')
        self.assertEqual(paraphraser.pseudo_target(example), 'a cat sits so a cat')

    def test_determinism(self):
        """Test: Misma semilla y entrada → misma salida; otra semilla puede cambiarla."""
        splits, _, _ = tiny_world(train=24)
        synonyms = load_synonyms(settings.CNAT_UNSUP['SYNONYMS_FILE'])
        first = [Paraphraser(synonyms=synonyms, seed=3).pseudo_target(e) for e in splits['train']]
        second = [Paraphraser(synonyms=synonyms, seed=3).pseudo_target(e) for e in splits['train']]
        self.assertEqual(first, second)

    def test_output_vocabulary_whitelist(self):
        """Test: Cada palabra de salida es de la entrada, un sinónimo suyo o un conector."""
        splits, _, _ = tiny_world(train=40)
        synonyms = load_synonyms(settings.CNAT_UNSUP['SYNONYMS_FILE'])
        paraphraser = Paraphraser(synonyms=synonyms, reorder_probability=0.5, connective_probability=0.5, seed=1)
        for example in splits['train']:
            source = normalize(example.segment_a) + normalize(example.segment_b or '')
            allowed = set(source) | set(paraphraser.connectives)
            for token in source:
                allowed |= set(synonyms.get(token, ()))
            with self.subTest(id=example.id):
                self.assertTrue(set(paraphraser.pseudo_target(example).split()) <= allowed)

    def test_length_bound(self):
        """Test: La salida nunca está vacía ni supera F_max·S palabras."""
        splits, _, _ = tiny_world(task='sp', train=30)
        paraphraser = Paraphraser(connective_probability=1.0, max_fertility=1, seed=0)
        for example in splits['train']:
            target = paraphraser.pseudo_target(example).split()
            self.assertTrue(0 < len(target) <= len(normalize(example.segment_a)))

    def test_empty_input(self):
        """Test: Entrada sin palabras → EmptyInput."""
        with self.assertRaises(EmptyInput):
            plain().pseudo_target(Example(id='x', segment_a='   '))

    def test_invalid_probability(self):
        """Test: Probabilidad fuera de [0, 1] → BadConfig."""
        with self.assertRaises(BadConfig):
            Paraphraser(reorder_probability=1.5)


# =============================================================================
# TESTS DE BACKENDS
# =============================================================================

class BackendTest(SimpleTestCase):

    def test_default_backend(self):
        """Test: El backend por defecto es el sustituto."""
        backend = get_backend(settings.CNAT_UNSUP)
        self.assertIsInstance(backend, SurrogateBackend)
        self.assertFalse(backend.external)

    def test_unknown_backend(self):
        """Test: Ruta de backend inexistente → BadConfig."""
        with self.assertRaises(BadConfig):
            get_backend(settings.CNAT_UNSUP, 'apps.unsup.backends.NoSuchBackend')

    @patch('urllib.request.urlopen')
    def test_round_trip(self, mock_urlopen):
        """Test: Ida al pivote y vuelta, con el texto de la respuesta."""
        mock_urlopen.side_effect = [fake_response('eine katze sitzt'), fake_response('A feline is sitting')]
        backend = HttpTranslationBackend(external_section())
        paraphraser = Paraphraser(backend=backend, max_fertility=3)
        target = paraphraser.pseudo_target(Example(id='x', segment_a='a cat sits'))
        self.assertEqual(target, 'a feline is sitting')
        self.assertEqual(mock_urlopen.call_count, 2)
        forward = json.loads(mock_urlopen.call_args_list[0].args[0].data)
        self.assertEqual((forward['source'], forward['target']), ('en', 'de'))
        self.assertEqual(paraphraser.mode, 'external')

    @patch('apps.unsup.backends.time.sleep')
    @patch('urllib.request.urlopen')
    def test_failure_falls_back_to_surrogate(self, mock_urlopen, mock_sleep):
        """Test: Si el servicio falla tras los reintentos se usa el sustituto con aviso."""
        mock_urlopen.side_effect = urllib.error.URLError('connection refused')
        paraphraser = Paraphraser(
            synonyms={'cat': ('feline',)}, reorder_probability=0.0, connective_probability=0.0,
            backend=HttpTranslationBackend(external_section()),
        )
        with self.assertLogs('apps.unsup.paraphrase', level='WARNING'):
            target = paraphraser.pseudo_target(Example(id='x', segment_a='a cat sits'))
        self.assertEqual(target, 'a feline sits')
        self.assertEqual(mock_urlopen.call_count, 2)
        self.assertEqual(paraphraser.fallbacks, 1)

    @patch('urllib.request.urlopen')
    def test_external_output_is_capped(self, mock_urlopen):
        """Test: Una traducción larga se recorta a F_max·S palabras."""
        mock_urlopen.side_effect = [fake_response('x'), fake_response('one two three four five six seven')]
        paraphraser = Paraphraser(backend=HttpTranslationBackend(external_section()), max_fertility=2)
        self.assertEqual(paraphraser.pseudo_target(Example(id='x', segment_a='cat sits')), 'one two three four')

    def test_missing_endpoint(self):
        """Test: Sin ENDPOINT el cliente externo cae al sustituto."""
        paraphraser = plain(backend=HttpTranslationBackend(external_section(endpoint='')))
        with self.assertLogs('apps.unsup.paraphrase', level='WARNING'):
            self.assertEqual(paraphraser.pseudo_target(Example(id='x', segment_a='a cat')), 'a cat')


# =============================================================================
# TESTS DEL DATASET NO SUPERVISADO
# =============================================================================

class UnsupDatasetTest(SimpleTestCase):

    def setUp(self):
        splits, _, _ = tiny_world(train=24)
        self.examples = splits['train']
        self.synonyms = load_synonyms(settings.CNAT_UNSUP['SYNONYMS_FILE'])

    def test_every_record_gains_pseudo_explanation(self):
        """Test: N registros → N registros pseudo con su etiqueta original."""
        dataset = build_unsup_dataset(self.examples, Paraphraser(synonyms=self.synonyms, seed=0))
        self.assertEqual(len(dataset), len(self.examples))
        for original, pseudo in zip(self.examples, dataset):
            self.assertEqual(pseudo.id, original.id)
            self.assertEqual(pseudo.label, original.label)
            self.assertEqual(pseudo.provenance, PSEUDO)
            self.assertTrue(pseudo.explanation)
            self.assertIsNone(pseudo.alignment)

    def test_threads_do_not_change_result(self):
        """Test: El resultado no depende del número de hilos (idempotente con semilla fija)."""
        single = build_unsup_dataset(self.examples, Paraphraser(synonyms=self.synonyms, seed=5), threads=1)
        pooled = build_unsup_dataset(self.examples, Paraphraser(synonyms=self.synonyms, seed=5), threads=4)
        self.assertEqual([e.explanation for e in single], [e.explanation for e in pooled])


@pytest.mark.integration
class MakePseudoCommandTest(SimpleTestCase):

    def test_end_to_end(self):
        """Test: gen_data + make_pseudo producen unsup.jsonl con un registro por registro de train."""
        with tempfile.TemporaryDirectory() as tmp:
            call_command('gen_data', task='nli', out=tmp, train_size=30, val_size=6, test_size=6,
                         seed=0, stdout=StringIO())
            call_command('make_pseudo', data=tmp, seed=0, stdout=StringIO())
            dataset = load_examples(Path(tmp) / 'unsup.jsonl')
            self.assertEqual(len(dataset), 30)
            self.assertTrue(all(e.provenance == PSEUDO and e.label is not None for e in dataset))

"""
Tests para la app appshell.

Batería de pruebas que cubre:
- Vocabulario y tokenización
- Formato de registro JSONL
- Tareas sintéticas: equilibrio, determinismo y etiquetas recalculables
- Carga de configuración en capas
- Comando gen_data
"""

import json
import tempfile
from io import StringIO
from pathlib import Path

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.numcore.exceptions import BadConfig, BadRecord, BalanceInfeasible

from .config import load_config, model_preset
from .datadir import load_split, load_task_meta, load_vocab
from .records import HUMAN, PSEUDO, Example, load_examples, parse_record, save_examples
from .synthetic import (
    SyntheticTaskConfig,
    balanced_counts,
    generate_synthetic,
    nli_label,
    recompute_label,
    sp_label,
)
from .vocab import EOS, PAD, SEP, UNK, Vocab, encode_input, input_tokens, normalize


# =============================================================================
# TESTS DEL VOCABULARIO
# =============================================================================

class VocabTest(SimpleTestCase):

    def test_specials_first(self):
        """Test: Los tokens especiales ocupan los ids 0..4."""
        vocab = Vocab.build(['a cat sits'])
        self.assertEqual(vocab.itos[:5], ['<pad>', '<unk>', '<bos>', '<eos>', '<sep>'])

    def test_frequency_order(self):
        """Test: Orden por frecuencia descendente y luego lexicográfico."""
        vocab = Vocab.build(['b a a', 'c b a'])
        self.assertEqual(vocab.itos[5:], ['a', 'b', 'c'])

    def test_extra_tokens(self):
        vocab = Vocab.build(['a cat'], extra_tokens=['Feline'])
        self.assertIn('feline', vocab)

    def test_encode_decode(self):
        """Test: Palabras desconocidas → UNK; PAD y EOS no se decodifican."""
        vocab = Vocab.build(['a cat sits'])
        self.assertEqual(vocab.encode('A Dog sits')[1], UNK)
        self.assertEqual(vocab.decode(vocab.encode('a cat sits') + [EOS, PAD]), 'a cat sits')

    def test_encode_input(self):
        vocab = Vocab.build(['a cat sits', 'a dog runs'])
        ids = encode_input('a cat sits', 'a dog runs', vocab)
        self.assertEqual(ids[3], SEP)
        self.assertEqual(len(ids), 7)
        self.assertEqual(input_tokens('a cat', 'a dog')[2], '<sep>')
        self.assertEqual(encode_input('a cat', None, vocab), vocab.encode('a cat'))

    def test_save_load(self):
        vocab = Vocab.build(['a cat sits'])
        with tempfile.TemporaryDirectory() as tmp:
            vocab.save(Path(tmp) / 'vocab.txt')
            self.assertEqual(Vocab.load(Path(tmp) / 'vocab.txt'), vocab)

    def test_normalize(self):
        self.assertEqual(normalize('  A Cat\tSits '), ['a', 'cat', 'sits'])


# =============================================================================
# TESTS DEL FORMATO DE REGISTRO
# =============================================================================

class RecordTest(SimpleTestCase):

    def test_parse_minimal(self):
        """Test: Solo id y segment_a son obligatorios."""
        example = parse_record('{"id": "x1", "segment_a": "a cat sits"}', 1)
        self.assertIsNone(example.label)
        self.assertEqual(example.provenance, HUMAN)

    def test_missing_field(self):
        """Test: Falta segment_a → BadRecord con número de línea."""
        with self.assertRaisesMessage(BadRecord, 'Línea 3'):
            parse_record('{"id": "x1"}', 3)

    def test_invalid_json(self):
        with self.assertRaises(BadRecord):
            parse_record('{"id": ', 1)

    def test_unknown_field(self):
        with self.assertRaises(BadRecord):
            parse_record('{"id": "x", "segment_a": "a", "colour": "red"}', 1)

    def test_unknown_provenance(self):
        with self.assertRaises(BadRecord):
            Example(id='x', segment_a='a', provenance='guess')

    def test_with_pseudo(self):
        """Test: La copia pseudo conserva la etiqueta solo si se pide."""
        example = Example(id='x', segment_a='a', label=1, explanation='e', alignment=[0])
        pseudo = example.with_pseudo(explanation='f', keep_label=True)
        self.assertEqual((pseudo.label, pseudo.explanation, pseudo.provenance), (1, 'f', PSEUDO))
        self.assertIsNone(pseudo.alignment)
        self.assertIsNone(example.with_pseudo(explanation='f').label)

    def test_save_and_load(self):
        examples = [Example(id='x', segment_a='a cat', label=0, explanation='because', alignment=[0])]
        with tempfile.TemporaryDirectory() as tmp:
            path = save_examples(examples, Path(tmp) / 'sub' / 'data.jsonl')
            loaded = load_examples(path)
        self.assertEqual(loaded, examples)
        self.assertEqual(loaded[0].alignment, [0])


# =============================================================================
# TESTS DE LAS TAREAS SINTÉTICAS
# =============================================================================

class SyntheticTest(SimpleTestCase):

    def generate(self, task, seed=0, size=30):
        config = SyntheticTaskConfig.from_settings(task=task, seed=seed, sizes={'train': size, 'val': 6, 'test': 6})
        return config, generate_synthetic(config)

    def test_balanced_counts(self):
        self.assertEqual(balanced_counts(10, 3, 0.05), [4, 3, 3])

    def test_balance_infeasible(self):
        """Test: 4 registros entre 3 clases no caben en ±5%."""
        with self.assertRaises(BalanceInfeasible):
            balanced_counts(4, 3, 0.05)

    def test_deterministic(self):
        """Test: La misma semilla produce las mismas particiones."""
        _, first = self.generate('nli', seed=3)
        _, second = self.generate('nli', seed=3)
        self.assertEqual(first, second)
        _, other = self.generate('nli', seed=4)
        self.assertNotEqual(first['train'], other['train'])

    def test_labels_recomputable(self):
        """Test: Cada etiqueta se recalcula desde el texto en las dos tareas."""
        for task in ('nli', 'sp'):
            config, splits = self.generate(task)
            for examples in splits.values():
                for example in examples:
                    self.assertEqual(recompute_label(example, config), example.label, example)

    def test_alignment_matches_explanation(self):
        """Test: Una posición de entrada por palabra de la explicación, dentro de rango."""
        for task in ('nli', 'sp'):
            _, splits = self.generate(task)
            for example in splits['train']:
                source = input_tokens(example.segment_a, example.segment_b)
                self.assertEqual(len(example.alignment), len(normalize(example.explanation)))
                self.assertTrue(all(0 <= position < len(source) for position in example.alignment))

    def test_class_balance(self):
        _, splits = self.generate('sp', size=40)
        labels = [e.label for e in splits['train']]
        self.assertEqual(labels.count(0), labels.count(1))

    def test_label_rules(self):
        self.assertEqual(nli_label('a red cat sits and a big dog runs', 'a cat sits'), 'entailment')
        self.assertEqual(nli_label('a red cat sits and a big dog runs', 'a blue cat sits'), 'contradiction')
        self.assertEqual(nli_label('a red cat sits and a big dog runs', 'a red fish sits'), 'neutral')
        self.assertEqual(sp_label('@ann married @bob today', ['married']), 'spouse')
        self.assertEqual(sp_label('@ann met @bob married', ['married']), 'not_spouse')

    def test_unknown_task(self):
        with self.assertRaises(BadConfig):
            SyntheticTaskConfig.from_settings(task='qa')


# =============================================================================
# TESTS DE CONFIGURACIÓN
# =============================================================================

class ConfigTest(SimpleTestCase):

    def write(self, tmp, text):
        path = Path(tmp) / 'run.cfg'
        path.write_text(text, encoding='utf-8')
        return path

    def test_defaults(self):
        config = load_config()
        self.assertEqual(config['model']['MAX_FERTILITY'], 3)
        self.assertEqual(config['eval']['BENCH_LENGTHS'], [4, 8, 16, 32])

    def test_file_and_overrides(self):
        """Test: settings ← fichero ← flags, con conversión de tipos."""
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write(tmp, '[train]\nsteps = 50\nlambda_lm = 0\n[unsup]\nexternal.timeout = 5\n'
                                   '[eval]\nbench_lengths = 2, 4\n')
            config = load_config(path, {'train': {'STEPS': 7, 'BATCH_SIZE': None}})
        self.assertEqual(config['train']['STEPS'], 7)
        self.assertEqual(config['train']['LAMBDA_LM'], 0.0)
        self.assertIsInstance(config['train']['LAMBDA_LM'], float)
        self.assertEqual(config['train']['BATCH_SIZE'], 32)
        self.assertEqual(config['unsup']['EXTERNAL']['TIMEOUT'], 5.0)
        self.assertEqual(config['eval']['BENCH_LENGTHS'], [2, 4])

    def test_settings_not_mutated(self):
        load_config(None, {'train': {'STEPS': 1}})
        self.assertNotEqual(load_config()['train']['STEPS'], 1)

    def test_unknown_key(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write(tmp, '[train]\nsteeps = 5\n')
            with self.assertRaises(BadConfig):
                load_config(path)

    def test_unknown_section(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write(tmp, '[optimizer]\nlr = 1\n')
            with self.assertRaises(BadConfig):
                load_config(path)

    def test_bad_value(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write(tmp, '[train]\nsteps = many\n')
            with self.assertRaises(BadConfig):
                load_config(path)

    def test_project_example_file(self):
        """Test: El fichero de ejemplo del repositorio es válido."""
        config = load_config(Path(__file__).resolve().parents[2] / 'config' / 'desk.cfg')
        self.assertEqual(config['model']['PRESET'], 'desk')

    def test_model_preset(self):
        self.assertEqual(model_preset(load_config(), 'desk')['d_model'], 128)
        with self.assertRaises(BadConfig):
            model_preset(load_config(), 'huge')


# =============================================================================
# TESTS DEL COMANDO gen_data
# =============================================================================

@pytest.mark.integration
class GenDataCommandTest(SimpleTestCase):

    def test_writes_dataset(self):
        """Test: gen_data escribe particiones, vocabulario y metadatos."""
        with tempfile.TemporaryDirectory() as tmp:
            call_command('gen_data', task='sp', out=tmp, train_size=20, val_size=4, test_size=4,
                         seed=1, stdout=StringIO())
            self.assertEqual(len(load_split(tmp, 'train')), 20)
            self.assertEqual(load_task_meta(tmp), {'task': 'sp', 'labels': ['not_spouse', 'spouse']})
            vocab = load_vocab(tmp)
            self.assertIn('spouses', vocab)
            self.assertIn('so', vocab)
            for line in (Path(tmp) / 'val.jsonl').read_text(encoding='utf-8').splitlines():
                self.assertIn('explanation', json.loads(line))

    def test_infeasible_balance(self):
        """Test: Tamaño no equilibrable → CommandError."""
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError):
                call_command('gen_data', task='nli', out=tmp, train_size=4, val_size=3, test_size=3,
                             stdout=StringIO())

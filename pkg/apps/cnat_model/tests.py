"""
Tests para la app cnat_model.

Batería de pruebas que cubre:
- ModelConfig: validación y serialización
- Copia por fertilidad y máscaras
- encode / predict_fertility / decode / cabezas
- Leyes de longitud, de máscara y de atención posicional
- Generación NAR y AR (pasadas del decodificador, truncado, caché)
- Verosimilitud del LM (ids vs embeddings suaves, gradiente)
- Checkpoint: ida y vuelta bit a bit y errores
"""

import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.appshell.vocab import BOS, EOS
from apps.numcore import ops
from apps.numcore.exceptions import (
    BadCheckpoint, BadConfig, EmptyDecoderInput, EmptyInput, LengthMismatch, LengthOverflow,
)
from apps.numcore.gradcheck import numerical_gradient, relative_error
from apps.numcore.tensor import Tensor, no_grad, precision

from .checkpoint import MAGIC, load_checkpoint, save_checkpoint
from .config import ModelConfig, Mode
from .lm import lm_batch_nll, lm_log_likelihood, one_hot
from .masks import build_self_attention_mask
from .model import CnatModel, copy_by_fertility, resolve_fertility


# =============================================================================
# HELPERS PARA TESTS
# =============================================================================

def tiny_config(**overrides):
    """Configuración mínima para tests rápidos."""
    values = dict(
        vocab_size=24, d_model=16, n_heads=2, encoder_layers=2, decoder_layers=2,
        ffn_dim=32, max_fertility=3, max_length=16, dropout=0.1, num_labels=3,
    )
    values.update(overrides)
    return ModelConfig(**values)


def tiny_model(seed=0, **overrides):
    return CnatModel(tiny_config(**overrides), seed=seed).eval()


def tiny_lm(seed=0, **overrides):
    values = dict(encoder_layers=0, mode='ar', decoder_only=True, num_labels=2, dropout=0.0)
    values.update(overrides)
    return CnatModel(tiny_config(**values), seed=seed).eval()


def random_ids(rng, length, vocab_size=24):
    return rng.integers(5, vocab_size, size=length)


# =============================================================================
# TESTS DE CONFIGURACIÓN
# =============================================================================

class ModelConfigTest(SimpleTestCase):

    def test_invalid_head_split(self):
        """Test: d no divisible entre cabezas → BadConfig."""
        with self.assertRaises(BadConfig):
            tiny_config(d_model=18, n_heads=4)

    def test_invalid_fertility_and_labels(self):
        """Test: F_max < 1 o menos de 2 etiquetas → BadConfig."""
        with self.assertRaises(BadConfig):
            tiny_config(max_fertility=0)
        with self.assertRaises(BadConfig):
            tiny_config(num_labels=1)

    def test_text_round_trip(self):
        """Test: to_text / from_text conserva todos los campos."""
        config = tiny_config(mode='ar', dropout=0.3)
        self.assertEqual(ModelConfig.from_text(config.to_text()), config)
        self.assertEqual(ModelConfig.from_text(config.to_text()).mode, Mode.AR)

    def test_parameter_count_is_function_of_config(self):
        """Test: Mismos nombres y formas con semillas distintas."""
        a = CnatModel(tiny_config(), seed=1)
        b = CnatModel(tiny_config(), seed=2)
        self.assertEqual(
            [(n, p.shape) for n, p in a.named_parameters()],
            [(n, p.shape) for n, p in b.named_parameters()],
        )


# =============================================================================
# TESTS DE COPIA POR FERTILIDAD Y MÁSCARAS
# =============================================================================

class CopyByFertilityTest(SimpleTestCase):

    def test_two_token_example(self):
        """Test: x=[a,b], F=[2,1] → [a,a,b]."""
        self.assertEqual(list(copy_by_fertility(['a', 'b'], [2, 1])), ['a', 'a', 'b'])

    def test_identity_fertility(self):
        """Test: F todo unos → y = x."""
        self.assertEqual(list(copy_by_fertility([7, 8, 9], [1, 1, 1])), [7, 8, 9])

    def test_zero_fertility_drops_token(self):
        """Test: x=[a,b,c], F=[2,0,1] → [a,a,c]."""
        self.assertEqual(list(copy_by_fertility(['a', 'b', 'c'], [2, 0, 1])), ['a', 'a', 'c'])

    def test_strict_empty(self):
        """Test: ΣF = 0 en modo estricto → EmptyDecoderInput."""
        with self.assertRaises(EmptyDecoderInput):
            copy_by_fertility([5, 6], [0, 0])

    def test_inference_fallback(self):
        """Test: ΣF = 0 en inferencia → la posición más probable con f=1 pasa a 1."""
        probs = np.array([[0.9, 0.1, 0, 0], [0.6, 0.4, 0, 0]])
        self.assertEqual(list(copy_by_fertility([5, 6], [0, 0], strict=False, fertility_probs=probs)), [6])

    def test_length_mismatch(self):
        """Test: |F| ≠ |x| → LengthMismatch."""
        with self.assertRaises(LengthMismatch):
            copy_by_fertility([1, 2, 3], [1, 1])

    def test_resolve_trims_from_the_right(self):
        """Test: ΣF > T_max se recorta por la derecha."""
        fertility, truncated = resolve_fertility([3, 3, 3], max_length=5)
        self.assertEqual(list(fertility), [3, 2, 0])
        self.assertTrue(truncated)


class MaskTest(SimpleTestCase):

    def test_nar_all_allowed(self):
        """Test: NAR, T=3 → 3×3 todo permitido."""
        self.assertTrue(build_self_attention_mask(3, 'nar').all())

    def test_ar_lower_triangular(self):
        """Test: AR, T=3 → triangular inferior."""
        expected = np.array([[1, 0, 0], [1, 1, 0], [1, 1, 1]], dtype=bool)
        np.testing.assert_array_equal(build_self_attention_mask(3, Mode.AR), expected)


# =============================================================================
# TESTS DEL CODIFICADOR Y DEL DECODIFICADOR
# =============================================================================

class EncodeDecodeTest(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.model = tiny_model()

    def test_encode_shape_and_determinism(self):
        """Test: S=5 → H 5×d; misma entrada → mismo H."""
        x = random_ids(self.rng, 5)
        with no_grad():
            first = self.model.encode(x).data
            second = self.model.encode(x).data
        self.assertEqual(first.shape, (5, 16))
        np.testing.assert_array_equal(first, second)

    def test_encode_is_bidirectional(self):
        """Test: Cambiar el token 3 cambia todas las filas de H."""
        x = random_ids(self.rng, 5)
        y = x.copy()
        y[3] = 5 if x[3] != 5 else 6
        with no_grad():
            diff = np.abs(self.model.encode(x).data - self.model.encode(y).data).max(axis=-1)
        self.assertTrue((diff > 1e-6).all())

    def test_encode_empty(self):
        """Test: Entrada vacía → EmptyInput."""
        with self.assertRaises(EmptyInput):
            self.model.encode([])

    def test_fertility_contract(self):
        """Test: |F| = S, argmax por fuerza bruta y F ≤ F_max."""
        with no_grad():
            fertility, logits = self.model.predict_fertility(self.model.encode(random_ids(self.rng, 4)))
        self.assertEqual(len(fertility), 4)
        for s in range(4):
            row = logits.data[s]
            best = max(range(len(row)), key=lambda k: row[k])
            self.assertEqual(fertility[s], best)
        self.assertTrue((fertility <= 3).all() and (fertility >= 0).all())

    def test_decode_shape_determinism_and_cross_attention(self):
        """Test: T=6 → H_d 6×d; determinista; poner H a cero cambia H_d."""
        with no_grad():
            hidden = self.model.encode(random_ids(self.rng, 4))
            y = random_ids(self.rng, 6)
            first = self.model.decode(y, hidden).data
            second = self.model.decode(y, hidden).data
            zeroed = self.model.decode(y, Tensor(np.zeros(hidden.shape, dtype=np.float32))).data
        self.assertEqual(first.shape, (6, 16))
        np.testing.assert_array_equal(first, second)
        self.assertGreater(np.abs(first - zeroed).max(), 1e-6)

    def test_decode_length_overflow(self):
        """Test: T > T_max → LengthOverflow."""
        with no_grad():
            hidden = self.model.encode(random_ids(self.rng, 3))
            with self.assertRaises(LengthOverflow):
                self.model.decode(random_ids(self.rng, 17), hidden)


class MaskLawTest(SimpleTestCase):
    """Dependencias entre posiciones del decodificador (pruebas de perturbación)."""

    def _probe(self, mode):
        model = tiny_model(mode=mode)
        rng = np.random.default_rng(11)
        changed = []
        for _ in range(20):
            with no_grad():
                hidden = model.encode(random_ids(rng, 4))
                y = random_ids(rng, 5)
                z = y.copy()
                z[-1] = 5 if y[-1] != 5 else 6
                a = model.decode(y, hidden).data
                b = model.decode(z, hidden).data
            changed.append(np.abs(a[0] - b[0]).max() > 1e-6)
        return changed

    def test_nar_full_dependence(self):
        """Test: NAR: perturbar la última entrada cambia la salida en la posición 1."""
        self.assertTrue(all(self._probe('nar')))

    def test_ar_causality(self):
        """Test: AR: la posición 1 no depende de la última entrada."""
        self.assertFalse(any(self._probe('ar')))


class PositionalAttentionTest(SimpleTestCase):

    def setUp(self):
        self.model = tiny_model()
        self.layer = self.model.decoder[0]
        self.pe = Tensor(self.model.pe[None, :5])

    def test_rows_sum_to_one_and_shape(self):
        """Test: Filas de pesos suman 1 y la salida es T×d."""
        hidden = Tensor(np.random.default_rng(0).normal(size=(1, 5, 16)).astype(np.float32))
        with no_grad():
            out = self.layer.positional(hidden, self.pe)
        self.assertEqual(out.shape, (1, 5, 16))
        np.testing.assert_allclose(self.layer.positional_attention.last_weights.sum(axis=-1), 1.0, atol=1e-6)

    def test_weights_do_not_depend_on_content(self):
        """Test: Dos entradas distintas de igual longitud → mismos pesos."""
        rng = np.random.default_rng(1)
        weights = []
        with no_grad():
            for _ in range(2):
                hidden = self.model.encode(random_ids(rng, 3))
                self.model.decode(random_ids(rng, 5), hidden)
                weights.append(self.model.decoder[1].positional_attention.last_weights.copy())
        np.testing.assert_array_equal(weights[0], weights[1])


class HeadsTest(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(3)
        self.model = tiny_model()
        with no_grad():
            hidden = self.model.encode(random_ids(rng, 4))
            self.decoder_hidden = self.model.decode(random_ids(rng, 6), hidden)

    def test_explanation_distributions(self):
        """Test: Cada posición suma 1; log p conjunta = Σ log p por token; greedy = argmax."""
        with no_grad():
            probs = self.model.predict_explanation(self.decoder_hidden).data
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)
        sentence = [3, 7, 7, 10, 5, 20]
        joint = float(np.log(probs[np.arange(6), sentence]).sum())
        per_token = sum(math.log(probs[t, token]) for t, token in enumerate(sentence))
        self.assertAlmostEqual(joint, per_token, places=4)
        for t in range(6):
            self.assertEqual(int(probs[t].argmax()), max(range(24), key=lambda v: probs[t, v]))

    def test_label_distribution(self):
        """Test: Suma 1 e invariante a permutar las filas de H_d."""
        with no_grad():
            probs = self.model.predict_label(self.decoder_hidden).data
            permuted = self.model.predict_label(self.decoder_hidden[np.array([5, 2, 0, 4, 1, 3])]).data
        self.assertAlmostEqual(float(probs.sum()), 1.0, places=6)
        np.testing.assert_allclose(probs, permuted, atol=1e-6)

    def test_single_row_pooling(self):
        """Test: T=1: la media es la fila proyectada."""
        row = self.decoder_hidden[np.array([2])]
        with no_grad():
            pooled = self.model.predict_label(row).data
            scores = self.model.label_output(ops.relu(self.model.label_hidden(row))).data[0]
        e = np.exp(scores - scores.max())
        np.testing.assert_allclose(pooled, e / e.sum(), atol=1e-6)


# =============================================================================
# TESTS DE GENERACIÓN
# =============================================================================

class GenerateTest(SimpleTestCase):

    def setUp(self):
        self.model = tiny_model()
        self.rng = np.random.default_rng(5)

    def test_explain_flag(self):
        """Test: explain=False → sin explicación y la misma etiqueta."""
        x = random_ids(self.rng, 5)
        full = self.model.generate(x, explain=True)
        fast = self.model.generate(x, explain=False)
        self.assertEqual(fast.tokens, [])
        self.assertIsNone(fast.token_probs)
        self.assertEqual(full.label, fast.label)
        np.testing.assert_array_equal(full.label_probs, fast.label_probs)
        self.assertAlmostEqual(float(full.label_probs.sum()), 1.0, places=6)

    def test_single_decoder_pass(self):
        """Test: Exactamente una pasada del decodificador sea cual sea T."""
        lengths = []
        self.model.decoder_hooks.append(lengths.append)
        output = self.model.generate(random_ids(self.rng, 6))
        self.assertEqual(len(lengths), 1)
        self.assertEqual(lengths[0], output.length)
        self.assertEqual(output.decoder_passes, 1)

    def test_length_law(self):
        """Test: Longitud de la explicación = ΣF en todas las generaciones."""
        for _ in range(200):
            x = random_ids(self.rng, int(self.rng.integers(1, 8)))
            output = self.model.generate(x)
            self.assertEqual(output.length, int(output.fertility.sum()))

    def test_zero_fertility_is_forced_to_one(self):
        """Test: ΣF = 0 en inferencia → explicación de un token."""
        output = self.model.generate(random_ids(self.rng, 3), fertility=[0, 0, 0])
        self.assertEqual(output.length, 1)
        self.assertEqual(int(output.fertility.sum()), 1)

    def test_truncation_flag(self):
        """Test: ΣF > T_max → recorte y truncated=True."""
        output = self.model.generate(random_ids(self.rng, 8), fertility=[3] * 8)
        self.assertTrue(output.truncated)
        self.assertEqual(output.length, 16)

    def test_generate_requires_nar(self):
        """Test: generate() en un modelo AR → BadConfig."""
        with self.assertRaises(BadConfig):
            self.model.with_mode('ar').generate(random_ids(self.rng, 3))


class GenerateAutoregressiveTest(SimpleTestCase):

    def setUp(self):
        self.model = tiny_model(mode='ar')
        self.rng = np.random.default_rng(9)

    def test_passes_equal_emitted_length(self):
        """Test: Una pasada por token emitido (EOS incluido si aparece)."""
        for _ in range(10):
            output = self.model.generate_autoregressive(random_ids(self.rng, 4), max_length=10)
            emitted = output.length + (0 if output.truncated else 1)
            self.assertEqual(output.decoder_passes, emitted)

    def test_passes_without_eos(self):
        """Test: Sin EOS (ignore_eos) hay exactamente T pasadas para T tokens."""
        output = self.model.generate_autoregressive(random_ids(self.rng, 4), max_length=6, ignore_eos=True)
        self.assertEqual((output.length, output.decoder_passes), (6, 6))
        self.assertTrue(output.truncated)

    def test_single_token_limit(self):
        """Test: T_max=1 → explicación de un token, marcada como truncada."""
        output = self.model.generate_autoregressive(random_ids(self.rng, 4), max_length=1)
        self.assertEqual(output.length, 1)
        self.assertTrue(output.truncated)

    def test_incremental_matches_full_causal_decode(self):
        """Test: La caché incremental reproduce la decodificación causal completa."""
        x = random_ids(self.rng, 5)
        output = self.model.generate_autoregressive(x, max_length=6, ignore_eos=True)
        self.assertEqual(output.length, 6)
        with no_grad():
            hidden = self.model.encode(x)
            decoder_hidden = self.model.decode([BOS] + output.tokens[:-1], hidden)
            probs = self.model.predict_explanation(decoder_hidden).data
            label = self.model.predict_label(decoder_hidden).data
        probs[:, EOS] = -1.0
        self.assertEqual([int(t) for t in probs.argmax(axis=-1)], output.tokens)
        np.testing.assert_allclose(label, output.label_probs, atol=1e-5)

    def test_shared_weights_view(self):
        """Test: with_mode comparte parámetros con el original."""
        nar = tiny_model()
        ar = nar.with_mode('ar')
        self.assertIs(nar.embedding.table, ar.embedding.table)
        self.assertEqual(ar.config.mode, Mode.AR)
        self.assertEqual(nar.config.mode, Mode.NAR)


# =============================================================================
# TESTS DEL LM
# =============================================================================

class LanguageModelTest(SimpleTestCase):

    def setUp(self):
        self.lm = tiny_lm()
        self.sentence = [6, 9, 12, 9]

    def test_one_hot_soft_path_matches_ids(self):
        """Test: Embeddings suaves one-hot reproducen el camino de ids."""
        with no_grad():
            by_ids = lm_log_likelihood(self.lm, self.sentence).item()
            table = self.lm.embedding.table.data
            soft = one_hot(self.sentence, 24) @ table
            by_soft = lm_log_likelihood(self.lm, embeddings=Tensor(soft), targets=one_hot(self.sentence, 24)).item()
        self.assertAlmostEqual(by_ids, by_soft, places=5)

    def test_uniform_lm(self):
        """Test: LM uniforme → log-verosimilitud por token = −ln V."""
        self.lm.explanation_head.weight.data[:] = 0.0
        self.lm.explanation_head.bias.data[:] = 0.0
        with no_grad():
            total = lm_log_likelihood(self.lm, self.sentence).item()
        self.assertAlmostEqual(total / (len(self.sentence) + 1), -math.log(24), places=5)

    def test_batch_nll_matches_single(self):
        """Test: La NLL por lotes con relleno coincide con la de cada frase."""
        ids = np.array([[6, 9, 12, 9], [7, 8, 0, 0]])
        with no_grad():
            batch = lm_batch_nll(self.lm, ids).item()
            single = [-lm_log_likelihood(self.lm, row).item() for row in ([6, 9, 12, 9], [7, 8])]
        self.assertAlmostEqual(batch, sum(single) / (5 + 3), places=4)

    def test_gradient_wrt_embeddings(self):
        """Test: Gradiente respecto a los embeddings de entrada (error < 1e-3)."""
        self.lm.astype(np.float64)
        rng = np.random.default_rng(0)
        with precision('float64'):
            embeddings = Tensor(rng.normal(size=(3, 16)) * 0.3, requires_grad=True)
            targets = np.asarray([6, 9, 12])

            def fn():
                return lm_log_likelihood(self.lm, embeddings=embeddings, targets=targets)

            fn().backward()
            numeric = numerical_gradient(fn, embeddings)
        self.assertLess(relative_error(embeddings.grad, numeric), 1e-3)

    def test_length_overflow(self):
        """Test: Frase + EOS más larga que T_max → LengthOverflow."""
        with self.assertRaises(LengthOverflow):
            lm_log_likelihood(self.lm, list(range(5, 21)))


# =============================================================================
# TESTS DE CHECKPOINT
# =============================================================================

class CheckpointTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'model.cnat'

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_is_bit_exact(self):
        """Test: save → load → generate idéntico al original."""
        model = tiny_model(seed=3)
        x = np.random.default_rng(0).integers(5, 24, size=6)
        before = model.generate(x)
        save_checkpoint(model, self.path)
        loaded = load_checkpoint(self.path)
        after = loaded.generate(x)
        self.assertEqual(loaded.config, model.config)
        for (name, a), (_, b) in zip(model.named_parameters(), loaded.named_parameters()):
            np.testing.assert_array_equal(a.data, b.data, err_msg=name)
        self.assertEqual(before.tokens, after.tokens)
        np.testing.assert_array_equal(before.label_probs, after.label_probs)
        np.testing.assert_array_equal(before.token_probs, after.token_probs)

    def test_bad_magic(self):
        """Test: Fichero que no empieza por CNAT1 → BadCheckpoint."""
        self.path.write_bytes(b'NOPE!' + b'\x00' * 16)
        with self.assertRaises(BadCheckpoint):
            load_checkpoint(self.path)

    def test_truncated_file(self):
        """Test: Fichero truncado → BadCheckpoint."""
        save_checkpoint(tiny_model(), self.path)
        data = self.path.read_bytes()
        self.assertTrue(data.startswith(MAGIC))
        self.path.write_bytes(data[:-10])
        with self.assertRaises(BadCheckpoint):
            load_checkpoint(self.path)

    def test_lm_round_trip(self):
        """Test: El LM solo-decodificador también se guarda y se carga."""
        lm = tiny_lm(seed=4)
        save_checkpoint(lm, self.path)
        loaded = load_checkpoint(self.path)
        self.assertTrue(loaded.config.decoder_only)
        with no_grad():
            self.assertEqual(
                lm_log_likelihood(lm, [6, 7]).item(), lm_log_likelihood(loaded, [6, 7]).item()
            )

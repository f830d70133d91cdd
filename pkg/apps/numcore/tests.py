"""
Tests para la app numcore.

Batería de pruebas que cubre:
- softmax, cross_entropy y embedding_lookup (contratos y ejemplos)
- backward: acumulación, pérdida escalar, camino sin gradiente
- Verificación por diferencias finitas de cada operación (float64)
- Adam, recorte de gradiente y Module
"""

import math

import numpy as np
from django.test import SimpleTestCase

from . import ops
from .exceptions import BadTarget, BadTokenId, NonFiniteInput, NonScalarLoss, ShapeMismatch
from .gradcheck import check_gradients
from .nn import Embedding, LayerNorm, Linear, Module
from .optim import Adam, AdamState, adam_step, clip_grad_norm
from .tensor import Parameter, Tensor, no_grad, precision


# =============================================================================
# HELPERS PARA TESTS
# =============================================================================

def random_leaf(rng, *shape):
    """Hoja float64 entrenable con valores aleatorios."""
    return Tensor(rng.normal(size=shape).astype(np.float64), requires_grad=True)


# =============================================================================
# TESTS DE SOFTMAX
# =============================================================================

class SoftmaxTest(SimpleTestCase):
    """Tests para softmax."""

    def test_symmetric_input(self):
        """Test: [0, 0] → [0.5, 0.5]."""
        np.testing.assert_allclose(ops.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_known_values(self):
        """Test: [1, 2, 3] → [0.0900, 0.2447, 0.6652]."""
        out = ops.softmax(Tensor([1.0, 2.0, 3.0])).data
        np.testing.assert_allclose(out, [0.0900, 0.2447, 0.6652], atol=1e-4)

    def test_shift_invariance(self):
        """Test: softmax(x + c) = softmax(x)."""
        x = np.array([[0.3, -1.2, 2.0], [5.0, 5.0, -3.0]])
        np.testing.assert_allclose(
            ops.softmax(Tensor(x + 100.0)).data, ops.softmax(Tensor(x)).data, atol=1e-6
        )

    def test_rows_sum_to_one(self):
        """Test: Cada fila suma 1 ± 1e-6, también en ejes distintos del último."""
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(4, 5, 6)) * 10)
        np.testing.assert_allclose(ops.softmax(x, axis=-1).data.sum(axis=-1), 1.0, atol=1e-6)
        np.testing.assert_allclose(ops.softmax(x, axis=1).data.sum(axis=1), 1.0, atol=1e-6)

    def test_non_finite_input(self):
        """Test: NaN o inf → NonFiniteInput."""
        with self.assertRaises(NonFiniteInput):
            ops.softmax(Tensor([1.0, float('nan')]))
        with self.assertRaises(NonFiniteInput):
            ops.softmax(Tensor([1.0, float('inf')]))


# =============================================================================
# TESTS DE CROSS ENTROPY
# =============================================================================

class CrossEntropyTest(SimpleTestCase):
    """Tests para cross_entropy."""

    def test_uniform_four_classes(self):
        """Test: Uniforme sobre 4 clases → ln 4."""
        loss = ops.cross_entropy(Tensor([0.25] * 4), 2, from_logits=False)
        self.assertAlmostEqual(loss.item(), math.log(4), places=5)

    def test_hand_case(self):
        """Test: [0.7, 0.3], target 0 → 0.3567."""
        loss = ops.cross_entropy(Tensor([0.7, 0.3]), 0, from_logits=False)
        self.assertAlmostEqual(loss.item(), 0.3567, places=4)

    def test_perfect_prediction(self):
        """Test: Probabilidad 1 en el target → 0."""
        loss = ops.cross_entropy(Tensor([0.0, 1.0, 0.0]), 1, from_logits=False)
        self.assertAlmostEqual(loss.item(), 0.0, places=6)

    def test_logits_path_matches_probability_path(self):
        """Test: Logits y probabilidades dan la misma pérdida."""
        logits = Tensor([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]])
        probs = ops.softmax(logits)
        a = ops.cross_entropy(logits, [1, 2]).item()
        b = ops.cross_entropy(probs, [1, 2], from_logits=False).item()
        self.assertAlmostEqual(a, b, places=5)

    def test_mask_excludes_positions(self):
        """Test: Las posiciones enmascaradas no cuentan en la media."""
        logits = Tensor([[0.0, 0.0], [10.0, -10.0]])
        masked = ops.cross_entropy(logits, [0, 1], mask=[True, False]).item()
        self.assertAlmostEqual(masked, math.log(2), places=5)

    def test_target_out_of_range(self):
        """Test: Target fuera de rango → BadTarget."""
        with self.assertRaises(BadTarget):
            ops.cross_entropy(Tensor([0.5, 0.5]), 2, from_logits=False)
        with self.assertRaises(BadTarget):
            ops.cross_entropy(Tensor([0.5, 0.5]), -1, from_logits=False)


# =============================================================================
# TESTS DE EMBEDDING
# =============================================================================

class EmbeddingLookupTest(SimpleTestCase):
    """Tests para embedding_lookup y Embedding."""

    def test_row_gather(self):
        """Test: id 0 → fila 0 de la tabla."""
        table = Tensor(np.arange(12, dtype=np.float32).reshape(4, 3))
        np.testing.assert_array_equal(ops.embedding_lookup(table, [0]).data[0], [0, 1, 2])

    def test_pad_row_is_zero(self):
        """Test: El id PAD devuelve el vector nulo."""
        emb = Embedding(5, 4, np.random.default_rng(0), padding_idx=0)
        np.testing.assert_array_equal(emb([0, 0]).data, np.zeros((2, 4)))

    def test_repeated_id_gradient(self):
        """Test: grad de sum(lookup([i, i])) respecto a la fila i = 2·ones."""
        table = Tensor(np.ones((5, 3)), requires_grad=True)
        ops.embedding_lookup(table, [2, 2]).sum().backward()
        np.testing.assert_array_equal(table.grad[2], [2.0, 2.0, 2.0])
        self.assertEqual(table.grad.sum(), 6.0)

    def test_pad_row_receives_no_gradient(self):
        """Test: La fila PAD no acumula gradiente."""
        emb = Embedding(5, 4, np.random.default_rng(0))
        emb([0, 1, 0]).sum().backward()
        np.testing.assert_array_equal(emb.table.grad[0], np.zeros(4))

    def test_id_out_of_range(self):
        """Test: id ≥ V → BadTokenId."""
        table = Tensor(np.zeros((3, 2)))
        with self.assertRaises(BadTokenId):
            ops.embedding_lookup(table, [3])


# =============================================================================
# TESTS DE BACKWARD
# =============================================================================

class BackwardTest(SimpleTestCase):
    """Tests para la retropropagación."""

    def test_sum_gives_ones(self):
        """Test: loss = sum(x) → grad = unos."""
        x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones(3))

    def test_constant_loss_leaves_zero_grad(self):
        """Test: Sin camino hasta x, su gradiente queda a cero."""
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        y = Tensor(np.array([3.0, 4.0]), requires_grad=True)
        y.sum().backward()
        np.testing.assert_array_equal(x.grad, np.zeros(2))

    def test_repeated_calls_accumulate(self):
        """Test: Dos backward sin zero_grad suman."""
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (x * 3.0).sum().backward()
        (x * 3.0).sum().backward()
        np.testing.assert_array_equal(x.grad, [6.0, 6.0])

    def test_non_scalar_loss(self):
        """Test: Pérdida no escalar → NonScalarLoss."""
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with self.assertRaises(NonScalarLoss):
            (x * 2.0).backward()

    def test_shared_node_gradients_add(self):
        """Test: Un nodo usado dos veces recibe la suma de ambos caminos."""
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = x * x
        (y + y).sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_no_grad_builds_no_graph(self):
        """Test: Dentro de no_grad el resultado no requiere gradiente."""
        x = Tensor(np.array([1.0]), requires_grad=True)
        with no_grad():
            y = x * 2.0
        self.assertFalse(y.requires_grad)


# =============================================================================
# VERIFICACIÓN POR DIFERENCIAS FINITAS
# =============================================================================

class GradientCheckTest(SimpleTestCase):
    """Gradiente analítico vs diferencias centrales en float64 (error < 1e-4)."""

    tolerance = 1e-4

    def setUp(self):
        self.rng = np.random.default_rng(1234)

    def assert_grad_ok(self, fn, inputs):
        with precision('float64'):
            self.assertLess(check_gradients(fn, inputs), self.tolerance)

    def test_softmax_weighted_sum(self):
        """Test: sum(softmax(x)·w)."""
        x = random_leaf(self.rng, 3, 5)
        w = Tensor(self.rng.normal(size=(3, 5)))
        self.assert_grad_ok(lambda: (ops.softmax(x) * w).sum(), [x])

    def test_elementwise(self):
        """Test: add, sub, mul, div, neg con broadcasting."""
        a = random_leaf(self.rng, 2, 3)
        b = random_leaf(self.rng, 3)
        c = Tensor(self.rng.uniform(1.0, 2.0, size=(2, 1)), requires_grad=True)

        def fn():
            return ((a + b) * a - b / c + (-a)).sum()

        self.assert_grad_ok(fn, [a, b, c])

    def test_exp_log(self):
        """Test: exp y log."""
        x = Tensor(self.rng.uniform(0.5, 2.0, size=(4,)), requires_grad=True)
        self.assert_grad_ok(lambda: (ops.log(x) * ops.exp(x)).sum(), [x])

    def test_relu_gelu(self):
        """Test: relu y gelu (lejos del punto no derivable de relu)."""
        x = Tensor(self.rng.choice([-1.0, 1.0], size=(3, 4)) * self.rng.uniform(0.1, 2.0, size=(3, 4)),
                   requires_grad=True)
        w = Tensor(self.rng.normal(size=(3, 4)))
        self.assert_grad_ok(lambda: ((ops.relu(x) + ops.gelu(x)) * w).sum(), [x])

    def test_batched_matmul(self):
        """Test: matmul con broadcasting de lotes."""
        a = random_leaf(self.rng, 2, 3, 4)
        b = random_leaf(self.rng, 4, 5)
        self.assert_grad_ok(lambda: (ops.matmul(a, b) * ops.matmul(a, b)).sum(), [a, b])

    def test_mean_reshape_transpose(self):
        """Test: mean por eje, reshape y transpose."""
        x = random_leaf(self.rng, 2, 3, 4)
        w = Tensor(self.rng.normal(size=(4, 2)))

        def fn():
            y = x.transpose(0, 2, 1).reshape(2, 12).mean(axis=1, keepdims=True)
            return (y * y).sum() + (x.mean(axis=-1) * w.transpose()[:, :3].reshape(2, 3)).sum()

        self.assert_grad_ok(fn, [x])

    def test_index_concat(self):
        """Test: Indexado avanzado y concatenación."""
        x = random_leaf(self.rng, 4, 3)
        y = random_leaf(self.rng, 2, 3)
        w = Tensor(self.rng.normal(size=(5, 3)))

        def fn():
            picked = x[np.array([0, 2, 2])]
            return (ops.concat([picked, y], axis=0) * w).sum()

        self.assert_grad_ok(fn, [x, y])

    def test_layer_norm(self):
        """Test: layer_norm respecto a entrada, escala y desplazamiento."""
        x = random_leaf(self.rng, 3, 6)
        gamma = random_leaf(self.rng, 6)
        beta = random_leaf(self.rng, 6)
        w = Tensor(self.rng.normal(size=(3, 6)))
        self.assert_grad_ok(lambda: (ops.layer_norm(x, gamma, beta) * w).sum(), [x, gamma, beta])

    def test_log_softmax_and_cross_entropy(self):
        """Test: log_softmax y las dos ramas de cross_entropy."""
        x = random_leaf(self.rng, 4, 5)
        target = np.array([0, 4, 2, 1])

        def fn():
            return (
                ops.cross_entropy(x, target, mask=[True, True, False, True])
                + ops.cross_entropy(ops.softmax(x), target, from_logits=False)
                - ops.log_softmax(x)[:, 0].sum()
            )

        self.assert_grad_ok(fn, [x])

    def test_embedding(self):
        """Test: embedding_lookup respecto a la tabla."""
        table = random_leaf(self.rng, 6, 3)
        w = Tensor(self.rng.normal(size=(4, 3)))
        self.assert_grad_ok(lambda: (ops.embedding_lookup(table, [1, 3, 3, 5]) * w).sum(), [table])


# =============================================================================
# TESTS DE DROPOUT
# =============================================================================

class DropoutTest(SimpleTestCase):

    def test_inference_is_identity(self):
        """Test: En inferencia dropout devuelve la entrada tal cual."""
        x = Tensor(np.ones((3, 3)))
        out = ops.dropout(x, 0.5, np.random.default_rng(0), training=False)
        self.assertIs(out, x)

    def test_training_is_inverted(self):
        """Test: En entrenamiento conserva la esperanza (escala 1/(1-p))."""
        x = Tensor(np.ones((200, 200)))
        out = ops.dropout(x, 0.3, np.random.default_rng(0), training=True).data
        self.assertTrue(set(np.unique(out)).issubset({0.0, np.float32(1 / 0.7)}))
        self.assertAlmostEqual(float(out.mean()), 1.0, delta=0.02)


# =============================================================================
# TESTS DE ADAM
# =============================================================================

class AdamTest(SimpleTestCase):
    """Tests para adam_step, Adam y clip_grad_norm."""

    def test_defaults(self):
        """Test: β1=0.9, β2=0.999, ε=1e-8, lr=0.00004."""
        state = AdamState()
        self.assertEqual((state.beta1, state.beta2, state.eps, state.lr), (0.9, 0.999, 1e-8, 0.00004))

    def test_first_step_hand_value(self):
        """Test: Parámetro 0, g=1, lr=0.1 → ≈ −0.1 tras el primer paso."""
        param = Parameter(np.zeros(1))
        state = AdamState(lr=0.1)
        adam_step([param], [np.ones(1)], state)
        self.assertAlmostEqual(float(param.data[0]), -0.1, places=6)
        self.assertEqual(state.step, 1)

    def test_zero_gradient_is_identity(self):
        """Test: Gradiente cero en todo → parámetros sin cambios."""
        rng = np.random.default_rng(3)
        params = [Parameter(rng.normal(size=(3, 2)).astype(np.float32)), Parameter(np.ones(4, dtype=np.float32))]
        before = [p.data.copy() for p in params]
        state = AdamState(lr=0.5)
        for _ in range(3):
            adam_step(params, [np.zeros_like(p.data) for p in params], state)
        for p, b in zip(params, before):
            np.testing.assert_array_equal(p.data, b)

    def test_moments_match_shapes(self):
        """Test: Los momentos tienen la forma de su parámetro."""
        params = [Parameter(np.zeros((2, 3))), Parameter(np.zeros(5))]
        state = AdamState()
        adam_step(params, [np.ones((2, 3)), np.ones(5)], state)
        self.assertEqual([m.shape for m in state.m], [(2, 3), (5,)])
        self.assertEqual([v.shape for v in state.v], [(2, 3), (5,)])

    def test_shape_mismatch(self):
        """Test: Gradiente con otra forma → ShapeMismatch."""
        with self.assertRaises(ShapeMismatch):
            adam_step([Parameter(np.zeros(3))], [np.zeros(4)], AdamState())

    def test_pad_row_stays_zero(self):
        """Test: Tras varios pasos, la fila PAD de un Embedding sigue a cero."""
        emb = Embedding(4, 3, np.random.default_rng(0))
        optimizer = Adam(emb.parameters(), lr=0.1)
        for _ in range(3):
            optimizer.zero_grad()
            (emb([0, 1, 2]) * 2.0).sum().backward()
            optimizer.step()
        np.testing.assert_array_equal(emb.table.data[0], np.zeros(3))

    def test_clip_grad_norm(self):
        """Test: El recorte deja la norma global en max_norm."""
        a = Parameter(np.zeros(2))
        a.grad = np.array([3.0, 4.0])
        total = clip_grad_norm([a], 1.0)
        self.assertAlmostEqual(total, 5.0)
        self.assertAlmostEqual(float(np.linalg.norm(a.grad)), 1.0, places=6)


# =============================================================================
# TESTS DE MODULE
# =============================================================================

class TwoLayer(Module):

    def __init__(self, rng):
        self.first = Linear(3, 4, rng)
        self.blocks = [LayerNorm(4), Linear(4, 2, rng)]


class ModuleTest(SimpleTestCase):
    """Tests para Module."""

    def test_parameter_names_are_ordered(self):
        """Test: Nombres recursivos en orden de asignación."""
        names = [name for name, _ in TwoLayer(np.random.default_rng(0)).named_parameters()]
        self.assertEqual(names, [
            'first.weight', 'first.bias',
            'blocks.0.gamma', 'blocks.0.beta',
            'blocks.1.weight', 'blocks.1.bias',
        ])

    def test_state_dict_round_trip(self):
        """Test: load_state_dict copia exactamente los valores."""
        a = TwoLayer(np.random.default_rng(0))
        b = TwoLayer(np.random.default_rng(1))
        b.load_state_dict(a.state_dict())
        for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_load_rejects_wrong_shape(self):
        """Test: Forma distinta → ShapeMismatch."""
        model = TwoLayer(np.random.default_rng(0))
        state = model.state_dict()
        state['first.bias'] = np.zeros(7)
        with self.assertRaises(ShapeMismatch):
            model.load_state_dict(state)

    def test_freeze(self):
        """Test: freeze deja sin parámetros entrenables."""
        model = TwoLayer(np.random.default_rng(0)).freeze()
        self.assertEqual(model.trainable_parameters(), [])

    def test_train_eval_propagates(self):
        """Test: eval() alcanza a los submódulos de listas."""
        model = TwoLayer(np.random.default_rng(0))
        model.eval()
        self.assertFalse(model.blocks[1].training)
        with model.inference():
            pass
        self.assertFalse(model.training)

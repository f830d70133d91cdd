"""
===============================================================================
ARCHIVO: apps/numcore/nn.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Bloques con parámetros sobre los que se construyen la red C-NAT, el LM
    discriminador y el juez de racionalidad.

CLASES PRINCIPALES:
    - Module: registro recursivo de parámetros, modo train/eval,
      congelado, state_dict y cambio de precisión
    - Linear, LayerNorm, Embedding

NOTAS:
    - El orden de named_parameters() es el orden de asignación de atributos,
      así que el número y el orden de parámetros dependen solo de la
      configuración (el formato de checkpoint se apoya en ello).
    - La fila PAD de Embedding empieza a cero y no recibe gradiente; Adam
      con gradiente cero la deja intacta.

===============================================================================
"""

from contextlib import contextmanager

import numpy as np

from . import ops
from .exceptions import ShapeMismatch
from .tensor import Parameter, Tensor


# =============================================================================
# MODULE
# =============================================================================

class Module:
    """Contenedor de parámetros y submódulos."""

    training = True

    def named_parameters(self, prefix=''):
        for name, value in vars(self).items():
            full_name = f'{prefix}{name}'
            if isinstance(value, Parameter):
                yield full_name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f'{full_name}.')
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f'{full_name}.{i}.')

    def parameters(self) -> list:
        return [param for _, param in self.named_parameters()]

    def trainable_parameters(self) -> list:
        return [param for param in self.parameters() if param.requires_grad]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for module in self.modules():
            module.training = mode
        return self

    def eval(self):
        return self.train(False)

    @contextmanager
    def inference(self):
        """Modo inferencia temporal: restaura el modo anterior al salir."""
        previous = self.training
        self.eval()
        try:
            yield self
        finally:
            self.train(previous)

    def zero_grad(self):
        for param in self.parameters():
            param.zero_grad()

    def freeze(self):
        for param in self.parameters():
            param.requires_grad = False
            param.grad = None
        return self

    def num_parameters(self) -> int:
        return int(sum(param.size for param in self.parameters()))

    def state_dict(self) -> dict:
        return {name: param.data for name, param in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            raise ShapeMismatch(f'Parámetros distintos. Faltan: {missing}. Sobran: {unexpected}')
        for name, param in own.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ShapeMismatch(f'{name}: forma {value.shape}, esperada {param.shape}')
            param.data = value.astype(param.dtype, copy=True)
        return self

    def astype(self, dtype):
        """Cambia la precisión de todos los parámetros (float64 para verificar)."""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            if param.grad is not None:
                param.grad = param.grad.astype(dtype)
        return self


# =============================================================================
# CAPAS
# =============================================================================

class Linear(Module):
    """y = x·W + b, con W inicializada Xavier-uniforme."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias=True):
        limit = np.sqrt(6.0 / (in_features + out_features))
        self.weight = Parameter(rng.uniform(-limit, limit, (in_features, out_features)).astype(np.float32))
        self.bias = Parameter(np.zeros(out_features, dtype=np.float32)) if bias else None

    def __call__(self, x) -> Tensor:
        out = ops.matmul(x, self.weight)
        return out if self.bias is None else out + self.bias


class LayerNorm(Module):

    def __init__(self, dim: int, eps=1e-5):
        self.gamma = Parameter(np.ones(dim, dtype=np.float32))
        self.beta = Parameter(np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    """Tabla [V×d]; la fila padding_idx queda fijada a cero."""

    def __init__(self, num_embeddings: int, dim: int, rng: np.random.Generator, padding_idx=0):
        table = rng.normal(0.0, dim ** -0.5, (num_embeddings, dim)).astype(np.float32)
        if padding_idx is not None:
            table[padding_idx] = 0.0
        self.table = Parameter(table)
        self.padding_idx = padding_idx

    def __call__(self, ids) -> Tensor:
        return ops.embedding_lookup(self.table, ids, self.padding_idx)

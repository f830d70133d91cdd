"""
===============================================================================
ARCHIVO: apps/numcore/tensor.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Tensor denso sobre numpy con diferenciación automática en modo reverso.
    Cada operación registra sus padres y una función de retropropagación;
    backward() recorre el grafo en orden topológico inverso.

FUNCIONES PRINCIPALES:
    - Tensor: array + grad + grafo
    - Parameter: Tensor entrenable (lo recoge Module.named_parameters)
    - backward: retropropagación desde una pérdida escalar
    - no_grad: contexto de inferencia (no se construye grafo)
    - precision: contexto para trabajar en float64 (verificación de gradientes)

CONCURRENCIA:
    El modo de gradiente y la precisión por defecto son locales al hilo.
    Varios hilos pueden evaluar en inferencia un mismo conjunto de parámetros
    congelados; backward de un grafo queda confinado a su hilo.

===============================================================================
"""

import threading
from contextlib import contextmanager

import numpy as np

from .exceptions import NonScalarLoss

_state = threading.local()

DTYPES = {
    'float32': np.float32,
    'float64': np.float64,
}


# =============================================================================
# MODO DE GRADIENTE Y PRECISIÓN
# =============================================================================

def is_grad_enabled() -> bool:
    return getattr(_state, 'grad_enabled', True)


@contextmanager
def no_grad():
    """Desactiva la construcción del grafo dentro del bloque."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def default_dtype():
    return getattr(_state, 'dtype', np.float32)


@contextmanager
def precision(name: str):
    """
    Cambia la precisión por defecto de los tensores creados en el bloque.

    EJEMPLO:
        >>> with precision('float64'):
        ...     x = Tensor([1.0, 2.0], requires_grad=True)
        >>> x.dtype
        dtype('float64')
    """
    previous = default_dtype()
    _state.dtype = DTYPES[name]
    try:
        yield
    finally:
        _state.dtype = previous


def _as_array(data) -> np.ndarray:
    # Los arrays float conservan su precisión; el resto adopta la del contexto.
    if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
        return data
    return np.asarray(data, dtype=default_dtype())


# =============================================================================
# TENSOR
# =============================================================================

class Tensor:
    """
    Array n-dimensional que participa en el grafo de diferenciación.

    ATRIBUTOS:
        data: np.ndarray float32 (float64 dentro de precision('float64'))
        grad: acumulador del mismo tamaño; existe en hojas entrenables y en
              los nodos intermedios tras backward()
        requires_grad: si el tensor está en el camino de diferenciación
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, *, _parents=(), _backward=None, name=None):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = _backward
        self.name = name
        # Hojas entrenables: acumulador a cero desde el principio
        self.grad = np.zeros_like(self.data) if self.requires_grad and not self._parents else None

    # -------------------------------------------------------------------------
    # Propiedades
    # -------------------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ', requires_grad=True' if self.requires_grad else ''
        return f'Tensor(shape={self.shape}, dtype={self.dtype}{flag})'

    def __len__(self):
        return self.shape[0]

    # -------------------------------------------------------------------------
    # Operadores (delegan en ops para no duplicar la retropropagación)
    # -------------------------------------------------------------------------

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)


class Parameter(Tensor):
    """Tensor entrenable registrado por Module.named_parameters()."""

    def __init__(self, data, requires_grad=True, name=None):
        super().__init__(data, requires_grad=requires_grad, name=name)


# =============================================================================
# RETROPROPAGACIÓN
# =============================================================================

def _topological_order(root: Tensor) -> list:
    """Orden topológico iterativo (sin recursión) de los nodos con gradiente."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """
    Retropropaga desde una pérdida escalar.

    Las hojas entrenables ACUMULAN su gradiente (dos llamadas sin zero_grad
    suman). Los nodos intermedios reciben el gradiente de esta llamada.

    EXCEPCIONES:
        NonScalarLoss: si loss no tiene exactamente un elemento.
    """
    if loss.size != 1:
        raise NonScalarLoss(f'La pérdida debe ser escalar, forma recibida {loss.shape}')
    if not loss.requires_grad:
        return

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        node.grad = grad
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

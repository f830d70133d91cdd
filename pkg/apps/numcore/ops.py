"""
===============================================================================
ARCHIVO: apps/numcore/ops.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Operaciones diferenciables sobre Tensor. Cada función calcula el
    resultado con numpy y, si algún padre requiere gradiente, registra la
    función que reparte el gradiente entrante entre sus padres.

FUNCIONES PRINCIPALES:
    - Elementales: add, sub, mul, div, neg, exp, log, relu, gelu
    - Álgebra: matmul, sum, mean, reshape, transpose, index, concat
    - Red neuronal: softmax, log_softmax, layer_norm, dropout,
      embedding_lookup, cross_entropy

CONVENCIONES:
    - Broadcasting estilo numpy; el gradiente se reduce a la forma original
      con _unbroadcast.
    - Las constantes (arrays, escalares) se envuelven sin gradiente.
    - MASK_VALUE es finito para que softmax pueda validar su entrada.

===============================================================================
"""

import math

import numpy as np

from .exceptions import BadTarget, BadTokenId, NonFiniteInput
from .tensor import Tensor, is_grad_enabled

MASK_VALUE = -1e9


# =============================================================================
# FUNCIONES AUXILIARES
# =============================================================================

def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data, parents, backward_fn) -> Tensor:
    """Crea la salida y registra el grafo solo si hace falta."""
    if is_grad_enabled() and any(parent.requires_grad for parent in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Suma el gradiente sobre los ejes que el broadcasting expandió."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b):
    """Envuelve constantes con la precisión del otro operando."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


# =============================================================================
# ELEMENTALES
# =============================================================================

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data + b.data

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _result(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data - b.data

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _result(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data * b.data

    def backward(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return _result(out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data

    def backward(grad):
        grad_a = grad / b.data
        grad_b = -grad * a.data / (b.data * b.data)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result(out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda grad: (-grad,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda grad: (grad * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda grad: (grad / a.data,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    positive = a.data > 0
    return _result(a.data * positive, (a,), lambda grad: (grad * positive,))


_GELU_K = math.sqrt(2.0 / math.pi)


def gelu(a) -> Tensor:
    """GELU con la aproximación tanh."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_K * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(grad):
        d_inner = _GELU_K * (1.0 + 3 * 0.044715 * x ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
        return (grad * local,)

    return _result(out, (a,), backward)


# =============================================================================
# ÁLGEBRA Y FORMA
# =============================================================================

def matmul(a, b) -> Tensor:
    """Producto matricial con broadcasting sobre los ejes iniciales (≥ 2D)."""
    a, b = _pair(a, b)
    out = np.matmul(a.data, b.data)

    def backward(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad) if b.requires_grad else None
        return (
            None if grad_a is None else _unbroadcast(grad_a, a.shape),
            None if grad_b is None else _unbroadcast(grad_b, b.shape),
        )

    return _result(out, (a, b), backward)


def sum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)

    return _result(out, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.size / max(out.size, 1)

    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad / count, a.shape).copy(),)

    return _result(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda grad: (grad.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inverse = None if axes is None else np.argsort(axes)
    return _result(out, (a,), lambda grad: (np.transpose(grad, inverse),))


def index(a, key) -> Tensor:
    """Indexado numpy (slices, enteros, arrays); el gradiente se dispersa."""
    a = as_tensor(a)
    out = a.data[key]

    def backward(grad):
        full = np.zeros_like(a.data)
        np.add.at(full, key, grad)
        return (full,)

    return _result(np.array(out), (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(grad):
        return tuple(np.split(grad, bounds, axis=axis))

    return _result(out, tuple(tensors), backward)


# =============================================================================
# RED NEURONAL
# =============================================================================

def _check_finite(x: np.ndarray, op_name: str):
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f'{op_name}: la entrada contiene valores no finitos')


def softmax(x, axis=-1) -> Tensor:
    """
    Softmax estabilizada restando el máximo de cada corte.

    EXCEPCIONES:
        NonFiniteInput: si la entrada tiene NaN o ±inf.

    EJEMPLO:
        >>> softmax(Tensor([1.0, 2.0, 3.0])).data
        array([0.09003057, 0.24472848, 0.66524094], dtype=float32)
    """
    x = as_tensor(x)
    _check_finite(x.data, 'softmax')
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(grad):
        return (out * (grad - np.sum(grad * out, axis=axis, keepdims=True)),)

    return _result(out, (x,), backward)


def log_softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    _check_finite(x.data, 'log_softmax')
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - log_norm

    def backward(grad):
        probs = np.exp(out)
        return (grad - probs * np.sum(grad, axis=axis, keepdims=True),)

    return _result(out, (x,), backward)


def layer_norm(x, gamma, beta, eps=1e-5) -> Tensor:
    """Normalización sobre el último eje con escala y desplazamiento."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std
    out = x_hat * gamma.data + beta.data
    n = x.shape[-1]

    def backward(grad):
        d_hat = grad * gamma.data
        grad_x = (inv_std / n) * (
            n * d_hat
            - d_hat.sum(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=-1, keepdims=True)
        )
        reduce_axes = tuple(range(grad.ndim - 1))
        grad_gamma = (grad * x_hat).sum(axis=reduce_axes)
        grad_beta = grad.sum(axis=reduce_axes)
        return grad_x, grad_gamma, grad_beta

    return _result(out, (x, gamma, beta), backward)


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """
    Dropout invertido: escala en entrenamiento, identidad en inferencia.
    En inferencia devuelve el mismo objeto de entrada.
    """
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda grad: (grad * keep,))


def embedding_lookup(table, ids, padding_idx=None) -> Tensor:
    """
    Recoge filas de la tabla [V×d] para cada id.

    La fila de padding_idx sale siempre a cero y nunca recibe gradiente.

    EXCEPCIONES:
        BadTokenId: si algún id es negativo o ≥ V.
    """
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    vocab_size = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise BadTokenId(f'Id fuera de rango [0, {vocab_size}): {ids.min()}..{ids.max()}')
    out = table.data[ids]
    keep = np.ones(ids.shape, dtype=bool) if padding_idx is None else ids != padding_idx
    if padding_idx is not None:
        out = out * keep[..., None]

    def backward(grad):
        full = np.zeros_like(table.data)
        np.add.at(full, ids[keep], grad[keep])
        return (full,)

    return _result(out, (table,), backward)


def cross_entropy(x, target, *, from_logits=True, mask=None) -> Tensor:
    """
    Entropía cruzada −log p(target) sobre el último eje.

    PARÁMETROS:
        x: logits (from_logits=True) o probabilidades (from_logits=False),
           forma [..., C]
        target: índices enteros de forma x.shape[:-1] (o escalar)
        mask: booleanos opcionales de la misma forma que target; las
              posiciones False no cuentan

    RETORNA:
        Tensor escalar: media sobre las posiciones válidas.

    EXCEPCIONES:
        BadTarget: si algún índice queda fuera de [0, C).

    EJEMPLOS:
        >>> cross_entropy(Tensor([0.7, 0.3]), 0, from_logits=False).item()
        0.3566749...
    """
    x = as_tensor(x)
    target = np.asarray(target, dtype=np.int64)
    n_classes = x.shape[-1]
    if target.shape != x.shape[:-1]:
        raise BadTarget(f'Forma de target {target.shape} incompatible con {x.shape}')
    if target.size and (target.min() < 0 or target.max() >= n_classes):
        raise BadTarget(f'Target fuera de rango [0, {n_classes})')

    valid = np.ones(target.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = max(int(valid.sum()), 1)
    weights = valid.astype(x.dtype) / count
    one_hot = np.zeros_like(x.data)
    np.put_along_axis(one_hot, target[..., None], 1.0, axis=-1)

    if from_logits:
        _check_finite(x.data, 'cross_entropy')
        shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
        log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
        picked = np.take_along_axis(log_probs, target[..., None], axis=-1)[..., 0]
        loss = -(picked * weights).sum()

        def backward(grad):
            probs = np.exp(log_probs)
            return (grad * (probs - one_hot) * weights[..., None],)
    else:
        picked = np.take_along_axis(x.data, target[..., None], axis=-1)[..., 0]
        safe = np.maximum(picked, np.finfo(x.dtype).tiny)
        loss = -(np.log(safe) * weights).sum()

        def backward(grad):
            return (grad * -one_hot / safe[..., None] * weights[..., None],)

    return _result(np.asarray(loss, dtype=x.dtype), (x,), backward)

"""
Verificación de gradientes por diferencias finitas centrales.

Se usa en float64 (precision('float64')) para que la tolerancia relativa
1e-4 tenga sentido.
"""

import numpy as np

from .tensor import Tensor


def numerical_gradient(fn, tensor: Tensor, eps=1e-6) -> np.ndarray:
    """d fn() / d tensor por diferencias centrales, perturbando tensor.data in-place."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        plus = fn().item()
        flat[i] = original - eps
        minus = fn().item()
        flat[i] = original
        out[i] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denominator = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denominator == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denominator)


def check_gradients(fn, inputs, eps=1e-6) -> float:
    """
    Compara el gradiente analítico con el numérico para cada entrada.

    PARÁMETROS:
        fn: callable sin argumentos que devuelve la pérdida escalar
        inputs: tensores hoja con requires_grad=True

    RETORNA:
        float: el mayor error relativo entre todas las entradas.
    """
    for tensor in inputs:
        tensor.zero_grad()
    fn().backward()
    analytic = [tensor.grad.copy() for tensor in inputs]
    worst = 0.0
    for tensor, grad in zip(inputs, analytic):
        worst = max(worst, relative_error(grad, numerical_gradient(fn, tensor, eps)))
    return worst

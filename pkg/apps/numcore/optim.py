"""
===============================================================================
ARCHIVO: apps/numcore/optim.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Optimizador Adam con corrección de sesgo y recorte de la norma global
    del gradiente.

FUNCIONES PRINCIPALES:
    - AdamState: contador de pasos, momentos e hiperparámetros
    - adam_step: aplica un paso sobre listas (parámetros, gradientes)
    - Adam: envoltorio que usa param.grad
    - clip_grad_norm: recorte por norma global

VALORES POR DEFECTO:
    β1=0.9, β2=0.999, ε=1e-8, lr=0.00004 (valores por defecto del proyecto).

===============================================================================
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeMismatch


@dataclass
class AdamState:
    lr: float = 0.00004
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state: AdamState):
    """
    Aplica un paso de Adam con corrección de sesgo, in-place.

    PARÁMETROS:
        params: lista de Tensor (se actualiza .data)
        grads: lista de np.ndarray con la misma forma que cada parámetro
        state: AdamState; los momentos se crean en el primer paso

    RETORNA:
        list: los mismos parámetros, ya actualizados.

    EXCEPCIONES:
        ShapeMismatch: gradiente o momento con forma distinta al parámetro.

    EJEMPLO:
        Parámetro escalar 0, g=1, lr=0.1, primer paso → ≈ −0.1
    """
    if len(params) != len(grads):
        raise ShapeMismatch(f'{len(params)} parámetros y {len(grads)} gradientes')
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step

    for param, grad, m, v in zip(params, grads, state.m, state.v):
        if grad.shape != param.shape or m.shape != param.shape:
            raise ShapeMismatch(f'Gradiente {grad.shape} / momento {m.shape} vs parámetro {param.shape}')
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)
    return params


def clip_grad_norm(params, max_norm: float) -> float:
    """Escala los gradientes para que su norma global no supere max_norm."""
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


class Adam:
    """Adam sobre los gradientes acumulados en cada parámetro."""

    def __init__(self, params, lr=0.00004, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state)

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()

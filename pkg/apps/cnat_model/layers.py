"""
===============================================================================
ARCHIVO: apps/cnat_model/layers.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Capas del transformer C-NAT.

CLASES PRINCIPALES:
    - MultiHeadAttention: atención multi-cabeza; guarda last_weights
    - FeedForward: Linear → ReLU → Linear
    - EncoderLayer: autoatención bidireccional + FFN
    - DecoderLayer: autoatención (máscara del modo) → atención posicional
      → atención cruzada sobre H → FFN

CONVENCIONES:
    - Tensores [B, T, d]; cabezas [B, h, T, d_head].
    - Post-LN: cada subcapa hace x = LayerNorm(x + Dropout(subcapa(x))).
    - Atención posicional: consultas y claves salen de la codificación
      posicional, los valores de los estados de la subcapa anterior. Sus
      pesos dependen solo de T, de la máscara y de los parámetros.
    - DecoderLayer.step() procesa una única posición nueva con caché de
      claves/valores (decodificación autorregresiva incremental); produce
      lo mismo que __call__ con máscara causal.

===============================================================================
"""

import math

import numpy as np

from apps.numcore import ops
from apps.numcore.nn import LayerNorm, Linear, Module
from apps.numcore.tensor import Tensor


def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """Codificación posicional fija [length × d_model]."""
    positions = np.arange(length)[:, None]
    rates = np.exp(-math.log(10000.0) * (np.arange(0, d_model, 2) / d_model))
    table = np.zeros((length, d_model), dtype=np.float32)
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: d_model // 2])
    return table


# =============================================================================
# ATENCIÓN
# =============================================================================

class MultiHeadAttention(Module):

    def __init__(self, d_model: int, n_heads: int, rng, dropout=0.0, dropout_rng=None):
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.query = Linear(d_model, d_model, rng)
        self.key = Linear(d_model, d_model, rng)
        self.value = Linear(d_model, d_model, rng)
        self.output = Linear(d_model, d_model, rng)
        self.dropout = dropout
        self.dropout_rng = dropout_rng
        self.last_weights = None

    def split_heads(self, x) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def merge_heads(self, x) -> Tensor:
        b, h, t, d_head = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, h * d_head)

    def attend(self, q, k, v, bias=None) -> Tensor:
        """Atención sobre cabezas ya proyectadas; devuelve [B, Tq, d]."""
        scores = ops.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(self.d_head))
        if bias is not None:
            scores = scores + bias
        weights = ops.softmax(scores, axis=-1)
        self.last_weights = weights.data
        weights = ops.dropout(weights, self.dropout, self.dropout_rng, self.training)
        return self.output(self.merge_heads(ops.matmul(weights, v)))

    def __call__(self, query_in, key_in, value_in, bias=None) -> Tensor:
        q = self.split_heads(self.query(query_in))
        k = self.split_heads(self.key(key_in))
        v = self.split_heads(self.value(value_in))
        return self.attend(q, k, v, bias)


class FeedForward(Module):

    def __init__(self, d_model: int, ffn_dim: int, rng, dropout=0.0, dropout_rng=None):
        self.inner = Linear(d_model, ffn_dim, rng)
        self.outer = Linear(ffn_dim, d_model, rng)
        self.dropout = dropout
        self.dropout_rng = dropout_rng

    def __call__(self, x) -> Tensor:
        hidden = ops.dropout(ops.relu(self.inner(x)), self.dropout, self.dropout_rng, self.training)
        return self.outer(hidden)


class _Sublayers(Module):
    """Residual + dropout + LayerNorm comunes a codificador y decodificador."""

    def residual(self, norm, x, sublayer_out) -> Tensor:
        return norm(x + ops.dropout(sublayer_out, self.dropout, self.dropout_rng, self.training))


# =============================================================================
# CAPAS DEL CODIFICADOR Y DEL DECODIFICADOR
# =============================================================================

class EncoderLayer(_Sublayers):

    def __init__(self, d_model, n_heads, ffn_dim, rng, dropout=0.0, dropout_rng=None):
        self.attention = MultiHeadAttention(d_model, n_heads, rng, dropout, dropout_rng)
        self.norm_attention = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, ffn_dim, rng, dropout, dropout_rng)
        self.norm_ffn = LayerNorm(d_model)
        self.dropout = dropout
        self.dropout_rng = dropout_rng

    def __call__(self, x, bias=None) -> Tensor:
        x = self.residual(self.norm_attention, x, self.attention(x, x, x, bias))
        return self.residual(self.norm_ffn, x, self.ffn(x))


class DecoderLayer(_Sublayers):

    def __init__(self, d_model, n_heads, ffn_dim, rng, dropout=0.0, dropout_rng=None, cross_attention=True):
        self.self_attention = MultiHeadAttention(d_model, n_heads, rng, dropout, dropout_rng)
        self.norm_self = LayerNorm(d_model)
        self.positional_attention = MultiHeadAttention(d_model, n_heads, rng, dropout, dropout_rng)
        self.norm_positional = LayerNorm(d_model)
        if cross_attention:
            self.cross_attention = MultiHeadAttention(d_model, n_heads, rng, dropout, dropout_rng)
            self.norm_cross = LayerNorm(d_model)
        else:
            self.cross_attention = None
        self.ffn = FeedForward(d_model, ffn_dim, rng, dropout, dropout_rng)
        self.norm_ffn = LayerNorm(d_model)
        self.dropout = dropout
        self.dropout_rng = dropout_rng

    def positional(self, hidden, pe, bias=None) -> Tensor:
        """Atención posicional: Q y K desde la codificación posicional, V desde hidden."""
        return self.positional_attention(pe, pe, hidden, bias)

    def __call__(self, y, pe, memory=None, self_bias=None, memory_bias=None) -> Tensor:
        y = self.residual(self.norm_self, y, self.self_attention(y, y, y, self_bias))
        y = self.residual(self.norm_positional, y, self.positional(y, pe, self_bias))
        if self.cross_attention is not None:
            y = self.residual(self.norm_cross, y, self.cross_attention(y, memory, memory, memory_bias))
        return self.residual(self.norm_ffn, y, self.ffn(y))

    def step(self, y_t, t: int, pe, memory, cache: dict) -> Tensor:
        """
        Una posición nueva (y_t: [1, 1, d]) en modo causal, sin gradiente.

        'cache' guarda claves/valores de las posiciones < t de esta capa y
        las proyecciones fijas (PE y memoria del codificador).
        """
        sa = self.self_attention
        cache['k'] = _append(cache.get('k'), sa.split_heads(sa.key(y_t)))
        cache['v'] = _append(cache.get('v'), sa.split_heads(sa.value(y_t)))
        h = self.norm_self(y_t + sa.attend(sa.split_heads(sa.query(y_t)), cache['k'], cache['v']))

        pa = self.positional_attention
        if 'pk' not in cache:
            cache['pk'] = pa.split_heads(pa.key(pe))
        cache['pv'] = _append(cache.get('pv'), pa.split_heads(pa.value(h)))
        q = pa.split_heads(pa.query(pe[:, t:t + 1]))
        h = self.norm_positional(h + pa.attend(q, cache['pk'][:, :, :t + 1], cache['pv']))

        if self.cross_attention is not None:
            ca = self.cross_attention
            if 'ck' not in cache:
                cache['ck'] = ca.split_heads(ca.key(memory))
                cache['cv'] = ca.split_heads(ca.value(memory))
            h = self.norm_cross(h + ca.attend(ca.split_heads(ca.query(h)), cache['ck'], cache['cv']))
        return self.norm_ffn(h + self.ffn(h))


def _append(cached, new) -> Tensor:
    if cached is None:
        return new
    return Tensor(np.concatenate([cached.data, new.data], axis=2))

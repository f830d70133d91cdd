"""
===============================================================================
ARCHIVO: apps/cnat_model/model.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Red C-NAT: codificador, decodificador no autorregresivo, predictor de
    fertilidad, predictor de explicación y predictor de etiqueta. La misma
    clase, con decoder_only=True y modo AR, es el LM discriminador.

FLUJO DE GENERACIÓN (NAR):
    1. encode(x)             → H [S×d]
    2. predict_fertility(H)  → F (argmax por posición, 0..F_max)
    3. copy_by_fertility     → y = x_s repetido f_s veces, |y| = ΣF
    4. decode(y, H)          → H_d [T×d] en UNA pasada
    5. predict_label(H_d)    → MLP por posición + media + softmax
    6. predict_explanation   → softmax(h^d_t) por posición (si explain)

FLUJO AUTORREGRESIVO (ablación sin NAR):
    BOS → un token por pasada del decodificador (caché incremental) hasta
    EOS o T_max; la etiqueta sale de los estados finales.

INSTRUMENTACIÓN:
    decoder_passes cuenta pasadas del decodificador; decoder_hooks recibe
    la longitud de cada pasada.

===============================================================================
"""

import copy
import math
import time
from dataclasses import dataclass

import numpy as np

from apps.appshell.vocab import BOS, EOS, PAD
from apps.numcore import ops
from apps.numcore.exceptions import (
    BadConfig, EmptyDecoderInput, EmptyInput, FertilityOverflow, LengthMismatch, LengthOverflow,
)
from apps.numcore.nn import Embedding, Linear, Module
from apps.numcore.tensor import Tensor, no_grad

from .config import ModelConfig, Mode
from .layers import DecoderLayer, EncoderLayer, sinusoidal_encoding
from .masks import attention_bias, build_self_attention_mask
from .output import GenerationOutput


# =============================================================================
# COPIA POR FERTILIDAD
# =============================================================================

def resolve_fertility(fertility, fertility_probs=None, max_length=None):
    """
    Ajusta una secuencia de fertilidades para inferencia.

    - ΣF = 0: la posición con mayor probabilidad de fertilidad 1 pasa a 1.
    - ΣF > max_length: se recorta desde la derecha hasta ΣF = max_length.

    RETORNA:
        (F, truncated)
    """
    fertility = np.array(fertility, dtype=np.int64)
    if fertility.sum() == 0 and fertility.size:
        scores = fertility_probs[:, 1] if fertility_probs is not None else np.zeros(fertility.size)
        fertility[int(np.argmax(scores))] = 1
    truncated = False
    if max_length is not None and fertility.sum() > max_length:
        truncated = True
        excess = int(fertility.sum() - max_length)
        for i in range(fertility.size - 1, -1, -1):
            cut = min(int(fertility[i]), excess)
            fertility[i] -= cut
            excess -= cut
            if not excess:
                break
    return fertility, truncated


def copy_by_fertility(x, fertility, strict=True, fertility_probs=None) -> np.ndarray:
    """
    y = concatenación de cada x_s repetido f_s veces.

    EJEMPLOS:
        >>> copy_by_fertility(['a', 'b'], [2, 1])
        array(['a', 'a', 'b'], dtype='<U1')
        >>> copy_by_fertility(['a', 'b', 'c'], [2, 0, 1])
        array(['a', 'a', 'c'], dtype='<U1')

    EXCEPCIONES:
        LengthMismatch: |F| ≠ |x|
        FertilityOverflow: alguna fertilidad negativa
        EmptyDecoderInput: ΣF = 0 en modo estricto
    """
    x = np.asarray(x)
    fertility = np.asarray(fertility, dtype=np.int64)
    if fertility.shape != x.shape[:1]:
        raise LengthMismatch(f'|F|={fertility.shape[0] if fertility.ndim else 0} y |x|={len(x)}')
    if (fertility < 0).any():
        raise FertilityOverflow('Fertilidad negativa')
    if fertility.sum() == 0:
        if strict:
            raise EmptyDecoderInput('ΣF = 0: el decodificador no tiene entrada')
        fertility, _ = resolve_fertility(fertility, fertility_probs)
    return np.repeat(x, fertility, axis=0)


def _as_ids(x) -> np.ndarray:
    ids = np.asarray(x, dtype=np.int64).reshape(-1)
    if ids.size == 0:
        raise EmptyInput('La secuencia de entrada está vacía')
    return ids


@dataclass
class ForwardOutput:
    hidden: Tensor
    decoder_hidden: Tensor
    fertility_logits: Tensor
    explanation_logits: Tensor
    label_probs: Tensor
    src_mask: np.ndarray
    dec_mask: np.ndarray


# =============================================================================
# MODELO
# =============================================================================

class CnatModel(Module):
    """
    Parámetros θ y arquitectura. El número y el orden de los parámetros son
    función pura de la configuración.
    """

    def __init__(self, config: ModelConfig, seed=0):
        rng = np.random.default_rng(seed)
        dropout_rng = np.random.default_rng([seed, 1])
        d = config.d_model
        self.config = config
        self.embedding = Embedding(config.vocab_size, d, rng, padding_idx=PAD)
        encoder_layers = 0 if config.decoder_only else config.encoder_layers
        self.encoder = [
            EncoderLayer(d, config.n_heads, config.ffn_dim, rng, config.dropout, dropout_rng)
            for _ in range(encoder_layers)
        ]
        self.decoder = [
            DecoderLayer(d, config.n_heads, config.ffn_dim, rng, config.dropout, dropout_rng,
                         cross_attention=not config.decoder_only)
            for _ in range(config.decoder_layers)
        ]
        if not config.decoder_only:
            self.fertility_head = Linear(d, config.max_fertility + 1, rng)
            self.label_hidden = Linear(d, d, rng)
            self.label_output = Linear(d, config.num_labels, rng)
        self.explanation_head = Linear(d, config.vocab_size, rng)

        self.dropout_rng = dropout_rng
        self.pe = sinusoidal_encoding(config.max_length, d)
        self.decoder_passes = 0
        self.decoder_hooks = []

    def with_mode(self, mode) -> 'CnatModel':
        """Vista del mismo modelo (parámetros compartidos) en otro modo de decodificación."""
        clone = copy.copy(self)
        clone.config = self.config.with_mode(mode)
        clone.decoder_passes = 0
        clone.decoder_hooks = []
        return clone

    def _count_pass(self, length: int):
        self.decoder_passes += 1
        for hook in self.decoder_hooks:
            hook(length)

    # -------------------------------------------------------------------------
    # Núcleo por lotes [B, T]
    # -------------------------------------------------------------------------

    def embed(self, ids=None, vectors=None, offset=0) -> Tensor:
        """Embedding escalado + codificación posicional; 'vectors' sustituye a la tabla (embedding suave)."""
        if vectors is None:
            vectors = self.embedding(ids)
        length = vectors.shape[1]
        x = vectors * math.sqrt(self.config.d_model) + self.pe[None, offset:offset + length]
        return ops.dropout(x, self.config.dropout, self.dropout_rng, self.training)

    def encode_batch(self, src_ids, src_mask=None) -> Tensor:
        src_ids = np.asarray(src_ids, dtype=np.int64)
        if src_ids.ndim != 2 or src_ids.shape[1] == 0:
            raise EmptyInput('La secuencia de entrada está vacía')
        if src_ids.shape[1] > self.config.max_length:
            raise LengthOverflow(f'Entrada de {src_ids.shape[1]} tokens > T_max={self.config.max_length}')
        src_mask = src_ids != PAD if src_mask is None else np.asarray(src_mask, dtype=bool)
        if not src_mask.any(axis=1).all():
            raise EmptyInput('Alguna secuencia de entrada del lote está vacía')
        bias = attention_bias(key_mask=src_mask)
        hidden = self.embed(src_ids)
        for layer in self.encoder:
            hidden = layer(hidden, bias)
        return hidden

    def decode_batch(self, dec_ids=None, dec_mask=None, memory=None, src_mask=None, vectors=None) -> Tensor:
        if vectors is None:
            dec_ids = np.asarray(dec_ids, dtype=np.int64)
            batch, length = dec_ids.shape
        else:
            batch, length = vectors.shape[0], vectors.shape[1]
        if length == 0:
            raise EmptyDecoderInput('Entrada del decodificador vacía')
        if length > self.config.max_length:
            raise LengthOverflow(f'Decodificación de {length} posiciones > T_max={self.config.max_length}')
        if dec_mask is None:
            dec_mask = dec_ids != PAD if vectors is None else np.ones((batch, length), dtype=bool)

        self_bias = attention_bias(build_self_attention_mask(length, self.config.mode), dec_mask)
        memory_bias = attention_bias(key_mask=src_mask) if memory is not None and src_mask is not None else None
        pe = Tensor(self.pe[None, :length])
        hidden = self.embed(dec_ids, vectors)
        for layer in self.decoder:
            hidden = layer(hidden, pe, memory, self_bias, memory_bias)
        self._count_pass(length)
        return hidden

    def fertility_logits(self, hidden) -> Tensor:
        return self.fertility_head(hidden)

    def explanation_logits(self, decoder_hidden) -> Tensor:
        return self.explanation_head(decoder_hidden)

    def label_distribution(self, decoder_hidden, dec_mask=None) -> Tensor:
        """MLP por posición → media sobre posiciones válidas → softmax. [B, T, d] → [B, C]."""
        scores = self.label_output(ops.relu(self.label_hidden(decoder_hidden)))
        if dec_mask is None:
            pooled = scores.mean(axis=1)
        else:
            weights = np.asarray(dec_mask, dtype=scores.dtype)[..., None]
            pooled = (scores * weights).sum(axis=1) / weights.sum(axis=1)
        return ops.softmax(pooled, axis=-1)

    def forward(self, src_ids, dec_ids, src_mask=None, dec_mask=None) -> ForwardOutput:
        """Pasada de entrenamiento con entrada del decodificador forzada (teacher forcing)."""
        src_ids = np.asarray(src_ids, dtype=np.int64)
        dec_ids = np.asarray(dec_ids, dtype=np.int64)
        src_mask = src_ids != PAD if src_mask is None else np.asarray(src_mask, dtype=bool)
        dec_mask = dec_ids != PAD if dec_mask is None else np.asarray(dec_mask, dtype=bool)
        hidden = self.encode_batch(src_ids, src_mask)
        decoder_hidden = self.decode_batch(dec_ids, dec_mask, hidden, src_mask)
        return ForwardOutput(
            hidden=hidden,
            decoder_hidden=decoder_hidden,
            fertility_logits=self.fertility_logits(hidden),
            explanation_logits=self.explanation_logits(decoder_hidden),
            label_probs=self.label_distribution(decoder_hidden, dec_mask),
            src_mask=src_mask,
            dec_mask=dec_mask,
        )

    # -------------------------------------------------------------------------
    # Operaciones sobre una secuencia
    # -------------------------------------------------------------------------

    def encode(self, x) -> Tensor:
        """x: ids [S] → H [S×d]."""
        return self.encode_batch(_as_ids(x)[None])[0]

    def predict_fertility(self, hidden):
        """H [S×d] → (F argmax [S], logits [S×(F_max+1)])."""
        logits = self.fertility_logits(hidden)
        return np.argmax(logits.data, axis=-1), logits

    def decode(self, y, hidden=None) -> Tensor:
        """y: ids [T], H [S×d] → H_d [T×d]."""
        y = np.asarray(y, dtype=np.int64).reshape(1, -1)
        memory = None if hidden is None else hidden.reshape(1, *hidden.shape)
        return self.decode_batch(y, np.ones(y.shape, dtype=bool), memory)[0]

    def predict_explanation(self, decoder_hidden) -> Tensor:
        """H_d [T×d] → p_E [T×V]."""
        return ops.softmax(self.explanation_logits(decoder_hidden), axis=-1)

    def predict_label(self, decoder_hidden) -> Tensor:
        """H_d [T×d] → distribución [C]."""
        return self.label_distribution(decoder_hidden.reshape(1, *decoder_hidden.shape))[0]

    # -------------------------------------------------------------------------
    # Generación
    # -------------------------------------------------------------------------

    def generate(self, x, explain=True, fertility=None) -> GenerationOutput:
        """
        Generación NAR: una sola pasada del decodificador.

        Con explain=False se omite la proyección al vocabulario (camino de
        NE-Acc); la etiqueta es idéntica a la de explain=True.
        """
        if self.config.decoder_only or self.config.is_autoregressive:
            raise BadConfig('generate() requiere un modelo C-NAT en modo NAR')
        ids = _as_ids(x)
        with no_grad(), self.inference():
            hidden = self.encode(ids)
            predicted, logits = self.predict_fertility(hidden)
            probs = ops.softmax(logits, axis=-1).data
            requested = predicted if fertility is None else fertility
            fert, truncated = resolve_fertility(requested, probs, self.config.max_length)
            y = copy_by_fertility(ids, fert)

            start = time.perf_counter_ns()
            decoder_hidden = self.decode(y, hidden)
            label_probs = self.predict_label(decoder_hidden).data
            tokens, token_probs = [], None
            if explain:
                token_probs = self.predict_explanation(decoder_hidden).data
                tokens = [int(t) for t in token_probs.argmax(axis=-1)]
            latency = time.perf_counter_ns() - start

        return GenerationOutput(
            label=int(np.argmax(label_probs)),
            label_probs=label_probs,
            tokens=tokens,
            token_probs=token_probs,
            fertility=fert,
            latency_ns=latency,
            decoder_passes=1,
            truncated=truncated,
        )

    def generate_autoregressive(self, x, max_length=None, ignore_eos=False) -> GenerationOutput:
        """
        Generación AR: BOS y un token por pasada hasta EOS o T_max.

        EOS queda enmascarado en el primer paso (explicación no vacía) y en
        todos si ignore_eos=True (benchmark a longitud fija). Si se alcanza
        el límite sin EOS, truncated=True.

        decoder_passes cuenta también la pasada que produce EOS: con T tokens
        emitidos son T + 1 pasadas si termina en EOS y T si queda truncada.
        """
        if self.config.decoder_only or not self.config.is_autoregressive:
            raise BadConfig('generate_autoregressive() requiere un modelo C-NAT en modo AR')
        ids = _as_ids(x)
        limit = min(max_length or self.config.max_length, self.config.max_length)
        with no_grad(), self.inference():
            hidden = self.encode(ids)
            memory = hidden.reshape(1, *hidden.shape)
            pe = Tensor(self.pe[None])

            start = time.perf_counter_ns()
            caches = [{} for _ in self.decoder]
            tokens, dists, states = [], [], []
            current, truncated, passes = BOS, True, 0
            for t in range(limit):
                state = self.embed(np.array([[current]]), offset=t)
                for layer, cache in zip(self.decoder, caches):
                    state = layer.step(state, t, pe, memory, cache)
                passes += 1
                self._count_pass(t + 1)
                states.append(state)

                probs = ops.softmax(self.explanation_logits(state), axis=-1).data[0, 0]
                choice = probs.copy()
                if t == 0 or ignore_eos:
                    choice[EOS] = -1.0
                token = int(np.argmax(choice))
                if token == EOS:
                    truncated = False
                    break
                tokens.append(token)
                dists.append(probs)
                current = token

            final = Tensor(np.concatenate([s.data for s in states], axis=1))
            label_probs = self.label_distribution(final).data[0]
            latency = time.perf_counter_ns() - start

        return GenerationOutput(
            label=int(np.argmax(label_probs)),
            label_probs=label_probs,
            tokens=tokens,
            token_probs=np.stack(dists) if dists else np.zeros((0, self.config.vocab_size), dtype=np.float32),
            fertility=np.zeros(0, dtype=np.int64),
            latency_ns=latency,
            decoder_passes=passes,
            truncated=truncated,
        )

    def generate_any(self, x, explain=True) -> GenerationOutput:
        """Despacha según el modo configurado."""
        if self.config.mode == Mode.AR:
            return self.generate_autoregressive(x)
        return self.generate(x, explain=explain)

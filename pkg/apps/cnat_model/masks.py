"""
Máscaras de atención.

Las máscaras booleanas marcan las posiciones permitidas (True). Se
convierten en sesgos aditivos (0 / MASK_VALUE) antes del softmax.
"""

import numpy as np

from apps.numcore.ops import MASK_VALUE

from .config import Mode


def build_self_attention_mask(length: int, mode) -> np.ndarray:
    """
    Máscara [T×T] de autoatención del decodificador.

    NAR → todas las posiciones ven todas las posiciones (no causal).
    AR  → la posición t solo ve las posiciones ≤ t.
    """
    if length < 1:
        raise ValueError('length debe ser ≥ 1')
    if Mode(mode) == Mode.NAR:
        return np.ones((length, length), dtype=bool)
    return np.tril(np.ones((length, length), dtype=bool))


def attention_bias(mode_mask=None, key_mask=None, dtype=np.float32):
    """
    Sesgo aditivo combinado.

    PARÁMETROS:
        mode_mask: [Tq×Tk] booleana o None
        key_mask: [B×Tk] booleana (True = token real) o None

    RETORNA:
        np.ndarray broadcastable a [B, heads, Tq, Tk], o None si no hay máscara.
    """
    allowed = None
    if mode_mask is not None:
        allowed = np.asarray(mode_mask, dtype=bool)[None, None, :, :]
    if key_mask is not None:
        keys = np.asarray(key_mask, dtype=bool)[:, None, None, :]
        allowed = keys if allowed is None else allowed & keys
    if allowed is None:
        return None
    return np.where(allowed, 0.0, MASK_VALUE).astype(dtype)

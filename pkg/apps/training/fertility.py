"""
Fertilidades objetivo para el teacher forcing del decodificador NAR.

Con alineamiento gold (datos sintéticos) F cuenta los tokens de la
explicación alineados con cada posición de la entrada; sin él, el reparto
es uniforme. Siempre ΣF = T y 0 ≤ f_s ≤ F_max.
"""

import logging

import numpy as np

from apps.numcore.exceptions import InfeasibleLength

logger = logging.getLogger(__name__)


def uniform_fertility(source_length: int, target_length: int) -> np.ndarray:
    """f_s = ⌊T/S⌋, más uno en las primeras T mod S posiciones. S=3, T=4 → [2, 1, 1]."""
    base, extra = divmod(target_length, source_length)
    fertility = np.full(source_length, base, dtype=np.int64)
    fertility[:extra] += 1
    return fertility


def aligned_fertility(source_length: int, alignment, max_fertility: int) -> np.ndarray:
    """
    Cuenta por posición de la entrada, recortada a F_max.

    El exceso pasa a la derecha; si al final sobra, se reparte hacia la
    izquierda en las posiciones con hueco.
    """
    counts = np.bincount(np.asarray(alignment, dtype=np.int64), minlength=source_length)
    fertility = np.zeros(source_length, dtype=np.int64)
    carry = 0
    for s in range(source_length):
        wanted = int(counts[s]) + carry
        fertility[s] = min(wanted, max_fertility)
        carry = wanted - int(fertility[s])
    for s in range(source_length - 1, -1, -1):
        if not carry:
            break
        room = min(max_fertility - int(fertility[s]), carry)
        fertility[s] += room
        carry -= room
    return fertility


def target_fertility(source_length: int, target_length: int, alignment=None, max_fertility=3) -> np.ndarray:
    """
    EJEMPLOS:
        >>> list(target_fertility(2, 4))
        [2, 2]
        >>> list(target_fertility(3, 4))
        [2, 1, 1]
        >>> list(target_fertility(3, 3, alignment=[0, 0, 0], max_fertility=2))
        [2, 1, 0]

    EXCEPCIONES:
        InfeasibleLength: T > S·F_max
    """
    if target_length > source_length * max_fertility:
        raise InfeasibleLength(
            f'Explicación de {target_length} tokens > {source_length}·{max_fertility} (S·F_max)'
        )
    if alignment is not None:
        alignment = list(alignment)
        valid = len(alignment) == target_length and all(0 <= int(a) < source_length for a in alignment)
        if valid:
            return aligned_fertility(source_length, alignment, max_fertility)
        logger.debug(f'Alineamiento inconsistente (S={source_length}, T={target_length}); reparto uniforme')
    return uniform_fertility(source_length, target_length)

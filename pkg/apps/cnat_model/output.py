"""
Resultado de una generación (GenerationOutput).
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GenerationOutput:
    """
    ATRIBUTOS:
        label: id de la etiqueta predicha
        label_probs: distribución sobre las etiquetas (suma 1)
        tokens: ids de la explicación (vacío si explain=False)
        token_probs: [T × V] distribuciones por posición (None si explain=False)
        fertility: secuencia F (NAR); vacía en modo AR
        latency_ns: tiempo de decodificador + cabezas, en nanosegundos
        decoder_passes: pasadas del decodificador (1 en NAR)
        truncated: la explicación se recortó a T_max
    """

    label: int
    label_probs: np.ndarray
    tokens: list = field(default_factory=list)
    token_probs: np.ndarray = None
    fertility: np.ndarray = None
    latency_ns: int = 0
    decoder_passes: int = 0
    truncated: bool = False

    @property
    def length(self) -> int:
        return len(self.tokens)

    def explanation(self, vocab) -> str:
        return vocab.decode(self.tokens)

    def to_dict(self, vocab=None, label_names=None) -> dict:
        data = {
            'label': self.label,
            'label_probs': [round(float(p), 6) for p in self.label_probs],
            'tokens': [int(t) for t in self.tokens],
            'fertility': [] if self.fertility is None else [int(f) for f in self.fertility],
            'latency_ns': int(self.latency_ns),
            'decoder_passes': self.decoder_passes,
            'truncated': self.truncated,
        }
        if vocab is not None:
            data['explanation'] = self.explanation(vocab)
        if label_names is not None:
            data['label_name'] = label_names[self.label]
        return data

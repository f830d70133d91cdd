"""
===============================================================================
ARCHIVO: apps/appshell/vocab.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Vocabulario de palabras y tokenización por espacios en minúsculas.

TOKENS ESPECIALES:
    PAD=0, UNK=1, BOS=2, EOS=3, SEP=4

ORDEN:
    Tras los especiales, las palabras se ordenan por frecuencia descendente
    y, a igualdad de frecuencia, lexicográficamente. Así el mismo corpus
    produce siempre los mismos ids.

FORMATO EN DISCO:
    vocab.txt, un token por línea (la línea i es el id i).

===============================================================================
"""

from collections import Counter
from pathlib import Path

from apps.numcore.exceptions import BadRecord

PAD, UNK, BOS, EOS, SEP = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ['<pad>', '<unk>', '<bos>', '<eos>', '<sep>']


def normalize(text: str) -> list:
    """Minúsculas y separación por espacios."""
    return text.lower().split()


class Vocab:
    """Mapa biyectivo palabra ↔ id."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            tokens = SPECIAL_TOKENS + [t for t in tokens if t not in SPECIAL_TOKENS]
        self.itos = tokens
        self.stoi = {token: i for i, token in enumerate(tokens)}
        if len(self.stoi) != len(self.itos):
            raise BadRecord('El vocabulario contiene tokens repetidos')

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    @classmethod
    def build(cls, texts, extra_tokens=()):
        """
        Construye el vocabulario a partir de textos.

        PARÁMETROS:
            texts: iterable de cadenas
            extra_tokens: palabras que deben existir aunque no aparezcan
                          (inventarios, plantillas, conectores)
        """
        counts = Counter()
        for text in texts:
            if text:
                counts.update(normalize(text))
        for token in extra_tokens:
            counts.setdefault(token.lower(), 0)
        for token in SPECIAL_TOKENS:
            counts.pop(token, None)
        ordered = sorted(counts, key=lambda token: (-counts[token], token))
        return cls(SPECIAL_TOKENS + ordered)

    def encode(self, text: str) -> list:
        return [self.stoi.get(token, UNK) for token in normalize(text)]

    def decode(self, ids, strip_special=True) -> str:
        words = []
        for i in ids:
            i = int(i)
            if strip_special and i in (PAD, BOS, EOS):
                continue
            words.append(self.itos[i] if 0 <= i < len(self.itos) else SPECIAL_TOKENS[UNK])
        return ' '.join(words)

    def save(self, path):
        Path(path).write_text('\n'.join(self.itos) + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text(encoding='utf-8').splitlines()
        return cls([line for line in lines if line])


def tokenize(text: str, vocab: Vocab) -> list:
    """'A cat Sits' → ids de [a, cat, sits]; palabras desconocidas → UNK."""
    return vocab.encode(text)


def detokenize(ids, vocab: Vocab) -> str:
    return vocab.decode(ids)


def encode_input(segment_a: str, segment_b, vocab: Vocab) -> list:
    """Empaqueta uno o dos segmentos en una secuencia: a [SEP] b."""
    ids = vocab.encode(segment_a)
    if segment_b:
        ids = ids + [SEP] + vocab.encode(segment_b)
    return ids


def input_tokens(segment_a: str, segment_b=None) -> list:
    """Mismo empaquetado que encode_input, en palabras."""
    tokens = normalize(segment_a)
    if segment_b:
        tokens = tokens + [SPECIAL_TOKENS[SEP]] + normalize(segment_b)
    return tokens

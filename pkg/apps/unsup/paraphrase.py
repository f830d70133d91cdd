"""
===============================================================================
ARCHIVO: apps/unsup/paraphrase.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Pseudo-explicaciones para el régimen no supervisado: la entrada se
    retro-traduce (o se parafrasea con el sustituto local) y el resultado
    se usa como objetivo ruidoso de la explicación.

SUSTITUTO LOCAL:
    1. Sinónimos: cada palabra con entrada en la tabla se sustituye (si hay
       varias alternativas se elige una con el generador del registro)
    2. Reordenación: las cláusulas unidas por 'and' de un segmento se
       invierten con probabilidad REORDER_PROBABILITY
    3. Conector: entre los dos segmentos se inserta un conector de la lista
       blanca con probabilidad CONNECTIVE_PROBABILITY

    Toda palabra de salida es una palabra de la entrada, un sinónimo suyo o
    un conector de la lista blanca.

DETERMINISMO:
    Cada registro usa su propio generador, sembrado con (semilla, crc32 del
    id). El resultado no depende del orden ni del número de hilos.

===============================================================================
"""

import logging
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from tqdm import tqdm

from apps.appshell.vocab import normalize
from apps.numcore.exceptions import BadConfig, EmptyInput, TranslationUnavailable

from .backends import SurrogateBackend, get_backend

logger = logging.getLogger(__name__)

CLAUSE_JOINER = 'and'


# =============================================================================
# TABLA DE SINÓNIMOS
# =============================================================================

def load_synonyms(path) -> dict:
    """
    Lee la tabla 'palabra<TAB>sinónimo'.

    RETORNA:
        dict palabra → tupla de alternativas (en orden de aparición)

    EXCEPCIONES:
        BadConfig: fichero inexistente o línea sin dos columnas de una palabra
    """
    path = Path(path)
    if not path.exists():
        raise BadConfig(f'No existe la tabla de sinónimos {path}')
    table = {}
    for number, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        columns = line.split('\t')
        if len(columns) != 2 or len(columns[0].split()) != 1 or len(columns[1].split()) != 1:
            raise BadConfig(f'{path.name}:{number}: se esperaban dos columnas de una palabra')
        word, synonym = columns[0].lower(), columns[1].lower()
        table.setdefault(word, ())
        if synonym not in table[word]:
            table[word] += (synonym,)
    return table


def surrogate_words(unsup_section: dict) -> list:
    """Palabras que el sustituto puede producir (sinónimos y conectores), para el vocabulario."""
    words = list(unsup_section['CONNECTIVES'])
    path = unsup_section.get('SYNONYMS_FILE')
    if path:
        for alternatives in load_synonyms(path).values():
            words += list(alternatives)
    return words


# =============================================================================
# PARAFRASEADOR
# =============================================================================

@dataclass
class Paraphraser:
    """
    USO:
        >>> paraphraser = Paraphraser(synonyms={'cat': ('feline',)}, reorder_probability=0.0,
        ...                           connective_probability=0.0)
        >>> paraphraser.pseudo_target(Example(id='x', segment_a='a cat sits'))
        'a feline sits'
    """

    synonyms: dict = field(default_factory=dict)
    reorder_probability: float = 0.5
    connective_probability: float = 0.5
    connectives: tuple = ('so', 'and', 'then')
    max_fertility: int = 3
    seed: int = 0
    backend: object = None

    def __post_init__(self):
        for name in ('reorder_probability', 'connective_probability'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise BadConfig(f'{name} fuera de [0, 1]: {value}')
        if self.max_fertility < 1:
            raise BadConfig('max_fertility debe ser ≥ 1')
        self.connectives = tuple(word.lower() for word in self.connectives)
        self.backend = self.backend or SurrogateBackend({})
        self.fallbacks = 0
        self._lock = threading.Lock()

    @classmethod
    def from_settings(cls, config: dict, seed: int, backend_path=None) -> 'Paraphraser':
        unsup = config['unsup']
        return cls(
            synonyms=load_synonyms(unsup['SYNONYMS_FILE']) if unsup.get('SYNONYMS_FILE') else {},
            reorder_probability=float(unsup['REORDER_PROBABILITY']),
            connective_probability=float(unsup['CONNECTIVE_PROBABILITY']),
            connectives=tuple(unsup['CONNECTIVES']),
            max_fertility=int(config['model']['MAX_FERTILITY']),
            seed=seed,
            backend=get_backend(unsup, backend_path),
        )

    @property
    def mode(self) -> str:
        return 'external' if self.backend.external else 'surrogate'

    def rng_for(self, record_id: str):
        return np.random.default_rng([int(self.seed), zlib.crc32(str(record_id).encode('utf-8'))])

    # -------------------------------------------------------------------------
    # Reglas del sustituto
    # -------------------------------------------------------------------------

    def substitute(self, tokens, rng) -> list:
        out = []
        for token in tokens:
            alternatives = self.synonyms.get(token)
            if not alternatives:
                out.append(token)
            elif len(alternatives) == 1:
                out.append(alternatives[0])
            else:
                out.append(alternatives[int(rng.integers(len(alternatives)))])
        return out

    def reorder(self, tokens, rng) -> list:
        clauses, current = [], []
        for token in tokens:
            if token == CLAUSE_JOINER and current:
                clauses.append(current)
                current = []
            else:
                current.append(token)
        if current:
            clauses.append(current)
        if len(clauses) < 2 or rng.random() >= self.reorder_probability:
            return list(tokens)
        out = []
        for clause in reversed(clauses):
            if out:
                out.append(CLAUSE_JOINER)
            out += clause
        return out

    def surrogate(self, example, rng) -> list:
        segments = [normalize(example.segment_a)]
        if example.segment_b:
            segments.append(normalize(example.segment_b))
        segments = [self.reorder(self.substitute(tokens, rng), rng) for tokens in segments]
        tokens = segments[0]
        if len(segments) > 1:
            if self.connectives and rng.random() < self.connective_probability:
                tokens = tokens + [self.connectives[int(rng.integers(len(self.connectives)))]]
            tokens = tokens + segments[1]
        return tokens

    # -------------------------------------------------------------------------
    # Operación principal
    # -------------------------------------------------------------------------

    def pseudo_target(self, example) -> str:
        """
        Pseudo-explicación de un registro.

        RETORNA:
            Texto no vacío de como mucho F_max·S palabras (S = longitud de la
            entrada empaquetada).

        EXCEPCIONES:
            EmptyInput: el registro no tiene texto de entrada
        """
        tokens_a, tokens_b = normalize(example.segment_a or ''), normalize(example.segment_b or '')
        if not tokens_a and not tokens_b:
            raise EmptyInput(f'{example.id}: entrada vacía')
        source_length = len(tokens_a) + (1 + len(tokens_b) if example.segment_b else 0)
        limit = self.max_fertility * source_length

        rng = self.rng_for(example.id)
        tokens = None
        if self.backend.external:
            text = ' '.join(tokens_a + tokens_b)
            try:
                tokens = normalize(self.backend.back_translate(text))
            except TranslationUnavailable as exc:
                with self._lock:
                    self.fallbacks += 1
                logger.warning(f'{example.id}: traducción externa no disponible ({exc}); se usa el sustituto')
        if not tokens:
            tokens = self.surrogate(example, rng)
        return ' '.join(tokens[:limit])


# =============================================================================
# DATASET NO SUPERVISADO
# =============================================================================

def build_unsup_dataset(examples, paraphraser: Paraphraser, threads=1, show_progress=False) -> list:
    """
    Sustituye la explicación de cada registro por su pseudo-explicación.

    Las etiquetas de clase se conservan; todos los registros salen con
    procedencia 'pseudo'. N registros de entrada → N de salida, en el mismo
    orden.
    """
    examples = list(examples)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        targets = list(tqdm(
            pool.map(paraphraser.pseudo_target, examples),
            total=len(examples), desc='Parafraseo', disable=not show_progress,
        ))
    dataset = [
        example.with_pseudo(explanation=target, keep_label=True)
        for example, target in zip(examples, targets)
    ]
    if paraphraser.fallbacks:
        logger.warning(f'{paraphraser.fallbacks} registros parafraseados con el sustituto por fallo del backend')
    logger.info(f'Dataset no supervisado: {len(dataset)} registros ({paraphraser.mode})')
    return dataset

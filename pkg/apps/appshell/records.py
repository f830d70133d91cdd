"""
===============================================================================
ARCHIVO: apps/appshell/records.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Registro de datos (Example) y formato de fichero: un objeto JSON por
    línea con los campos del registro.

CAMPOS:
    - id, segment_a, provenance: obligatorios
    - segment_b, label, explanation: opcionales (null)
    - alignment: opcional; para cada palabra de la explicación, la posición
      de la entrada a la que se alinea (solo datos sintéticos)

EXCEPCIONES:
    BadRecord: línea mal formada o sin campos obligatorios; el mensaje
    incluye el número de línea.

===============================================================================
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from apps.numcore.exceptions import BadRecord

HUMAN = 'human'
PSEUDO = 'pseudo'
PROVENANCES = (HUMAN, PSEUDO)

MANDATORY_FIELDS = ('id', 'segment_a', 'provenance')


@dataclass(frozen=True)
class Example:
    id: str
    segment_a: str
    segment_b: str = None
    label: int = None
    explanation: str = None
    provenance: str = HUMAN
    alignment: list = field(default=None, compare=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise BadRecord(f'Procedencia desconocida: {self.provenance!r}')

    @property
    def is_fully_supervised(self) -> bool:
        return self.label is not None and bool(self.explanation)

    def with_pseudo(self, label=None, explanation=None, keep_label=False):
        """Copia con etiqueta/explicación pseudo (procedencia 'pseudo', sin alineamiento)."""
        return replace(
            self,
            label=self.label if keep_label else label,
            explanation=explanation,
            provenance=PSEUDO,
            alignment=None,
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        if data['alignment'] is None:
            del data['alignment']
        return data


def parse_record(line: str, line_number: int) -> Example:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BadRecord(f'Línea {line_number}: JSON inválido ({exc.msg})') from exc
    if not isinstance(data, dict):
        raise BadRecord(f'Línea {line_number}: se esperaba un objeto')
    missing = [name for name in MANDATORY_FIELDS if data.get(name) in (None, '')]
    if missing:
        raise BadRecord(f'Línea {line_number}: faltan campos obligatorios {missing}')
    unknown = set(data) - set(Example.__dataclass_fields__)
    if unknown:
        raise BadRecord(f'Línea {line_number}: campos desconocidos {sorted(unknown)}')
    try:
        return Example(**data)
    except BadRecord as exc:
        raise BadRecord(f'Línea {line_number}: {exc}') from exc


def load_examples(path) -> list:
    """
    Lee un fichero JSONL de registros.

    EXCEPCIONES:
        BadRecord: en la primera línea inválida (con su número).
    """
    examples = []
    with open(path, encoding='utf-8') as handle:
        for line_number, line in enumerate(handle, start=1):
            if line.strip():
                examples.append(parse_record(line, line_number))
    return examples


def save_examples(examples, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        for example in examples:
            handle.write(json.dumps(example.to_dict(), ensure_ascii=False) + '\n')
    return path

"""
===============================================================================
ARCHIVO: apps/cnat_model/config.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Configuración de arquitectura (ModelConfig) y su serialización textual
    'clave=valor', que es el bloque de configuración del checkpoint.

INVARIANTES:
    - d_model divisible por n_heads
    - max_fertility ≥ 1
    - num_labels ≥ 2

===============================================================================
"""

from dataclasses import asdict, dataclass, fields, replace
from enum import Enum

from apps.numcore.exceptions import BadCheckpoint, BadConfig


class Mode(str, Enum):
    NAR = 'nar'
    AR = 'ar'


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    ffn_dim: int = 256
    max_fertility: int = 3
    max_length: int = 64
    dropout: float = 0.1
    num_labels: int = 3
    mode: Mode = Mode.NAR
    decoder_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'mode', Mode(self.mode))
        if self.vocab_size < 6:
            raise BadConfig(f'vocab_size={self.vocab_size}: el vocabulario necesita los 5 especiales y alguna palabra')
        if self.d_model % self.n_heads:
            raise BadConfig(f'd_model={self.d_model} no es divisible entre n_heads={self.n_heads}')
        if self.max_fertility < 1:
            raise BadConfig(f'max_fertility={self.max_fertility} debe ser ≥ 1')
        if self.num_labels < 2:
            raise BadConfig(f'num_labels={self.num_labels} debe ser ≥ 2')
        if self.max_length < 1 or self.decoder_layers < 1:
            raise BadConfig('max_length y decoder_layers deben ser ≥ 1')
        if not 0.0 <= self.dropout < 1.0:
            raise BadConfig(f'dropout={self.dropout} fuera de [0, 1)')

    @property
    def is_autoregressive(self) -> bool:
        return self.mode == Mode.AR

    def with_mode(self, mode) -> 'ModelConfig':
        return replace(self, mode=Mode(mode))

    # -------------------------------------------------------------------------
    # Construcción desde la configuración del proyecto
    # -------------------------------------------------------------------------

    @classmethod
    def from_preset(cls, preset: dict, vocab_size: int, num_labels: int, model_section: dict, mode=None):
        return cls(
            vocab_size=vocab_size,
            num_labels=num_labels,
            max_fertility=model_section['MAX_FERTILITY'],
            max_length=model_section['MAX_LENGTH'],
            mode=Mode(mode or model_section['MODE']),
            **preset,
        )

    @classmethod
    def for_lm(cls, vocab_size: int, model_section: dict):
        """LM discriminador: solo decodificador, causal."""
        lm = model_section['LM']
        return cls(
            vocab_size=vocab_size,
            d_model=lm['d_model'],
            n_heads=lm['n_heads'],
            encoder_layers=0,
            decoder_layers=lm['decoder_layers'],
            ffn_dim=lm['ffn_dim'],
            dropout=lm['dropout'],
            max_length=model_section['MAX_LENGTH'],
            num_labels=2,
            mode=Mode.AR,
            decoder_only=True,
        )

    # -------------------------------------------------------------------------
    # Serialización
    # -------------------------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for name, value in asdict(self).items():
            if isinstance(value, Mode):
                value = value.value
            elif isinstance(value, bool):
                value = 'true' if value else 'false'
            lines.append(f'{name}={value}')
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'ModelConfig':
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            name, sep, raw = line.partition('=')
            if not sep or name not in types:
                raise BadCheckpoint(f'Línea de configuración inválida: {line!r}')
            kind = types[name]
            try:
                if kind in (bool, 'bool'):
                    values[name] = raw == 'true'
                elif kind in (int, 'int'):
                    values[name] = int(raw)
                elif kind in (float, 'float'):
                    values[name] = float(raw)
                else:
                    values[name] = Mode(raw)
            except ValueError as exc:
                raise BadCheckpoint(f'Valor inválido en la configuración: {line!r}') from exc
        try:
            return cls(**values)
        except (TypeError, BadConfig) as exc:
            raise BadCheckpoint(f'Configuración de checkpoint inválida: {exc}') from exc

"""
===============================================================================
ARCHIVO: apps/cnat_model/checkpoint.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Formato binario de checkpoint.

FORMATO (little-endian):
    b'CNAT1'
    u32 longitud + bloque de configuración (texto 'clave=valor', UTF-8)
    u32 número de parámetros
    por parámetro:
        u16 longitud + nombre (UTF-8)
        u8 número de dimensiones, u32 por dimensión
        datos float32

GARANTÍAS:
    save → load reproduce los parámetros bit a bit, así que la generación
    tras cargar es idéntica a la previa.

===============================================================================
"""

import logging
import struct
from pathlib import Path

import numpy as np

from apps.numcore.exceptions import BadCheckpoint, ShapeMismatch

from .config import ModelConfig
from .model import CnatModel

logger = logging.getLogger(__name__)

MAGIC = b'CNAT1'


def save_checkpoint(model: CnatModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_block = model.config.to_text().encode('utf-8')
    params = list(model.named_parameters())
    with open(path, 'wb') as handle:
        handle.write(MAGIC)
        handle.write(struct.pack('<I', len(config_block)))
        handle.write(config_block)
        handle.write(struct.pack('<I', len(params)))
        for name, param in params:
            encoded = name.encode('utf-8')
            handle.write(struct.pack('<H', len(encoded)))
            handle.write(encoded)
            handle.write(struct.pack('<B', param.ndim))
            handle.write(struct.pack(f'<{param.ndim}I', *param.shape))
            handle.write(np.ascontiguousarray(param.data, dtype='<f4').tobytes())
    logger.info(f'Checkpoint guardado en {path} ({model.num_parameters()} parámetros)')
    return path


class _Reader:

    def __init__(self, data: bytes, path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise BadCheckpoint(f'{self.path}: fichero truncado en el byte {self.offset}')
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> CnatModel:
    """
    Reconstruye el modelo desde un checkpoint.

    EXCEPCIONES:
        BadCheckpoint: magic incorrecto, fichero truncado o parámetros que
        no corresponden a la configuración.
    """
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except OSError as exc:
        raise BadCheckpoint(f'No se puede leer {path}: {exc}') from exc
    if reader.take(len(MAGIC)) != MAGIC:
        raise BadCheckpoint(f'{path}: no es un checkpoint CNAT1')

    (config_size,) = reader.unpack('<I')
    try:
        config_text = reader.take(config_size).decode('utf-8')
    except UnicodeDecodeError as exc:
        raise BadCheckpoint(f'{path}: bloque de configuración ilegible') from exc
    config = ModelConfig.from_text(config_text)

    (count,) = reader.unpack('<I')
    state = {}
    for _ in range(count):
        (name_size,) = reader.unpack('<H')
        name = reader.take(name_size).decode('utf-8')
        (ndim,) = reader.unpack('<B')
        shape = reader.unpack(f'<{ndim}I') if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(reader.take(4 * size), dtype='<f4').astype(np.float32)
        state[name] = values.reshape(shape)
    if reader.offset != len(reader.data):
        raise BadCheckpoint(f'{path}: {len(reader.data) - reader.offset} bytes sobrantes')

    model = CnatModel(config)
    try:
        model.load_state_dict(state)
    except ShapeMismatch as exc:
        raise BadCheckpoint(f'{path}: {exc}') from exc
    return model.eval()

"""
===============================================================================
ARCHIVO: apps/appshell/config.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Carga de configuración en tres capas: settings de Django ← fichero de
    configuración (--config) ← flags de la línea de comandos.

FORMATO DEL FICHERO:
    Secciones [model], [train], [data], [weaksup], [unsup], [eval],
    [parallel] y líneas 'clave = valor'. Las claves anidadas usan punto:

        [train]
        steps = 500
        lambda_lm = 0

        [unsup]
        external.timeout = 5

    Cada valor se convierte al tipo del valor por defecto (bool, int,
    float, ruta, lista separada por comas).

EXCEPCIONES:
    BadConfig: sección o clave desconocida, o valor no convertible.

===============================================================================
"""

import configparser
import copy
from pathlib import Path

from django.conf import settings

from apps.numcore.exceptions import BadConfig

SECTIONS = {
    'model': 'CNAT_MODEL',
    'train': 'CNAT_TRAIN',
    'data': 'CNAT_DATA',
    'weaksup': 'CNAT_WEAKSUP',
    'unsup': 'CNAT_UNSUP',
    'eval': 'CNAT_EVAL',
    'parallel': 'CNAT_PARALLEL',
}

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


def coerce(raw: str, default, key: str):
    """Convierte el texto del fichero al tipo del valor por defecto."""
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered not in _TRUE | _FALSE:
                raise ValueError(raw)
            return lowered in _TRUE
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, Path):
            return Path(raw)
        if isinstance(default, (list, tuple)):
            items = [item.strip() for item in raw.split(',') if item.strip()]
            if default:
                items = [coerce(item, default[0], key) for item in items]
            return type(default)(items)
        if isinstance(default, dict):
            raise ValueError('usa claves con punto para valores anidados')
    except ValueError as exc:
        raise BadConfig(f'Valor inválido para {key}: {raw!r} ({exc})') from exc
    return raw


def _assign(block: dict, dotted_key: str, raw: str, section: str):
    parts = dotted_key.upper().split('.')
    target = block
    for part in parts[:-1]:
        if not isinstance(target.get(part), dict):
            raise BadConfig(f'Clave desconocida en [{section}]: {dotted_key}')
        target = target[part]
    leaf = parts[-1]
    if leaf not in target:
        raise BadConfig(f'Clave desconocida en [{section}]: {dotted_key}')
    target[leaf] = coerce(raw, target[leaf], f'{section}.{dotted_key}')


def defaults() -> dict:
    """Copia profunda de los bloques CNAT_* de settings, por sección."""
    return {section: copy.deepcopy(getattr(settings, name)) for section, name in SECTIONS.items()}


def load_config(path=None, overrides=None) -> dict:
    """
    Devuelve la configuración efectiva por sección.

    PARÁMETROS:
        path: fichero INI opcional
        overrides: {'train': {'STEPS': 10}, ...}; los valores None se ignoran
                   (flags no indicados en la línea de comandos)

    EJEMPLO:
        >>> cfg = load_config('config/desk.cfg', {'train': {'STEPS': 50}})
        >>> cfg['train']['STEPS']
        50
    """
    config = defaults()
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding='utf-8') as handle:
                parser.read_file(handle)
        except (OSError, configparser.Error) as exc:
            raise BadConfig(f'No se puede leer la configuración {path}: {exc}') from exc
        for section in parser.sections():
            if section not in config:
                raise BadConfig(f'Sección desconocida: [{section}]')
            for key, raw in parser.items(section):
                _assign(config[section], key, raw, section)

    for section, values in (overrides or {}).items():
        if section not in config:
            raise BadConfig(f'Sección desconocida: {section}')
        for key, value in values.items():
            if value is None:
                continue
            if key not in config[section]:
                raise BadConfig(f'Clave desconocida en [{section}]: {key}')
            config[section][key] = value
    return config


def model_preset(config: dict, preset=None) -> dict:
    """Hiperparámetros de arquitectura del preset indicado (o el configurado)."""
    name = (preset or config['model']['PRESET']).lower()
    presets = config['model']['PRESETS']
    if name not in presets:
        raise BadConfig(f'Preset desconocido: {name!r} (disponibles: {sorted(presets)})')
    return dict(presets[name])

"""
===============================================================================
ARCHIVO: apps/unsup/backends.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Backends de retro-traducción para las pseudo-explicaciones. El backend
    activo se elige en settings.CNAT_UNSUP['BACKEND'] con una ruta de
    importación, igual que los backends de email de Django.

BACKENDS:
    - SurrogateBackend: parafraseador determinista local (sinónimos,
      reordenación de cláusulas, conectores). No necesita red.
    - HttpTranslationBackend: cliente de un servicio de traducción externo.
      Traduce al idioma pivote y de vuelta. Protocolo JSON de tipo
      LibreTranslate:

          POST <ENDPOINT>
          {"q": "...", "source": "en", "target": "de", "format": "text"}
          → {"translatedText": "..."}

CONFIGURACIÓN (settings.CNAT_UNSUP['EXTERNAL']):
    ENDPOINT, PIVOT_LANGUAGE, SOURCE_LANGUAGE, TIMEOUT, RETRIES,
    MAX_IN_FLIGHT (peticiones simultáneas como máximo).

ERRORES:
    El cliente externo lanza TranslationUnavailable cuando agota los
    reintentos; el Paraphraser lo captura y cae al sustituto con un aviso.

===============================================================================
"""

import json
import logging
import threading
import time
import urllib.error
import urllib.request

from django.utils.module_loading import import_string

from apps.numcore.exceptions import BadConfig, TranslationUnavailable

logger = logging.getLogger(__name__)


class TranslationBackend:
    """Interfaz común: back_translate(texto) → texto parafraseado."""

    external = False

    def __init__(self, unsup_section: dict):
        self.config = unsup_section

    def back_translate(self, text: str) -> str:
        raise NotImplementedError


class SurrogateBackend(TranslationBackend):
    """
    Marcador del modo sustituto: el Paraphraser aplica sus propias reglas
    con el generador del registro, así que aquí no hay nada que hacer.
    """

    def back_translate(self, text: str) -> str:
        return text


class HttpTranslationBackend(TranslationBackend):

    external = True

    def __init__(self, unsup_section: dict):
        super().__init__(unsup_section)
        external = unsup_section['EXTERNAL']
        self.endpoint = external['ENDPOINT']
        self.source = external['SOURCE_LANGUAGE']
        self.pivot = external['PIVOT_LANGUAGE']
        self.timeout = float(external['TIMEOUT'])
        self.retries = int(external['RETRIES'])
        if self.retries < 0 or int(external['MAX_IN_FLIGHT']) < 1:
            raise BadConfig('EXTERNAL: RETRIES ≥ 0 y MAX_IN_FLIGHT ≥ 1')
        self.slots = threading.BoundedSemaphore(int(external['MAX_IN_FLIGHT']))
        if not self.endpoint:
            logger.warning('Backend de traducción externo sin ENDPOINT: se usará el sustituto')

    def back_translate(self, text: str) -> str:
        pivot_text = self.translate(text, self.source, self.pivot)
        return self.translate(pivot_text, self.pivot, self.source)

    def translate(self, text: str, source: str, target: str) -> str:
        if not self.endpoint:
            raise TranslationUnavailable('ENDPOINT no configurado')
        payload = json.dumps({'q': text, 'source': source, 'target': target, 'format': 'text'}).encode('utf-8')
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                with self.slots:
                    return self._post(payload)
            except (urllib.error.URLError, TimeoutError, OSError, ValueError, KeyError) as exc:
                last_error = exc
                logger.debug(f'Traducción {source}→{target} fallida (intento {attempt + 1}): {exc}')
                if attempt < self.retries:
                    time.sleep(min(0.5 * 2 ** attempt, 4.0))
        raise TranslationUnavailable(f'{self.endpoint}: {last_error}')

    def _post(self, payload: bytes) -> str:
        request = urllib.request.Request(
            self.endpoint, data=payload, headers={'Content-Type': 'application/json'}, method='POST',
        )
        with urllib.request.urlopen(request, timeout=self.timeout) as response:
            body = json.loads(response.read().decode('utf-8'))
        translated = body['translatedText']
        if not isinstance(translated, str):
            raise ValueError('translatedText no es texto')
        return translated


def get_backend(unsup_section: dict, path=None) -> TranslationBackend:
    """Instancia el backend configurado (o el de 'path')."""
    path = path or unsup_section['BACKEND']
    try:
        backend_class = import_string(path)
    except ImportError as exc:
        raise BadConfig(f'Backend de traducción desconocido: {path!r}') from exc
    return backend_class(unsup_section)

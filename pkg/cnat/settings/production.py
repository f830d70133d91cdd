"""
===============================================================================
ARCHIVO: cnat/settings/production.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Configuración para el servidor de experimentos (ejecuciones largas).
    Hereda de base.py y añade logs a fichero y monitorización con Sentry.

VARIABLES DE ENTORNO:
    OPCIONALES:
    - CNAT_LOG_DIR: Directorio de logs (default: <BASE_DIR>/logs)
    - CNAT_MODEL_PRESET: 'desk' o 'full' (default: 'full')
    - SENTRY_DSN: Activa el envío de errores a Sentry
    - SENTRY_ENVIRONMENT / SENTRY_RELEASE

===============================================================================
"""

from .base import *
import os


# =============================================================================
# DEBUG MODE
# =============================================================================

DEBUG = False


# =============================================================================
# PRESET DEL MODELO
# =============================================================================
# En el servidor se entrena con el preset completo salvo que se indique.

CNAT_MODEL['PRESET'] = os.environ.get('CNAT_MODEL_PRESET', 'full')


# =============================================================================
# LOGGING - Registro por categoría a fichero
# =============================================================================
# Rotación gestionada por logrotate (copytruncate), no por Django.

_LOG_DIR = Path(os.environ.get('CNAT_LOG_DIR', BASE_DIR / 'logs'))
_LOG_DIR.mkdir(parents=True, exist_ok=True)

LOGGING['handlers'].update({
    'app': {
        'level': 'INFO',
        'class': 'logging.FileHandler',
        'filename': str(_LOG_DIR / 'cnat-app.log'),
        'formatter': 'verbose',
    },
    'errors': {
        'level': 'ERROR',
        'class': 'logging.FileHandler',
        'filename': str(_LOG_DIR / 'cnat-errors.log'),
        'formatter': 'verbose',
    },
})

LOGGING['loggers'].update({
    'apps': {
        'handlers': ['console', 'app', 'errors'],
        'level': 'INFO',
        'propagate': False,
    },
    'django': {
        'handlers': ['errors'],
        'level': 'ERROR',
        'propagate': True,
    },
})


# =============================================================================
# SENTRY - Monitoreo de errores
# =============================================================================
# Captura las excepciones de los comandos largos (train, bench) y los logs
# de nivel ERROR. Configurar SENTRY_DSN en las variables de entorno.

SENTRY_DSN = os.environ.get('SENTRY_DSN')

if SENTRY_DSN:
    import logging

    import sentry_sdk
    from sentry_sdk.integrations.django import DjangoIntegration
    from sentry_sdk.integrations.logging import LoggingIntegration

    sentry_sdk.init(
        dsn=SENTRY_DSN,
        integrations=[
            DjangoIntegration(),
            LoggingIntegration(
                level=logging.INFO,        # Breadcrumbs
                event_level=logging.ERROR,  # Eventos
            ),
        ],
        send_default_pii=False,
        environment=os.environ.get('SENTRY_ENVIRONMENT', 'production'),
        release=os.environ.get('SENTRY_RELEASE', 'unknown'),
    )

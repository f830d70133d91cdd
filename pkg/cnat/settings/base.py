"""
===============================================================================
ARCHIVO: cnat/settings/base.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Configuración base compartida entre todos los entornos.
    Define las apps instaladas, el logging común y los valores por defecto
    del modelo, del entrenamiento, de la supervisión débil, de los
    pseudo-objetivos no supervisados y de la evaluación.

ARQUITECTURA DE SETTINGS:
    settings/
    ├── __init__.py      → Documenta qué módulo usar
    ├── base.py          → Este archivo (configuración común)
    ├── development.py   → Escritorio: preset pequeño, logs en consola
    └── production.py    → Servidor de experimentos: logs a fichero, Sentry

FLUJO DE CARGA:
    1. Django lee DJANGO_SETTINGS_MODULE (ej: cnat.settings.development)
    2. development.py hace 'from .base import *'
    3. apps.appshell.config.load_config() mezcla estos valores con el fichero
       de configuración (--config) y con los flags de la línea de comandos.

SECCIONES EN ESTE ARCHIVO:
    1. PATHS
    2. INSTALLED_APPS
    3. CNAT_MODEL: Arquitectura (preset completo + preset de escritorio)
    4. CNAT_TRAIN: Objetivo, optimizador y bucle de entrenamiento
    5. CNAT_DATA: Tarea sintética y formato de datos
    6. CNAT_WEAKSUP: Funciones de etiquetado y modelo de etiquetas
    7. CNAT_UNSUP: Parafraseador (back-translation)
    8. CNAT_EVAL: Métricas y benchmark de latencia
    9. CNAT_PARALLEL: Hilos de trabajo
    10. LOGGING

===============================================================================
"""

import os
from pathlib import Path


# =============================================================================
# 1. PATHS - RUTAS BASE DEL PROYECTO
# =============================================================================

BASE_DIR = Path(__file__).resolve().parent.parent.parent
# settings/base.py → settings/ → cnat/ → raíz del repositorio

CONFIG_DIR = BASE_DIR / 'config'
# Ficheros de configuración versionados: LFs, sinónimos, ejemplo .cfg

RUNS_DIR = Path(os.environ.get('CNAT_RUNS_DIR', BASE_DIR / 'runs'))
# Directorio por defecto de datasets, checkpoints e historiales.


# =============================================================================
# 2. INSTALLED_APPS - APLICACIONES INSTALADAS
# =============================================================================
# No hay base de datos ni URLs: el proyecto solo expone management commands.

INSTALLED_APPS = [
    'apps.numcore.apps.NumcoreConfig',        # Tensores + autodiff + Adam
    'apps.appshell.apps.AppshellConfig',      # Datos sintéticos, vocab, CLI
    'apps.cnat_model.apps.CnatModelConfig',   # Red C-NAT y LM discriminador
    'apps.training.apps.TrainingConfig',      # Objetivo y bucles de entrenamiento
    'apps.weaksup.apps.WeaksupConfig',        # Data programming + plantillas
    'apps.unsup.apps.UnsupConfig',            # Pseudo-explicaciones parafraseadas
    'apps.evalkit.apps.EvalkitConfig',        # Métricas y benchmark
]

SECRET_KEY = os.environ.get('SECRET_KEY', 'cnat-no-web-surface')
# Django exige una clave aunque no se sirvan peticiones.

DATABASES = {}
USE_TZ = True
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# =============================================================================
# 3. CNAT_MODEL - ARQUITECTURA
# =============================================================================
# 'FULL' es la configuración completa (d=512, 8 cabezas, 6+6 capas,
# dropout 0.3). 'DESK' es el preset que se entrena en un portátil.
# MODE: 'nar' (decodificación paralela) o 'ar' (ablación autorregresiva).

CNAT_MODEL = {
    'PRESET': 'desk',
    'PRESETS': {
        'full': {
            'd_model': 512,
            'n_heads': 8,
            'encoder_layers': 6,
            'decoder_layers': 6,
            'ffn_dim': 2048,
            'dropout': 0.3,
        },
        'desk': {
            'd_model': 128,
            'n_heads': 4,
            'encoder_layers': 2,
            'decoder_layers': 2,
            'ffn_dim': 256,
            'dropout': 0.1,
        },
    },
    'MAX_FERTILITY': 3,     # F_max: clases de fertilidad {0..3}
    'MAX_LENGTH': 64,       # T_max: longitud máxima de entrada/decodificación
    'MODE': 'nar',

    # LM discriminador / evaluador (solo decodificador, causal)
    'LM': {
        'd_model': 64,
        'n_heads': 2,
        'decoder_layers': 2,
        'ffn_dim': 128,
        'dropout': 0.1,
    },
}


# =============================================================================
# 4. CNAT_TRAIN - ENTRENAMIENTO
# =============================================================================
# Pesos de la pérdida total: L = L_L + λE·L_E + λF·L_F + λLM·L_LM
# El coeficiente de L_L queda fijo en 1 (0 solo con la ablación no_label_loss).

CNAT_TRAIN = {
    'LAMBDA_E': 1.0,
    'LAMBDA_F': 0.5,
    'LAMBDA_LM': 0.1,

    # Adam
    'LEARNING_RATE': 0.00004,
    'BETA1': 0.9,
    'BETA2': 0.999,
    'EPSILON': 1e-8,
    'GRAD_CLIP': 1.0,

    # Bucle
    'BATCH_SIZE': 32,
    'STEPS': 2000,
    'EVAL_EVERY': 40,
    'EVAL_SIZE': 256,

    # Preset de escritorio: lr mayor para converger en 2000 pasos
    'DESK_LEARNING_RATE': 0.0005,

    # Pre-entrenamiento del LM
    'LM_STEPS': 1500,
    'LM_BATCH_SIZE': 32,
    'LM_LEARNING_RATE': 0.001,
}


# =============================================================================
# 5. CNAT_DATA - TAREA SINTÉTICA
# =============================================================================

CNAT_DATA = {
    'TASK': 'nli',                       # 'nli' (dos segmentos) o 'sp' (entidades)
    'SPLITS': {'train': 2048, 'val': 256, 'test': 256},
    'BALANCE_TOLERANCE': 0.05,           # ±5% por clase
    'NLI': {
        'NOUNS': ['cat', 'dog', 'bird', 'horse', 'fish', 'man', 'woman', 'child'],
        'ATTRIBUTES': ['red', 'blue', 'green', 'black', 'white', 'small', 'big', 'old'],
        'VERBS': ['sits', 'runs', 'sleeps', 'jumps', 'eats', 'swims'],
        'LABELS': ['entailment', 'contradiction', 'neutral'],
    },
    'SP': {
        'NAMES': ['ann', 'bob', 'carl', 'dana', 'eve', 'fred', 'gina', 'hugo',
                  'ines', 'jon', 'kate', 'leo'],
        'SPOUSE_CUES': ['married', 'wed', 'husband', 'wife'],
        'OTHER_CUES': ['met', 'sibling', 'colleague', 'friend', 'neighbor'],
        'FILLERS': ['in', 'paris', 'last', 'year', 'at', 'the', 'party', 'today'],
        'LABELS': ['not_spouse', 'spouse'],
    },
}


# =============================================================================
# 6. CNAT_WEAKSUP - SUPERVISIÓN DÉBIL
# =============================================================================

CNAT_WEAKSUP = {
    'LF_FILES': {
        'nli': CONFIG_DIR / 'labeling_functions_nli.cfg',
        'sp': CONFIG_DIR / 'labeling_functions_sp.cfg',
    },
    'INIT_ACCURACY': 0.7,     # Precisión inicial de cada LF
    'PRIOR_ACCURACY': 0.5,    # Valor de las LFs que nunca votan
    'WEIGHT_BOUNDS': (0.05, 0.95),
    'EPOCHS': 500,
    'LEARNING_RATE': 0.05,
    'ANNOTATED_SIZE': 32,
}


# =============================================================================
# 7. CNAT_UNSUP - PSEUDO-EXPLICACIONES
# =============================================================================

CNAT_UNSUP = {
    'BACKEND': 'apps.unsup.backends.SurrogateBackend',
    # Alternativa: 'apps.unsup.backends.HttpTranslationBackend'
    'SYNONYMS_FILE': CONFIG_DIR / 'synonyms.tsv',
    'REORDER_PROBABILITY': 0.5,
    'CONNECTIVE_PROBABILITY': 0.5,
    'CONNECTIVES': ['so', 'and', 'then'],

    'EXTERNAL': {
        'ENDPOINT': os.environ.get('CNAT_TRANSLATION_ENDPOINT', ''),
        'PIVOT_LANGUAGE': 'de',
        'SOURCE_LANGUAGE': 'en',
        'TIMEOUT': 10.0,
        'RETRIES': 2,
        'MAX_IN_FLIGHT': 4,
    },
}


# =============================================================================
# 8. CNAT_EVAL - MÉTRICAS Y BENCHMARK
# =============================================================================

CNAT_EVAL = {
    'BLEU_MAX_ORDER': 4,
    'WARMUP': 10,             # Decodificaciones descartadas antes de medir
    'BENCH_GROUPS': 5,        # Grupos para la mediana de medias
    'BENCH_LENGTHS': [4, 8, 16, 32],
    'JUDGE_STEPS': 600,
    'JUDGE_SWAP_RATE': 0.5,   # Fracción de pares con explicación intercambiada
}


# =============================================================================
# 9. CNAT_PARALLEL - HILOS DE TRABAJO
# =============================================================================
# CNAT_THREADS limita los pools de las etapas paralelas por datos
# (aplicación de LFs, parafraseo). El benchmark siempre corre en un hilo.

CNAT_PARALLEL = {
    'THREADS': int(os.environ.get('CNAT_THREADS', os.cpu_count() or 1)),
}


# =============================================================================
# 10. LOGGING
# =============================================================================
# Los entornos añaden handlers; aquí solo el formato común.

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,

    'formatters': {
        'verbose': {
            'format': '{asctime} [{levelname}] {name} {module}.{funcName}:{lineno} - {message}',
            'style': '{',
        },
        'simple': {
            'format': '[{levelname}] {name}: {message}',
            'style': '{',
        },
    },

    'handlers': {
        'console': {
            'level': 'INFO',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },

    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}

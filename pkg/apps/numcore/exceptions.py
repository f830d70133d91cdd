"""
===============================================================================
ARCHIVO: apps/numcore/exceptions.py
PROYECTO: C-NAT - Clasificador interpretable no autorregresivo
===============================================================================

DESCRIPCIÓN:
    Jerarquía única de errores del proyecto. Cada error tiene un 'code'
    estable (el nombre que usan la documentación y los logs) y una
    subclase propia para que el llamador pueda capturarlo con precisión.

FLUJO EN LA APLICACIÓN:
    1. Una operación detecta una precondición rota y lanza p.ej. BadTarget
    2. Las funciones internas dejan propagar el error
    3. El management command lo captura como CnatError y lo convierte en
       CommandError (código de salida distinto de cero)

USO:
    >>> raise BadTokenId(f'Id {token_id} fuera del vocabulario ({vocab_size})')
    >>> try:
    ...     ...
    ... except CnatError as exc:
    ...     logger.error(f'[{exc.code}] {exc}')

===============================================================================
"""


class CnatError(Exception):
    """Error base. 'code' identifica el tipo de error de forma estable."""

    code = 'CnatError'

    def __str__(self):
        message = super().__str__()
        return message or self.code


# =============================================================================
# NÚCLEO NUMÉRICO
# =============================================================================

class NonFiniteInput(CnatError):
    code = 'NonFiniteInput'


class BadTarget(CnatError):
    code = 'BadTarget'


class NonScalarLoss(CnatError):
    code = 'NonScalarLoss'


class ShapeMismatch(CnatError):
    code = 'ShapeMismatch'


class BadTokenId(CnatError):
    code = 'BadTokenId'


# =============================================================================
# MODELO
# =============================================================================

class EmptyInput(CnatError):
    code = 'EmptyInput'


class EmptyDecoderInput(CnatError):
    code = 'EmptyDecoderInput'


class LengthOverflow(CnatError):
    code = 'LengthOverflow'


class BadCheckpoint(CnatError):
    code = 'BadCheckpoint'


# =============================================================================
# ENTRENAMIENTO
# =============================================================================

class LengthMismatch(CnatError):
    code = 'LengthMismatch'


class FertilityOverflow(CnatError):
    code = 'FertilityOverflow'


class InfeasibleLength(CnatError):
    code = 'InfeasibleLength'


class VocabMismatch(CnatError):
    code = 'VocabMismatch'


class NonFiniteLoss(CnatError):
    code = 'NonFiniteLoss'


class RegimeDataMismatch(CnatError):
    code = 'RegimeDataMismatch'


# =============================================================================
# DATOS, SUPERVISIÓN DÉBIL Y EVALUACIÓN
# =============================================================================

class BadRule(CnatError):
    code = 'BadRule'


class EmptyEval(CnatError):
    code = 'EmptyEval'


class BalanceInfeasible(CnatError):
    code = 'BalanceInfeasible'


class BadRecord(CnatError):
    code = 'BadRecord'


class BadConfig(CnatError):
    code = 'BadConfig'


class TranslationUnavailable(CnatError):
    code = 'TranslationUnavailable'

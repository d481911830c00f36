"""
Jerarquía de excepciones del toolkit

Dos familias: errores de validación (entrada o configuración inválida, exit 2
en la CLI) y fallas numéricas (el cálculo no cumple su contrato, exit 3).
"""
from typing import Optional


class CayleyForgeError(Exception):
    """Raíz de todas las excepciones del proyecto"""

    exit_code = 1


class ValidationFailure(CayleyForgeError):
    """Entrada inválida: parámetros, grillas o configuración"""

    exit_code = 2


class NumericalFailure(CayleyForgeError):
    """El cálculo numérico no satisface su contrato"""

    exit_code = 3


class ArtifactError(CayleyForgeError):
    """Archivo de artefacto ilegible, corrupto o inconsistente"""

    exit_code = 3


class ConfigInvalid(ValidationFailure):
    """Configuración inválida, con la clave ofensora"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class UnknownCommand(ValidationFailure):
    pass


class BadRange(ValidationFailure):
    pass


class GridMismatch(ValidationFailure):
    pass


class ScaleViolation(ValidationFailure):
    pass


class ConeMismatch(ValidationFailure):
    pass


class CriticalEndpoint(ValidationFailure):
    pass


class ParityError(ValidationFailure):
    pass


class MissingDerivatives(ValidationFailure):
    pass


class RankDeficient(NumericalFailure):
    pass


class Degenerate(NumericalFailure):
    pass


class DegenerateImmersion(NumericalFailure):
    pass


ImmersionDegenerate = DegenerateImmersion


class MarginTooLow(NumericalFailure):
    pass


class NonLinearityDetected(NumericalFailure):
    pass


class AnsatzExhausted(NumericalFailure):
    pass


class RateTableMismatch(NumericalFailure):
    pass


class NoContraction(NumericalFailure):
    """Dos razones de contracción consecutivas sobre el umbral, o max_iter agotado"""

    def __init__(self, message: str, ratios: Optional[list] = None):
        self.ratios = list(ratios or [])
        super().__init__(message)


class SolverFailure(NumericalFailure):
    pass


class IoError(ArtifactError):
    pass

"""
MÓDULO: ERRORS
Responsabilidad: Jerarquía única de excepciones del motor dosis-respuesta.
Los errores de estimación son recuperables por draw; el resto aborta.
"""


class DoseResponseError(Exception):
    """Raíz de todos los errores del proyecto."""


# --- Datos de panel ---
class PanelError(DoseResponseError):
    pass


class SchemaError(PanelError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"Columna requerida ausente: '{column}'")


class PanelParseError(PanelError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"Valor no numérico en fila {row}, columna '{column}': {value!r}")


class IntegrityError(PanelError):
    def __init__(self, unit_id, time):
        self.unit_id = unit_id
        self.time = time
        super().__init__(f"Fila duplicada para (unidad={unit_id}, tiempo={time})")


class PanelValidationError(PanelError):
    pass


class TransformDomainError(PanelError):
    def __init__(self, kind, value, row):
        self.kind = kind
        self.value = value
        self.row = row
        super().__init__(f"Transformación '{kind}' fuera de dominio: valor {value!r} en fila {row}")


# --- Estimación (un draw puede fallar sin abortar el posterior) ---
class EstimationError(DoseResponseError):
    pass


class SingularDesignError(EstimationError):
    pass


class DivergenceError(EstimationError):
    def __init__(self, iterations, max_eta):
        self.iterations = iterations
        self.max_eta = max_eta
        super().__init__(
            f"IRLS divergente en la iteración {iterations}: |eta| máximo = {max_eta:.3g}"
        )


class DegenerateRangeError(EstimationError):
    pass


class UnidentifiableVarianceError(EstimationError):
    pass


# --- Orquestación ---
class ExcessFailureError(DoseResponseError):
    def __init__(self, failures, n_draws, max_rate):
        self.failures = list(failures)
        self.n_draws = n_draws
        self.max_rate = max_rate
        detalle = "; ".join(f"draw {f.draw}: {f.cause}" for f in self.failures[:10])
        super().__init__(
            f"{len(self.failures)} de {n_draws} draws fallaron "
            f"(máximo permitido {max_rate:.0%}). {detalle}"
        )


class ReplicateFailedError(DoseResponseError):
    def __init__(self, replicate, cause):
        self.replicate = replicate
        self.cause = cause
        super().__init__(f"Réplica {replicate} falló: {cause}")


class ConfigError(DoseResponseError):
    pass


class SamplesFormatError(DoseResponseError):
    """Archivo de muestras del posterior mal formado."""

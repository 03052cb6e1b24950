"""
Utilidad para validación de entradas y jerarquía de excepciones del motor
"""

from typing import List, Optional, Sequence

import numpy as np


# Tolerancias por defecto de las comprobaciones de contrato
HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8


class ValidationError(Exception):
    """Excepción personalizada para errores de validación"""

    def __init__(self, message: str = "", errors: Optional[List[str]] = None):
        super().__init__(message)
        self.errors = list(errors) if errors else ([message] if message else [])


class DomainError(ValidationError):
    """Entrada fuera del dominio de la operación (carta inválida, t <= 0, ...)"""
    pass


class ParabolicError(DomainError):
    """La variedad es parabólica: no existe función de Green positiva"""
    pass


class ContractError(ValidationError):
    """Violación de un contrato (unitariedad, hermiticidad, rango, ...)"""
    pass


class NumericalError(Exception):
    """Fallo numérico (truncación, desbordamiento, ajuste, ...)"""
    pass


class PrecisionError(NumericalError):
    """La resolución pedida no alcanza la tolerancia declarada"""
    pass


class IntegrationError(NumericalError):
    """Potencial no finito a lo largo de un camino"""

    def __init__(self, message: str, node: Optional[int] = None,
                 path_index: Optional[int] = None):
        super().__init__(message)
        self.node = node
        self.path_index = path_index


class FitError(NumericalError):
    """El ajuste de energía no es posible con los datos entregados"""
    pass


class UndecidedError(NumericalError):
    """Falta información para decidir (p.ej. cota gaussiana sin verificar)"""
    pass


def validate_positive(value: float, name: str, allow_zero: bool = False) -> bool:
    """
    Valida que un número sea positivo y finito.

    Args:
        value: Número a validar
        name: Nombre del parámetro (para el mensaje)
        allow_zero: Si True, se acepta el cero

    Returns:
        True si la validación es exitosa

    Raises:
        DomainError: Si el valor no es positivo o no es finito
    """
    if value is None or not np.isfinite(value):
        raise DomainError(f"{name} debe ser finito, pero es {value}")
    if allow_zero and value < 0:
        raise DomainError(f"{name} debe ser >= 0, pero es {value}")
    if not allow_zero and value <= 0:
        raise DomainError(f"{name} debe ser > 0, pero es {value}")
    return True


def validate_count(value: int, name: str, minimum: int) -> bool:
    """
    Valida que un entero sea al menos `minimum`.

    Raises:
        DomainError: Si el entero es menor que el mínimo
    """
    if int(value) != value or value < minimum:
        raise DomainError(f"{name} debe ser un entero >= {minimum}, pero es {value}")
    return True


def validate_not_empty(sequence: Sequence, name: str = "La secuencia") -> bool:
    """
    Valida que una secuencia no esté vacía.

    Raises:
        DomainError: Si está vacía
    """
    if sequence is None or len(sequence) == 0:
        raise DomainError(f"{name} no puede estar vacía")
    return True


def validate_time_grid(times: Sequence[float], min_length: int = 1,
                       increasing: bool = True) -> bool:
    """
    Valida una grilla de tiempos positivos, estrictamente monótona.

    Args:
        times: Tiempos
        min_length: Cantidad mínima de tiempos
        increasing: True para creciente, False para decreciente

    Raises:
        DomainError: Si la grilla no cumple las condiciones
    """
    if len(times) < min_length:
        raise DomainError(
            f"La grilla de tiempos debe tener al menos {min_length} elementos, "
            f"pero tiene {len(times)}"
        )
    arr = np.asarray(times, dtype=float)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise DomainError("Todos los tiempos deben ser positivos y finitos")
    steps = np.diff(arr)
    if increasing and np.any(steps <= 0):
        raise DomainError("La grilla de tiempos debe ser estrictamente creciente")
    if not increasing and np.any(steps >= 0):
        raise DomainError("La grilla de tiempos debe ser estrictamente decreciente")
    return True


def validate_hermitian(matrix: np.ndarray, tol: float = HERMITIAN_TOL,
                       name: str = "La matriz") -> bool:
    """
    Valida que una matriz (o pila de matrices) sea hermítica.

    Raises:
        ContractError: Si la asimetría supera `tol`
    """
    m = np.asarray(matrix)
    asym = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2)))) if m.size else 0.0
    if asym > tol:
        raise ContractError(f"{name} no es hermítica (asimetría {asym:.3e} > {tol:.1e})")
    return True


def validate_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL,
                     name: str = "El marco") -> bool:
    """
    Valida que una matriz (o pila de matrices) sea unitaria.

    Raises:
        ContractError: Si ||U*U - I|| supera `tol`
    """
    u = np.asarray(matrix)
    k = u.shape[-1]
    gram = np.conj(np.swapaxes(u, -1, -2)) @ u
    dev = np.max(np.abs(gram - np.eye(k))) if u.size else 0.0
    if dev > tol:
        raise ContractError(f"{name} no es unitario (desviación {dev:.3e} > {tol:.1e})")
    return True


def validate_rank(rank_a: int, rank_b: int, what: str = "rango") -> bool:
    """
    Valida que dos rangos de fibra coincidan.

    Raises:
        ContractError: Si los rangos son diferentes
    """
    if rank_a != rank_b:
        raise ContractError(
            f"Los {what}s deben coincidir. Primero: {rank_a}, segundo: {rank_b}"
        )
    return True


def parse_input_sequence(input_str: str, separator: str = ',') -> List[str]:
    """
    Parsea una cadena de entrada en una lista de elementos.

    Args:
        input_str: Cadena de entrada (ej: "0.1, 0.2, 0.4")
        separator: Separador entre elementos

    Returns:
        Lista de elementos parseados

    Raises:
        ValidationError: Si el formato es inválido
    """
    if not input_str or not input_str.strip():
        raise ValidationError("La entrada no puede estar vacía")

    elements = [elem.strip() for elem in input_str.split(separator)]
    elements = [elem for elem in elements if elem]

    if not elements:
        raise ValidationError("No se encontraron elementos válidos en la entrada")

    return elements


def parse_float_sequence(input_str: str, separator: str = ',') -> List[float]:
    """
    Parsea una lista de números reales separados por comas.

    Raises:
        ValidationError: Si algún elemento no es numérico
    """
    values = []
    for i, elem in enumerate(parse_input_sequence(input_str, separator)):
        try:
            values.append(float(elem))
        except ValueError:
            raise ValidationError(
                f"El elemento en la posición {i} ('{elem}') no es numérico"
            )
    return values


if __name__ == "__main__":
    print("VALIDATORS - Pruebas")
    print("=" * 60)

    print("\n Prueba 1: Grilla de tiempos")
    try:
        validate_time_grid([0.1, 0.2, 0.4], min_length=3)
        print("Grilla creciente: VÁLIDA")
        validate_time_grid([0.1, 0.1], min_length=2)
    except DomainError as e:
        print(f" Error esperado: {e}")

    print("\n Prueba 2: Marco unitario")
    try:
        validate_unitary(np.eye(2) * 1.1)
    except ContractError as e:
        print(f" Error esperado: {e}")

    print("\n Prueba 3: Parseo de entrada")
    print(f"Parseado: {parse_float_sequence('0.25, 0.5, 1.0')}")

    print("\n" + "=" * 60)

"""
Escritura de resultados: registros JSON, tablas CSV y volcados para gnuplot.

Todo registro JSON lleva {"schema", "version", "created"} seguido de la
carga útil; "created" es el único campo no reproducible.
"""

import csv
import dataclasses
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, TextIO, Union

import numpy as np


logger = logging.getLogger(__name__)

RECORD_VERSION = 1
CREATED_FIELD = "created"

PathLike = Union[str, Path]


def complex_vector(values) -> Union[list, float]:
    """
    Vector complejo como lista de floats si todas las partes imaginarias son
    nulas, o como lista de pares [re, im] en caso contrario.
    """
    arr = np.asarray(values)
    if not np.iscomplexobj(arr) or np.all(arr.imag == 0):
        return to_jsonable(np.real(arr))
    pairs = np.stack([arr.real, arr.imag], axis=-1)
    return to_jsonable(pairs)


def _float(value: float) -> Optional[float]:
    value = float(value)
    if math.isnan(value):
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def to_jsonable(obj: Any) -> Any:
    """
    Convierte recursivamente resultados a tipos JSON.

    Arreglos y escalares de numpy pasan a listas y números de Python; los
    complejos siguen la convención de complex_vector; las dataclasses pasan
    a diccionarios por campo (o a su to_dict si existe).
    """
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return _float(obj.real) if obj.imag == 0 else [_float(obj.real), _float(obj.imag)]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return complex_vector(obj)
        return [to_jsonable(x) for x in obj.tolist()] if obj.ndim else to_jsonable(obj.item())
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not f.name.startswith("_")}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Tipo no serializable: {type(obj).__name__}")


def make_record(schema: str, payload: dict, created: Optional[str] = None) -> dict:
    """Registro {"schema", "version", "created", ...carga}"""
    if created is None:
        created = datetime.now(timezone.utc).isoformat(timespec="seconds")
    record = {"schema": schema, "version": RECORD_VERSION, CREATED_FIELD: created}
    record.update(to_jsonable(payload))
    return record


def dumps_record(record: dict) -> str:
    return json.dumps(record, indent=2, ensure_ascii=False) + "\n"


def write_json(record: dict, target: Union[PathLike, TextIO]) -> None:
    """Escribe un registro JSON en una ruta o flujo de texto"""
    text = dumps_record(record)
    if hasattr(target, "write"):
        target.write(text)
        return
    Path(target).write_text(text, encoding="utf-8")
    logger.info("Registro %s escrito en %s", record.get("schema"), target)


def without_created(record: dict) -> dict:
    """Copia del registro sin el campo de fecha (para comparar corridas)"""
    return {k: v for k, v in record.items() if k != CREATED_FIELD}


def write_csv(header: Sequence[str], rows: Iterable[Sequence], target: Union[PathLike, TextIO]) -> int:
    """
    Escribe una tabla CSV con fila de encabezado.

    Returns:
        Número de filas de datos
    """
    def emit(stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(list(header))
        count = 0
        for row in rows:
            writer.writerow([_csv_cell(x) for x in row])
            count += 1
        return count

    if hasattr(target, "write"):
        return emit(target)
    with open(target, "w", newline="", encoding="utf-8") as stream:
        count = emit(stream)
    logger.info("Tabla CSV con %d filas escrita en %s", count, target)
    return count


def _csv_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return f"{float(value.real)!r}{float(value.imag):+}j"
    return value


def write_gnuplot(xs: Sequence[float], ys: Sequence[float], header: str,
                  target: Union[PathLike, TextIO]) -> int:
    """
    Volcado de dos columnas separadas por espacios con una línea de
    comentario, p. ej. "# t b(t)".
    """
    if len(xs) != len(ys):
        raise ValueError("Las columnas deben tener la misma longitud")
    lines = [f"# {header}"] + [f"{float(x)!r} {float(y)!r}" for x, y in zip(xs, ys)]
    text = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")
    return len(xs)


if __name__ == "__main__":
    print("SERIALIZATION - Pruebas")
    print("=" * 60)

    record = make_record("demo", {"value": np.array([1.0 + 0j, 2.0]), "z": np.array([1j])},
                         created="2000-01-01T00:00:00+00:00")
    print(dumps_record(record))
    print("=" * 60)

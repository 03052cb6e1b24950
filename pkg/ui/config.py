"""
Configuración de experimentos en texto clave-valor por secciones.

Formato:

    # comentario
    [manifold]
    variant = euclidean
    dim = 3

    [run]
    t_grid = 1.0, 1.5, 2.0

Cada clave tiene tipo y rango en SCHEMA; secciones o claves desconocidas se
rechazan. Los errores se acumulan y se reportan como
"line N: [sección] clave: mensaje". canonical_echo produce la serialización
normativa: parse -> echo -> parse es un punto fijo.
"""

import logging
import math
import os
import re
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from core.geometry import VARIANTS
from utils.validators import ValidationError, parse_input_sequence


logger = logging.getLogger(__name__)

SECTION_ORDER = ("manifold", "bundle", "potential", "section", "run", "output")
REQUIRED_SECTIONS = ("manifold",)
SEED_ENV = "FKS_SEED"
WORKERS_ENV = "FKS_WORKERS"

CONNECTIONS = ("zero", "abelian", "magnetic", "smooth")
POTENTIALS = ("zero", "constant", "cosine", "harmonic", "coulomb", "inverse_power",
              "random_hermitian", "pauli_coulomb")
SECTIONS = ("constant", "gaussian", "exponential", "bump", "indicator", "cosine", "oscillator")
KATO_METHODS = ("auto", "quadrature", "monte_carlo")
FORMATS = ("json", "csv")

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_]\w*)\s*\]$")
_KEY_RE = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*)$")


@dataclass(frozen=True)
class KeySpec:
    """
    Tipo y rango de una clave.

    Args:
        kind: "str", "int", "float" o "floats" (lista separada por comas)
        default: Valor por defecto (None = opcional sin valor)
        choices: Valores admitidos (sólo "str")
        minimum / maximum: Rango cerrado; exclusive_min excluye el mínimo
        required: La clave debe aparecer
    """
    kind: str
    default: Any = None
    choices: Optional[Tuple[str, ...]] = None
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    exclusive_min: bool = False
    required: bool = False


SCHEMA: Dict[str, Dict[str, KeySpec]] = {
    "manifold": {
        "variant": KeySpec("str", choices=VARIANTS, required=True),
        "dim": KeySpec("int", 1, minimum=1, maximum=8),
        "lengths": KeySpec("floats", minimum=0.0, exclusive_min=True),
        "radius": KeySpec("float", 1.0, minimum=0.0, exclusive_min=True),
        "t0": KeySpec("float", 1.0, minimum=0.0, exclusive_min=True),
    },
    "bundle": {
        "rank": KeySpec("int", 1, minimum=1, maximum=4),
        "connection": KeySpec("str", "zero", choices=CONNECTIONS),
        "beta": KeySpec("floats", [0.0]),
        "field": KeySpec("float", 0.0),
        "scale": KeySpec("float", 1.0, minimum=0.0),
        "seed": KeySpec("int", 0, minimum=0),
    },
    "potential": {
        "kind": KeySpec("str", "zero", choices=POTENTIALS),
        "c": KeySpec("float", 0.0),
        "a": KeySpec("float", 1.0),
        "b": KeySpec("float", 1.0),
        "omega": KeySpec("float", 1.0, minimum=0.0, exclusive_min=True),
        "kappa": KeySpec("float", 2 * math.pi, minimum=0.0),
        "power": KeySpec("float", 1.0, minimum=0.0, exclusive_min=True),
        "center": KeySpec("floats"),
        "r_cut": KeySpec("float", 1e-6, minimum=0.0, exclusive_min=True),
        "scale": KeySpec("float", 1.0),
        "seed": KeySpec("int", 0, minimum=0),
    },
    "section": {
        "kind": KeySpec("str", "constant", choices=SECTIONS),
        "value": KeySpec("float", 1.0),
        "center": KeySpec("floats"),
        "width": KeySpec("float", 1.0, minimum=0.0, exclusive_min=True),
        "decay": KeySpec("float", 1.0, minimum=0.0, exclusive_min=True),
        "radius": KeySpec("float", 0.5, minimum=0.0, exclusive_min=True),
        "lower": KeySpec("floats"),
        "upper": KeySpec("floats"),
        "mode": KeySpec("int", 1, minimum=0),
        "offset": KeySpec("float", 1.0),
        "amplitude": KeySpec("float", 0.5),
        "direction": KeySpec("floats"),
    },
    "run": {
        "t": KeySpec("float", 1.0, minimum=0.0, exclusive_min=True),
        "x": KeySpec("floats"),
        "n_paths": KeySpec("int", 10000, minimum=100),
        "dt": KeySpec("float", 1e-3, minimum=0.0, exclusive_min=True),
        "seed": KeySpec("int", 0, minimum=0, maximum=2 ** 64 - 1),
        "workers": KeySpec("int", minimum=1),
        "t_grid": KeySpec("floats", minimum=0.0, exclusive_min=True),
        "x_grid": KeySpec("floats"),
        "window": KeySpec("int", 2, minimum=2),
        "method": KeySpec("str", "auto", choices=KATO_METHODS),
        "nodes": KeySpec("int", 256, minimum=8),
        "margin": KeySpec("float", minimum=0.0, exclusive_min=True),
        "separations": KeySpec("floats", [0.25, 0.5, 1.0, 1.5], minimum=0.0, exclusive_min=True),
        "radii": KeySpec("floats", [16.0, 8.0, 4.0, 2.0], minimum=0.0, exclusive_min=True),
        "points": KeySpec("int", 10, minimum=1),
        "bias": KeySpec("float", 0.02, minimum=0.0),
    },
    "output": {
        "format": KeySpec("str", "json", choices=FORMATS),
        "path": KeySpec("str", ""),
        "plot": KeySpec("str", ""),
        "paths": KeySpec("str", ""),
        "dump_count": KeySpec("int", 16, minimum=1),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Configuración validada: un diccionario por sección con todas las claves
    del esquema (los valores ausentes toman su valor por defecto).
    """
    manifold: Dict[str, Any]
    bundle: Dict[str, Any] = field(default_factory=dict)
    potential: Dict[str, Any] = field(default_factory=dict)
    section: Dict[str, Any] = field(default_factory=dict)
    run: Dict[str, Any] = field(default_factory=dict)
    output: Dict[str, Any] = field(default_factory=dict)

    def get(self, section: str, key: str, default: Any = None) -> Any:
        value = getattr(self, section).get(key)
        return default if value is None else value


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _check_range(value: float, spec: KeySpec) -> Optional[str]:
    if spec.minimum is not None:
        if spec.exclusive_min and value <= spec.minimum:
            return f"debe ser > {spec.minimum:g}, pero es {value:g}"
        if not spec.exclusive_min and value < spec.minimum:
            return f"debe ser >= {spec.minimum:g}, pero es {value:g}"
    if spec.maximum is not None and value > spec.maximum:
        return f"debe ser <= {spec.maximum:g}, pero es {value:g}"
    return None


def parse_value(raw: str, spec: KeySpec) -> Any:
    """
    Convierte el texto de un valor según su tipo.

    Raises:
        ValidationError: Con el mensaje del primer problema encontrado
    """
    raw = raw.strip()
    if spec.kind == "str":
        if spec.choices is not None and raw not in spec.choices:
            raise ValidationError(f"'{raw}' no está en el catálogo {list(spec.choices)}")
        return raw
    if spec.kind == "int":
        try:
            value = int(raw)
        except ValueError:
            raise ValidationError(f"'{raw}' no es un entero")
        problem = _check_range(value, spec)
        if problem:
            raise ValidationError(problem)
        return value
    if spec.kind == "float":
        try:
            value = float(raw)
        except ValueError:
            raise ValidationError(f"'{raw}' no es un número real")
        if not math.isfinite(value):
            raise ValidationError("el valor debe ser finito")
        problem = _check_range(value, spec)
        if problem:
            raise ValidationError(problem)
        return value
    values = []
    for i, elem in enumerate(parse_input_sequence(raw)):
        try:
            value = float(elem)
        except ValueError:
            raise ValidationError(f"el elemento {i} ('{elem}') no es numérico")
        if not math.isfinite(value):
            raise ValidationError(f"el elemento {i} debe ser finito")
        problem = _check_range(value, spec)
        if problem:
            raise ValidationError(f"el elemento {i} {problem}")
        values.append(value)
    return values


def _defaults(section: str) -> Dict[str, Any]:
    return {key: (list(spec.default) if isinstance(spec.default, list) else spec.default)
            for key, spec in SCHEMA[section].items()}


def _cross_checks(sections: Dict[str, Dict[str, Any]], lines: Dict[Tuple[str, str], int]) -> List[str]:
    errors = []

    def err(section, key, message):
        line = lines.get((section, key))
        prefix = f"line {line}: " if line is not None else ""
        errors.append(f"{prefix}[{section}] {key}: {message}")

    manifold = sections["manifold"]
    variant, dim = manifold["variant"], manifold["dim"]
    lengths = manifold["lengths"]
    if variant in ("circle", "interval_absorbing") and lengths is not None and len(lengths) != 1:
        err("manifold", "lengths", f"{variant} requiere una única longitud")
    if variant == "flat_torus" and lengths is not None and len(lengths) != dim:
        err("manifold", "lengths", f"se esperaban {dim} longitudes, pero hay {len(lengths)}")
    if variant == "sphere2" and sections["bundle"]["connection"] != "zero":
        err("bundle", "connection", "sphere2 sólo admite la conexión nula")
    if sections["bundle"]["connection"] == "magnetic" and not (variant == "euclidean" and dim >= 2):
        err("bundle", "connection", "la conexión magnética requiere euclidean con dim >= 2")
    if sections["potential"]["kind"] == "pauli_coulomb" and sections["bundle"]["rank"] != 2:
        err("potential", "kind", "pauli_coulomb requiere rank = 2")
    t_grid = sections["run"]["t_grid"]
    if t_grid is not None and len(t_grid) < 2:
        err("run", "t_grid", "se requieren al menos 2 tiempos")
    section = sections["section"]
    if section["kind"] == "indicator" and (section["lower"] is None or section["upper"] is None):
        err("section", "lower", "el indicador requiere lower y upper")
    return errors


def validate_config(text: str) -> ExperimentConfig:
    """
    Valida el texto completo de una configuración.

    Returns:
        ExperimentConfig con todas las claves resueltas

    Raises:
        ValidationError: Con la lista completa de errores en `errors`
    """
    errors: List[str] = []
    given: Dict[str, Dict[str, Any]] = {}
    lines: Dict[Tuple[str, str], int] = {}
    current: Optional[str] = None
    skipping = False

    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        header = _SECTION_RE.match(line)
        if header:
            name = header.group(1)
            if name not in SCHEMA:
                errors.append(f"line {number}: sección desconocida [{name}]")
                current, skipping = None, True
                continue
            if name in given:
                errors.append(f"line {number}: sección [{name}] repetida")
            given.setdefault(name, {})
            current, skipping = name, False
            continue
        pair = _KEY_RE.match(line)
        if not pair:
            errors.append(f"line {number}: se esperaba 'clave = valor' o '[sección]'")
            continue
        key, raw = pair.group(1), pair.group(2)
        if current is None:
            # las claves de una sección desconocida ya quedaron cubiertas por su error
            if not skipping:
                errors.append(f"line {number}: clave '{key}' fuera de una sección")
            continue
        if key not in SCHEMA[current]:
            errors.append(f"line {number}: [{current}] {key}: clave desconocida")
            continue
        if key in given[current]:
            errors.append(f"line {number}: [{current}] {key}: clave repetida")
            continue
        try:
            given[current][key] = parse_value(raw, SCHEMA[current][key])
            lines[(current, key)] = number
        except ValidationError as exc:
            errors.append(f"line {number}: [{current}] {key}: {exc}")

    for name in REQUIRED_SECTIONS:
        if name not in given:
            errors.append(f"[{name}]: falta la sección requerida")
    for name, values in given.items():
        for key, spec in SCHEMA[name].items():
            if spec.required and key not in values and not any(f"[{name}] {key}:" in e for e in errors):
                errors.append(f"[{name}] {key}: falta el campo requerido")

    if not errors:
        sections = {name: {**_defaults(name), **given.get(name, {})} for name in SECTION_ORDER}
        errors.extend(_cross_checks(sections, lines))
    if errors:
        raise ValidationError(f"Configuración inválida ({len(errors)} errores)", errors)
    logger.debug("Configuración válida con secciones %s", sorted(given))
    return ExperimentConfig(**sections)


def _render(value: Any, spec: KeySpec) -> str:
    if spec.kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if spec.kind == "float":
        return repr(float(value))
    return str(value)


def canonical_echo(config: ExperimentConfig) -> str:
    """
    Serialización normativa: secciones en orden fijo, claves en el orden del
    esquema, reales con repr. Las claves sin valor se omiten.
    """
    out = []
    for name in SECTION_ORDER:
        values = getattr(config, name)
        out.append(f"[{name}]")
        for key, spec in SCHEMA[name].items():
            value = values.get(key)
            if value is None:
                continue
            out.append(f"{key} = {_render(value, spec)}")
        out.append("")
    return "\n".join(out)


def apply_environment(config: ExperimentConfig, environ: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """
    Aplica FKS_SEED y FKS_WORKERS (únicas variables de entorno admitidas).

    Raises:
        ValidationError: Si algún valor no pasa la validación de su clave
    """
    environ = os.environ if environ is None else environ
    run = dict(config.run)
    for var, key in ((SEED_ENV, "seed"), (WORKERS_ENV, "workers")):
        if environ.get(var):
            try:
                run[key] = parse_value(environ[var], SCHEMA["run"][key])
            except ValidationError as exc:
                raise ValidationError(f"{var}: {exc}", [f"{var}: {exc}"])
            logger.debug("%s=%s aplicado", var, run[key])
    return replace(config, run=run)


def with_overrides(config: ExperimentConfig, **run_values) -> ExperimentConfig:
    """Sobrescribe claves de [run] ya validadas (banderas de línea de comandos)"""
    run = dict(config.run)
    for key, value in run_values.items():
        if value is None:
            continue
        run[key] = parse_value(str(value), SCHEMA["run"][key])
    return replace(config, run=run)


def load_config(path: str) -> ExperimentConfig:
    """Lee y valida un archivo de configuración"""
    try:
        with open(path, encoding="utf-8") as stream:
            text = stream.read()
    except OSError as exc:
        raise ValidationError(f"No se pudo leer {path}: {exc}")
    return validate_config(text)


def points_from_flat(values: Optional[Sequence[float]], chart_dim: int, what: str = "x_grid") -> List[List[float]]:
    """
    Agrupa una lista plana de coordenadas en puntos de `chart_dim` coordenadas.

    Raises:
        ValidationError: Si la longitud no es múltiplo de chart_dim
    """
    if values is None:
        return []
    if len(values) % chart_dim:
        raise ValidationError(f"[run] {what}: {len(values)} coordenadas no forman puntos de dimensión {chart_dim}")
    return [list(values[i:i + chart_dim]) for i in range(0, len(values), chart_dim)]


if __name__ == "__main__":
    print("CONFIG - Pruebas")
    print("=" * 60)

    text = "[manifold]\nvariant = euclidean\ndim = 3\n\n[run]\ndt = 0.01\nt_grid = 1, 2, 3\n"
    config = validate_config(text)
    echo = canonical_echo(config)
    print(echo)
    print(f"Punto fijo: {canonical_echo(validate_config(echo)) == echo}")

    try:
        validate_config("[run]\ndt = -1\nfoo = 2\n")
    except ValidationError as exc:
        for error in exc.errors:
            print(f"  {error}")

    print("\n" + "=" * 60)

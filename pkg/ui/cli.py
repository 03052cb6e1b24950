"""
Interfaz de línea de comandos: un subcomando por experimento.

    python main.py <subcomando> [--config ARCHIVO] [--seed S] [--workers N]
                                [--plot DIR] [-v | -q] [--echo]

Códigos de salida: 0 éxito, 1 uso, 2 validación, 3 fallo numérico
(veredicto indeciso, desborde o verificación fallida).
"""

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import bundle as bundles
from core import feynman_kac as fk
from core import geometry, kato, spectral_oracle
from core.stochastic_paths import SamplerConfig, dump_paths, sample_paths
from core import visualization
from ui.config import (
    ExperimentConfig,
    apply_environment,
    canonical_echo,
    load_config,
    points_from_flat,
    validate_config,
    with_overrides,
)
from utils.serialization import complex_vector, make_record, write_csv, write_gnuplot, write_json
from utils.timer import Timer
from utils.validators import NumericalError, ValidationError


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

LOG_FORMAT = "[%(module)-16s] %(levelname)s %(message)s"
WAVE_LEAK_FREE = 1e-3
WAVE_LEAK_BOUNDED = 1e-2
HYDROGEN_TIMES = (0.5, 1.0, 1.5)
GAUSSIAN_TIMES = tuple(np.geomspace(1e-3, 1e-1, 8))

# Configuración usada cuando no se pasa --config
DEFAULT_CONFIGS: Dict[str, str] = {
    "semigroup": "[manifold]\nvariant = flat_torus\ndim = 2\nlengths = 1.0, 1.0\n",
    "matrix-element": "[manifold]\nvariant = euclidean\ndim = 1\n[potential]\nkind = harmonic\n"
                      "[section]\nkind = oscillator\n",
    "kato": "[manifold]\nvariant = euclidean\ndim = 3\n[potential]\nkind = coulomb\n",
    "exp-moment": "[manifold]\nvariant = euclidean\ndim = 3\n[potential]\nkind = coulomb\n"
                  "[run]\nt = 0.01\ndt = 0.0001\nn_paths = 20000\n",
    "gaussian-bound": "[manifold]\nvariant = euclidean\ndim = 3\n",
    "davies-gaffney": "[manifold]\nvariant = circle\n",
    "wave-speed": "[manifold]\nvariant = circle\n[run]\nnodes = 2048\n",
    "mollify": "[manifold]\nvariant = circle\n[section]\nkind = bump\ncenter = 3.0\nradius = 1.0\n",
    "hydrogen": "[manifold]\nvariant = euclidean\ndim = 3\n[run]\ndt = 0.001\nn_paths = 20000\n",
    "oracle-compare": "[manifold]\nvariant = circle\n[bundle]\nconnection = abelian\nbeta = 0.5\n"
                      "[potential]\nkind = cosine\n[run]\nnodes = 512\nn_paths = 200000\n",
}
COMMANDS = tuple(DEFAULT_CONFIGS)


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser que sale con código 1 ante errores de uso"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Construcción de objetos desde la configuración
# ---------------------------------------------------------------------------

def build_model(config: ExperimentConfig) -> geometry.ManifoldModel:
    m = config.manifold
    variant, lengths = m["variant"], m["lengths"]
    kwargs = {"t0": m["t0"]}
    if variant == "euclidean":
        return geometry.euclidean(m["dim"], **kwargs)
    if variant == "circle":
        return geometry.circle(lengths[0] if lengths else 2 * math.pi, **kwargs)
    if variant == "flat_torus":
        return geometry.flat_torus(*(lengths or [1.0] * m["dim"]), **kwargs)
    if variant == "sphere2":
        return geometry.sphere2(m["radius"], **kwargs)
    if variant == "hyperbolic3":
        return geometry.hyperbolic3(**kwargs)
    return geometry.interval_absorbing(lengths[0] if lengths else math.pi, **kwargs)


def default_point(model: geometry.ManifoldModel) -> np.ndarray:
    """Punto de evaluación por defecto de cada variedad"""
    if model.variant in ("sphere2", "hyperbolic3"):
        return np.array([0.0, 0.0, 1.0])
    if model.variant == "interval_absorbing":
        return np.array([model.lengths[0] / 2])
    return np.zeros(model.chart_dim)


def _center(model, values) -> np.ndarray:
    return default_point(model) if values is None else np.asarray(values, dtype=float)


def build_bundle(model: geometry.ManifoldModel, config: ExperimentConfig) -> bundles.BundleSpec:
    b = config.bundle
    rank, kind = b["rank"], b["connection"]
    if kind == "zero":
        return bundles.zero_connection(model, rank)
    if kind == "abelian":
        beta = b["beta"][0] if len(b["beta"]) == 1 else b["beta"]
        return bundles.abelian_connection(model, beta, rank)
    if kind == "magnetic":
        return bundles.magnetic_connection(model, b["field"], rank)
    return bundles.smooth_connection(model, rank, b["seed"], b["scale"])


def build_potential(model: geometry.ManifoldModel, config: ExperimentConfig) -> bundles.PotentialField:
    p = config.potential
    rank = config.bundle["rank"]
    kind = p["kind"]
    center = _center(model, p["center"])
    if kind == "zero":
        return bundles.zero_potential(rank, model)
    if kind == "constant":
        return bundles.constant_potential(p["c"], rank, model)
    if kind == "cosine":
        return bundles.cosine_potential(model, p["a"], p["b"], rank)
    if kind == "harmonic":
        return bundles.harmonic_potential(model, p["omega"], rank)
    if kind == "coulomb":
        return bundles.coulomb_potential(model, center, p["kappa"], rank, p["r_cut"])
    if kind == "inverse_power":
        return bundles.inverse_power_potential(model, center, p["power"], p["scale"], rank, p["r_cut"])
    if kind == "random_hermitian":
        return bundles.random_hermitian_potential(model, rank, p["seed"], p["scale"])
    return bundles.pauli_coulomb_potential(model, config.bundle["field"], p["kappa"], center, p["r_cut"])


def build_section(model: geometry.ManifoldModel, config: ExperimentConfig) -> fk.SectionField:
    s = config.section
    rank = config.bundle["rank"]
    kind, direction = s["kind"], s["direction"]
    center = _center(model, s["center"])
    if kind == "constant":
        return fk.constant_section(s["value"], rank, direction)
    if kind == "gaussian":
        return fk.gaussian_section(center, s["width"], s["value"], rank, direction,
                                   model if model.periodic else None)
    if kind == "exponential":
        return fk.exponential_section(center, s["decay"], rank, direction)
    if kind == "bump":
        return fk.bump_section(center, s["radius"], rank, direction, model if model.periodic else None)
    if kind == "indicator":
        return fk.indicator_section(s["lower"], s["upper"], rank, direction)
    if kind == "cosine":
        length = model.lengths[0] if model.lengths else 2 * math.pi
        return fk.cosine_section(length, s["mode"], s["offset"], s["amplitude"])
    return fk.oscillator_ground_state()


def sampler_config(config: ExperimentConfig) -> SamplerConfig:
    run = config.run
    return SamplerConfig(dt=run["dt"], seed=run["seed"], workers=run["workers"])


def _x_grid(model, config: ExperimentConfig) -> List[np.ndarray]:
    points = points_from_flat(config.run["x_grid"], model.chart_dim)
    return [np.asarray(p) for p in points] or [default_point(model)]


# ---------------------------------------------------------------------------
# Experimentos
# ---------------------------------------------------------------------------

class Outcome:
    """Resultado de un subcomando: registro, resumen, tablas y figuras"""

    def __init__(self, schema: str, payload: dict, summary: str, ok: bool = True):
        self.schema = schema
        self.payload = payload
        self.summary = summary
        self.ok = ok
        self.table: Optional[Tuple[Sequence[str], List[Sequence]]] = None
        self.dump: Optional[Tuple[Sequence[float], Sequence[float], str]] = None
        self.figures: List[Callable] = []
        self.paths: list = []


def _format_vector(values: np.ndarray) -> str:
    vals = np.real_if_close(np.asarray(values))
    return np.array2string(vals, precision=6, separator=", ")


def run_semigroup(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    x = _center(model, config.run["x"])
    est = fk.estimate_semigroup(model, build_bundle(model, config), build_potential(model, config),
                                build_section(model, config), config.run["t"], x,
                                config.run["n_paths"], sampler_config(config))
    payload = {"model": model.label, "t": config.run["t"], "x": x, "value": complex_vector(est.value),
               "stderr": est.stderr, "paths_used": est.paths_used,
               "clamped_fraction": est.clamped_fraction, "alive_fraction": est.alive_fraction,
               "all_absorbed": est.all_absorbed, "metadata": est.metadata}
    out = Outcome("semigroup_estimate", payload,
                  f"semigroup: {_format_vector(est.value)} ± {_format_vector(est.stderr)}")
    out.table = (["component", "re", "im", "stderr"],
                 [(i, float(np.real(v)), float(np.imag(v)), float(e))
                  for i, (v, e) in enumerate(zip(est.value, est.stderr))])
    if config.output["paths"] or config.output["plot"]:
        out.paths = sample_paths(model, x, config.run["t"], sampler_config(config),
                                 config.output["dump_count"])
        out.figures = [lambda: visualization.create_paths_plot(out.paths)]
    return out


def run_matrix_element(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    f = build_section(model, config)
    est = fk.estimate_matrix_element(model, build_bundle(model, config), build_potential(model, config),
                                     f, f, config.run["t"], config.run["n_paths"], sampler_config(config))
    payload = {"model": model.label, "t": config.run["t"], "value": est.value, "stderr": est.stderr,
               "paths_used": est.paths_used, "sampling": est.sampling,
               "normalization": est.normalization, "clamped_fraction": est.clamped_fraction,
               "metadata": est.metadata}
    out = Outcome("matrix_element", payload, f"matrix-element: {est.value:.6g} ± {est.stderr:.2g}")
    out.table = (["re", "im", "stderr"], [(est.value.real, est.value.imag, est.stderr)])
    return out


def _kato_weight(v: bundles.PotentialField) -> bundles.ScalarField:
    w = bundles.weight_field(v, "v2")
    if w.constant == 0.0:
        return bundles.weight_field(v, "abs")
    return w


def run_kato(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    v = build_potential(model, config)
    times = sorted(config.run["t_grid"] or kato.DEFAULT_KATO_TIMES, reverse=True)
    report = kato.kato_verdict(model, _kato_weight(v), times, _x_grid(model, config),
                               config.run["method"], config.run["n_paths"], sampler_config(config))
    alpha = "-" if report.alpha is None else f"{report.alpha:.3f}"
    out = Outcome("kato_report", {"model": model.label, "weight": v.name, **report.to_dict()},
                  f"kato: {report.verdict} (alpha={alpha})", ok=report.verdict != "undecided")
    out.table = (["t", "b", "argmax", "alpha", "verdict"],
                 [(t, b, " ".join(repr(float(c)) for c in p), alpha, report.verdict)
                  for t, b, p in zip(report.t_grid, report.b_values, report.sup_points)])
    out.dump = (report.t_grid, report.b_values, "t b(t)")
    out.figures = [lambda: visualization.create_kato_plot(report)]
    return out


def run_exp_moment(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    v = build_potential(model, config)
    report = kato.exp_moment(model, _kato_weight(v), config.run["t"], _x_grid(model, config),
                             config.run["n_paths"], sampler_config(config))
    payload = {"model": model.label, "t": config.run["t"], "value": report.value,
               "stderr": report.stderr, "per_point": report.per_point,
               "per_point_stderr": report.per_point_stderr, "finite": report.finite,
               "failing_point": report.failing_point, "failing_path": report.failing_path}
    summary = (f"exp-moment: {report.value:.6g} ± {report.stderr:.2g}" if report.finite
               else f"exp-moment: overflow (punto {report.failing_point}, camino {report.failing_path})")
    out = Outcome("exp_moment", payload, summary, ok=report.finite)
    out.table = (["point", "value", "stderr"],
                 [(i, m, e) for i, (m, e) in enumerate(zip(report.per_point, report.per_point_stderr))])
    return out


def run_gaussian_bound(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    times = [t for t in (config.run["t_grid"] or GAUSSIAN_TIMES) if t <= model.t0]
    fit = geometry.verify_gaussian_bound(model, geometry.check_grid(model), times)
    payload = {"model": model.label, "times": times, "c1": fit.c1, "c2": fit.c2,
               "success": fit.success, "worst_ratio": fit.worst_ratio, "samples": fit.samples,
               "skipped": fit.skipped, "per_c2": fit.per_c2}
    out = Outcome("gaussian_bound", payload,
                  f"gaussian-bound: C1={fit.c1:.4g} C2={fit.c2:.4g} {'PASS' if fit.success else 'FAIL'}",
                  ok=fit.success)
    out.table = (["c2", "c1"], fit.per_c2)
    out.figures = [lambda: visualization.create_gaussian_bound_plot(fit)]
    return out


def run_davies_gaffney(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    op = spectral_oracle.discretize(model, build_bundle(model, config), build_potential(model, config),
                                    config.run["nodes"])
    times = config.run["t_grid"] or spectral_oracle.DG_TIMES
    u1 = spectral_oracle.arc_nodes(op, 0.2, 0.7)
    rows = []
    for sep in config.run["separations"]:
        u2 = spectral_oracle.arc_nodes(op, 0.7 + sep, 1.2 + sep)
        result = spectral_oracle.davies_gaffney_check(op, u1, u2, times, seed=config.run["seed"])
        rows += [(sep, result.separation, t, result.D, ratio) for t, ratio in zip(times, result.per_time)]
    worst = max(r[-1] for r in rows)
    ok = worst <= spectral_oracle.DG_ALLOWANCE
    payload = {"model": model.label, "nodes": op.nodes, "worst_ratio": worst,
               "records": [dict(zip(("separation", "d", "t", "D", "ratio"), r)) for r in rows]}
    out = Outcome("davies_gaffney", payload,
                  f"davies-gaffney: worst ratio {worst:.4f} {'PASS' if ok else 'FAIL'}", ok=ok)
    out.table = (["separation", "d", "t", "D", "ratio"], rows)
    return out


def run_wave_speed(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    v = build_potential(model, config)
    op = spectral_oracle.with_shift(spectral_oracle.discretize(model, build_bundle(model, config), v,
                                                               config.run["nodes"]))
    h = max(op.spacing)
    given = config.section["center"] or config.run["x"]
    if given is None and model.lengths:
        given = [model.lengths[0] / 2]
    center = _center(model, given)
    radius = config.section["radius"]
    margin = config.run["margin"] or 5 * h
    f = fk.bump_section(center, radius, op.rank, model=model if model.periodic else None)
    leaked = spectral_oracle.finite_speed_check(op, spectral_oracle.sample_section(op, f),
                                                config.run["t"], center, radius, margin)
    threshold = WAVE_LEAK_FREE if v.sup_norm == 0 else WAVE_LEAK_BOUNDED
    ok = leaked < threshold
    payload = {"model": model.label, "nodes": op.nodes, "t": config.run["t"], "margin": margin,
               "shift": op.shift, "leaked": leaked, "threshold": threshold}
    return Outcome("wave_speed", payload,
                   f"wave-speed: leaked {leaked:.3e} {'PASS' if ok else 'FAIL'}", ok=ok)


def run_mollify(config: ExperimentConfig) -> Outcome:
    model = build_model(config)
    op = spectral_oracle.discretize(model, build_bundle(model, config), build_potential(model, config),
                                    config.run["nodes"])
    h = max(op.spacing)
    vec = spectral_oracle.sample_section(op, build_section(model, config))
    radii = [k * h for k in config.run["radii"]]
    rows = spectral_oracle.graph_norm_convergence(op, vec, radii)
    decreasing = [all(a[c] > b[c] for a, b in zip(rows, rows[1:])) for c in (1, 2, 3)]
    payload = {"model": model.label, "nodes": op.nodes, "h": h,
               "rows": [dict(zip(("r", "f", "Hf", "Vf"), r)) for r in rows],
               "decreasing": decreasing}
    out = Outcome("graph_norm", payload,
                  f"mollify: {len(rows)} radios, columnas decrecientes {decreasing}")
    out.table = (["r", "f", "Hf", "Vf"], rows)
    out.figures = [lambda: visualization.create_convergence_plot(rows, ["||f_r - f||", "||H(f_r - f)||",
                                                                        "||V(f_r - f)||"])]
    return out


def run_hydrogen(config: ExperimentConfig) -> Outcome:
    times = config.run["t_grid"] or list(HYDROGEN_TIMES)
    report = fk.hydrogen_energy(times, config.run["n_paths"], sampler_config(config),
                                kappa=config.potential["kappa"], field_b=config.bundle["field"],
                                rank=config.bundle["rank"])
    energy = report.energy
    payload = {"rank": report.rank, "field": report.field_b, "kappa": report.kappa,
               "energy": energy.energy, "stderr": energy.stderr, "times": energy.times,
               "log_values": energy.log_values, "log_stderr": energy.log_stderr,
               "window": energy.window, "clamped_fraction": energy.clamped_fraction,
               "kato": report.kato.to_dict(), "metadata": energy.metadata}
    out = Outcome("hydrogen", payload,
                  f"hydrogen: E0 = {energy.energy:.4f} ± {energy.stderr:.2g}, kato {report.kato.verdict}",
                  ok=report.kato.verdict != "undecided")
    out.table = (["t", "log", "stderr"], list(zip(energy.times, energy.log_values, energy.log_stderr)))
    out.dump = (energy.times, energy.log_values, "t log<f,e^{-tH}f>")
    out.figures = [lambda: visualization.create_energy_plot(energy),
                   lambda: visualization.create_kato_plot(report.kato)]
    return out


def run_oracle_compare(config: ExperimentConfig) -> Outcome:
    beta = config.bundle["beta"][0] if config.bundle["connection"] == "abelian" else 0.5
    times = config.run["t_grid"] or (0.25, 0.5, 1.0)
    result = spectral_oracle.oracle_compare(config.run["n_paths"], sampler_config(config), beta=beta,
                                            times=times, points=config.run["points"],
                                            nodes=config.run["nodes"], bias_budget=config.run["bias"])
    payload = {"beta": beta, "max_deviation": result.max_deviation, "passed": result.passed,
               "bias_budget": result.budget, "records": result.records, "metadata": result.metadata}
    out = Outcome("oracle_compare", payload,
                  f"oracle-compare: max deviation {result.max_deviation:.4g} "
                  f"{'PASS' if result.passed else 'FAIL'}", ok=result.passed)
    out.table = (["t", "x", "mc_re", "mc_im", "stderr", "oracle_re", "oracle_im", "deviation"],
                 [(r["t"], r["x"], r["mc"].real, r["mc"].imag, r["stderr"], r["oracle"].real,
                   r["oracle"].imag, r["deviation"]) for r in result.records])
    return out


RUNNERS: Dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "semigroup": run_semigroup,
    "matrix-element": run_matrix_element,
    "kato": run_kato,
    "exp-moment": run_exp_moment,
    "gaussian-bound": run_gaussian_bound,
    "davies-gaffney": run_davies_gaffney,
    "wave-speed": run_wave_speed,
    "mollify": run_mollify,
    "hydrogen": run_hydrogen,
    "oracle-compare": run_oracle_compare,
}


# ---------------------------------------------------------------------------
# Salidas
# ---------------------------------------------------------------------------

def write_outputs(outcome: Outcome, config: ExperimentConfig, plot_dir: Optional[str] = None,
                  created: Optional[str] = None) -> List[Path]:
    """Escribe el registro (JSON o CSV), el volcado gnuplot y las figuras pedidas"""
    written = []
    base = config.output["path"]
    if base:
        base = Path(base)
        if config.output["format"] == "json" or outcome.table is None:
            target = base.with_suffix(".json")
            write_json(make_record(outcome.schema, outcome.payload, created), target)
        else:
            target = base.with_suffix(".csv")
            write_csv(outcome.table[0], outcome.table[1], target)
        written.append(target)
        if outcome.dump is not None:
            target = base.with_suffix(".dat")
            write_gnuplot(*outcome.dump, target)
            written.append(target)
    if outcome.paths and config.output["paths"]:
        target = Path(config.output["paths"])
        with open(target, "wb") as stream:
            size = dump_paths(outcome.paths, stream)
        logger.info("%d caminos (%d bytes) volcados en %s", len(outcome.paths), size, target)
        written.append(target)
    plot_dir = plot_dir or config.output["plot"]
    if plot_dir and outcome.figures:
        Path(plot_dir).mkdir(parents=True, exist_ok=True)
        written += visualization.plot_if_requested(str(Path(plot_dir) / outcome.schema), outcome.figures)
    return written


def run_subcommand(name: str, config: ExperimentConfig, plot_dir: Optional[str] = None,
                   created: Optional[str] = None) -> Tuple[int, Outcome]:
    """
    Ejecuta un experimento ya validado y escribe sus artefactos.

    Returns:
        (código de salida, Outcome)
    """
    if name not in RUNNERS:
        raise ValidationError(f"Subcomando desconocido '{name}'")
    if plot_dir:
        config = replace(config, output={**config.output, "plot": plot_dir})
    with Timer(name) as timer:
        outcome = RUNNERS[name](config)
        timer.lap("cálculo")
        write_outputs(outcome, config, plot_dir, created)
        timer.lap("salida")
    outcome.summary = f"{outcome.summary} [{timer.summary()}]"
    return (EXIT_OK if outcome.ok else EXIT_NUMERIC), outcome


# ---------------------------------------------------------------------------
# Entrada
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Archivo de configuración por secciones")
    common.add_argument("--seed", type=int, help="Semilla (sobrescribe [run] seed)")
    common.add_argument("--workers", type=int, help="Hilos (sobrescribe [run] workers)")
    common.add_argument("--plot", metavar="DIR", help="Directorio para los gráficos PNG")
    common.add_argument("--echo", action="store_true", help="Imprime la configuración canónica y termina")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Registro DEBUG")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Sólo advertencias")

    parser = UsageParser(prog="fks", description="Motor Feynman-Kac y arnés de verificación")
    sub = parser.add_subparsers(dest="command", metavar="subcomando", parser_class=UsageParser)
    sub.required = True
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"experimento {name}")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(format=LOG_FORMAT, level=level, force=True)


def resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else validate_config(DEFAULT_CONFIGS[args.command])
    config = apply_environment(config)
    return with_overrides(config, seed=args.seed, workers=args.workers)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Punto de entrada de la línea de comandos.

    Returns:
        Código de salida (0, 1, 2 o 3)
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = resolve_config(args)
        if args.echo:
            print(canonical_echo(config), end="")
            return EXIT_OK
        code, outcome = run_subcommand(args.command, config, args.plot)
    except ValidationError as exc:
        for error in exc.errors or [str(exc)]:
            logger.error("%s", error)
        return EXIT_VALIDATION
    except NumericalError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERIC
    print(outcome.summary)
    return code


if __name__ == "__main__":
    sys.exit(main())

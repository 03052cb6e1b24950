"""
Módulo de visualización de los diagnósticos
Gráficos de b(t), ajustes de energía, cotas gaussianas y caminos muestreados
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


logger = logging.getLogger(__name__)

FIGSIZE = (8, 5)


def _axes(ax):
    if ax is None:
        fig, ax = plt.subplots(figsize=FIGSIZE)
    else:
        fig = ax.figure
    return fig, ax


def create_kato_plot(report, ax=None, title: str = "Función de Kato b(t)"):
    """
    Gráfico log-log de b(t) con el ajuste de potencia C t^α.

    Args:
        report: KatoReport
        ax: Eje de matplotlib (si None, se crea uno nuevo)
        title: Título del gráfico

    Returns:
        Figura y eje de matplotlib
    """
    fig, ax = _axes(ax)
    t = np.asarray(report.t_grid, dtype=float)
    b = np.asarray(report.b_values, dtype=float)
    finite = np.isfinite(b) & (b > 0)
    ax.loglog(t[finite], b[finite], "o-", color="#1f77b4", label="b(t)")
    if report.alpha is not None and report.constant is not None:
        ax.loglog(t, report.constant * t ** report.alpha, "--", color="gray",
                  label=f"{report.constant:.3g}·t^{report.alpha:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("b(t)")
    if title:
        ax.set_title(f"{title} [{report.verdict}]", fontsize=12, fontweight="bold")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def create_energy_plot(estimate, ax=None, title: str = "Energía fundamental"):
    """
    log ⟨f, e^{-tH} f⟩ frente a t, con barras de error y la recta de la
    ventana de ajuste (pendiente -E0).
    """
    fig, ax = _axes(ax)
    t = np.asarray(estimate.times, dtype=float)
    y = np.asarray(estimate.log_values, dtype=float)
    err = np.asarray(estimate.log_stderr, dtype=float)
    ax.errorbar(t, y, yerr=err, fmt="o", capsize=3, label="log ⟨f, e^{-tH} f⟩")
    window = slice(len(t) - estimate.window, len(t))
    tw, yw = t[window], y[window]
    intercept = float(np.mean(yw + estimate.energy * tw))
    span = np.linspace(t.min(), t.max(), 50)
    ax.plot(span, intercept - estimate.energy * span, "--", color="gray",
            label=f"E0 = {estimate.energy:.4f} ± {estimate.stderr:.2g}")
    ax.set_xlabel("t")
    ax.set_ylabel("log")
    if title:
        ax.set_title(title, fontsize=12, fontweight="bold")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return fig, ax


def create_gaussian_bound_plot(fit, ax=None, title: str = "Ajuste de la cota gaussiana"):
    """C1(C2) sobre la malla de C2, marcando el par elegido"""
    fig, ax = _axes(ax)
    c2 = np.array([p[0] for p in fit.per_c2])
    c1 = np.array([p[1] for p in fit.per_c2])
    ax.semilogy(c2, c1, "o-", label="C1(C2)")
    ax.semilogy([fit.c2], [fit.c1], "r*", markersize=14,
                label=f"C1={fit.c1:.3g}, C2={fit.c2:.3g}")
    ax.set_xlabel("C2")
    ax.set_ylabel("C1")
    if title:
        ax.set_title(title, fontsize=12, fontweight="bold")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def create_paths_plot(paths: Sequence, ax=None, title: str = "Caminos muestreados",
                      coordinate: int = 0):
    """Coordenada de carta de cada camino frente al tiempo (hasta su último nodo)"""
    fig, ax = _axes(ax)
    for path in paths:
        last = path.last_index + 1
        ax.plot(path.times[:last], path.points[:last, coordinate], linewidth=0.8, alpha=0.8)
        if not path.alive:
            ax.plot(path.times[last - 1], path.points[last - 1, coordinate], "kx")
    ax.set_xlabel("t")
    ax.set_ylabel(f"x[{coordinate}]")
    if title:
        ax.set_title(title, fontsize=12, fontweight="bold")
    ax.grid(True, alpha=0.3)
    return fig, ax


def create_convergence_plot(rows: Sequence[Tuple[float, ...]], labels: Sequence[str], ax=None,
                            title: str = "Convergencia"):
    """
    Columnas de una tabla de convergencia (primera columna = abscisa) en
    escala log-log.
    """
    fig, ax = _axes(ax)
    table = np.asarray(rows, dtype=float)
    for col, label in enumerate(labels, start=1):
        values = table[:, col]
        keep = values > 0
        ax.loglog(table[keep, 0], values[keep], "o-", label=label)
    ax.set_xlabel("r")
    if title:
        ax.set_title(title, fontsize=12, fontweight="bold")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def save_figure(fig, path) -> Path:
    """Guarda la figura (PNG o PDF según la extensión) y la cierra"""
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info("Gráfico guardado en %s", path)
    return path


def save_plots(figures: List, stem, suffix: str = ".png") -> List[Path]:
    """Guarda varias figuras como <stem>_<i><suffix>"""
    stem = Path(stem)
    if len(figures) == 1:
        return [save_figure(figures[0], stem.with_suffix(suffix))]
    return [save_figure(fig, stem.parent / f"{stem.stem}_{i}{suffix}") for i, fig in enumerate(figures)]


def plot_if_requested(target: Optional[str], builders: Sequence) -> List[Path]:
    """
    Construye y guarda las figuras sólo si se pidió un destino.

    Args:
        target: Ruta base de salida o None
        builders: Funciones sin argumentos que devuelven (fig, ax)
    """
    if not target:
        return []
    return save_plots([build()[0] for build in builders], target)


if __name__ == "__main__":
    print("VISUALIZATION - Pruebas")
    print("=" * 60)

    from core.kato import KatoReport

    report = KatoReport(t_grid=[1e-1, 1e-2, 1e-3], b_values=[0.3, 0.09, 0.03],
                        sup_points=[[0.0]] * 3, verdict="kato", method="quadrature",
                        alpha=0.5, constant=1.0, r_squared=1.0)
    fig, _ = create_kato_plot(report)
    print(f"Figura con {len(fig.axes)} eje(s)")
    plt.close(fig)

    print("\n" + "=" * 60)

"""
Emisión de resultados: JSON, CSV y gráficos SVG deterministas
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from cayley.errors import BadRange, IoError  # noqa: E402

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "svg")
FLOAT_FORMAT = "%.12e"
SVG_SALT = "cayley-forge"


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "model_dump"):
        return value.model_dump()
    raise TypeError(f"tipo no serializable: {type(value).__name__}")


def format_cell(value: Any) -> str:
    """Floats con %.12e, enteros y textos tal cual, None vacío"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def render_json(payload: Dict[str, Any], seed: Optional[int]) -> str:
    body = dict(payload)
    body["seed"] = seed
    return json.dumps(body, sort_keys=True, indent=2, default=_jsonable, ensure_ascii=False) + "\n"


def render_csv(rows: Sequence[Dict[str, Any]], columns: Sequence[str], seed: Optional[int]) -> str:
    """Primera línea `# seed=N`, luego cabecera y filas en el orden de columns"""
    lines = [f"# seed={seed}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(format_cell(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def render_svg(plot: Dict[str, Any], path: Path, seed: Optional[int]) -> None:
    """
    Dispersión log–log con recta ajustada y su pendiente anotada

    Args:
        plot: {"x", "y", "xlabel", "ylabel", "title"}
    """
    x = np.asarray(plot["x"], dtype=float)
    y = np.asarray(plot["y"], dtype=float)
    plt.rcParams["svg.hashsalt"] = SVG_SALT
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        ax.loglog(x, y, "o", label="datos")
        keep = (x > 0) & (y > 0)
        if keep.sum() >= 2:
            slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
            xs = np.geomspace(x[keep].min(), x[keep].max(), 32)
            ax.loglog(xs, np.exp(intercept) * xs ** slope, "-", label="ajuste")
            ax.annotate(f"fitted slope = {slope:.4f}", xy=(0.05, 0.92), xycoords="axes fraction")
        ax.set_xlabel(plot.get("xlabel", "t"))
        ax.set_ylabel(plot.get("ylabel", ""))
        ax.set_title(f"{plot.get('title', '')} (seed={seed})")
        ax.legend(loc="lower right")
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)


def emit_report(
    name: str,
    fmt: str,
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
    payload: Optional[Dict[str, Any]] = None,
    rows: Optional[List[Dict[str, Any]]] = None,
    columns: Optional[Sequence[str]] = None,
    plot: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Escribir un resultado en out_dir/<name>.<fmt>

    Args:
        name: nombre base del archivo (sin directorios)
        fmt: json | csv | svg
        out_dir: directorio de salida
        seed: semilla registrada en el archivo
        payload: diccionario para JSON
        rows, columns: filas para CSV; sin filas se escribe solo la cabecera
        plot: datos del gráfico para SVG

    Returns:
        Ruta escrita

    Raises:
        BadRange: formato desconocido o nombre con directorios
        IoError: no se pudo escribir
    """
    if fmt not in FORMATS:
        raise BadRange(f"formato desconocido: {fmt}")
    if Path(name).name != name:
        raise BadRange(f"el nombre de salida no puede incluir directorios: {name}")
    out = Path(out_dir)
    path = out / f"{name}.{fmt}"
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path.write_text(render_json(payload or {}, seed), encoding="utf-8")
        elif fmt == "csv":
            cols = list(columns or (rows[0].keys() if rows else []))
            path.write_text(render_csv(rows or [], cols, seed), encoding="utf-8")
        else:
            render_svg(plot or {"x": [], "y": []}, path, seed)
    except OSError as e:
        raise IoError(f"Error al escribir {path}: {e}") from e
    logger.info("reporte escrito: %s", path)
    return path

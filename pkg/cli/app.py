"""
CLI cayley-forge con comandos:
- check-plane, angle-test
- critical-rates, index-change, index
- glue, alpha-scan, error-scan, iterate, norms

Cada comando devuelve un diccionario de resultado; dispatch lo imprime y
traduce las excepciones a códigos de salida (2 validación, 3 numérico).
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from cayley.cayley_flow import NormalField, initial_error_scan, iterate_to_cayley, nonlinear_F
from cayley.config_loader import RunConfig, load_config, write_resolved_config
from cayley.errors import BadRange, CayleyForgeError, UnknownCommand
from cayley.flat_cone_spectra import (
    REFERENCE_FLAT_RATES,
    compact_index_formula,
    compute_rate_table,
    index_change,
    load_rate_table,
    verify_rate_table,
)
from cayley.gluing import (
    alpha_cayley_scan,
    alpha_decay_scan,
    build_scenario,
    curvature_scan,
    seam_diagnostics,
)
from cayley.schemas import IterationParams
from cayley.settings import ForgeSettings
from cayley.spin7_algebra import OrientedPlane4, angle_criterion, phi0_eval, tau_eval
from cayley.weighted_analysis import (
    WeightedNormSpec,
    interpolating_weight,
    norm_report_rows,
    random_smooth_field,
    weighted_holder_norm,
    weighted_sobolev_norm,
)
from cli.report import emit_report
from store.artifacts import save_immersion, save_normal_field
from store.matrix_cache import MatrixCache

logger = logging.getLogger(__name__)

CAYLEY_TOL = 1e-9
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class RunContext:
    """Estado compartido por un comando: configuración, salida, semilla y caché"""

    def __init__(self, config: RunConfig, settings: ForgeSettings, out_dir: Path, svg: bool, use_cache: bool):
        self.config = config
        self.settings = settings
        self.out_dir = out_dir
        self.seed = config.seed
        self.svg = svg
        cache_dir = settings.cache_dir if settings.cache_dir.is_absolute() else out_dir / settings.cache_dir
        self.cache = MatrixCache(cache_dir, enabled=use_cache)

    def build(self, t: float):
        return build_scenario(self.config.scenario, t, **self.config.geometry_kwargs())

    def report(self, name: str, fmt: str, **kwargs) -> Path:
        return emit_report(name, fmt, self.out_dir, seed=self.seed, **kwargs)

    def map_scales(self, func: Callable[[float], Any], ts: Sequence[float]) -> List[Any]:
        """Aplicar func en paralelo; el orden de salida sigue ts"""
        with ThreadPoolExecutor(max_workers=self.settings.threads) as pool:
            return list(pool.map(func, ts))


def parse_frame(text: str) -> np.ndarray:
    """'e1,e2,-e3,e4' o 32 números separados por comas -> marco (4, 8)"""
    tokens = [tok.strip() for tok in text.split(",") if tok.strip()]
    if len(tokens) == 32:
        try:
            return np.array([float(tok) for tok in tokens]).reshape(4, 8)
        except ValueError as e:
            raise BadRange(f"marco inválido: {e}") from e
    if len(tokens) != 4:
        raise BadRange(f"se esperan 4 vectores base (e1..e8) o 32 números, recibido '{text}'")
    frame = np.zeros((4, 8))
    for row, tok in enumerate(tokens):
        sign = -1.0 if tok.startswith("-") else 1.0
        name = tok.lstrip("+-")
        if len(name) != 2 or name[0] != "e" or name[1] not in "12345678":
            raise BadRange(f"vector base desconocido: {tok}")
        frame[row, int(name[1]) - 1] = sign
    return frame


def parse_plane(text: str) -> OrientedPlane4:
    try:
        return OrientedPlane4.from_array(parse_frame(text))
    except ValidationError as e:
        raise BadRange(f"plano inválido '{text}': {e.errors()[0]['msg']}") from e


def parse_floats(text: str) -> List[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise BadRange(f"lista numérica inválida '{text}': {e}") from e


class ForgeCLI:
    """Tabla de comandos y sus analizadores de argumentos"""

    def __init__(self):
        self.tools: Dict[str, Callable[[argparse.Namespace, RunContext], Dict[str, Any]]] = {
            "check-plane": self.check_plane,
            "angle-test": self.angle_test,
            "critical-rates": self.critical_rates,
            "index-change": self.index_change,
            "index": self.index,
            "glue": self.glue,
            "alpha-scan": self.alpha_scan,
            "error-scan": self.error_scan,
            "iterate": self.iterate,
            "norms": self.norms,
        }

    # ------------------------------------------------------------------ parsers

    @staticmethod
    def add_global_flags(parser: argparse.ArgumentParser, suppress: bool = False) -> None:
        default = argparse.SUPPRESS if suppress else None
        parser.add_argument("--config", default=default, help="Archivo YAML o clave = valor")
        parser.add_argument("--out", default=default, help="Directorio de salida")
        parser.add_argument("--seed", type=int, default=default, help="Semilla registrada en cada salida")
        parser.add_argument("--svg", action="store_true", default=argparse.SUPPRESS if suppress else False)
        parser.add_argument("--no-cache", action="store_true", default=argparse.SUPPRESS if suppress else False)
        parser.add_argument("--log-level", default=default, help="DEBUG, INFO, WARNING, ...")

    def command_parser(self, command: str) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog=f"cayley-forge {command}")
        self.add_global_flags(parser, suppress=True)
        if command == "check-plane":
            parser.add_argument("--frame", default="e1,e2,e3,e4")
        elif command == "angle-test":
            parser.add_argument("--plane1", default="e1,e2,e3,e4")
            parser.add_argument("--plane2", default="e5,e6,e7,e8")
            parser.add_argument("--angles", default=None, help="θ1..θ4: plane2 = span(cos θ eᵢ + sin θ eᵢ₊₄)")
        elif command == "critical-rates":
            parser.add_argument("--range", nargs=2, type=float, default=[-4.0, 2.0], metavar=("LO", "HI"))
            parser.add_argument("--no-verify", action="store_true", help="omitir el contraste con la tabla publicada")
        elif command == "index-change":
            parser.add_argument("--delta1", type=float, required=True)
            parser.add_argument("--delta2", type=float, required=True)
            parser.add_argument("--table", default="flat", help="flat | quadric | ruta a CSV lambda,d")
        elif command == "index":
            parser.add_argument("--sigma", type=int, required=True)
            parser.add_argument("--euler", type=int, required=True)
            parser.add_argument("--self-int", type=int, required=True)
            parser.add_argument("--dim-s", type=int, required=True)
        elif command in ("glue", "iterate", "norms"):
            parser.add_argument("--t", type=float, default=None)
            if command == "glue":
                parser.add_argument("--dump-seams", action="store_true")
            if command == "norms":
                parser.add_argument("--field", choices=("F", "random"), default="F")
                parser.add_argument("--eps", type=float, default=0.05)
        elif command in ("alpha-scan", "error-scan"):
            parser.add_argument("--t-list", default=None, help="Escalas separadas por comas")
        return parser

    # ----------------------------------------------------------------- commands

    def check_plane(self, args, ctx: RunContext) -> Dict[str, Any]:
        """Φ₀, |τ| y si el plano es de Cayley"""
        plane = parse_plane(args.frame)
        phi = float(phi0_eval(plane))
        tau_norm = float(np.linalg.norm(tau_eval(plane)))
        result = {"phi": phi, "tau_norm": tau_norm, "cayley": bool(phi >= 1.0 - CAYLEY_TOL)}
        ctx.report("check_plane", "json", payload=result)
        return result

    def angle_test(self, args, ctx: RunContext) -> Dict[str, Any]:
        """Ángulos característicos y criterio Σθ ≤ π"""
        p1 = parse_plane(args.plane1)
        if args.angles is not None:
            angles = parse_floats(args.angles)
            if len(angles) != 4:
                raise BadRange(f"se esperan 4 ángulos, recibido {len(angles)}")
            frame = np.zeros((4, 8))
            for i, theta in enumerate(angles):
                frame[i, i] = np.cos(theta)
                frame[i, i + 4] = np.sin(theta)
            p2 = OrientedPlane4.from_array(frame)
        else:
            p2 = parse_plane(args.plane2)
        result = angle_criterion(p1, p2)
        ctx.report("angle_test", "json", payload=result)
        return result

    def critical_rates(self, args, ctx: RunContext) -> Dict[str, Any]:
        """Tabla d(λ) del cono plano contrastada con la publicada salvo --no-verify"""
        lo, hi = args.range
        table = compute_rate_table(lo=lo, hi=hi)
        ctx.report("rates", "csv", rows=table.rows(), columns=["lambda", "d"])
        if not args.no_verify:
            verify_rate_table(table)
        return {"range": [lo, hi], "rates": [[lam, d] for lam, d in table.entries]}

    def index_change(self, args, ctx: RunContext) -> int:
        """Σ d(λ) con λ entre los pesos"""
        if args.table == "flat":
            table = REFERENCE_FLAT_RATES
        elif args.table == "quadric":
            table = load_rate_table()
        else:
            table = load_rate_table(args.table)
        if table.lo is not None and (args.delta1 < table.lo or args.delta2 > table.hi):
            raise BadRange(f"pesos fuera del rango de la tabla ({table.lo}, {table.hi})")
        value = index_change(table, args.delta1, args.delta2)
        ctx.report("index_change", "json", payload={
            "delta1": args.delta1, "delta2": args.delta2, "table": args.table, "index_change": value,
        })
        return value

    def index(self, args, ctx: RunContext) -> int:
        """½(σ + χ) − [N]·[N] + dim 𝒮"""
        value = compact_index_formula(args.sigma, args.euler, args.self_int, args.dim_s)
        ctx.report("index", "json", payload={
            "sigma": args.sigma, "euler": args.euler, "self_intersection": args.self_int,
            "dim_family": args.dim_s, "index": value,
        })
        return value

    def glue(self, args, ctx: RunContext) -> Dict[str, Any]:
        t = ctx.config.t if args.t is None else args.t
        glued = ctx.build(t)
        save_immersion(ctx.out_dir / "glued.bin", glued, seed=ctx.seed)
        margin = alpha_cayley_scan(glued)
        curvature = curvature_scan(glued)
        result = {
            "t": t,
            "nodes": glued.size,
            "dims": list(glued.grid.shape),
            "part_counts": glued.part_counts(),
            "min_margin": margin.min_margin,
            "argmin": margin.argmin,
            "part": margin.part,
            "sup_rho_second_form": curvature.sup_rho_second_form,
        }
        if args.dump_seams:
            seams = [s.model_dump() for s in seam_diagnostics(glued)]
            ctx.report("seams", "csv", rows=seams, columns=["seam", "s", "position_jump", "derivative_jump"])
            result["seams"] = seams
        ctx.report("glue", "json", payload=result)
        return result

    def _scales(self, args, ctx: RunContext) -> List[float]:
        if args.t_list is None:
            return list(ctx.config.t_list)
        ts = parse_floats(args.t_list)
        for t in ts:
            ctx.config.gluing_data(t)
        return ts

    def alpha_scan(self, args, ctx: RunContext) -> Dict[str, Any]:
        """Margen mínimo, decaimiento de α y curvatura por escala"""
        ts = self._scales(args, ctx)

        def measure(t: float) -> Dict[str, Any]:
            glued = ctx.build(t)
            margin = alpha_cayley_scan(glued)
            decay = alpha_decay_scan(glued)
            return {
                "t": t,
                "nodes": glued.size,
                "min_margin": margin.min_margin,
                "part": margin.part,
                "sup_rho_grad_alpha": decay.sup_rho_grad_alpha,
                "normalized": decay.normalized,
                "rho_at_argmax": decay.rho_at_argmax,
                "in_neck": decay.in_neck,
                "sup_rho_second_form": curvature_scan(glued).sup_rho_second_form,
            }

        rows = ctx.map_scales(measure, ts)
        columns = ["t", "nodes", "min_margin", "part", "sup_rho_grad_alpha", "normalized",
                   "rho_at_argmax", "in_neck", "sup_rho_second_form"]
        ctx.report("alpha_scan", "csv", rows=rows, columns=columns)
        normalized = [r["normalized"] for r in rows]
        if ctx.svg:
            ctx.report("alpha_scan", "svg", plot={
                "x": ts, "y": normalized, "xlabel": "t", "ylabel": "sup ρ|∇α|·|log t|", "title": "alpha-scan",
            })
        summary = {
            "rows": rows,
            "normalized_spread": max(normalized) / min(normalized) if min(normalized) > 0 else None,
        }
        ctx.report("alpha_scan", "json", payload=summary)
        return summary

    def error_scan(self, args, ctx: RunContext) -> Dict[str, Any]:
        """Pendiente log–log de ‖F(0)‖ contra t"""
        cfg = ctx.config
        result = initial_error_scan(
            ctx.build, self._scales(args, ctx), cfg.nu, cfg.mu, cfg.delta,
            p=cfg.p, k=cfg.k, lam=cfg.lam, threads=ctx.settings.threads,
        )
        rows = [r.model_dump() for r in result.rows]
        ctx.report("error_scan", "csv", rows=rows, columns=["t", "F_norm", "nodes"])
        if ctx.svg:
            ctx.report("error_scan", "svg", plot={
                "x": [r["t"] for r in rows], "y": [r["F_norm"] for r in rows],
                "xlabel": "t", "ylabel": "‖F(0)‖", "title": "error-scan",
            })
        summary = {
            "rows": rows,
            "slope": result.slope,
            "predicted": result.predicted,
            "relative_error": abs(result.slope - result.predicted) / abs(result.predicted),
        }
        ctx.report("error_scan", "json", payload=summary)
        return summary

    def iterate(self, args, ctx: RunContext) -> Dict[str, Any]:
        """Iteración hacia una inmersión de Cayley con el anillo exterior fijo"""
        cfg = ctx.config
        t = cfg.t if args.t is None else args.t
        glued = ctx.build(t)
        params = IterationParams(max_iter=cfg.max_iter, tol=cfg.tol, delta=cfg.delta, p=cfg.p, k=cfg.k,
                                 relinearize=cfg.relinearize)
        result = iterate_to_cayley(glued, params, cache=ctx.cache)
        ctx.report("iterate", "csv", rows=result.rows(),
                   columns=["iter", "step_norm", "ratio", "F_norm", "min_margin"])
        if ctx.svg and result.history:
            ctx.report("iterate", "svg", plot={
                "x": [h.iter for h in result.history], "y": result.step_norms,
                "xlabel": "iteración", "ylabel": "‖v_{i+1} − v_i‖", "title": "iterate",
            })
        save_normal_field(ctx.out_dir / "normal_field.bin", result.v_final, seed=ctx.seed)
        summary = result.model_dump(exclude={"v_final", "history"})
        summary.update({"t": t, "iterations": len(result.history), "ratios": result.ratios})
        ctx.report("iterate", "json", payload=summary)
        return summary

    def norms(self, args, ctx: RunContext) -> Dict[str, Any]:
        """Normas con peso del error inicial o de un campo aleatorio suave"""
        cfg = ctx.config
        t = cfg.t if args.t is None else args.t
        glued = ctx.build(t)
        if args.field == "F":
            field = nonlinear_F(glued)
        else:
            field = NormalField(glued, random_smooth_field(glued, seed=ctx.seed))
        delta = cfg.delta - 1.0
        spec = WeightedNormSpec(p=cfg.p, k=cfg.k, deltas=[delta])
        rho = glued.rho
        interp = interpolating_weight(rho.values, t, cfg.nu, delta, args.eps)
        entries = [
            ("sobolev", weighted_sobolev_norm(field, glued, spec, rho)),
            ("holder", weighted_holder_norm(field, glued, spec, rho)),
            ("sobolev_interpolating", weighted_sobolev_norm(field, glued, spec, rho, weight=interp)),
            ("holder_interpolating", weighted_holder_norm(field, glued, spec, rho, weight=interp)),
        ]
        rows = norm_report_rows([
            {"norm_kind": kind, "p": cfg.p, "k": cfg.k, "delta": delta, "value": value, "resolution": glued.size}
            for kind, value in entries
        ])
        ctx.report("norms", "csv", rows=rows, columns=["norm_kind", "p", "k", "delta", "value", "resolution"])
        return {"t": t, "field": args.field, "eps": args.eps, "rows": rows}


def build_parser(cli: ForgeCLI) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cayley-forge", description="Herramientas de geometría de Cayley")
    ForgeCLI.add_global_flags(parser)
    parser.add_argument("command", help=", ".join(cli.tools))
    parser.add_argument("rest", nargs=argparse.REMAINDER)
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr, force=True)


def _print_error(error: Exception) -> None:
    payload = {
        "success": False,
        "error": type(error).__name__,
        "message": f"Error al ejecutar el comando: {error}",
    }
    print(json.dumps(payload, ensure_ascii=False, sort_keys=True, default=str), file=sys.stderr)


def _resolve(top: argparse.Namespace, sub: argparse.Namespace, name: str, fallback=None):
    value = getattr(sub, name, None)
    if value is None or value is False:
        value = getattr(top, name, None)
    return fallback if value is None else value


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Ejecutar un comando

    Args:
        argv: argumentos sin el nombre del programa

    Returns:
        0 éxito, 2 validación, 3 falla numérica o de artefactos
    """
    cli = ForgeCLI()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        top = build_parser(cli).parse_args(argv)
        if top.command not in cli.tools:
            raise UnknownCommand(
                f"comando desconocido '{top.command}'; disponibles: {', '.join(cli.tools)}"
            )
        args = cli.command_parser(top.command).parse_args(top.rest)
    except SystemExit as e:
        return int(e.code or 0)
    except CayleyForgeError as e:
        _print_error(e)
        return e.exit_code

    try:
        settings = ForgeSettings()
        configure_logging(_resolve(top, args, "log_level", settings.log_level))
        seed = _resolve(top, args, "seed")
        config = load_config(_resolve(top, args, "config"), overrides={"seed": seed})
        out_dir = Path(_resolve(top, args, "out", config.output_dir or settings.output_dir))
        ctx = RunContext(
            config, settings, out_dir,
            svg=bool(_resolve(top, args, "svg", False)),
            use_cache=not _resolve(top, args, "no_cache", False),
        )
        write_resolved_config(config, out_dir)
        logger.info("comando %s (seed=%d, salida=%s)", top.command, config.seed, out_dir)
        result = cli.tools[top.command](args, ctx)
    except CayleyForgeError as e:
        logger.error("%s: %s", type(e).__name__, e)
        _print_error(e)
        return e.exit_code
    if isinstance(result, dict):
        print(json.dumps(result, sort_keys=True, ensure_ascii=False, default=str))
    else:
        print(result)
    return 0


def main() -> None:
    sys.exit(dispatch())

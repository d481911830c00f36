"""
Cargar la configuración de escenario (RunConfig) desde YAML o texto clave = valor
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cayley.errors import BadRange, ConfigInvalid, IoError, ScaleViolation
from cayley.gluing import SCENARIOS, GluingData
from cayley.weighted_analysis import balanced_nu, weight_window

logger = logging.getLogger(__name__)

LIST_KEYS = ("t_list", "link")
RESOLVED_NAME = "resolved_config.yaml"


class RunConfig(BaseModel):
    """Escenario, geometría del pegado, parámetros de análisis y resolución"""

    model_config = ConfigDict(extra="forbid")

    scenario: str = Field("quadric", description="quadric | cone")
    epsilon_ac: float = Field(0.25, gt=0, description="Escala del suavizado AC")
    r_core: float = Field(0.4, gt=0, description="Radio interior de la pieza AC (coordenadas AC)")
    r0: float = Field(0.6, gt=0)
    R0: float = Field(0.5, gt=0)
    r_out: float = Field(1.0, gt=0)
    nu: Optional[float] = Field(None, description="Por defecto (λ−1)/(λ−μ)")
    nu_p: Optional[float] = Field(None, description="Por defecto 0.85 ν")
    nu_pp: Optional[float] = Field(None, description="Por defecto 0.7 ν")
    lam: float = Field(-1.0, description="Tasa AC λ")
    mu: float = Field(1.5, description="Tasa CS μ")
    delta: float = Field(1.25)
    p: float = Field(2.0, gt=1)
    k: int = Field(0, ge=0)
    t: float = Field(0.02, ge=0)
    t_list: List[float] = Field(default_factory=lambda: [0.08, 0.04, 0.02, 0.01])
    radial_density: float = Field(10.0, gt=0, description="Nodos por unidad de log s")
    link: List[int] = Field(default_factory=lambda: [8, 8, 8])
    seed: int = 0
    max_iter: int = Field(20, ge=1)
    tol: float = Field(1e-10, gt=0)
    relinearize: bool = Field(True, description="Linealizar F en cada iterado de iterate")
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _resolve_and_check(self):
        if self.scenario not in SCENARIOS:
            raise ConfigInvalid("scenario", f"escenario desconocido '{self.scenario}', opciones {SCENARIOS}")
        try:
            lo, hi = weight_window(self.lam, self.mu)
        except BadRange as e:
            raise ConfigInvalid("mu", str(e)) from e
        if not lo < self.delta < hi:
            raise ConfigInvalid("delta", f"δ = {self.delta} fuera de la ventana ({lo}, {hi:.6g})")
        if self.nu is None:
            self.nu = balanced_nu(self.lam, self.mu)
        if self.nu_p is None:
            self.nu_p = 0.85 * self.nu
        if self.nu_pp is None:
            self.nu_pp = 0.7 * self.nu
        if not 0 < self.nu < 1:
            raise ConfigInvalid("nu", f"se requiere 0 < ν < 1, recibido {self.nu}")
        if not self.nu_p < self.nu:
            raise ConfigInvalid("nu_p", f"se requiere ν′ < ν, recibido ν′={self.nu_p}, ν={self.nu}")
        if not 0 < self.nu_pp < self.nu_p:
            raise ConfigInvalid("nu_pp", f"se requiere 0 < ν″ < ν′, recibido ν″={self.nu_pp}, ν′={self.nu_p}")
        if len(self.link) != 3:
            raise ConfigInvalid("link", f"se esperan 3 resoluciones (η, ξ1, ξ2), recibido {self.link}")
        for key, values in (("t", [self.t]), ("t_list", self.t_list)):
            for t in values:
                try:
                    self.gluing_data(t)
                except ScaleViolation as e:
                    raise ConfigInvalid(key, str(e)) from e
        return self

    def gluing_data(self, t: float) -> GluingData:
        return GluingData(
            scales=[t], nu=self.nu, nu_p=self.nu_p, nu_pp=self.nu_pp, r0=self.r0, R0=self.R0, r_out=self.r_out
        )

    def geometry_kwargs(self) -> Dict[str, Any]:
        """Argumentos de gluing.build_scenario salvo t"""
        return {
            "epsilon_ac": self.epsilon_ac,
            "r_core": self.r_core,
            "link_res": tuple(self.link),
            "nu": self.nu,
            "nu_p": self.nu_p,
            "nu_pp": self.nu_pp,
            "r0": self.r0,
            "R0": self.R0,
            "r_out": self.r_out,
            "radial_density": self.radial_density,
        }


def _scalar(text: str) -> Any:
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text.strip("\"'")


def parse_key_value(text: str) -> Dict[str, Any]:
    """
    Formato de texto: una clave por línea, `clave = valor`, `#` comenta,
    listas separadas por comas
    """
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"línea {number}", f"se esperaba 'clave = valor', recibido '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if "," in value or key in LIST_KEYS:
            values[key] = [_scalar(v) for v in value.split(",") if v.strip()]
        else:
            values[key] = _scalar(value)
    return values


def _read_raw(path: Path) -> Dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"Error al leer {path}: {e}") from e
    if path.suffix in (".yaml", ".yml"):
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigInvalid(str(path), f"YAML inválido: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigInvalid(str(path), "se esperaba un mapeo en la raíz")
        for key in LIST_KEYS:
            if key in raw and not isinstance(raw[key], list):
                raw[key] = [raw[key]]
        return raw
    return parse_key_value(text)


def load_config(config_path: Union[str, Path, None] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Cargar y validar RunConfig

    Args:
        config_path: archivo YAML o clave = valor; por defecto conf/scenario.yaml
        overrides: valores que reemplazan los del archivo (flags de la CLI)

    Returns:
        RunConfig con ν, ν′, ν″ resueltos

    Raises:
        ConfigInvalid: con la clave ofensora
    """
    if config_path is None:
        # Por defecto conf/scenario.yaml relativo a la raíz del proyecto
        config_path = Path(__file__).parent.parent / "conf" / "scenario.yaml"
        raw = _read_raw(config_path) if config_path.exists() else {}
    else:
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigInvalid("config", f"no existe el archivo {config_path}")
        raw = _read_raw(config_path)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        config = RunConfig(**raw)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else "config"
        raise ConfigInvalid(key, first["msg"]) from e
    logger.debug("configuración cargada desde %s", config_path)
    return config


def write_resolved_config(config: RunConfig, directory: Union[str, Path]) -> Path:
    """Escribir la configuración resuelta (claves ordenadas) en el directorio de salida"""
    path = Path(directory) / RESOLVED_NAME
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(config.model_dump(), sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise IoError(f"Error al escribir {path}: {e}") from e
    return path

"""
Schemas Pydantic para los registros que intercambian los módulos y la CLI
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class MarginScan(BaseModel):
    """Resultado de alpha_cayley_scan"""
    min_margin: float = Field(..., description="Mínimo de Φ₀ sobre los marcos tangentes")
    argmin: int = Field(..., description="Nodo donde se alcanza el mínimo")
    part: Optional[str] = Field(None, description="Parte del nodo (upper, middle, lower, leftover)")


class AlphaDecay(BaseModel):
    """Resultado de alpha_decay_scan"""
    sup_rho_grad_alpha: float = Field(..., description="sup ρ|∇α|")
    normalized: float = Field(..., description="sup ρ|∇α| · |log t|")
    argmax: Optional[int] = Field(None, description="Nodo del supremo")
    rho_at_argmax: Optional[float] = Field(None, description="ρ en el nodo del supremo")
    in_neck: bool = Field(False, description="Si el supremo cae entre t^ν′ y t^ν″")


class CurvatureScan(BaseModel):
    """Resultado de curvature_scan"""
    sup_rho_second_form: float = Field(..., description="sup ρ|II|")
    argmax: int = Field(..., description="Nodo del supremo")


class SeamReport(BaseModel):
    """Saltos en una costura de la región media"""
    seam: str = Field(..., description="inner (φ = 0) o outer (φ = 1)")
    s: float = Field(..., description="Radio de la costura")
    position_jump: float = Field(..., description="max |Θ_mezcla − Θ_pura| en la costura")
    derivative_jump: float = Field(..., description="max |dΘ_mezcla − dΘ_pura| en la costura")


class ErrorScanRow(BaseModel):
    """Fila de initial_error_scan"""
    t: float
    F_norm: float
    nodes: int


class ErrorScanResult(BaseModel):
    """Pendiente ajustada de ‖F(0)‖ contra t"""
    rows: List[ErrorScanRow] = Field(default_factory=list)
    slope: float = Field(..., description="Pendiente log–log medida")
    predicted: float = Field(..., description="Exponente ν(μ − δ)")


class IterationParams(BaseModel):
    """Parámetros de iterate_to_cayley"""
    max_iter: int = Field(20, ge=1)
    tol: float = Field(1e-10, gt=0)
    delta: float = Field(1.25, description="Peso de las incógnitas; los residuos usan δ − 1")
    p: float = Field(2.0, gt=1)
    k: int = Field(0, ge=0)
    boundary: str = Field("fixed-outer-ring", description="Único contrato de borde soportado")
    contraction_limit: float = Field(0.9, description="Razón sobre la cual se cuenta un paso sin contracción")
    relinearize: bool = Field(True, description="Linealizar F en cada iterado; False usa siempre la D en 0")


class IterationRecord(BaseModel):
    """Una fila del historial de convergencia"""
    iter: int
    step_norm: float
    ratio: Optional[float] = None
    F_norm: float
    min_margin: float


class IterationResult(BaseModel):
    """Resultado de iterate_to_cayley"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    v_final: Any = Field(..., description="NormalField final")
    history: List[IterationRecord] = Field(default_factory=list)
    converged: bool = False
    initial_margin: float
    final_margin: float
    initial_F_norm: float
    final_F_norm: float

    @property
    def step_norms(self) -> List[float]:
        return [h.step_norm for h in self.history]

    @property
    def ratios(self) -> List[float]:
        return [h.ratio for h in self.history if h.ratio is not None]

    def rows(self) -> List[Dict[str, Any]]:
        return [h.model_dump() for h in self.history]

"""
Construcción de la inmersión pegada N^Ā a partir de un cono CS y piezas AC

En el cuello (r₀t < s < t^ν) la inmersión interpola la pieza AC reescalada
t·Θ_AC(p, s/t) y la pieza CS Θ_CS(p, s) con el corte φ(2s/t^ν − 1):
AC pura para s ≤ ⅝t^ν, CS pura para s ≥ ⅞t^ν. Las derivadas son analíticas,
incluido el término del corte. La grilla radial es log-espaciada con nodos
forzados en todas las costuras.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from cayley.conical_scenarios import (
    DEFAULT_LINK_RES,
    DiscreteImmersion,
    ParametricPatch,
    make_quadric_cone,
    make_quadric_smoothing,
)
from cayley.errors import BadRange, ConeMismatch, ScaleViolation
from cayley.grids import Axis, StructuredGrid
from cayley.schemas import AlphaDecay, CurvatureScan, MarginScan, SeamReport
from cayley.weighted_analysis import (
    RadiusFunction,
    WeightedNormSpec,
    balanced_nu,
    radial_monotonicity,
    weighted_sobolev_norm,
)

logger = logging.getLogger(__name__)

PART_LABELS = ("upper", "middle", "lower", "leftover")
UPPER, MIDDLE, LOWER, LEFTOVER = range(4)
SOURCE_AC, SOURCE_CS, SOURCE_BLEND = range(3)
SCENARIOS = ("quadric", "cone")

CUTOFF_LO, CUTOFF_HI = 0.25, 0.75
SEAM_INNER = 0.625
SEAM_OUTER = 0.875
CONE_CHECK_RADIUS = 1e6
CONE_TOL = 1e-10
DEFAULT_RADIAL_DENSITY = 10


class GluingData(BaseModel):
    """Escalas y exponentes del pegado"""

    scales: List[float] = Field(..., description="t_i por extremo (≥ 0)")
    nu: float = Field(0.8, description="Exponente del cuello ν")
    nu_p: float = Field(0.68, description="ν′, meseta superior de α")
    nu_pp: float = Field(0.56, description="ν″, meseta inferior de α")
    r0: float = Field(0.6, description="Corte interior r₀")
    R0: float = Field(0.5, description="Radio exterior del cono R₀")
    r_out: float = Field(1.0, description="Radio exterior de la grilla")

    @model_validator(mode="after")
    def _check_inequalities(self):
        if not self.scales:
            raise ScaleViolation("se necesita al menos un extremo")
        if any(t < 0 for t in self.scales):
            raise ScaleViolation(f"escalas negativas: {self.scales}")
        if not 0 < self.nu_pp < self.nu_p < self.nu < 1:
            raise ScaleViolation(
                f"se requiere 0 < ν″ < ν′ < ν < 1, recibido ({self.nu_pp}, {self.nu_p}, {self.nu})"
            )
        if not 0 < self.R0 < 1 or self.r_out <= self.R0 or self.r0 <= 0:
            raise ScaleViolation(f"radios inválidos: r₀={self.r0}, R₀={self.R0}, r_out={self.r_out}")
        for t in self.scales:
            if t == 0:
                continue
            chain = (self.r0 * t, 0.5 * t ** self.nu, t ** self.nu, self.R0)
            if not all(a < b for a, b in zip(chain, chain[1:])):
                raise ScaleViolation(
                    f"t={t}: falla 0 < r₀t < ½t^ν < t^ν < R₀ < 1 con valores {chain}"
                )
        return self

    @property
    def t(self) -> float:
        return max(self.scales)

    @classmethod
    def balanced(cls, scales: Sequence[float], lam: float = -1.0, mu: float = 1.5, **kwargs) -> "GluingData":
        """ν = (λ−1)/(λ−μ), ν′ = 0.85ν, ν″ = 0.7ν"""
        nu = balanced_nu(lam, mu)
        return cls(scales=list(scales), nu=nu, nu_p=0.85 * nu, nu_pp=0.7 * nu, **kwargs)


class GluedImmersion(DiscreteImmersion):
    """
    Inmersión pegada con etiquetas de parte, ρ y procedencia por nodo

    Atributos adicionales: `labels` (uint8, índices en PART_LABELS), `s`
    (coordenada radial), `rho` (RadiusFunction), `source` (0 AC, 1 CS,
    2 mezcla), `source_coords` (coordenadas en la pieza de origen).
    """

    kind = "glued"

    def __init__(self, grid, points, tangents, hessians, labels, rho_values, source, source_coords, data, pieces):
        self.grid = grid
        self.points = points
        self.tangents = tangents
        self.hessians = hessians
        self.labels = np.asarray(labels, dtype=np.uint8)
        self.s = grid.coordinates()[:, 0]
        self.source = np.asarray(source, dtype=np.uint8)
        self.source_coords = source_coords
        self.data = data
        self.pieces = pieces
        self.link = pieces[0].link
        self.rho = RadiusFunction(values=rho_values, increasing=radial_monotonicity(self, rho_values))

    def part_counts(self) -> dict:
        return {name: int(np.sum(self.labels == code)) for code, name in enumerate(PART_LABELS)}

    def part_mask(self, name: str) -> np.ndarray:
        return self.labels == PART_LABELS.index(name)

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "link": self.link,
            "dims": list(self.grid.shape),
            "axes": [a.name for a in self.grid.axes],
            "orientation": self.orientation,
            "gluing": self.data.model_dump(),
            "part_counts": self.part_counts(),
            "part_labels": list(PART_LABELS),
        }


def smoothstep5(x):
    """6x⁵ − 15x⁴ + 10x³ en [0, 1], constante fuera"""
    y = np.clip(x, 0.0, 1.0)
    return y ** 3 * (10.0 - 15.0 * y + 6.0 * y * y)


def _smoothstep5_d1(x):
    y = np.clip(x, 0.0, 1.0)
    return 30.0 * y * y * (1.0 - y) ** 2


def _smoothstep5_d2(x):
    y = np.clip(x, 0.0, 1.0)
    return 60.0 * y * (1.0 - y) * (1.0 - 2.0 * y)


def cutoff_phi(s):
    """Corte φ: 0 en (−∞, ¼], 1 en [¾, ∞), monótono y simétrico respecto de ½"""
    value = smoothstep5((np.asarray(s, dtype=float) - CUTOFF_LO) / (CUTOFF_HI - CUTOFF_LO))
    return float(value) if np.ndim(value) == 0 else value


def partition_cutoff(x, nu_p: float, nu_pp: float):
    """φ̃: 0 para x ≤ ν″, 1 para x ≥ ν′"""
    return smoothstep5((np.asarray(x, dtype=float) - nu_pp) / (nu_p - nu_pp))


def glued_radial_nodes(t: float, data: GluingData, s_lo: float, density: float) -> np.ndarray:
    """Nodos radiales log-espaciados con todas las costuras forzadas"""
    if density <= 0:
        raise BadRange(f"densidad radial debe ser positiva, recibido {density}")
    tn = t ** data.nu
    forced = [
        s_lo, data.r0 * t, 0.25 * tn, 0.5 * tn, SEAM_INNER * tn, 0.75 * tn, SEAM_OUTER * tn, tn,
        t ** data.nu_p, t ** data.nu_pp, data.R0, data.r_out,
    ]
    forced = np.unique([s for s in forced if s_lo <= s <= data.r_out])
    nodes = []
    for a, b in zip(forced[:-1], forced[1:]):
        count = max(1, int(np.ceil(density * np.log(b / a))))
        nodes.extend(np.geomspace(a, b, count + 1)[:-1])
    nodes.append(forced[-1])
    return np.array(nodes)


def _scaled_ac(ac: ParametricPatch, t: float, coords: np.ndarray):
    """t·Θ_AC(p, s/t) con derivadas en (s, η, ξ1, ξ2)"""
    local = coords.copy()
    local[:, 0] = coords[:, 0] / t
    f, df, d2f = ac.evaluate(local)
    c = np.array([1.0 / t, 1.0, 1.0, 1.0])
    return t * f, t * c[None, :, None] * df, t * (c[:, None] * c[None, :])[None, :, :, None] * d2f


def _blend(ac_terms, cs_terms, s: np.ndarray, tn: float):
    """(1 − φ)A + φC con las derivadas del corte en s"""
    a, da, d2a = ac_terms
    c, dc, d2c = cs_terms
    x = (4.0 * s / tn - 2.5)
    w = smoothstep5(x)[:, None]
    w1 = (_smoothstep5_d1(x) * 4.0 / tn)[:, None]
    w2 = (_smoothstep5_d2(x) * 16.0 / tn ** 2)[:, None]
    delta, ddelta, d2delta = c - a, dc - da, d2c - d2a
    f = (1.0 - w) * a + w * c
    df = da + w[:, None] * ddelta
    df[:, 0] += w1 * delta
    d2f = d2a + w[:, None, None] * d2delta
    d2f[:, 0, :, :] += w1[:, None] * ddelta
    d2f[:, :, 0, :] += w1[:, None] * ddelta
    d2f[:, 0, 0, :] += w2 * delta
    return f, df, d2f


def evaluate_glued(cs: ParametricPatch, ac: ParametricPatch, t: float, nu: float, coords) -> Tuple:
    """
    Θ_Ā en coordenadas (s, η, ξ1, ξ2)

    Returns:
        (f, df, d2f, source) con source 0 AC, 1 CS, 2 mezcla
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    n = coords.shape[0]
    s = coords[:, 0]
    tn = t ** nu
    source = np.where(s <= SEAM_INNER * tn, SOURCE_AC, np.where(s >= SEAM_OUTER * tn, SOURCE_CS, SOURCE_BLEND))
    f = np.zeros((n, 8))
    df = np.zeros((n, 4, 8))
    d2f = np.zeros((n, 4, 4, 8))
    need_ac = source != SOURCE_CS
    need_cs = source != SOURCE_AC
    ac_terms = _scaled_ac(ac, t, coords[need_ac]) if np.any(need_ac) else None
    cs_terms = cs.evaluate(coords[need_cs]) if np.any(need_cs) else None
    pure_ac = (source == SOURCE_AC)[need_ac]
    pure_cs = (source == SOURCE_CS)[need_cs]
    for out, part in zip((f, df, d2f), range(3)):
        if ac_terms is not None:
            out[source == SOURCE_AC] = ac_terms[part][pure_ac]
        if cs_terms is not None:
            out[source == SOURCE_CS] = cs_terms[part][pure_cs]
    mixed = source == SOURCE_BLEND
    if np.any(mixed):
        blended = _blend(
            tuple(x[~pure_ac] for x in ac_terms), tuple(x[~pure_cs] for x in cs_terms), s[mixed], tn
        )
        f[mixed], df[mixed], d2f[mixed] = blended
    return f, df, d2f, source


def _check_cones(cs: ParametricPatch, ac: ParametricPatch) -> None:
    if cs.link != ac.link:
        raise ConeMismatch(f"enlaces distintos: {cs.link} vs {ac.link}")
    for a, b in zip(cs.grid.axes[1:], ac.grid.axes[1:]):
        if a.kind != b.kind or a.size != b.size or not np.array_equal(a.nodes, b.nodes):
            raise ConeMismatch(f"grillas de enlace distintas en el eje {a.name}")
    link = StructuredGrid(cs.grid.axes[1:]).coordinates()
    far = np.column_stack([np.full(len(link), CONE_CHECK_RADIUS), link])
    near = np.column_stack([np.full(len(link), 1.0 / CONE_CHECK_RADIUS), link])
    ac_cone = ac.evaluate(far)[0] / CONE_CHECK_RADIUS
    cs_cone = cs.evaluate(near)[0] * CONE_CHECK_RADIUS
    gap = float(np.abs(ac_cone - cs_cone).max())
    if gap > CONE_TOL:
        raise ConeMismatch(f"conos asintóticos distintos: diferencia {gap:.3e} > {CONE_TOL}")


def build_glued_immersion(
    cs: ParametricPatch,
    acs: Sequence[ParametricPatch],
    data: GluingData,
    radial_density: float = DEFAULT_RADIAL_DENSITY,
) -> GluedImmersion:
    """
    Ensamblar N^Ā: partes inferior, media y superior (o remanente si t = 0)

    Args:
        cs: cono o modelo CS (un vértice)
        acs: una pieza AC por extremo
        data: escalas y exponentes validados
        radial_density: nodos por unidad de log s entre nodos forzados

    Raises:
        ConeMismatch: enlaces o conos asintóticos distintos
        ScaleViolation: desigualdades de GluingData
    """
    if len(acs) != len(data.scales) or len(acs) != 1:
        raise ConeMismatch(
            f"el modelo CS tiene un vértice: se esperaba 1 pieza AC y 1 escala, "
            f"recibido {len(acs)} y {len(data.scales)}"
        )
    ac = acs[0]
    _check_cones(cs, ac)
    t = data.scales[0]
    if t == 0:
        coords = cs.grid.coordinates()
        s = coords[:, 0]
        labels = np.where(s < data.R0, LEFTOVER, UPPER)
        rho = np.minimum(1.0, np.linalg.norm(cs.points, axis=-1))
        glued = GluedImmersion(
            cs.grid, cs.points.copy(), cs.tangents.copy(), cs.hessians.copy(), labels, rho,
            np.full(len(s), SOURCE_CS), coords, data, (cs, ac),
        )
        logger.info("pegado t=0: pieza CS sin cambios (%d nodos)", glued.size)
        return glued
    s_lo = t * ac.radial_range[0]
    radial = Axis("s", glued_radial_nodes(t, data, s_lo, radial_density), "trapezoid")
    grid = StructuredGrid((radial,) + tuple(cs.grid.axes[1:]))
    coords = grid.coordinates()
    f, df, d2f, source = evaluate_glued(cs, ac, t, data.nu, coords)
    s = coords[:, 0]
    tn = t ** data.nu
    labels = np.where(s <= data.r0 * t, LOWER, np.where(s < tn, MIDDLE, UPPER))
    rho = np.maximum(np.minimum(1.0, np.linalg.norm(f, axis=-1)), 0.5 * data.r0 * t)
    source_coords = coords.copy()
    source_coords[source == SOURCE_AC, 0] /= t
    glued = GluedImmersion(grid, f, df, d2f, labels, rho, source, source_coords, data, (cs, ac))
    logger.info("pegado t=%.4g: %d nodos, partes %s", t, glued.size, glued.part_counts())
    return glued


def build_scenario(
    scenario: str,
    t: float,
    epsilon_ac: float = 0.25,
    r_core: float = 0.4,
    link_res: Sequence[int] = DEFAULT_LINK_RES,
    nu: float = 0.8,
    nu_p: Optional[float] = None,
    nu_pp: Optional[float] = None,
    r0: float = 0.6,
    R0: float = 0.5,
    r_out: float = 1.0,
    radial_density: float = DEFAULT_RADIAL_DENSITY,
    cs_r_lo: float = 1e-3,
) -> GluedImmersion:
    """
    Escenario cuádrico: cono C_q con el suavizado A_ε ("quadric") o con el
    propio cono como pieza AC ("cone", control exactamente Cayley)
    """
    if scenario not in SCENARIOS:
        raise BadRange(f"escenario desconocido: {scenario}")
    data = GluingData(
        scales=[t], nu=nu,
        nu_p=0.85 * nu if nu_p is None else nu_p,
        nu_pp=0.7 * nu if nu_pp is None else nu_pp,
        r0=r0, R0=R0, r_out=r_out,
    )
    n_cs = max(3, int(np.ceil(radial_density * np.log(r_out / cs_r_lo))) + 1)
    cs = make_quadric_cone(cs_r_lo, r_out, link_res, n_r=n_cs)
    ac_hi = max(2.0 * r_core, r_out / t if t > 0 else 2.0 * r_core)
    if scenario == "quadric":
        ac = make_quadric_smoothing(epsilon_ac, ac_hi, link_res, n_r=3, r_lo=r_core)
    else:
        ac = make_quadric_cone(r_core, ac_hi, link_res, n_r=3)
    return build_glued_immersion(cs, [ac], data, radial_density)


def radius_comparison(glued: GluedImmersion) -> np.ndarray:
    """Valor de referencia de ρ: r₀t en las puntas, s en cuellos, R₀ en el cuerpo"""
    data = glued.data
    ref = np.array(glued.s, dtype=float)
    ref[glued.labels == LOWER] = data.r0 * data.t
    ref[glued.s >= data.R0] = data.R0
    return ref


def alpha_cayley_scan(glued: DiscreteImmersion) -> MarginScan:
    """Mínimo del margen de Cayley sobre los planos tangentes"""
    margins = glued.margins
    worst = int(np.argmin(margins))
    labels = getattr(glued, "labels", None)
    part = PART_LABELS[int(labels[worst])] if labels is not None else None
    return MarginScan(min_margin=float(margins[worst]), argmin=worst, part=part)


def partition_alpha(glued: GluedImmersion, data: Optional[GluingData] = None) -> np.ndarray:
    """
    Partición α ∈ [0, 1] por nodo

    α = φ̃(log ρ / log t) con mesetas en ν″ (α = 0) y ν′ (α = 1); α = 1 en
    la parte inferior y α = 0 desde R₀ hacia afuera.
    """
    data = data or glued.data
    t = data.t
    if t == 0:
        return np.zeros(glued.size)
    x = np.log(glued.rho.values) / np.log(t)
    alpha = partition_cutoff(x, data.nu_p, data.nu_pp)
    alpha[glued.labels == LOWER] = 1.0
    alpha[glued.s >= data.R0] = 0.0
    return alpha


def alpha_decay_scan(glued: GluedImmersion, data: Optional[GluingData] = None) -> AlphaDecay:
    """
    sup ρ|∇α| por diferencias finitas y su versión normalizada por |log t|

    Raises:
        BadRange: t ≥ 0.5
    """
    data = data or glued.data
    t = data.t
    if t >= 0.5:
        raise BadRange(f"alpha_decay_scan requiere t < 0.5, recibido {t}")
    if t == 0:
        return AlphaDecay(sup_rho_grad_alpha=0.0, normalized=0.0)
    alpha = partition_alpha(glued, data)
    grad = np.linalg.norm(glued.ambient_gradient(alpha), axis=-1)
    values = glued.rho.values * grad
    best = int(np.argmax(values))
    rho_best = float(glued.rho.values[best])
    in_neck = t ** data.nu_p * (1 - 1e-9) <= rho_best <= t ** data.nu_pp * (1 + 1e-9)
    return AlphaDecay(
        sup_rho_grad_alpha=float(values[best]),
        normalized=float(values[best] * abs(np.log(t))),
        argmax=best,
        rho_at_argmax=rho_best,
        in_neck=bool(in_neck),
    )


def curvature_scan(glued: DiscreteImmersion) -> CurvatureScan:
    """sup ρ|II| con II de las segundas derivadas analíticas"""
    second = glued.second_fundamental_form()
    ginv = glued.inverse_metric
    squared = np.einsum("nik,njl,nija,nkla->n", ginv, ginv, second, second)
    rho = glued.rho.values if hasattr(glued, "rho") else np.minimum(1.0, np.linalg.norm(glued.points, axis=-1))
    values = rho * np.sqrt(np.clip(squared, 0.0, None))
    best = int(np.argmax(values))
    return CurvatureScan(sup_rho_second_form=float(values[best]), argmax=best)


def seam_diagnostics(glued: GluedImmersion) -> List[SeamReport]:
    """Saltos de posición y primera derivada entre la fórmula de mezcla y la pura"""
    data = glued.data
    t = data.t
    if t == 0:
        return []
    cs, ac = glued.pieces
    tn = t ** data.nu
    link = StructuredGrid(glued.grid.axes[1:]).coordinates()
    reports = []
    for name, factor in (("inner", SEAM_INNER), ("outer", SEAM_OUTER)):
        s_val = factor * tn
        coords = np.column_stack([np.full(len(link), s_val), link])
        ac_terms = _scaled_ac(ac, t, coords)
        cs_terms = cs.evaluate(coords)
        blended = _blend(ac_terms, cs_terms, coords[:, 0], tn)
        pure = ac_terms if name == "inner" else cs_terms
        reports.append(SeamReport(
            seam=name,
            s=float(s_val),
            position_jump=float(np.abs(blended[0] - pure[0]).max()),
            derivative_jump=float(np.abs(blended[1] - pure[1]).max()),
        ))
    return reports


def gradient_product(alpha_gradient: np.ndarray, u: np.ndarray) -> np.ndarray:
    """∇α ⋄ u: producto tensorial nodal (N, 8·c)"""
    values = np.asarray(u, dtype=float).reshape(len(u), -1)
    return np.einsum("na,nc->nac", alpha_gradient, values).reshape(len(u), -1)


def product_ratio(glued: GluedImmersion, u, spec: WeightedNormSpec, alpha: Optional[np.ndarray] = None) -> float:
    """‖αu‖ / ‖u‖ en L^p_{k,δ,Ā}"""
    alpha = partition_alpha(glued) if alpha is None else alpha
    values = np.asarray(u, dtype=float).reshape(glued.size, -1)
    num = weighted_sobolev_norm(alpha[:, None] * values, glued, spec, glued.rho)
    return num / weighted_sobolev_norm(values, glued, spec, glued.rho)


def gradient_product_ratio(glued: GluedImmersion, u, spec: WeightedNormSpec) -> float:
    """‖∇α ⋄ u‖_{L^p_{k,δ−1}} · |log t| / ‖u‖_{L^p_{k,δ}}"""
    alpha = partition_alpha(glued)
    values = np.asarray(u, dtype=float).reshape(glued.size, -1)
    lowered = spec.model_copy(update={"deltas": [d - 1.0 for d in spec.deltas]})
    num = weighted_sobolev_norm(gradient_product(glued.ambient_gradient(alpha), values), glued, lowered, glued.rho)
    return num * abs(np.log(glued.data.t)) / weighted_sobolev_norm(values, glued, spec, glued.rho)

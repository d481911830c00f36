"""
Funciones de radio, normas de Sobolev/Hölder con peso, pareo de dualidad,
predicado de inclusiones y producto interno interpolante

Las derivadas son diferencias finitas de orden 2 sobre la grilla estructurada
(mismos operadores que usan F y D); la cuadratura es trapecio en el radio,
punto medio en η y uniforme en ejes periódicos, por √det g.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from cayley.conical_scenarios import DiscreteImmersion
from cayley.errors import BadRange, GridMismatch
from cayley.grids import check_order

logger = logging.getLogger(__name__)

MANIFOLD_DIM = 4


@dataclass(frozen=True)
class RadiusFunction:
    """ρ nodal en (0, 1] con marcas de monotonía radial"""

    values: np.ndarray
    increasing: np.ndarray

    def __post_init__(self):
        if np.any(self.values <= 0) or np.any(self.values > 1.0 + 1e-12):
            raise BadRange("la función de radio debe tomar valores en (0, 1]")


class WeightedNormSpec(BaseModel):
    """Parámetros de L^p_{k,δ̄} y C^k_{δ̄}"""

    p: float = Field(2.0, description="Exponente de integrabilidad, p > 1")
    k: int = Field(0, description="Orden de derivadas, k ≥ 0")
    deltas: List[float] = Field(default_factory=lambda: [0.0], description="Un peso por extremo")
    n: int = Field(MANIFOLD_DIM, description="Dimensión de la variedad")

    @field_validator("p")
    @classmethod
    def _p_gt_one(cls, value):
        if not value > 1.0 or not np.isfinite(value):
            raise ValueError("p debe estar en (1, ∞)")
        return value

    @field_validator("k")
    @classmethod
    def _k_nonneg(cls, value):
        if value < 0:
            raise ValueError("k debe ser ≥ 0")
        return value

    @property
    def delta(self) -> float:
        return self.deltas[0]


def radial_monotonicity(immersion: DiscreteImmersion, values: np.ndarray) -> np.ndarray:
    nxt = immersion.grid.radial_neighbors()
    tags = np.ones(len(values), dtype=bool)
    inner = nxt >= 0
    tags[inner] = values[nxt[inner]] >= values[inner]
    return tags


def conical_radius(immersion: DiscreteImmersion) -> RadiusFunction:
    """ρ = min(1, |f|) sobre parches cónicos; ρ ≡ 1 en el toro"""
    if getattr(immersion, "kind", None) == "torus4":
        values = np.ones(immersion.size)
    else:
        values = np.minimum(1.0, np.linalg.norm(immersion.points, axis=-1))
    return RadiusFunction(values=values, increasing=radial_monotonicity(immersion, values))


def field_values(field) -> np.ndarray:
    """Valores nodales (N, c) de un campo escalar, NormalField o EField"""
    if hasattr(field, "ambient"):
        values = field.ambient()
    else:
        values = np.asarray(field, dtype=float)
    return values.reshape(values.shape[0], -1)


def _check_grid(values: np.ndarray, immersion: DiscreteImmersion) -> None:
    if values.shape[0] != immersion.size:
        raise GridMismatch(f"campo con {values.shape[0]} nodos, grilla con {immersion.size}")


def derivative_magnitudes(field, immersion: DiscreteImmersion, k: int) -> List[np.ndarray]:
    """|∇ⁱ s| por nodo para i = 0..k (gradientes ambientales sucesivos)"""
    check_order(k)
    values = field_values(field)
    _check_grid(values, immersion)
    mags = [np.linalg.norm(values, axis=-1)]
    current = values
    for _ in range(k):
        current = immersion.ambient_gradient(current)
        mags.append(np.linalg.norm(current.reshape(current.shape[0], -1), axis=-1))
    return mags


def _weight_array(spec: WeightedNormSpec, n: int, weight) -> np.ndarray:
    if weight is None:
        return np.full(n, spec.delta)
    return np.broadcast_to(np.asarray(weight, dtype=float), (n,))


def weighted_sobolev_norm(
    field,
    immersion: DiscreteImmersion,
    spec: WeightedNormSpec,
    rho: RadiusFunction,
    weight: Optional[Union[float, np.ndarray]] = None,
) -> float:
    """
    Norma L^p_{k,δ}: (Σᵢ ∫ |∇ⁱs ρ^{−w+i}|^p ρ^{−4} dμ)^{1/p}

    Args:
        field: arreglo nodal, NormalField o EField
        immersion: parche o inmersión pegada
        spec: p, k y pesos
        rho: función de radio
        weight: función de peso nodal w; por defecto el primer δ de spec

    Returns:
        Valor de la norma

    Raises:
        MissingDerivatives: k mayor que el orden disponible
        GridMismatch: campo y grilla incompatibles
    """
    mags = derivative_magnitudes(field, immersion, spec.k)
    w = _weight_array(spec, immersion.size, weight)
    r = rho.values
    density = np.zeros(immersion.size)
    for i, mag in enumerate(mags):
        density += (mag * r ** (-w + i)) ** spec.p
    density *= r ** (-spec.n)
    return float(np.sum(density * immersion.volume_weights) ** (1.0 / spec.p))


def weighted_holder_norm(
    field,
    immersion: DiscreteImmersion,
    spec: WeightedNormSpec,
    rho: RadiusFunction,
    weight: Optional[Union[float, np.ndarray]] = None,
) -> float:
    """Norma C^k_δ: max sobre nodos de Σᵢ |∇ⁱ s| ρ^{−w+i}"""
    mags = derivative_magnitudes(field, immersion, spec.k)
    w = _weight_array(spec, immersion.size, weight)
    total = np.zeros(immersion.size)
    for i, mag in enumerate(mags):
        total += mag * rho.values ** (-w + i)
    return float(total.max())


def duality_pairing(u, v, immersion: DiscreteImmersion) -> float:
    """∫⟨u, v⟩ dμ por cuadratura"""
    a, b = field_values(u), field_values(v)
    if a.shape != b.shape:
        raise GridMismatch(f"campos incompatibles: {a.shape} vs {b.shape}")
    _check_grid(a, immersion)
    return float(np.sum(np.sum(a * b, axis=-1) * immersion.volume_weights))


def embedding_allowed(k: int, k_tilde: int, p: float, p_tilde: float, delta: float, delta_tilde: float, end_kind: str) -> bool:
    """
    ¿Existe la inclusión continua L^p_{k,δ} → L^p̃_{k̃,δ̃}?

    (i) k − k̃ ≥ n(1/p − 1/p̃), y
    (ii) p ≤ p̃ con δ̃ ≥ δ (AC) / δ̃ ≤ δ (CS), o
    (ii') p̃ < p con δ̃ > δ (AC) / δ̃ < δ (CS).
    """
    if not (p > 1 and p_tilde > 1 and np.isfinite(p) and np.isfinite(p_tilde)):
        raise BadRange(f"p y p̃ deben estar en (1, ∞), recibido ({p}, {p_tilde})")
    kind = end_kind.upper()
    if kind not in ("AC", "CS"):
        raise BadRange(f"tipo de extremo desconocido: {end_kind}")
    sobolev = (k - k_tilde) >= MANIFOLD_DIM * (1.0 / p - 1.0 / p_tilde)
    if kind == "AC":
        weak = p <= p_tilde and delta_tilde >= delta
        strict = p_tilde < p and delta_tilde > delta
    else:
        weak = p <= p_tilde and delta_tilde <= delta
        strict = p_tilde < p and delta_tilde < delta
    return bool(sobolev and (weak or strict))


def weight_window(lam: float, mu: float) -> tuple:
    """Pesos admisibles δ ∈ (1, (μ(λ−2)+1)/(λ−μ)) para el error inicial"""
    if not lam < 1 or not 1 < mu < 2:
        raise BadRange(f"se requiere λ < 1 y μ ∈ (1, 2), recibido λ={lam}, μ={mu}")
    return 1.0, (mu * (lam - 2.0) + 1.0) / (lam - mu)


def balanced_nu(lam: float, mu: float) -> float:
    """ν = (λ−1)/(λ−μ): los errores de los lados AC y CS escalan igual"""
    if not lam < 1 or not 1 < mu < 2:
        raise BadRange(f"se requiere λ < 1 y μ ∈ (1, 2), recibido λ={lam}, μ={mu}")
    return (lam - 1.0) / (lam - mu)


def smoothstep3(x: np.ndarray) -> np.ndarray:
    """Cúbica monótona 3x² − 2x³ en [0, 1], constante fuera"""
    y = np.clip(x, 0.0, 1.0)
    return y * y * (3.0 - 2.0 * y)


def interpolating_weight(rho: np.ndarray, t: float, nu: float, delta: float, eps: float) -> np.ndarray:
    """
    w = δ − ε donde ρ ≤ ½t^ν, δ + ε donde ρ ≥ t^ν; cúbica monótona en log ρ entre ambos
    """
    lo = np.log(0.5 * t ** nu)
    x = (np.log(np.asarray(rho, dtype=float)) - lo) / np.log(2.0)
    return delta - eps + 2.0 * eps * smoothstep3(x)


def interpolating_inner_product(u, v, glued, delta: float, eps: float) -> float:
    """
    ⟨u, v⟩_{δ±ε} = ∫⟨u, v⟩ ρ^{w−4} dμ sobre la inmersión pegada

    Raises:
        GridMismatch: campos de distinta forma o fuera de la grilla
        BadRange: eps ≤ 0
    """
    if eps <= 0:
        raise BadRange(f"eps debe ser positivo, recibido {eps}")
    a, b = field_values(u), field_values(v)
    if a.shape != b.shape:
        raise GridMismatch(f"campos incompatibles: {a.shape} vs {b.shape}")
    _check_grid(a, glued)
    rho = glued.rho.values
    w = interpolating_weight(rho, glued.data.t, glued.data.nu, delta, eps)
    return float(np.sum(np.sum(a * b, axis=-1) * rho ** (w - MANIFOLD_DIM) * glued.volume_weights))


def norm_report_rows(entries) -> List[dict]:
    """Filas CSV (norm_kind, p, k, delta, value, resolution)"""
    return [
        {
            "norm_kind": e["norm_kind"],
            "p": e["p"],
            "k": e["k"],
            "delta": e["delta"],
            "value": e["value"],
            "resolution": e["resolution"],
        }
        for e in entries
    ]


def random_smooth_field(immersion: DiscreteImmersion, seed: int = 0, components: int = 4, modes: int = 3) -> np.ndarray:
    """Campo nodal (N, components) suave: suma de senos de la posición ambiente"""
    rng = np.random.default_rng(seed)
    freqs = rng.normal(scale=2.0, size=(components, modes, 8))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(components, modes))
    amps = rng.normal(size=(components, modes))
    args = np.einsum("cma,na->ncm", freqs, immersion.points) + phases[None]
    return np.einsum("ncm,cm->nc", np.sin(args), amps)

"""
Geometría paramétrica de los modelos: T⁴ plano en T⁸, el cono plano de Cayley,
el cono cuádrico complejo C_q y su suavizado A_ε

Cada modelo es una inmersión de una grilla estructurada (radio × enlace, o
coordenadas del toro) en R^8 con primeras y segundas derivadas analíticas.
El enlace se parametriza con coordenadas de Hopf (η, ξ1, ξ2) de S³; el enlace
cuádrico SU(2)/Z2 usa el mismo S³ con ξ1 ∈ [0, π) y giro de medio periodo en ξ2.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from cayley.errors import BadRange, DegenerateImmersion
from cayley.grids import Axis, StructuredGrid
from cayley.spin7_algebra import OrientedPlane4, normal_complement, phi0_eval

logger = logging.getLogger(__name__)

GRAM_FLOOR = 1e-8
DEFAULT_RADIAL_NODES = 64
DEFAULT_LINK_RES = (12, 12, 12)
LINK_KINDS = ("round_s3", "quadric")

Evaluator = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def orthonormal_tangents(tangents: np.ndarray, orientation: float = 1.0) -> np.ndarray:
    """QR con diagonal positiva; la última fila lleva el signo de orientación"""
    t = np.asarray(tangents, dtype=float)
    q, r = np.linalg.qr(np.swapaxes(t, -1, -2))
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs = np.where(signs == 0, 1.0, signs)
    frames = np.swapaxes(q * signs[..., None, :], -1, -2).copy()
    frames[..., 3, :] *= orientation
    return frames


def normalized_gram(tangents: np.ndarray) -> np.ndarray:
    """det(G) / Π G_ii, invariante de escala de la condición de inmersión"""
    t = np.asarray(tangents, dtype=float)
    gram = t @ np.swapaxes(t, -1, -2)
    diag = np.prod(np.diagonal(gram, axis1=-2, axis2=-1), axis=-1)
    return np.linalg.det(gram) / diag


class DiscreteImmersion:
    """
    Inmersión nodal sobre una grilla estructurada con derivadas analíticas

    Subclases fijan `grid`, `points` (N, 8), `tangents` (N, 4, 8) y
    `hessians` (N, 4, 4, 8); de ahí salen métrica, marcos y cuadratura.
    """

    grid: StructuredGrid
    points: np.ndarray
    tangents: np.ndarray
    hessians: np.ndarray

    @cached_property
    def orientation(self) -> float:
        ref = orthonormal_tangents(self.tangents[0])
        return -1.0 if phi0_eval(ref) < 0 else 1.0

    @cached_property
    def metric(self) -> np.ndarray:
        return self.tangents @ np.swapaxes(self.tangents, -1, -2)

    @cached_property
    def inverse_metric(self) -> np.ndarray:
        return np.linalg.inv(self.metric)

    @cached_property
    def volume_weights(self) -> np.ndarray:
        """Pesos de cuadratura: pesos coordenados × √det g"""
        return self.grid.coordinate_weights() * np.sqrt(np.linalg.det(self.metric))

    def check_immersion(self, tangents: Optional[np.ndarray] = None) -> None:
        gram = normalized_gram(self.tangents if tangents is None else tangents)
        worst = int(np.argmin(gram))
        if gram[worst] < GRAM_FLOOR:
            raise DegenerateImmersion(
                f"determinante de Gram normalizado {gram[worst]:.3e} < {GRAM_FLOOR} en el nodo {worst}"
            )

    @cached_property
    def tangent_frames(self) -> np.ndarray:
        self.check_immersion()
        return orthonormal_tangents(self.tangents, self.orientation)

    @cached_property
    def normal_frames(self) -> np.ndarray:
        return normal_complement(self.tangent_frames)

    @cached_property
    def margins(self) -> np.ndarray:
        return phi0_eval(self.tangent_frames)

    @property
    def size(self) -> int:
        return self.grid.size

    def node_index(self, node: Union[int, Sequence[int]]) -> int:
        if isinstance(node, (int, np.integer)):
            if not 0 <= node < self.size:
                raise BadRange(f"nodo {node} fuera de la grilla de {self.size} nodos")
            return int(node)
        return int(np.ravel_multi_index(tuple(node), self.grid.shape))

    def ambient_gradient(self, field: np.ndarray) -> np.ndarray:
        """
        Gradiente tangencial expresado en R^8: Σ g^{jk} ∂_k T ⊗ ∂_j f

        Args:
            field: arreglo (N, ...) de valores nodales

        Returns:
            arreglo (N, ..., 8)
        """
        partials = self.grid.differentiate(field)
        raised = np.einsum("njk,nk...->nj...", self.inverse_metric, partials)
        return np.einsum("nj...,nja->n...a", raised, self.tangents)

    def second_fundamental_form(self) -> np.ndarray:
        """II_ij = componente normal de ∂_i∂_j f, arreglo (N, 4, 4, 8)"""
        normals = self.normal_frames
        coeffs = np.einsum("nija,nba->nijb", self.hessians, normals)
        return np.einsum("nijb,nba->nija", coeffs, normals)


class ParametricPatch(DiscreteImmersion):
    """
    Modelo paramétrico: torus4, cone o ac_smoothing

    Args:
        kind: "torus4" | "cone" | "ac_smoothing"
        grid: grilla estructurada de coordenadas
        evaluator: coordenadas (..., 4) -> (f, df, d2f)
        link: tipo de enlace ("round_s3", "quadric") o None en el toro
        rate: λ para AC, μ para CS (metadato)
        epsilon: escala del suavizado
    """

    def __init__(
        self,
        kind: str,
        grid: StructuredGrid,
        evaluator: Evaluator,
        link: Optional[str] = None,
        rate: Optional[float] = None,
        epsilon: float = 0.0,
    ):
        self.kind = kind
        self.grid = grid
        self.evaluator = evaluator
        self.link = link
        self.rate = rate
        self.epsilon = epsilon
        self.points, self.tangents, self.hessians = evaluator(grid.coordinates())

    def evaluate(self, coords) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.evaluator(np.asarray(coords, dtype=float))

    @property
    def radial_range(self) -> Tuple[float, float]:
        nodes = self.grid.axes[0].nodes
        return float(nodes[0]), float(nodes[-1])

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "link": self.link,
            "rate": self.rate,
            "epsilon": self.epsilon,
            "dims": list(self.grid.shape),
            "axes": [a.name for a in self.grid.axes],
            "orientation": self.orientation,
        }


@dataclass(frozen=True)
class LinkGrid:
    """Enlace L parametrizado por (η, ξ1, ξ2) con pesos de cuadratura"""

    kind: str
    grid: StructuredGrid
    weights: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.coordinates()

    @property
    def volume(self) -> float:
        return float(self.weights.sum())


def link_axes(kind: str, res: Sequence[int]) -> Tuple[Axis, Axis, Axis]:
    if kind not in LINK_KINDS:
        raise BadRange(f"enlace desconocido: {kind}")
    n_eta, n_1, n_2 = (int(v) for v in res)
    if min(n_eta, n_1, n_2) < 3:
        raise BadRange(f"resolución de enlace demasiado baja: {tuple(res)}")
    eta = (np.arange(n_eta) + 0.5) * (0.5 * np.pi / n_eta)
    xi2 = np.arange(n_2) * (2 * np.pi / n_2)
    if kind == "quadric":
        if n_2 % 2:
            raise BadRange(f"el enlace cuádrico necesita n_xi2 par, hay {n_2}")
        xi1 = Axis("xi1", np.arange(n_1) * (np.pi / n_1), "twisted", np.pi)
    else:
        xi1 = Axis("xi1", np.arange(n_1) * (2 * np.pi / n_1), "periodic", 2 * np.pi)
    return Axis("eta", eta, "midpoint"), xi1, Axis("xi2", xi2, "periodic", 2 * np.pi)


def hopf_map(eta, xi1, xi2) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """u ∈ S³ en coordenadas de Hopf con derivadas (…,3,4) y (…,3,3,4)"""
    ce, se = np.cos(eta), np.sin(eta)
    c1, s1 = np.cos(xi1), np.sin(xi1)
    c2, s2 = np.cos(xi2), np.sin(xi2)
    zero = np.zeros_like(ce)
    u = np.stack([ce * c1, ce * s1, se * c2, se * s2], axis=-1)
    d_eta = np.stack([-se * c1, -se * s1, ce * c2, ce * s2], axis=-1)
    d_1 = np.stack([-ce * s1, ce * c1, zero, zero], axis=-1)
    d_2 = np.stack([zero, zero, -se * s2, se * c2], axis=-1)
    du = np.stack([d_eta, d_1, d_2], axis=-2)
    d2u = np.zeros(u.shape[:-1] + (3, 3, 4))
    d2u[..., 0, 0, :] = -u
    d2u[..., 0, 1, :] = d2u[..., 1, 0, :] = np.stack([se * s1, -se * c1, zero, zero], axis=-1)
    d2u[..., 0, 2, :] = d2u[..., 2, 0, :] = np.stack([zero, zero, -ce * s2, ce * c2], axis=-1)
    d2u[..., 1, 1, :] = np.stack([-ce * c1, -ce * s1, zero, zero], axis=-1)
    d2u[..., 2, 2, :] = np.stack([zero, zero, -se * c2, -se * s2], axis=-1)
    return u, du, d2u


def _quaternion_forms() -> Tuple[np.ndarray, np.ndarray]:
    """Formas cuadráticas simétricas con R(u)e_x = uᵀA u, R(u)e_y = uᵀB u"""
    fa = np.zeros((3, 4, 4))
    fb = np.zeros((3, 4, 4))
    fa[0] = np.diag([1.0, 1.0, -1.0, -1.0])
    fa[1, 1, 2] = fa[1, 2, 1] = 1.0
    fa[1, 0, 3] = fa[1, 3, 0] = 1.0
    fa[2, 1, 3] = fa[2, 3, 1] = 1.0
    fa[2, 0, 2] = fa[2, 2, 0] = -1.0
    fb[0, 1, 2] = fb[0, 2, 1] = 1.0
    fb[0, 0, 3] = fb[0, 3, 0] = -1.0
    fb[1] = np.diag([1.0, -1.0, 1.0, -1.0])
    fb[2, 2, 3] = fb[2, 3, 2] = 1.0
    fb[2, 0, 1] = fb[2, 1, 0] = 1.0
    return fa, fb


QUAT_FORM_A, QUAT_FORM_B = _quaternion_forms()


def _quadratic_with_derivatives(form, u, du, d2u):
    value = np.einsum("...i,kij,...j->...k", u, form, u)
    first = 2.0 * np.einsum("...i,kij,...mj->...mk", u, form, du)
    second = 2.0 * (
        np.einsum("...ni,kij,...mj->...mnk", du, form, du)
        + np.einsum("...i,kij,...mnj->...mnk", u, form, d2u)
    )
    return value, first, second


def link_maps(kind: str, eta, xi1, xi2):
    """
    Vectores de enlace P, Q ∈ R^8 (y derivadas) con f = A(r) P + B(r) Q

    round_s3: P = (u, 0), Q = 0. quadric: z = A a + i B b con a = R(u)e_x,
    b = R(u)e_y, incrustado como (Re z1, Im z1, Re z2, Im z2, Re z3, −Im z3, 0, 0).
    """
    u, du, d2u = hopf_map(eta, xi1, xi2)
    lead = u.shape[:-1]
    p = np.zeros(lead + (8,))
    q = np.zeros(lead + (8,))
    dp = np.zeros(lead + (3, 8))
    dq = np.zeros(lead + (3, 8))
    d2p = np.zeros(lead + (3, 3, 8))
    d2q = np.zeros(lead + (3, 3, 8))
    if kind == "round_s3":
        p[..., :4], dp[..., :4], d2p[..., :4] = u, du, d2u
        return p, dp, d2p, q, dq, d2q
    a, da, d2a = _quadratic_with_derivatives(QUAT_FORM_A, u, du, d2u)
    b, db, d2b = _quadratic_with_derivatives(QUAT_FORM_B, u, du, d2u)
    flip = np.array([1.0, 1.0, -1.0])
    p[..., [0, 2, 4]], dp[..., [0, 2, 4]], d2p[..., [0, 2, 4]] = a, da, d2a
    q[..., [1, 3, 5]], dq[..., [1, 3, 5]], d2q[..., [1, 3, 5]] = b * flip, db * flip, d2b * flip
    return p, dp, d2p, q, dq, d2q


def cone_profile(r):
    """A = B = r/√2"""
    a = r / np.sqrt(2.0)
    one = np.full_like(r, 1.0 / np.sqrt(2.0))
    zero = np.zeros_like(r)
    return a, one, zero, a, one, zero


def smoothing_profile(epsilon: float):
    """A = √((r²+ε²)/2), B = √((r²−ε²)/2): |z|² = r², Σ z_k² = ε²"""

    def profile(r):
        a = np.sqrt((r * r + epsilon ** 2) / 2.0)
        b = np.sqrt((r * r - epsilon ** 2) / 2.0)
        da = r / (2.0 * a)
        db = r / (2.0 * b)
        d2a = epsilon ** 2 / (2.0 * a * (r * r + epsilon ** 2))
        d2b = -(epsilon ** 2) / (2.0 * b * (r * r - epsilon ** 2))
        return a, da, d2a, b, db, d2b

    return profile


def flat_profile(r):
    zero = np.zeros_like(r)
    return r, np.ones_like(r), zero, zero, zero, zero


def conical_evaluator(link: str, profile) -> Evaluator:
    """Evaluador de f(r, η, ξ1, ξ2) = A(r) P + B(r) Q con derivadas analíticas"""

    def evaluate(coords: np.ndarray):
        r, eta, xi1, xi2 = (coords[..., i] for i in range(4))
        p, dp, d2p, q, dq, d2q = link_maps(link, eta, xi1, xi2)
        a, da, d2a, b, db, d2b = (v[..., None] for v in profile(r))
        lead = r.shape
        f = a * p + b * q
        df = np.zeros(lead + (4, 8))
        df[..., 0, :] = da * p + db * q
        df[..., 1:, :] = a[..., None] * dp + b[..., None] * dq
        d2f = np.zeros(lead + (4, 4, 8))
        d2f[..., 0, 0, :] = d2a * p + d2b * q
        mixed = da[..., None] * dp + db[..., None] * dq
        d2f[..., 0, 1:, :] = mixed
        d2f[..., 1:, 0, :] = mixed
        d2f[..., 1:, 1:, :] = a[..., None, None] * d2p + b[..., None, None] * d2q
        return f, df, d2f

    return evaluate


def make_link_grid(kind: str, res: Sequence[int] = DEFAULT_LINK_RES) -> LinkGrid:
    """
    Grilla del enlace con pesos inducidos por el cono unitario

    Args:
        kind: "round_s3" o "quadric"
        res: (n_eta, n_xi1, n_xi2)

    Returns:
        LinkGrid; para round_s3 el volumen total aproxima 2π²
    """
    grid = StructuredGrid(link_axes(kind, res))
    coords = grid.coordinates()
    p, dp, _, q, dq, _ = link_maps(kind, coords[:, 0], coords[:, 1], coords[:, 2])
    scale = 1.0 if kind == "round_s3" else 1.0 / np.sqrt(2.0)
    tangents = scale * (dp + dq) if kind == "quadric" else dp
    gram = tangents @ np.swapaxes(tangents, -1, -2)
    weights = grid.coordinate_weights() * np.sqrt(np.linalg.det(gram))
    return LinkGrid(kind=kind, grid=grid, weights=weights)


def radial_axis(r_lo: float, r_hi: float, n: int) -> Axis:
    if n < 3:
        raise BadRange(f"se necesitan al menos 3 nodos radiales, hay {n}")
    return Axis("r", np.geomspace(r_lo, r_hi, n), "trapezoid")


def make_flat_torus4(n: int, offset=None) -> ParametricPatch:
    """
    T⁴ × {0} ⊂ T⁸ = R^8/Z^8 sobre una grilla periódica n⁴

    Args:
        n: nodos por eje (n ≥ 4)
        offset: traslación opcional en R^8
    """
    if n < 4:
        raise BadRange(f"el toro necesita n ≥ 4, recibido {n}")
    shift = np.zeros(8) if offset is None else np.asarray(offset, dtype=float)
    axes = [Axis(f"theta{i + 1}", np.arange(n) / n, "periodic", 1.0) for i in range(4)]

    def evaluate(coords: np.ndarray):
        lead = coords.shape[:-1]
        f = np.zeros(lead + (8,))
        f[..., :4] = coords
        f = f + shift
        df = np.broadcast_to(np.eye(8)[:4], lead + (4, 8)).copy()
        return f, df, np.zeros(lead + (4, 4, 8))

    return ParametricPatch("torus4", StructuredGrid(axes), evaluate)


def make_flat_cone(
    r_lo: float, r_hi: float, link_res: Sequence[int] = DEFAULT_LINK_RES, n_r: int = DEFAULT_RADIAL_NODES
) -> ParametricPatch:
    """Plano de Cayley R⁴ ⊂ R^8 visto como cono sobre la S³ redonda"""
    if r_lo <= 0 or r_lo >= r_hi:
        raise BadRange(f"se requiere 0 < r_lo < r_hi, recibido ({r_lo}, {r_hi})")
    grid = StructuredGrid((radial_axis(r_lo, r_hi, n_r),) + link_axes("round_s3", link_res))
    return ParametricPatch("cone", grid, conical_evaluator("round_s3", flat_profile), link="round_s3")


def make_quadric_cone(
    r_lo: float, r_hi: float, link_res: Sequence[int] = DEFAULT_LINK_RES, n_r: int = DEFAULT_RADIAL_NODES
) -> ParametricPatch:
    """
    Cono cuádrico {x²+y²+z² = 0, w = 0} sobre (r_lo, r_hi) × SU(2)/Z2

    Raises:
        BadRange: si r_lo ≤ 0 o r_lo ≥ r_hi
    """
    if r_lo <= 0 or r_lo >= r_hi:
        raise BadRange(f"se requiere 0 < r_lo < r_hi, recibido ({r_lo}, {r_hi})")
    grid = StructuredGrid((radial_axis(r_lo, r_hi, n_r),) + link_axes("quadric", link_res))
    return ParametricPatch("cone", grid, conical_evaluator("quadric", cone_profile), link="quadric")


def make_quadric_smoothing(
    epsilon: float,
    r_hi: float,
    link_res: Sequence[int] = DEFAULT_LINK_RES,
    n_r: int = DEFAULT_RADIAL_NODES,
    r_lo: Optional[float] = None,
) -> ParametricPatch:
    """
    Suavizado {x²+y²+z² = ε², w = 0}, AC de tasa λ = −1 al cono cuádrico

    El radio r es |f|; por defecto r_lo = 2ε.

    Raises:
        BadRange: si ε ≤ 0, r_lo ≤ ε o r_lo ≥ r_hi
    """
    if epsilon <= 0:
        raise BadRange(f"epsilon debe ser positivo, recibido {epsilon}")
    lo = 2.0 * epsilon if r_lo is None else r_lo
    if lo <= epsilon or lo >= r_hi:
        raise BadRange(f"se requiere ε < r_lo < r_hi, recibido ε={epsilon}, ({lo}, {r_hi})")
    grid = StructuredGrid((radial_axis(lo, r_hi, n_r),) + link_axes("quadric", link_res))
    return ParametricPatch(
        "ac_smoothing",
        grid,
        conical_evaluator("quadric", smoothing_profile(epsilon)),
        link="quadric",
        rate=-1.0,
        epsilon=epsilon,
    )


def tangent_normal_frames(patch: DiscreteImmersion, node: Union[int, Sequence[int]]) -> dict:
    """
    Marcos tangente (orientado) y normal en un nodo

    Returns:
        {"tangent": OrientedPlane4, "normal": arreglo (4, 8)}

    Raises:
        DegenerateImmersion: determinante de Gram normalizado < 1e-8
    """
    idx = patch.node_index(node)
    patch.check_immersion(patch.tangents[idx:idx + 1])
    tangent = orthonormal_tangents(patch.tangents[idx], patch.orientation)
    return {
        "tangent": OrientedPlane4.from_array(tangent),
        "normal": normal_complement(tangent),
    }


def smoothing_deviation(epsilon: float, radii: Sequence[float], link_res: Sequence[int] = (6, 6, 6)) -> np.ndarray:
    """max_θ |f_ε(r, θ) − ι(r, θ)| para cada radio"""
    link = make_link_grid("quadric", link_res).nodes
    smooth = conical_evaluator("quadric", smoothing_profile(epsilon))
    cone = conical_evaluator("quadric", cone_profile)
    out = []
    for r in radii:
        coords = np.column_stack([np.full(len(link), float(r)), link])
        diff = smooth(coords)[0] - cone(coords)[0]
        out.append(np.linalg.norm(diff, axis=-1).max())
    return np.array(out)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Pendiente de mínimos cuadrados de log y contra log x"""
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


def fitted_decay_rate(epsilon: float, radii: Sequence[float] = (1, 2, 4, 8)) -> float:
    """Exponente de decaimiento de |f_ε − ι|; ≈ −1 para el suavizado cuádrico"""
    return loglog_slope(radii, smoothing_deviation(epsilon, radii))

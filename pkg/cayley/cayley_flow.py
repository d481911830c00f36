"""
Operador de deformación F, su linealización D y el resto cuadrático Q

F(v) en cada nodo: se perturba la inmersión por el campo normal v (exponencial
plana f + Σ vᵃ nᵃ), se toma el plano tangente discreto, se evalúa τ y se
proyecta sobre E del plano base. D se ensambla nodo a nodo desde el jacobiano
de esa función nodal y los esténciles de primera diferencia de la grilla.
La iteración resuelve D v_{i+1} = −F(0) − Q(v_i) en forma de corrección,
D δ = −F(v_i), por mínimos cuadrados de norma mínima con pesos ρ^δ
(incógnitas) y ρ^{δ−1} (residuos).
"""
import logging
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, lsmr

from cayley.conical_scenarios import DiscreteImmersion, loglog_slope, orthonormal_tangents
from cayley.errors import BadRange, GridMismatch, MarginTooLow, NoContraction, SolverFailure
from cayley.schemas import ErrorScanResult, ErrorScanRow, IterationParams, IterationRecord, IterationResult
from cayley.spin7_algebra import MARGIN_FLOOR, EBasis, e_basis, phi0_eval, tau_eval
from cayley.weighted_analysis import (
    RadiusFunction,
    WeightedNormSpec,
    conical_radius,
    weight_window,
    weighted_sobolev_norm,
)
from store.matrix_cache import immersion_key

logger = logging.getLogger(__name__)

JACOBIAN_STEP = 1e-5
DIRECTIONAL_STEP = 1e-5
LSMR_TOL = 1e-14
DENSE_SVD_LIMIT = 6000

_E_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_D_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


@dataclass
class NormalField:
    """Coeficientes (N, 4) en el marco normal ortonormal de cada nodo"""

    immersion: DiscreteImmersion
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.immersion.size, 4)
        if self.values.shape != expected:
            raise GridMismatch(f"campo normal de forma {self.values.shape}, se esperaba {expected}")
        if not np.all(np.isfinite(self.values)):
            raise BadRange("campo normal con valores no finitos")

    @classmethod
    def zeros(cls, immersion: DiscreteImmersion) -> "NormalField":
        return cls(immersion, np.zeros((immersion.size, 4)))

    @classmethod
    def from_ambient(cls, immersion: DiscreteImmersion, vectors) -> "NormalField":
        """Proyección normal de un campo ambiente (N, 8) o de un vector constante"""
        vec = np.broadcast_to(np.asarray(vectors, dtype=float), (immersion.size, 8))
        return cls(immersion, np.einsum("nai,ni->na", immersion.normal_frames, vec))

    @property
    def frames(self) -> np.ndarray:
        return self.immersion.normal_frames

    def ambient(self) -> np.ndarray:
        return np.einsum("na,nai->ni", self.values, self.frames)

    def __add__(self, other: "NormalField") -> "NormalField":
        return NormalField(self.immersion, self.values + other.values)

    def __sub__(self, other: "NormalField") -> "NormalField":
        return NormalField(self.immersion, self.values - other.values)

    def __mul__(self, scale: float) -> "NormalField":
        return NormalField(self.immersion, self.values * scale)

    __rmul__ = __mul__

    def __neg__(self) -> "NormalField":
        return NormalField(self.immersion, -self.values)


@dataclass
class EField:
    """Coeficientes (N, 4) en la base de E del plano base"""

    values: np.ndarray
    basis: EBasis

    def ambient(self) -> np.ndarray:
        """π_E τ como 7-vector por nodo"""
        return np.einsum("nia,na->ni", self.basis.basis, self.values)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


def base_e_basis(immersion: DiscreteImmersion) -> EBasis:
    """
    Base de E en los planos tangentes de la inmersión sin perturbar

    Raises:
        MarginTooLow: algún nodo con margen de Cayley < 0.9
    """
    cached = _E_CACHE.get(immersion)
    if cached is None:
        margins = immersion.margins
        worst = int(np.argmin(margins))
        if margins[worst] < MARGIN_FLOOR:
            raise MarginTooLow(f"margen base {margins[worst]:.6f} < {MARGIN_FLOOR} en el nodo {worst}")
        cached = e_basis(immersion.tangent_frames, immersion.normal_frames)
        _E_CACHE[immersion] = cached
    return cached


def node_values(tangents: np.ndarray, basis: EBasis, orientation: float) -> np.ndarray:
    """Eᵀ τ del plano orientado generado por las filas de tangents (N, 4, 8)"""
    gram = tangents @ np.swapaxes(tangents, -1, -2)
    scale = orientation / np.sqrt(np.linalg.det(gram))
    return np.einsum("nia,ni->na", basis.basis, tau_eval(tangents)) * scale[:, None]


def perturbed_tangents(immersion: DiscreteImmersion, v: Optional[NormalField]) -> np.ndarray:
    if v is None:
        return immersion.tangents
    return immersion.tangents + immersion.grid.differentiate(v.ambient())


def nonlinear_F(immersion: DiscreteImmersion, v: Optional[NormalField] = None) -> EField:
    """
    F(v): defecto de calibración de f + v proyectado sobre E

    Args:
        immersion: inmersión base con márgenes ≥ 0.9
        v: campo normal; None equivale a v = 0

    Returns:
        EField con los coeficientes de π_E τ por nodo

    Raises:
        MarginTooLow: margen base < 0.9
        ImmersionDegenerate: la perturbación deja de ser inmersión
    """
    basis = base_e_basis(immersion)
    tangents = perturbed_tangents(immersion, v)
    if v is not None:
        immersion.check_immersion(tangents)
    return EField(node_values(tangents, basis, immersion.orientation), basis)


def node_jacobian(tangents: np.ndarray, basis: EBasis, orientation: float, rel_step: float = JACOBIAN_STEP) -> np.ndarray:
    """
    Jacobiano (N, 4, 4, 8) de la función nodal respecto de cada ∂_j f

    Diferencias centrales con paso rel_step · |∂_j f| por nodo.
    """
    steps = rel_step * np.linalg.norm(tangents, axis=-1)
    n = tangents.shape[0]
    jac = np.zeros((n, 4, 4, 8))
    for j in range(4):
        h = steps[:, j]
        for a in range(8):
            plus = tangents.copy()
            minus = tangents.copy()
            plus[:, j, a] += h
            minus[:, j, a] -= h
            diff = node_values(plus, basis, orientation) - node_values(minus, basis, orientation)
            jac[:, :, j, a] = diff / (2.0 * h)[:, None]
    return jac


def _block_diagonal(blocks: np.ndarray) -> sp.bsr_matrix:
    n, rows, cols = blocks.shape
    return sp.bsr_matrix(
        (blocks, np.arange(n), np.arange(n + 1)), shape=(n * rows, n * cols)
    )


def _assemble(immersion: DiscreteImmersion, tangents: np.ndarray) -> sp.csr_matrix:
    basis = base_e_basis(immersion)
    jac = node_jacobian(tangents, basis, immersion.orientation)
    lift = _block_diagonal(np.swapaxes(immersion.normal_frames, -1, -2))
    eye8 = sp.identity(8, format="csr")
    total = None
    for j, deriv in enumerate(immersion.grid.derivative_matrices):
        term = _block_diagonal(jac[:, :, j, :]) @ sp.kron(deriv, eye8, format="csr") @ lift
        total = term if total is None else total + term
    matrix = sp.csr_matrix(total)
    matrix.eliminate_zeros()
    return matrix


def assemble_D(immersion: DiscreteImmersion, cache=None, at: Optional[NormalField] = None) -> sp.csr_matrix:
    """
    Matriz dispersa (4N × 4N) de D = Σ_j diag(J_j)(D_j ⊗ I₈) diag(Nᵀ)

    Args:
        immersion: inmersión base
        cache: MatrixCache opcional; la clave es el hash del contenido
        at: campo normal donde se linealiza F; None es la linealización en 0,
            la única que se guarda en caché
    """
    if at is not None:
        tangents = perturbed_tangents(immersion, at)
        immersion.check_immersion(tangents)
        return _assemble(immersion, tangents)
    cached = _D_CACHE.get(immersion)
    if cached is not None:
        return cached
    key = None
    if cache is not None:
        key = immersion_key(immersion, "linearized_D")
        stored = cache.get(key)
        if stored is not None:
            _D_CACHE[immersion] = stored
            return stored
    matrix = _assemble(immersion, immersion.tangents)
    logger.debug("D ensamblada: %s, nnz=%d", matrix.shape, matrix.nnz)
    _D_CACHE[immersion] = matrix
    if cache is not None:
        cache.put(key, matrix)
    return matrix


def apply_D(immersion: DiscreteImmersion, v: NormalField, cache=None) -> EField:
    matrix = assemble_D(immersion, cache)
    return EField((matrix @ v.values.ravel()).reshape(-1, 4), base_e_basis(immersion))


def radius_values(immersion: DiscreteImmersion) -> RadiusFunction:
    rho = getattr(immersion, "rho", None)
    return rho if isinstance(rho, RadiusFunction) else conical_radius(immersion)


def linearize_D(immersion: DiscreteImmersion, v: Optional[NormalField] = None, cache=None):
    """
    Linealización de F en 0

    Sin dirección devuelve la matriz ensamblada; con dirección v devuelve
    (F(hv) − F(−hv)) / 2h con h = 1e−5 · min(ρ / |v|).
    """
    if v is None:
        return assemble_D(immersion, cache)
    size = np.linalg.norm(v.values, axis=-1)
    if not np.any(size > 0):
        return EField(np.zeros((immersion.size, 4)), base_e_basis(immersion))
    rho = radius_values(immersion).values
    h = DIRECTIONAL_STEP * float(np.min(rho[size > 0] / size[size > 0]))
    plus = nonlinear_F(immersion, h * v)
    minus = nonlinear_F(immersion, -h * v)
    return EField((plus.values - minus.values) / (2.0 * h), plus.basis)


def quadratic_Q(immersion: DiscreteImmersion, v: NormalField, f0: Optional[EField] = None, cache=None) -> EField:
    """Q(v) = F(v) − F(0) − Dv con la D ensamblada"""
    base = nonlinear_F(immersion) if f0 is None else f0
    fv = nonlinear_F(immersion, v)
    dv = apply_D(immersion, v, cache)
    return EField((fv.values - base.values) - dv.values, base.basis)


def perturbed_margins(immersion: DiscreteImmersion, v: Optional[NormalField] = None) -> np.ndarray:
    frames = orthonormal_tangents(perturbed_tangents(immersion, v), immersion.orientation)
    return phi0_eval(frames)


def _check_geometric(t_list: Sequence[float]) -> np.ndarray:
    ts = np.asarray(t_list, dtype=float)
    if len(ts) < 3:
        raise BadRange(f"se necesitan al menos 3 valores de t, hay {len(ts)}")
    if np.any(ts <= 0):
        raise BadRange("los valores de t deben ser positivos")
    ratios = ts[1:] / ts[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise BadRange(f"t_list no es geométrica: razones {ratios.tolist()}")
    return ts


def initial_error_scan(
    scenario: Callable[[float], DiscreteImmersion],
    t_list: Sequence[float],
    nu: float,
    mu: float,
    delta: float,
    p: float = 2.0,
    k: int = 0,
    lam: float = -1.0,
    threads: int = 1,
) -> ErrorScanResult:
    """
    Barrido de ‖F_Ā(0)‖_{L^p_{k,δ−1}} en t y ajuste log–log

    Args:
        scenario: constructor t -> inmersión pegada
        t_list: escalas en progresión geométrica (≥ 3)
        nu, mu, delta: exponente del cuello, tasa CS y peso
        lam: tasa AC, fija la ventana de pesos admisibles
        threads: tamaño del pool; el orden de resultados sigue t_list

    Returns:
        ErrorScanResult con filas, pendiente medida y exponente ν(μ − δ)

    Raises:
        BadRange: t_list inválida o δ fuera de la ventana de pesos
    """
    ts = _check_geometric(t_list)
    lo, hi = weight_window(lam, mu)
    if not lo < delta < hi:
        raise BadRange(f"δ = {delta} fuera de la ventana admisible ({lo}, {hi})")
    spec = WeightedNormSpec(p=p, k=k, deltas=[delta - 1.0])

    def measure(t: float) -> ErrorScanRow:
        glued = scenario(float(t))
        value = weighted_sobolev_norm(nonlinear_F(glued), glued, spec, radius_values(glued))
        logger.info("error inicial t=%.4g: ‖F(0)‖=%.6e (%d nodos)", t, value, glued.size)
        return ErrorScanRow(t=float(t), F_norm=value, nodes=glued.size)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(measure, ts))
    norms = [row.F_norm for row in rows]
    if min(norms) <= 0.0:
        slope = 0.0
    else:
        slope = loglog_slope(ts, norms)
    return ErrorScanResult(rows=rows, slope=slope, predicted=nu * (mu - delta))


class _WeightedSolver:
    """Mínimos cuadrados de norma mínima sobre los nodos libres"""

    def __init__(self, immersion: DiscreteImmersion, delta: float):
        rho = radius_values(immersion).values
        quad = np.sqrt(immersion.volume_weights * rho ** -4.0)
        free = immersion.grid.radial_neighbors() >= 0
        self.immersion = immersion
        self.columns = np.flatnonzero(np.repeat(free, 4))
        self.row_weights = np.repeat(rho ** (1.0 - delta) * quad, 4)
        self.col_weights = np.repeat(rho ** delta / quad, 4)[self.columns]

    def solve(self, matrix: sp.csr_matrix, rhs: np.ndarray) -> NormalField:
        system = (
            sp.diags(self.row_weights) @ matrix[:, self.columns] @ sp.diags(self.col_weights)
        ).tocsr()
        result = lsmr(system, self.row_weights * rhs.ravel(), atol=LSMR_TOL, btol=LSMR_TOL,
                      maxiter=4 * system.shape[1])
        y, istop = result[0], result[1]
        if not np.all(np.isfinite(y)):
            raise SolverFailure("lsmr devolvió valores no finitos")
        if istop == 7:
            logger.warning("lsmr alcanzó el límite de iteraciones (residuo %.3e)", result[3])
        full = np.zeros(4 * self.immersion.size)
        full[self.columns] = self.col_weights * y
        return NormalField(self.immersion, full.reshape(-1, 4))


def _ratios(history) -> list:
    return [h.ratio for h in history if h.ratio is not None]


def iterate_to_cayley(immersion: DiscreteImmersion, params: Optional[IterationParams] = None, cache=None) -> IterationResult:
    """
    Iteración D v_{i+1} = −F(0) − Q(v_i) con el anillo exterior fijo en cero

    Cada paso resuelve la corrección D δ = −F(v_i) y toma v_{i+1} = v_i + δ.
    Como F(v_i) = F(0) + D v_i + Q(v_i) es la misma ecuación, pero el error
    del solver en un paso no se arrastra al siguiente. Con relinearize la D
    de cada paso es la linealización en v_i; el primer paso usa la de 0.

    Se detiene cuando ‖v_{i+1} − v_i‖_{L^p_{k+1,δ}} < tol.

    Raises:
        NoContraction: dos razones consecutivas sobre el límite, o max_iter
            agotado sin llegar a tol
        SolverFailure: el solver disperso no produce un resultado finito
    """
    params = params or IterationParams()
    if params.boundary != "fixed-outer-ring":
        raise BadRange(f"contrato de borde no soportado: {params.boundary}")
    rho = radius_values(immersion)
    step_spec = WeightedNormSpec(p=params.p, k=params.k + 1, deltas=[params.delta])
    f_spec = WeightedNormSpec(p=params.p, k=params.k, deltas=[params.delta - 1.0])

    fv = nonlinear_F(immersion)
    base = assemble_D(immersion, cache)
    solver = _WeightedSolver(immersion, params.delta)
    initial_norm = weighted_sobolev_norm(fv, immersion, f_spec, rho)
    initial_margin = float(immersion.margins.min())

    v = NormalField.zeros(immersion)
    history = []
    prev_step = None
    strikes = 0
    for i in range(1, params.max_iter + 1):
        matrix = assemble_D(immersion, at=v) if params.relinearize and i > 1 else base
        correction = solver.solve(matrix, -fv.values)
        v = v + correction
        step = weighted_sobolev_norm(correction, immersion, step_spec, rho)
        ratio = step / prev_step if prev_step else None
        fv = nonlinear_F(immersion, v)
        f_norm = weighted_sobolev_norm(fv, immersion, f_spec, rho)
        margin = float(perturbed_margins(immersion, v).min())
        history.append(IterationRecord(iter=i, step_norm=step, ratio=ratio, F_norm=f_norm, min_margin=margin))
        logger.info("iteración %d: paso=%.3e razón=%s ‖F‖=%.3e margen=%.9f",
                    i, step, "-" if ratio is None else f"{ratio:.3f}", f_norm, margin)
        if step < params.tol:
            return IterationResult(
                v_final=v,
                history=history,
                converged=True,
                initial_margin=initial_margin,
                final_margin=margin,
                initial_F_norm=initial_norm,
                final_F_norm=f_norm,
            )
        if ratio is not None and ratio > params.contraction_limit:
            strikes += 1
            if strikes >= 2:
                raise NoContraction(
                    f"razón de contracción > {params.contraction_limit} dos veces seguidas (iteración {i}); "
                    f"t demasiado grande",
                    _ratios(history),
                )
        else:
            strikes = 0
        prev_step = step
    raise NoContraction(
        f"max_iter = {params.max_iter} agotado con paso {history[-1].step_norm:.3e} ≥ tol {params.tol:g}",
        _ratios(history),
    )


def kernel_basis(matrix, count: int = 4) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectores singulares derechos de menor valor singular

    Args:
        matrix: D ensamblada (densa o dispersa)
        count: cuántos vectores devolver

    Returns:
        (valores singulares ascendentes (count,), vectores (count, n))
    """
    n = matrix.shape[1]
    if count < 1 or count >= n:
        raise BadRange(f"count debe estar en [1, {n - 1}], recibido {count}")
    if n <= DENSE_SVD_LIMIT:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
        _, s, vt = np.linalg.svd(dense, full_matrices=dense.shape[0] < n)
        # con menos filas que columnas los vectores sobrantes tienen σ = 0
        s = np.concatenate([s, np.zeros(n - len(s))])
        order = np.argsort(s)[:count]
        return s[order], vt[order]
    normal = (matrix.T @ matrix).tocsc()
    shift = 1e-10 * max(1.0, float(np.abs(normal.diagonal()).max()))
    vals, vecs = eigsh(normal, k=count, sigma=-shift, which="LM")
    order = np.argsort(vals)
    return np.sqrt(np.clip(vals[order], 0.0, None)), vecs[:, order].T

"""
Álgebra de la estructura Spin(7) sobre R^8

Octoniones, forma de Cayley Φ₀, producto cuádruple τ, márgenes de calibración,
el fibrado E de restricciones de Cayley y ángulos característicos entre planos.

Convención de índices: el vector e_1 de R^8 es la unidad octoniónica y e_{k+1}
es la unidad imaginaria i_k (k = 1..7). Todas las funciones aceptan lotes:
un marco es un arreglo (..., 4, 8) con los vectores como filas.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from cayley.errors import Degenerate, RankDeficient

logger = logging.getLogger(__name__)


# i_a i_b = sign * i_c (cíclico en a, b, c); fija Φ₀ término a término
OCTONION_TRIPLES = (
    (1, 2, 3, -1),
    (1, 4, 5, 1),
    (1, 6, 7, 1),
    (2, 4, 6, 1),
    (2, 5, 7, -1),
    (3, 4, 7, 1),
    (3, 5, 6, 1),
)

PHI0_TERMS: Dict[str, int] = {
    "1234": 1, "1256": -1, "1278": -1, "1357": -1, "1368": 1, "1458": -1, "1467": -1,
    "2358": -1, "2367": -1, "2457": 1, "2468": -1, "3456": -1, "3478": -1, "5678": 1,
}

FOUR_SUBSETS = np.array(list(itertools.combinations(range(8), 4)), dtype=np.int64)
SUBSET_LABELS = ["".join(str(i + 1) for i in s) for s in FOUR_SUBSETS]

MARGIN_FLOOR = 0.9
RANK_UPPER = 1e-6
RANK_LOWER = 1e-8
DEGENERATE_ANGLE = 1e-9

FrameLike = Union["OrientedPlane4", Sequence[Sequence[float]], np.ndarray]


def _structure_constants() -> np.ndarray:
    table = np.zeros((8, 8, 8))
    table[0, :, :] = np.eye(8)
    table[:, 0, :] = np.eye(8)
    for i in range(1, 8):
        table[i, i, 0] = -1.0
    for a, b, c, sign in OCTONION_TRIPLES:
        for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
            table[x, y, z] = sign
            table[y, x, z] = -sign
    return table


STRUCTURE = _structure_constants()
_CONJ = np.array([1.0] + [-1.0] * 7)


def octonion_mul(a, b) -> np.ndarray:
    """
    Producto octoniónico, vectorizado sobre ejes iniciales

    Args:
        a: Arreglo (..., 8)
        b: Arreglo (..., 8)

    Returns:
        Arreglo (..., 8) con el producto ab
    """
    return np.einsum("...i,...j,ijk->...k", np.asarray(a, float), np.asarray(b, float), STRUCTURE)


def octonion_conj(a) -> np.ndarray:
    return np.asarray(a, float) * _CONJ


def triple_cross(x, y, z) -> np.ndarray:
    """Producto cruz triple x×y×z = ½(x(ȳz) − z(ȳx))"""
    y_bar = octonion_conj(y)
    return 0.5 * (octonion_mul(x, octonion_mul(y_bar, z)) - octonion_mul(z, octonion_mul(y_bar, x)))


def _fourfold(x, y, z, w) -> np.ndarray:
    return octonion_mul(octonion_conj(triple_cross(x, y, z)), w)


def fourfold_product(x, y, z, w) -> np.ndarray:
    """
    Producto cuádruple alternado X(x,y,z,w) con Re X = Φ₀ e Im X = τ

    Evaluación directa desde octoniones; para lotes grandes usar
    `cayley_values`, que usa el tensor precomputado.
    """
    return 0.25 * (
        _fourfold(x, y, z, w)
        - _fourfold(w, y, z, x)
        - _fourfold(x, w, z, y)
        - _fourfold(x, y, w, z)
    )


def _cayley_tensor() -> np.ndarray:
    basis = np.eye(8)
    columns = [fourfold_product(*(basis[i] for i in subset)) for subset in FOUR_SUBSETS]
    return np.array(columns).T


CAYLEY_TENSOR = _cayley_tensor()


def _laplace_tables():
    pairs = list(itertools.combinations(range(8), 2))
    pair_index = {p: i for i, p in enumerate(pairs)}
    top, bottom, signs = [], [], []
    for subset in FOUR_SUBSETS:
        for pos in itertools.combinations(range(4), 2):
            rest = tuple(i for i in range(4) if i not in pos)
            top.append(pair_index[(subset[pos[0]], subset[pos[1]])])
            bottom.append(pair_index[(subset[rest[0]], subset[rest[1]])])
            signs.append((-1.0) ** (pos[0] + pos[1] + 1))
    first = np.array([p[0] for p in pairs])
    second = np.array([p[1] for p in pairs])
    return first, second, np.array(top), np.array(bottom), np.array(signs)


_PAIR_A, _PAIR_B, _LAPLACE_TOP, _LAPLACE_BOTTOM, _LAPLACE_SIGN = _laplace_tables()


def plucker_coordinates(frames) -> np.ndarray:
    """
    Menores 4×4 de marcos (..., 4, 8) sobre los 70 subconjuntos ordenados

    Expansión de Laplace por las dos primeras filas: 28 menores 2×2 arriba,
    28 abajo, 6 productos por subconjunto.
    """
    f = np.asarray(frames, dtype=float)
    top = f[..., 0, _PAIR_A] * f[..., 1, _PAIR_B] - f[..., 0, _PAIR_B] * f[..., 1, _PAIR_A]
    bottom = f[..., 2, _PAIR_A] * f[..., 3, _PAIR_B] - f[..., 2, _PAIR_B] * f[..., 3, _PAIR_A]
    terms = top[..., _LAPLACE_TOP] * bottom[..., _LAPLACE_BOTTOM] * _LAPLACE_SIGN
    return terms.reshape(terms.shape[:-1] + (70, 6)).sum(axis=-1)


class OrientedPlane4(BaseModel):
    """Plano orientado de Gr₊(4,8): marco ortonormal de 4 filas en R^8"""

    frame: List[List[float]] = Field(..., description="4 vectores ortonormales de R^8 (filas)")

    @field_validator("frame")
    @classmethod
    def _check_orthonormal(cls, value):
        arr = np.asarray(value, dtype=float)
        if arr.shape != (4, 8):
            raise ValueError(f"el marco debe ser 4x8, recibido {arr.shape}")
        if np.abs(arr @ arr.T - np.eye(4)).max() > 1e-12:
            raise ValueError("el marco no es ortonormal (tolerancia 1e-12)")
        return value

    @classmethod
    def from_array(cls, frame) -> "OrientedPlane4":
        return cls(frame=np.asarray(frame, dtype=float).tolist())

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.frame, dtype=float)


class FourForm(BaseModel):
    """4-forma alternante en R^8, coeficientes sobre los 70 subconjuntos"""

    coeffs: Dict[str, float] = Field(..., description="Coeficientes por subconjunto, p.ej. '1234'")

    def vector(self) -> np.ndarray:
        return np.array([self.coeffs.get(label, 0.0) for label in SUBSET_LABELS])

    def evaluate(self, frames) -> np.ndarray:
        return plucker_coordinates(_frame_array(frames)) @ self.vector()


def _frame_array(frames: FrameLike) -> np.ndarray:
    if isinstance(frames, OrientedPlane4):
        return frames.array
    return np.asarray(frames, dtype=float)


def cayley_values(frames: FrameLike) -> np.ndarray:
    """Valores (..., 8) de X sobre marcos (..., 4, 8): [Φ₀, τ₁..τ₇]"""
    return plucker_coordinates(_frame_array(frames)) @ CAYLEY_TENSOR.T


def phi0_form() -> FourForm:
    """Φ₀ reconstruida desde la tabla octoniónica (70 coeficientes enteros)"""
    row = np.rint(CAYLEY_TENSOR[0]).astype(int)
    return FourForm(coeffs={label: float(c) for label, c in zip(SUBSET_LABELS, row)})


def phi0_eval(frames: FrameLike):
    """
    Evaluar Φ₀ sobre 4 vectores (o un lote de marcos)

    Args:
        frames: OrientedPlane4, arreglo (4, 8) o (..., 4, 8)

    Returns:
        Escalar o arreglo (...) con Φ₀(v1, v2, v3, v4)
    """
    values = cayley_values(frames)[..., 0]
    return float(values) if values.ndim == 0 else values


def tau_eval(frames: FrameLike) -> np.ndarray:
    """Producto cuádruple τ (..., 7), parte imaginaria de X"""
    return cayley_values(frames)[..., 1:]


def cayley_margin(plane: FrameLike):
    """Φ₀ sobre el marco orientado; un plano es α-Cayley si el margen ≥ α"""
    return phi0_eval(plane)


def normal_complement(frames) -> np.ndarray:
    """
    Marco normal ortonormal (..., 4, 8) que completa a una base orientada

    Usa los autovectores dominantes del proyector normal I − FᵀF e invierte el
    último vector cuando det[F; N] < 0.
    """
    f = np.asarray(frames, dtype=float)
    projector = np.eye(8) - np.swapaxes(f, -1, -2) @ f
    _, vecs = np.linalg.eigh(projector)
    normals = np.swapaxes(vecs[..., :, 4:], -1, -2).copy()
    orientation = np.sign(np.linalg.det(np.concatenate([f, normals], axis=-2)))
    normals[..., 3, :] *= np.where(orientation < 0, -1.0, 1.0)[..., None]
    return normals


def tau_jacobian(frames, normals) -> np.ndarray:
    """
    Jacobiano (..., 7, 16) de τ bajo perturbaciones normales del marco

    La columna 4i + a es τ con la fila i reemplazada por n_a (multilinealidad).
    """
    f = np.asarray(frames, dtype=float)
    n = np.asarray(normals, dtype=float)
    lead = f.shape[:-2]
    perturbed = np.broadcast_to(f[..., None, :, :], lead + (16, 4, 8)).copy()
    for i in range(4):
        for a in range(4):
            perturbed[..., 4 * i + a, i, :] = n[..., a, :]
    return np.swapaxes(tau_eval(perturbed), -1, -2)


def _pivoted_gram_schmidt(subspace: np.ndarray) -> np.ndarray:
    projector = subspace @ np.swapaxes(subspace, -1, -2)
    residual = projector.copy()
    lead = residual.shape[:-2]
    flat = residual.reshape((-1, 7, 7))
    basis = np.zeros((flat.shape[0], 7, 4))
    rows = np.arange(flat.shape[0])
    for k in range(4):
        norms = np.linalg.norm(flat, axis=1)
        pivot = np.argmax(norms, axis=1)
        vec = flat[rows, :, pivot] / norms[rows, pivot][:, None]
        basis[:, :, k] = vec
        flat = flat - vec[:, :, None] * np.einsum("ni,nij->nj", vec, flat)[:, None, :]
    return basis.reshape(lead + (7, 4))


@dataclass(frozen=True)
class EBasis:
    """Base ortonormal de E_π ⊂ Im 𝕆 para uno o varios planos"""

    frames: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ np.swapaxes(self.basis, -1, -2)

    def coefficients(self, tau: np.ndarray) -> np.ndarray:
        """Coeficientes de π_E τ en la base"""
        return np.einsum("...ia,...i->...a", self.basis, tau)


def e_basis(plane: FrameLike, normals=None) -> EBasis:
    """
    Base del fibrado E en uno o varios planos α-Cayley

    Args:
        plane: marco (4, 8) o lote (..., 4, 8), ortonormal y orientado
        normals: marco normal opcional; si falta se calcula con normal_complement

    Returns:
        EBasis con base (..., 7, 4) canónica por Gram-Schmidt pivotado

    Raises:
        RankDeficient: margen < 0.9 o valores singulares sin el corte 4/3
    """
    frames = _frame_array(plane)
    margins = np.atleast_1d(phi0_eval(frames))
    if np.any(margins < MARGIN_FLOOR):
        raise RankDeficient(
            f"margen de Cayley {margins.min():.6f} bajo {MARGIN_FLOOR}: plano demasiado lejos de Cayley"
        )
    if normals is None:
        normals = normal_complement(frames)
    jac = tau_jacobian(frames, normals)
    u, s, _ = np.linalg.svd(jac)
    tau_norm = np.linalg.norm(tau_eval(frames), axis=-1)
    if np.any(s[..., 3] < RANK_UPPER):
        raise RankDeficient(f"cuarto valor singular {s[..., 3].min():.3e} < {RANK_UPPER}")
    calibrated = np.atleast_1d(tau_norm <= 1e-9)
    fifth = np.atleast_1d(s[..., 4])
    if np.any(calibrated & (fifth > RANK_LOWER)):
        raise RankDeficient(f"quinto valor singular {fifth[calibrated].max():.3e} > {RANK_LOWER} en plano Cayley")
    basis = _pivoted_gram_schmidt(u[..., :, :4])
    return EBasis(frames=frames, basis=basis, singular_values=s)


def spin7_generators() -> np.ndarray:
    """
    Base (21, 8, 8) del álgebra de Lie spin(7) ⊂ so(8)

    Núcleo numérico de A ↦ A·Φ₀ sobre las 28 rotaciones elementales.
    """
    elementary = []
    for i, j in itertools.combinations(range(8), 2):
        gen = np.zeros((8, 8))
        gen[i, j], gen[j, i] = -1.0, 1.0
        elementary.append(gen)
    basis = np.eye(8)
    columns = []
    for gen in elementary:
        derivative = np.zeros(70)
        for slot in range(4):
            frames = basis[FOUR_SUBSETS].copy()
            frames[:, slot, :] = (gen @ basis[FOUR_SUBSETS[:, slot]].T).T
            derivative += phi0_eval(frames)
        columns.append(derivative)
    action = np.array(columns).T
    _, s, vt = np.linalg.svd(action)
    null = vt[np.sum(s > 1e-10):]
    return np.einsum("kg,gij->kij", null, np.array(elementary))


def angle_criterion(p1: FrameLike, p2: FrameLike) -> dict:
    """
    Ángulos característicos entre dos planos y criterio Σθ ≤ π

    Cosenos desde svd(F1 F2ᵀ), senos desde la componente de F2 ortogonal a F1;
    se usa el seno para ángulos pequeños.

    Returns:
        {"angles", "sum", "passes", "intersection_sign"}

    Raises:
        Degenerate: si los planos comparten una dirección
    """
    f1, f2 = _frame_array(p1), _frame_array(p2)
    cos_vals = np.linalg.svd(f1 @ f2.T, compute_uv=False)
    residual = f2 - (f2 @ f1.T) @ f1
    sin_vals = np.sort(np.linalg.svd(residual, compute_uv=False))
    from_cos = np.arccos(np.clip(cos_vals, -1.0, 1.0))
    from_sin = np.arcsin(np.clip(sin_vals, 0.0, 1.0))
    angles = np.where(from_cos < np.pi / 4, from_sin, from_cos)
    if angles.min() <= DEGENERATE_ANGLE:
        raise Degenerate(f"los planos comparten una dirección (ángulo mínimo {angles.min():.3e})")
    det = np.linalg.det(np.vstack([f1, f2]))
    sign = 0 if abs(det) < 1e-12 else int(np.sign(det))
    total = float(angles.sum())
    return {
        "angles": [float(a) for a in angles],
        "sum": total,
        "passes": bool(total <= np.pi),
        "intersection_sign": sign,
    }


def standard_plane(indices: Sequence[int]) -> OrientedPlane4:
    """Plano coordenado span(e_i) con índices 1..8 en el orden dado"""
    frame = np.zeros((4, 8))
    for row, idx in enumerate(indices):
        frame[row, idx - 1] = 1.0
    return OrientedPlane4.from_array(frame)

"""
Tasas críticas del operador de Cayley linealizado sobre el cono plano R⁴ ⊂ R^8

D = Σ Bᵢ ∂ᵢ se extrae de la linealización de F en el plano e1234. Las
multiplicidades d(λ) cuentan soluciones homogéneas de potencia pura:
polinomios de grado λ para λ ≥ 0 y el ansatz P(x)/|x|^{2m} para λ < 0.
Las dimensiones se calculan con álgebra lineal exacta sobre Q (sympy).
"""
import csv
import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from cayley.cayley_flow import node_jacobian, node_values
from cayley.errors import (
    AnsatzExhausted,
    BadRange,
    CriticalEndpoint,
    IoError,
    NonLinearityDetected,
    ParityError,
    RateTableMismatch,
)
from cayley.spin7_algebra import e_basis

logger = logging.getLogger(__name__)

NVARS = 4
MAX_DEGREE = 6
ANSATZ_ORDERS = (1, 2, 3, 4)
SUPPORTED_NEGATIVE_RATES = (-3, -2, -1)
CRITICAL_TOL = 1e-9
ROUNDING_TOL = 1e-8
NONLINEARITY_TOL = 1e-6


@dataclass(frozen=True)
class ConstantCoeffOperator:
    """D = Σ Bᵢ ∂ᵢ sobre campos de 4 componentes en R⁴"""

    coefficients: np.ndarray
    exact: Tuple

    @classmethod
    def from_matrices(cls, matrices) -> "ConstantCoeffOperator":
        """Redondea a racionales de denominador ≤ 4 cuando están a menos de 1e−8"""
        arr = np.asarray(matrices, dtype=float)
        exact = []
        flagged = 0
        for value in arr.ravel():
            frac = Fraction(float(value)).limit_denominator(4)
            if abs(float(frac) - value) > ROUNDING_TOL:
                frac = Fraction(float(value)).limit_denominator(10 ** 6)
                flagged += 1
            exact.append(frac)
        if flagged:
            logger.warning("%d coeficientes de D no son racionales pequeños", flagged)
        nested = tuple(
            tuple(tuple(exact[16 * i + 4 * r:16 * i + 4 * r + 4]) for r in range(4)) for i in range(4)
        )
        rounded = np.array([[[float(x) for x in row] for row in mat] for mat in nested])
        return cls(coefficients=rounded, exact=nested)

    @classmethod
    def zero(cls) -> "ConstantCoeffOperator":
        return cls.from_matrices(np.zeros((4, 4, 4)))

    def symbol(self, xi) -> np.ndarray:
        return np.einsum("i,ijk->jk", np.asarray(xi, dtype=float), self.coefficients)

    def ellipticity_margin(self, samples: int = 100, seed: int = 0) -> float:
        """min |det σ(ξ)| sobre ξ unitarios aleatorios"""
        rng = np.random.default_rng(seed)
        xi = rng.normal(size=(samples, NVARS))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        dets = np.linalg.det(np.einsum("si,ijk->sjk", xi, self.coefficients))
        return float(np.abs(dets).min())

    def is_elliptic(self, samples: int = 100, seed: int = 0) -> bool:
        return self.ellipticity_margin(samples, seed) >= 1e-6


@lru_cache(maxsize=1)
def extract_operator_coeffs() -> ConstantCoeffOperator:
    """
    Coeficientes Bᵢ de la linealización de F en el plano span(e1..e4)

    Raises:
        NonLinearityDetected: segundas diferencias sobre 1e−6
    """
    frame = np.eye(8)[None, :4, :]
    normals = np.eye(8)[None, 4:, :]
    basis = e_basis(frame, normals)
    jac = node_jacobian(frame, basis, 1.0)
    h = 1e-2
    base = node_values(frame, basis, 1.0)
    worst = 0.0
    for j in range(4):
        for a in range(4, 8):
            plus = frame.copy()
            minus = frame.copy()
            plus[0, j, a] += h
            minus[0, j, a] -= h
            second = node_values(plus, basis, 1.0) + node_values(minus, basis, 1.0) - 2.0 * base
            worst = max(worst, float(np.abs(second).max()))
    if worst > NONLINEARITY_TOL:
        raise NonLinearityDetected(f"segunda diferencia {worst:.3e} > {NONLINEARITY_TOL}")
    matrices = np.stack([jac[0, :, j, 4:] for j in range(4)])
    return ConstantCoeffOperator.from_matrices(matrices)


def monomials(degree: int) -> List[Tuple[int, ...]]:
    """Exponentes de los monomios de grado dado en 4 variables, orden fijo"""
    if degree < 0:
        return []
    out = []
    for combo in itertools.combinations_with_replacement(range(NVARS), degree):
        exps = [0] * NVARS
        for var in combo:
            exps[var] += 1
        out.append(tuple(exps))
    return out


def _shift(exps: Tuple[int, ...], var: int, by: int) -> Tuple[int, ...]:
    out = list(exps)
    out[var] += by
    return tuple(out)


def ansatz_matrix(op: ConstantCoeffOperator, degree: int, m: int = 0) -> DomainMatrix:
    """
    Matriz exacta de P ↦ DP (m = 0) o P ↦ |x|²DP − 2m Σ xᵢBᵢP (m ≥ 1)

    Columnas: (monomio de grado `degree`, componente); filas: salida de grado
    degree − 1 (m = 0) o degree + 1.
    """
    inputs = monomials(degree)
    out_degree = degree - 1 if m == 0 else degree + 1
    outputs = {mono: idx for idx, mono in enumerate(monomials(out_degree))}
    entries: Dict[int, Dict[int, Fraction]] = {}

    def add(row: int, col: int, value: Fraction):
        if value == 0:
            return
        slot = entries.setdefault(row, {})
        total = slot.get(col, Fraction(0)) + value
        if total == 0:
            slot.pop(col, None)
        else:
            slot[col] = total

    for col_mono, alpha in enumerate(inputs):
        for b in range(4):
            col = 4 * col_mono + b
            for i in range(NVARS):
                column = [op.exact[i][c][b] for c in range(4)]
                if alpha[i] > 0:
                    beta = _shift(alpha, i, -1)
                    targets = [beta] if m == 0 else [_shift(beta, j, 2) for j in range(NVARS)]
                    for gamma in targets:
                        for c in range(4):
                            add(4 * outputs[gamma] + c, col, alpha[i] * column[c])
                if m > 0:
                    gamma = _shift(alpha, i, 1)
                    for c in range(4):
                        add(4 * outputs[gamma] + c, col, -2 * m * column[c])
    rows = {r: {c: QQ(v.numerator, v.denominator) for c, v in cols.items()} for r, cols in entries.items() if cols}
    return DomainMatrix(rows, (4 * len(outputs), 4 * len(inputs)), QQ)


def _exact_rank(matrix: DomainMatrix) -> int:
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        return 0
    return int(matrix.rank())


def homogeneous_kernel_dim(op: ConstantCoeffOperator, degree: int) -> int:
    """dim {v polinomial homogéneo de grado `degree` con Dv = 0}"""
    if degree < 0 or degree > MAX_DEGREE:
        raise BadRange(f"grado {degree} fuera de 0..{MAX_DEGREE}")
    matrix = ansatz_matrix(op, degree, 0)
    return matrix.shape[1] - _exact_rank(matrix)


def float_kernel_dim(op: ConstantCoeffOperator, degree: int, m: int = 0, tol: float = 1e-9) -> int:
    """Verificación en punto flotante de la dimensión del núcleo"""
    exact = ansatz_matrix(op, degree, m)
    rows, cols = exact.shape
    if rows == 0:
        return cols
    matrix = np.array(exact.to_Matrix().tolist(), dtype=float).reshape(rows, cols)
    return cols - int(np.linalg.matrix_rank(matrix, tol=tol))


def _nullspace_rows(matrix: DomainMatrix) -> List[List[Fraction]]:
    if matrix.shape[0] == 0:
        return [[Fraction(int(i == j)) for j in range(matrix.shape[1])] for i in range(matrix.shape[1])]
    basis = matrix.nullspace().to_Matrix()
    return [[Fraction(int(x.p), int(x.q)) for x in basis.row(r)] for r in range(basis.rows)]


def _lift(vector: List[Fraction], degree: int, times: int) -> Dict[Tuple[Tuple[int, ...], int], Fraction]:
    """Multiplica el polinomio vectorial por |x|^{2·times}"""
    poly = {}
    for idx, mono in enumerate(monomials(degree)):
        for c in range(4):
            value = vector[4 * idx + c]
            if value:
                poly[(mono, c)] = value
    for _ in range(times):
        nxt: Dict[Tuple[Tuple[int, ...], int], Fraction] = {}
        for (mono, c), value in poly.items():
            for j in range(NVARS):
                key = (_shift(mono, j, 2), c)
                nxt[key] = nxt.get(key, Fraction(0)) + value
        poly = nxt
    return poly


def negative_rate_kernel_dim(op: ConstantCoeffOperator, lam: int) -> int:
    """
    Soluciones homogéneas de tasa λ < 0 con el ansatz v = P/|x|^{2m}

    Las bases de cada m se llevan a un denominador común |x|^{2M} y se
    extrae una base conjunta; la dimensión debe estabilizarse en m.

    Raises:
        BadRange: λ fuera de {−3, −2, −1}
        AnsatzExhausted: la dimensión conjunta sigue creciendo en m = 4
    """
    if lam not in SUPPORTED_NEGATIVE_RATES:
        raise BadRange(f"λ = {lam} fuera de {SUPPORTED_NEGATIVE_RATES}")
    orders = [m for m in ANSATZ_ORDERS if lam + 2 * m >= 0]
    top = orders[-1]
    top_degree = lam + 2 * top
    index = {(mono, c): 4 * i + c for i, mono in enumerate(monomials(top_degree)) for c in range(4)}
    collected: List[Dict[int, Fraction]] = []
    ranks = []
    for m in orders:
        degree = lam + 2 * m
        for vector in _nullspace_rows(ansatz_matrix(op, degree, m)):
            poly = _lift(vector, degree, top - m)
            collected.append({index[key]: value for key, value in poly.items() if value})
        rows = {
            r: {c: QQ(v.numerator, v.denominator) for c, v in vec.items()} for r, vec in enumerate(collected) if vec
        }
        joint = DomainMatrix(rows, (max(len(collected), 1), len(index)), QQ)
        ranks.append(_exact_rank(joint) if collected else 0)
        logger.debug("λ=%d m=%d: dimensión conjunta %d", lam, m, ranks[-1])
    if len(ranks) >= 2 and ranks[-1] != ranks[-2]:
        raise AnsatzExhausted(f"λ = {lam}: dimensiones {ranks} no se estabilizan hasta m = {top}")
    return ranks[-1]


class RateTable(BaseModel):
    """Tasas críticas y multiplicidades (λ, d) sobre un rango"""

    entries: List[Tuple[float, int]] = Field(default_factory=list, description="Pares (λ, d)")
    lo: Optional[float] = Field(None, description="Extremo inferior del rango")
    hi: Optional[float] = Field(None, description="Extremo superior del rango")

    @field_validator("entries")
    @classmethod
    def _increasing(cls, value):
        rates = [lam for lam, _ in value]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("las tasas deben ser estrictamente crecientes")
        if any(d < 1 for _, d in value):
            raise ValueError("las multiplicidades listadas deben ser ≥ 1")
        return value

    @property
    def rates(self) -> List[float]:
        return [lam for lam, _ in self.entries]

    def multiplicity(self, lam: float) -> int:
        for rate, d in self.entries:
            if abs(rate - lam) <= CRITICAL_TOL:
                return d
        return 0

    def restricted(self, lo: float, hi: float) -> "RateTable":
        return RateTable(entries=[(lam, d) for lam, d in self.entries if lo < lam < hi], lo=lo, hi=hi)

    def rows(self) -> List[dict]:
        return [{"lambda": lam, "d": d} for lam, d in self.entries]


REFERENCE_FLAT_RATES = RateTable(entries=[(-3.0, 1), (-1.0, 1), (0.0, 4), (1.0, 12)], lo=-4.0, hi=2.0)


def compute_rate_table(op: Optional[ConstantCoeffOperator] = None, lo: float = -4.0, hi: float = 2.0) -> RateTable:
    """
    Tabla de tasas enteras en (lo, hi) para el cono plano

    Raises:
        BadRange: el rango pide tasas fuera de −3..6
    """
    op = op or extract_operator_coeffs()
    if lo >= hi:
        raise BadRange(f"rango vacío ({lo}, {hi})")
    first, last = int(np.floor(lo)) + 1, int(np.ceil(hi)) - 1
    if first < min(SUPPORTED_NEGATIVE_RATES) or last > MAX_DEGREE:
        raise BadRange(f"rango ({lo}, {hi}) fuera de las tasas soportadas −3..{MAX_DEGREE}")
    entries = []
    for lam in range(first, last + 1):
        d = homogeneous_kernel_dim(op, lam) if lam >= 0 else negative_rate_kernel_dim(op, lam)
        logger.info("tasa λ=%d: d=%d", lam, d)
        if d > 0:
            entries.append((float(lam), d))
    return RateTable(entries=entries, lo=lo, hi=hi)


def verify_rate_table(table: RateTable, reference: RateTable = REFERENCE_FLAT_RATES) -> None:
    """
    Compara con la tabla publicada en el rango común

    Raises:
        RateTableMismatch: con la tabla calculada en el mensaje
    """
    lo = table.lo if table.lo is not None else reference.lo
    hi = table.hi if table.hi is not None else reference.hi
    expected = reference.restricted(lo, hi).entries
    if [(float(a), int(b)) for a, b in table.entries] != [(float(a), int(b)) for a, b in expected]:
        raise RateTableMismatch(
            f"tabla calculada {table.entries} difiere de la de referencia {expected} en ({lo}, {hi})"
        )


def index_change(table: RateTable, delta1: float, delta2: float) -> int:
    """
    Salto del índice Σ_{λ ∈ (δ₁, δ₂)} d(λ)

    Raises:
        BadRange: δ₁ ≥ δ₂
        CriticalEndpoint: un extremo coincide con una tasa listada
    """
    if delta1 >= delta2:
        raise BadRange(f"se requiere δ₁ < δ₂, recibido ({delta1}, {delta2})")
    for end in (delta1, delta2):
        if table.multiplicity(end):
            raise CriticalEndpoint(f"el peso {end} es una tasa crítica")
    return sum(d for lam, d in table.entries if delta1 < lam < delta2)


def compact_index_formula(sigma: int, euler: int, self_intersection: int, dim_family: int) -> int:
    """
    Dimensión esperada ½(σ + χ) − [N]·[N] + dim 𝒮

    Raises:
        ParityError: σ + χ impar
        BadRange: dim 𝒮 negativa
    """
    if (sigma + euler) % 2:
        raise ParityError(f"σ + χ = {sigma + euler} es impar")
    if dim_family < 0:
        raise BadRange(f"dim 𝒮 debe ser ≥ 0, recibido {dim_family}")
    return (sigma + euler) // 2 - self_intersection + dim_family


def default_rates_path() -> Path:
    return Path(__file__).parent.parent / "conf" / "quadric_rates.csv"


def load_rate_table(path: Union[str, Path, None] = None) -> RateTable:
    """
    Cargar una tabla CSV con cabecera "lambda,d"

    Args:
        path: archivo; por defecto conf/quadric_rates.csv
    """
    path = Path(path) if path is not None else default_rates_path()
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(line for line in f if not line.startswith("#"))
            if reader.fieldnames != ["lambda", "d"]:
                raise IoError(f"{path}: cabecera {reader.fieldnames}, se esperaba lambda,d")
            entries = [(float(row["lambda"]), int(row["d"])) for row in reader]
    except OSError as e:
        raise IoError(f"Error al leer {path}: {e}") from e
    except (TypeError, ValueError) as e:
        raise IoError(f"{path}: fila inválida: {e}") from e
    return RateTable(entries=sorted(entries))


def save_rate_table(table: RateTable, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("lambda,d\n")
            for lam, d in table.entries:
                f.write(f"{lam:.12g},{d}\n")
    except OSError as e:
        raise IoError(f"Error al escribir {path}: {e}") from e
    return path


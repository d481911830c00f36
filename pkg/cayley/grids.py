"""
Grillas estructuradas: operadores de derivada dispersos y cuadratura

Cada eje es abierto (trapecio no uniforme o punto medio) o periódico. Un eje
"twisted" es periódico con identificación torcida: al cruzar el borde, el eje
siguiente se desplaza medio periodo (cociente Z2 del enlace cuádrico).
Orden C: el último eje varía más rápido.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from cayley.errors import GridMismatch, MissingDerivatives

AXIS_KINDS = ("trapezoid", "midpoint", "periodic", "twisted")
MAX_DERIVATIVE_ORDER = 2


@dataclass(frozen=True)
class Axis:
    """Eje de coordenadas con su tipo de frontera"""

    name: str
    nodes: np.ndarray
    kind: str
    period: float = 0.0

    @property
    def size(self) -> int:
        return len(self.nodes)

    def weights(self) -> np.ndarray:
        x = self.nodes
        if self.kind == "trapezoid":
            w = np.empty_like(x)
            w[0] = 0.5 * (x[1] - x[0])
            w[-1] = 0.5 * (x[-1] - x[-2])
            w[1:-1] = 0.5 * (x[2:] - x[:-2])
            return w
        if self.kind == "midpoint":
            return np.full(self.size, x[1] - x[0])
        return np.full(self.size, self.period / self.size)


def open_difference(x: np.ndarray) -> sp.csr_matrix:
    """
    Derivada de segundo orden en nodos no uniformes, unilateral en los bordes

    Mismos coeficientes que np.gradient(..., edge_order=2).
    """
    n = len(x)
    if n < 3:
        raise MissingDerivatives(f"se necesitan al menos 3 nodos por eje abierto, hay {n}")
    rows, cols, vals = [], [], []
    h = np.diff(x)
    for i in range(1, n - 1):
        hs, hd = h[i - 1], h[i]
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [-hd / (hs * (hs + hd)), (hd - hs) / (hs * hd), hs / (hd * (hs + hd))]
    d1, d2 = h[0], h[1]
    rows += [0, 0, 0]
    cols += [0, 1, 2]
    vals += [-(2 * d1 + d2) / (d1 * (d1 + d2)), (d1 + d2) / (d1 * d2), -d1 / (d2 * (d1 + d2))]
    d1, d2 = h[-2], h[-1]
    rows += [n - 1, n - 1, n - 1]
    cols += [n - 3, n - 2, n - 1]
    vals += [d2 / (d1 * (d1 + d2)), -(d2 + d1) / (d1 * d2), (2 * d2 + d1) / (d2 * (d1 + d2))]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def periodic_difference(n: int, period: float) -> sp.csr_matrix:
    """Diferencia central periódica en nodos uniformes"""
    h = period / n
    idx = np.arange(n)
    rows = np.concatenate([idx, idx])
    cols = np.concatenate([(idx + 1) % n, (idx - 1) % n])
    vals = np.concatenate([np.full(n, 0.5 / h), np.full(n, -0.5 / h)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def twisted_difference(n1: int, n2: int, period: float) -> sp.csr_matrix:
    """
    Diferencia central en el primer eje de un plano (n1 × n2) con giro

    El vecino de (n1-1, j) hacia adelante es (0, j + n2/2).
    """
    if n2 % 2:
        raise GridMismatch(f"el eje torcido necesita un compañero de tamaño par, hay {n2}")
    h = period / n1
    rows, cols, vals = [], [], []
    shift = n2 // 2
    for i in range(n1):
        for j in range(n2):
            row = i * n2 + j
            if i + 1 < n1:
                fwd = (i + 1) * n2 + j
            else:
                fwd = (j + shift) % n2
            if i > 0:
                bwd = (i - 1) * n2 + j
            else:
                bwd = (n1 - 1) * n2 + (j + shift) % n2
            rows += [row, row]
            cols += [fwd, bwd]
            vals += [0.5 / h, -0.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n1 * n2, n1 * n2))


class StructuredGrid:
    """Producto tensorial de ejes; nodos en orden C"""

    def __init__(self, axes: Sequence[Axis]):
        for pos, axis in enumerate(axes):
            if axis.kind not in AXIS_KINDS:
                raise GridMismatch(f"tipo de eje desconocido: {axis.kind}")
            if axis.kind == "twisted" and pos != len(axes) - 2:
                raise GridMismatch("el eje torcido debe ser el penúltimo")
        self.axes: Tuple[Axis, ...] = tuple(axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def coordinates(self) -> np.ndarray:
        """Coordenadas (N, ndim) de todos los nodos"""
        mesh = np.meshgrid(*(a.nodes for a in self.axes), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def coordinate_weights(self) -> np.ndarray:
        weights = self.axes[0].weights()
        for axis in self.axes[1:]:
            weights = np.multiply.outer(weights, axis.weights())
        return weights.ravel()

    def _axis_operator(self, pos: int) -> sp.csr_matrix:
        axis = self.axes[pos]
        if axis.kind == "twisted":
            partner = self.axes[pos + 1]
            local = twisted_difference(axis.size, partner.size, axis.period)
            before = int(np.prod(self.shape[:pos]))
            return sp.kron(sp.identity(before), local, format="csr")
        if axis.kind == "periodic":
            local = periodic_difference(axis.size, axis.period)
        else:
            local = open_difference(axis.nodes)
        before = int(np.prod(self.shape[:pos]))
        after = int(np.prod(self.shape[pos + 1:]))
        return sp.kron(sp.kron(sp.identity(before), local), sp.identity(after), format="csr")

    @cached_property
    def derivative_matrices(self) -> List[sp.csr_matrix]:
        """Un operador disperso (N × N) por eje"""
        return [self._axis_operator(pos) for pos in range(self.ndim)]

    def differentiate(self, field: np.ndarray) -> np.ndarray:
        """
        Derivadas coordenadas de un campo nodal

        Args:
            field: arreglo (N, ...) con componentes arbitrarias

        Returns:
            arreglo (N, ndim, ...)
        """
        values = np.asarray(field, dtype=float)
        if values.shape[0] != self.size:
            raise GridMismatch(f"campo con {values.shape[0]} nodos, grilla con {self.size}")
        flat = values.reshape(self.size, -1)
        parts = [(d @ flat).reshape(values.shape) for d in self.derivative_matrices]
        return np.stack(parts, axis=1)

    def radial_neighbors(self) -> np.ndarray:
        """Índice del siguiente nodo en el eje 0, o -1 en el último anillo"""
        idx = np.arange(self.size).reshape(self.shape)
        nxt = np.full(self.shape, -1, dtype=np.int64)
        nxt[:-1] = idx[1:]
        return nxt.ravel()


def check_order(k: int) -> None:
    if k < 0 or k > MAX_DERIVATIVE_ORDER:
        raise MissingDerivatives(
            f"orden k={k} fuera del rango disponible 0..{MAX_DERIVATIVE_ORDER} de los esténciles"
        )

"""
Caché en disco de matrices dispersas ensambladas (formato .sptr)

Layout (little-endian): magic b"SPTR0001", filas y columnas (int64), nnz
(int64), índices de fila int64[nnz], índices de columna int64[nnz],
valores f64[nnz]. El nombre del archivo es el hash SHA-256 del contenido
que determinó la matriz.
"""
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from cayley.errors import IoError

logger = logging.getLogger(__name__)

MAGIC = b"SPTR0001"


def content_key(*parts) -> str:
    """Hash SHA-256 de una secuencia de textos, números y arreglos"""
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            arr = np.ascontiguousarray(part)
            digest.update(str(arr.dtype).encode())
            digest.update(str(arr.shape).encode())
            digest.update(arr.tobytes())
        elif isinstance(part, dict):
            digest.update(json.dumps(part, sort_keys=True, default=str).encode())
        else:
            digest.update(repr(part).encode())
        digest.update(b"|")
    return digest.hexdigest()


def immersion_key(immersion, kind: str) -> str:
    """Clave del operador `kind` sobre una inmersión: nodos, derivadas y grilla"""
    header = immersion.header() if hasattr(immersion, "header") else {}
    return content_key(kind, header, np.asarray(immersion.grid.shape), immersion.points, immersion.tangents)


def write_sptr(path: Union[str, Path], matrix) -> None:
    coo = sp.coo_matrix(matrix)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(np.array(coo.shape + (coo.nnz,), dtype="<i8").tobytes())
            f.write(coo.row.astype("<i8").tobytes())
            f.write(coo.col.astype("<i8").tobytes())
            f.write(coo.data.astype("<f8").tobytes())
        os.replace(tmp, path)
    except OSError as e:
        raise IoError(f"Error al escribir {path}: {e}") from e


def read_sptr(path: Union[str, Path]) -> sp.csr_matrix:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"Error al leer {path}: {e}") from e
    if len(raw) < 32 or raw[:8] != MAGIC:
        raise IoError(f"{path}: magic inválido")
    rows, cols, nnz = (int(x) for x in np.frombuffer(raw[8:32], dtype="<i8"))
    expected = 32 + nnz * 24
    if len(raw) != expected:
        raise IoError(f"{path}: tamaño {len(raw)} bytes, se esperaban {expected}")
    offset = 32
    r = np.frombuffer(raw, dtype="<i8", count=nnz, offset=offset)
    c = np.frombuffer(raw, dtype="<i8", count=nnz, offset=offset + 8 * nnz)
    v = np.frombuffer(raw, dtype="<f8", count=nnz, offset=offset + 16 * nnz)
    return sp.csr_matrix((v, (r, c)), shape=(rows, cols))


class MatrixCache:
    """
    Directorio de matrices .sptr indexadas por hash

    Args:
        directory: carpeta de la caché (se crea si no existe)
        enabled: False equivale a --no-cache
    """

    def __init__(self, directory: Union[str, Path], enabled: bool = True):
        self.directory = Path(directory)
        self.enabled = enabled
        if enabled:
            self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.sptr"

    def get(self, key: str) -> Optional[sp.csr_matrix]:
        if not self.enabled:
            return None
        path = self.path_for(key)
        if not path.exists():
            return None
        logger.debug("caché: acierto %s", key[:12])
        return read_sptr(path)

    def put(self, key: str, matrix) -> None:
        if not self.enabled:
            return
        write_sptr(self.path_for(key), matrix)
        logger.debug("caché: guardado %s", key[:12])

"""
Archivos de artefactos: cabecera JSON en una línea seguida de bloques binarios

Cada bloque se describe en la cabecera ("blocks": nombre, dtype, shape) y se
escribe en ese orden, little-endian, en orden C. Usado para parches,
inmersiones pegadas y campos normales.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from cayley.errors import IoError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_DTYPES = {"f64": "<f8", "u8": "u1"}


def write_artifact(path: Union[str, Path], header: dict, blocks: List[Tuple[str, np.ndarray]]) -> Path:
    """
    Escribir cabecera + bloques

    Args:
        path: archivo destino
        header: metadatos serializables a JSON
        blocks: pares (nombre, arreglo) de tipo float64 o uint8

    Returns:
        Ruta escrita
    """
    path = Path(path)
    meta = dict(header)
    meta["format_version"] = FORMAT_VERSION
    payloads = []
    described = []
    for name, array in blocks:
        arr = np.asarray(array)
        code = "u8" if arr.dtype == np.uint8 else "f64"
        payloads.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
        described.append({"name": name, "dtype": code, "shape": list(arr.shape)})
    meta["blocks"] = described
    try:
        with open(path, "wb") as f:
            f.write(json.dumps(meta, sort_keys=True, default=float).encode("utf-8"))
            f.write(b"\n")
            for payload in payloads:
                f.write(payload)
    except OSError as e:
        raise IoError(f"Error al escribir {path}: {e}") from e
    logger.debug("artefacto escrito: %s (%d bloques)", path, len(blocks))
    return path


def read_artifact(path: Union[str, Path]) -> Tuple[dict, Dict[str, np.ndarray]]:
    """Leer un artefacto; IoError si la cabecera o los tamaños no cuadran"""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"Error al leer {path}: {e}") from e
    end = raw.find(b"\n")
    if end < 0:
        raise IoError(f"{path}: falta la línea de cabecera")
    try:
        header = json.loads(raw[:end].decode("utf-8"))
    except ValueError as e:
        raise IoError(f"{path}: cabecera JSON inválida: {e}") from e
    offset = end + 1
    blocks = {}
    for block in header.get("blocks", []):
        dtype = np.dtype(_DTYPES[block["dtype"]])
        count = int(np.prod(block["shape"])) if block["shape"] else 1
        size = count * dtype.itemsize
        if offset + size > len(raw):
            raise IoError(f"{path}: bloque {block['name']} truncado")
        blocks[block["name"]] = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(block["shape"])
        offset += size
    if offset != len(raw):
        raise IoError(f"{path}: {len(raw) - offset} bytes sobrantes")
    return header, blocks


def save_immersion(path, immersion, seed: Optional[int] = None) -> Path:
    """Parche o inmersión pegada: nodos (N, 8) y, si existen, etiquetas de parte"""
    header = dict(immersion.header())
    header["seed"] = seed
    blocks = [("points", immersion.points)]
    labels = getattr(immersion, "labels", None)
    if labels is not None:
        blocks.append(("labels", np.asarray(labels, dtype=np.uint8)))
    return write_artifact(path, header, blocks)


def save_normal_field(path, field, seed: Optional[int] = None) -> Path:
    """Coeficientes (N, 4) en el marco normal de la inmersión"""
    header = {"kind": "normal_field", "dims": list(field.immersion.grid.shape), "seed": seed}
    return write_artifact(path, header, [("values", field.values)])

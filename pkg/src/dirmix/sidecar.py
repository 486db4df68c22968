"""Self-describing binary sidecars for fitted parameters and segment stats.

Both formats follow the FMAP house style: 8-byte magic, little-endian u32
headers, raw little-endian float payloads. Parameters and statistics use
float64 (these are estimation outputs, not bulk features).

FPRM (fitted mixture parameters)::

    magic 'FPRM\\x00\\x00\\x00\\x01' | density u32 (0 gaussian, 1 student)
    | K u32 | H u32 | per layer: d u32
    | per layer, per component: mean f64[d], cov f64[d*d]
      and, for student only, dof f64

FSTA (per-segment feature statistics)::

    magic 'FSTA\\x00\\x00\\x00\\x01' | layer u32 | component u32 | d u32
    | pixel count u64 | mean f64[d] | covariance f64[d*d] row-major
"""

from __future__ import annotations

import struct

import numpy as np

from .densities import GaussianParams, StudentParams
from .errors import BadMagic, IoFailure, TruncatedPayload

PARAMS_MAGIC = b"FPRM\x00\x00\x00\x01"
STATS_MAGIC = b"FSTA\x00\x00\x00\x01"

_DENSITY_CODES = {"gaussian": 0, "student": 1}
_DENSITY_NAMES = {v: k for k, v in _DENSITY_CODES.items()}


def write_params(path, density_name: str, params_per_layer) -> None:
    code = _DENSITY_CODES[density_name]
    parts = [PARAMS_MAGIC]
    n_layers = len(params_per_layer)
    n_components = params_per_layer[0].n_components
    parts.append(struct.pack("<III", code, n_components, n_layers))
    for params in params_per_layer:
        parts.append(struct.pack("<I", params.n_features))
    for params in params_per_layer:
        scales = params.scales if density_name == "student" else params.covariances
        for k in range(n_components):
            parts.append(np.ascontiguousarray(
                params.means[k], dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(
                scales[k], dtype="<f8").tobytes())
            if density_name == "student":
                parts.append(struct.pack("<d", float(params.dofs[k])))
    blob = b"".join(parts)
    try:
        with open(path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_params(path):
    """Returns (density_name, list of per-layer params objects)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if blob[: len(PARAMS_MAGIC)] != PARAMS_MAGIC:
        raise BadMagic(f"{path} is not a parameter sidecar")
    pos = len(PARAMS_MAGIC)
    code, n_components, n_layers = struct.unpack_from("<III", blob, pos)
    pos += 12
    density_name = _DENSITY_NAMES[code]
    dims = []
    for _ in range(n_layers):
        (d,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims.append(d)
    out = []
    for d in dims:
        means = np.empty((n_components, d))
        mats = np.empty((n_components, d, d))
        dofs = np.empty(n_components)
        for k in range(n_components):
            need = 8 * d + 8 * d * d + (8 if density_name == "student" else 0)
            if len(blob) < pos + need:
                raise TruncatedPayload(f"{path}: component block cut short")
            means[k] = np.frombuffer(blob, "<f8", d, pos)
            pos += 8 * d
            mats[k] = np.frombuffer(blob, "<f8", d * d, pos).reshape(d, d)
            pos += 8 * d * d
            if density_name == "student":
                (dofs[k],) = struct.unpack_from("<d", blob, pos)
                pos += 8
        if density_name == "student":
            out.append(StudentParams(means, mats, dofs))
        else:
            out.append(GaussianParams(means, mats))
    return density_name, out


def write_segment_stats(path, layer: int, component: int, count: int,
                        mean: np.ndarray, cov: np.ndarray) -> None:
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    d = mean.shape[0]
    parts = [
        STATS_MAGIC,
        struct.pack("<IIIQ", layer, component, d, count),
        np.ascontiguousarray(mean, dtype="<f8").tobytes(),
        np.ascontiguousarray(cov, dtype="<f8").tobytes(),
    ]
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(parts))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_segment_stats(path):
    """Returns (layer, component, count, mean (d,), cov (d, d))."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if blob[: len(STATS_MAGIC)] != STATS_MAGIC:
        raise BadMagic(f"{path} is not a segment-stats block")
    pos = len(STATS_MAGIC)
    layer, component, d, count = struct.unpack_from("<IIIQ", blob, pos)
    pos += struct.calcsize("<IIIQ")
    if len(blob) < pos + 8 * d + 8 * d * d:
        raise TruncatedPayload(f"{path}: stats payload cut short")
    mean = np.frombuffer(blob, "<f8", d, pos).copy()
    pos += 8 * d
    cov = np.frombuffer(blob, "<f8", d * d, pos).reshape(d, d).copy()
    return layer, component, count, mean, cov

"""
File formats: the XTF1 tensor container and the points JSON document.

XTF1 layout, all little-endian: magic b"XTF1", one dtype byte (0 float32, 1 uint32), one byte with
the number of dims, one uint32 per dim, then the row-major payload.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
import torch

from ..errors import InputError
from ..geometry import Point, PointSet

logger = logging.getLogger(__name__)

MAGIC = b'XTF1'
DTYPE_FLOAT32 = 0
DTYPE_UINT32 = 1
_NUMPY_DTYPES = {DTYPE_FLOAT32: np.dtype('<f4'), DTYPE_UINT32: np.dtype('<u4')}

PathLike = Union[str, Path]


def encode_tensor(array) -> bytes:
    """Serialise a float32 or uint32 array; other dtypes must be converted by the caller"""
    array = np.asarray(array)
    if array.dtype.kind == 'f' and array.dtype.itemsize == 4:
        code = DTYPE_FLOAT32
    elif array.dtype.kind == 'u' and array.dtype.itemsize == 4:
        code = DTYPE_UINT32
    else:
        raise InputError(f"only float32 and uint32 tensors can be written, got {array.dtype}")
    if array.ndim > 255:
        raise InputError(f"too many dims: {array.ndim}")
    header = MAGIC + struct.pack('<BB', code, array.ndim) + struct.pack(f'<{array.ndim}I', *array.shape)
    return header + np.ascontiguousarray(array, dtype=_NUMPY_DTYPES[code]).tobytes()


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise InputError("not an XTF1 tensor: bad magic")
    code, ndims = struct.unpack_from('<BB', blob, 4)
    if code not in _NUMPY_DTYPES:
        raise InputError(f"unknown dtype byte {code}")
    offset = 6 + 4 * ndims
    if len(blob) < offset:
        raise InputError("truncated dims header")
    dims = struct.unpack_from(f'<{ndims}I', blob, 6)
    dtype = _NUMPY_DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise InputError(f"payload holds {len(blob) - offset} bytes, dims {tuple(dims)} need {expected}")
    return np.frombuffer(blob, dtype=dtype, offset=offset).reshape(dims).copy()


def read_tensor(path: PathLike) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read tensor file {path}: {e}") from e
    try:
        return decode_tensor(blob)
    except InputError as e:
        raise InputError(f"{path}: {e}") from e


def write_tensor(path: PathLike, array):
    Path(path).write_bytes(encode_tensor(array))


def read_feature_map(path: PathLike) -> torch.Tensor:
    """(D, H, W) float32 tensor file as a float64 field"""
    array = read_tensor(path)
    if array.dtype != _NUMPY_DTYPES[DTYPE_FLOAT32] or array.ndim != 3:
        raise InputError(f"{path}: feature map must be a 3-dim float32 tensor, got {array.ndim}-dim {array.dtype}")
    return torch.from_numpy(array.astype(np.float64))


def read_scalar_field(path: PathLike) -> torch.Tensor:
    """(H, W) float32 tensor file as a float64 field"""
    array = read_tensor(path)
    if array.dtype != _NUMPY_DTYPES[DTYPE_FLOAT32] or array.ndim != 2:
        raise InputError(f"{path}: scalar field must be a 2-dim float32 tensor, got {array.ndim}-dim {array.dtype}")
    return torch.from_numpy(array.astype(np.float64))


def read_label_map(path: PathLike) -> torch.Tensor:
    """(H, W) uint32 tensor file as an int64 label map"""
    array = read_tensor(path)
    if array.dtype != _NUMPY_DTYPES[DTYPE_UINT32] or array.ndim != 2:
        raise InputError(f"{path}: label map must be a 2-dim uint32 tensor, got {array.ndim}-dim {array.dtype}")
    return torch.from_numpy(array.astype(np.int64))


def read_image(path: PathLike) -> np.ndarray:
    """(H, W, 3) float32 tensor file with RGB values in [0, 1]"""
    array = read_tensor(path)
    if array.dtype != _NUMPY_DTYPES[DTYPE_FLOAT32] or array.ndim != 3 or array.shape[2] != 3:
        raise InputError(f"{path}: image must be an (H, W, 3) float32 tensor, got shape {array.shape}")
    return array.astype(np.float64)


def write_feature_map(path: PathLike, fmap: torch.Tensor):
    write_tensor(path, fmap.detach().cpu().numpy().astype(np.float32))


def write_label_map(path: PathLike, labels: torch.Tensor):
    array = labels.detach().cpu().numpy()
    if array.size and (array.min() < 0 or array.max() > np.iinfo(np.uint32).max):
        raise InputError("label values must fit in uint32")
    write_tensor(path, array.astype(np.uint32))


def _parse_point(entry, index) -> Point:
    if not isinstance(entry, dict):
        raise InputError(f"points[{index}] must be an object")
    unknown = set(entry) - {'id', 'y', 'x', 'score'}
    if unknown:
        raise InputError(f"points[{index}] has unknown keys {sorted(unknown)}")
    for key in ('id', 'y', 'x'):
        if key not in entry:
            raise InputError(f"points[{index}] misses '{key}'")
    if not isinstance(entry['id'], int) or isinstance(entry['id'], bool):
        raise InputError(f"points[{index}].id must be an integer")
    for key in ('y', 'x', 'score'):
        value = entry.get(key)
        if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise InputError(f"points[{index}].{key} must be a number")
    score = entry.get('score')
    return Point(entry['id'], float(entry['y']), float(entry['x']), None if score is None else float(score))


def parse_points(text: str) -> PointSet:
    """JSON array of {"id": int, "y": float, "x": float, "score": float (optional)}"""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"points are not valid JSON: {e}") from e
    if not isinstance(doc, list):
        raise InputError("points document must be a JSON array")
    return PointSet(tuple(_parse_point(entry, i) for i, entry in enumerate(doc)))


def read_points(path: PathLike) -> PointSet:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read points file {path}: {e}") from e
    return parse_points(text)


def dump_points(points: PointSet) -> str:
    doc = []
    for p in points:
        entry = {'id': p.id, 'y': p.y, 'x': p.x}
        if p.score is not None:
            entry['score'] = p.score
        doc.append(entry)
    return json.dumps(doc, indent=2)


def write_points(path: PathLike, points: PointSet):
    Path(path).write_text(dump_points(points))

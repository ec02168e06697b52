"""Binary I/O: a NIfTI-1 reader/writer for volumes and the MCT1 blob format.

The NIfTI-1 parser is deliberately strict: little-endian single- or
dual-file layouts only, 3D volumes only, and every header field that the
reader consumes is validated before any payload memory is touched.  Fuzzed
headers must produce typed errors, never crashes or allocations sized from
unchecked fields.
"""

from __future__ import annotations

import gzip
import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import (
    BadMagic,
    HeaderError,
    IoFailure,
    LengthMismatch,
    NonInvertibleAffine,
    TruncatedPayload,
    UnsupportedDtype,
)
from .volume import Volume

HEADER_SIZE = 348
SINGLE_FILE_OFFSET = 352

_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype codes we read; everything is converted to float32.
_NIFTI_DTYPES = {
    2: np.dtype("<u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    64: np.dtype("<f8"),
}

BLOB_MAGIC = b"MCT1"
_BLOB_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<u1")}
_BLOB_CODE_FOR = {np.dtype("float32"): 1, np.dtype("uint8"): 2}


def _read_file(path: str | os.PathLike) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    try:
        with opener(path, "rb") as fh:
            return fh.read()
    except (OSError, gzip.BadGzipFile, EOFError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write_file(path: str | os.PathLike, payload: bytes) -> None:
    """Atomic write (temp file + rename); gzip when the name ends in .gz."""
    path = str(path)
    tmp = path + ".part"
    try:
        if path.endswith(".gz"):
            with open(tmp, "wb") as raw:
                # mtime=0 keeps the gzip stream byte-reproducible
                with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
                    gz.write(payload)
        else:
            with open(tmp, "wb") as fh:
                fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            if os.path.exists(tmp):
                os.remove(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _quaternion_affine(header: bytes, spacing: tuple[float, float, float]) -> np.ndarray:
    b, c, d = struct.unpack_from("<3f", header, 256)
    ox, oy, oz = struct.unpack_from("<3f", header, 268)
    qfac = struct.unpack_from("<f", header, 76)[0]
    qfac = -1.0 if qfac < 0 else 1.0
    if not all(math.isfinite(v) for v in (b, c, d, ox, oy, oz)):
        raise HeaderError("non-finite quaternion fields")
    a_sq = 1.0 - (b * b + c * c + d * d)
    a = math.sqrt(a_sq) if a_sq > 0 else 0.0
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ],
        dtype=np.float64,
    )
    aff = np.eye(4, dtype=np.float64)
    aff[:3, 0] = rot[:, 0] * spacing[0]
    aff[:3, 1] = rot[:, 1] * spacing[1]
    aff[:3, 2] = rot[:, 2] * spacing[2] * qfac
    aff[:3, 3] = (ox, oy, oz)
    return aff


def read_nifti(path: str | os.PathLike) -> Volume:
    """Parse a little-endian NIfTI-1 file into a :class:`Volume`.

    sform wins over qform when both are present; with neither, the affine
    is diagonal at the pixdim spacing.  ``scl_slope == 0`` means "no
    scaling" per the format; otherwise voxels become slope*v + inter.
    """
    buf = _read_file(path)
    if len(buf) < HEADER_SIZE:
        raise TruncatedPayload(f"{path}: {len(buf)} bytes is shorter than a NIfTI-1 header")
    magic = buf[344:348]
    if magic not in (_MAGIC_SINGLE, _MAGIC_PAIR):
        raise BadMagic(f"{path}: magic {magic!r} is not a NIfTI-1 signature")
    (sizeof_hdr,) = struct.unpack_from("<i", buf, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise HeaderError(
            f"{path}: sizeof_hdr={sizeof_hdr}; big-endian NIfTI-1 files are not supported"
        )
    dim = struct.unpack_from("<8h", buf, 40)
    if not 1 <= dim[0] <= 7:
        raise HeaderError(
            f"{path}: dim[0]={dim[0]} outside 1..7; big-endian NIfTI-1 files are not supported"
        )
    if dim[0] != 3:
        raise HeaderError(f"{path}: only 3D volumes are supported, got dim[0]={dim[0]}")
    nx, ny, nz = int(dim[1]), int(dim[2]), int(dim[3])
    if min(nx, ny, nz) < 1:
        raise HeaderError(f"{path}: non-positive dimensions {(nx, ny, nz)}")

    datatype, bitpix = struct.unpack_from("<2h", buf, 70)
    np_dtype = _NIFTI_DTYPES.get(datatype)
    if np_dtype is None:
        raise UnsupportedDtype(f"{path}: datatype code {datatype} is not supported")
    if bitpix != np_dtype.itemsize * 8:
        raise HeaderError(f"{path}: bitpix={bitpix} disagrees with datatype {datatype}")

    pixdim = struct.unpack_from("<8f", buf, 76)
    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not math.isfinite(s) or s <= 0 for s in spacing):
        raise HeaderError(f"{path}: pixdim spacing {spacing} must be positive and finite")

    vox_offset_f, scl_slope, scl_inter = struct.unpack_from("<3f", buf, 108)
    if not math.isfinite(vox_offset_f) or vox_offset_f != int(vox_offset_f):
        raise HeaderError(f"{path}: vox_offset={vox_offset_f} is not an integer byte offset")
    vox_offset = int(vox_offset_f)
    if not (math.isfinite(scl_slope) and math.isfinite(scl_inter)):
        raise HeaderError(f"{path}: non-finite scl_slope/scl_inter")

    if magic == _MAGIC_SINGLE:
        if vox_offset < HEADER_SIZE:
            raise HeaderError(f"{path}: vox_offset={vox_offset} overlaps the header")
        data_src = buf
    else:
        base, ext = os.path.splitext(str(path))
        if ext == ".gz":
            base, _ = os.path.splitext(base)
            img_path = base + ".img.gz"
        else:
            img_path = base + ".img"
        if vox_offset < 0:
            raise HeaderError(f"{path}: negative vox_offset for a header/image pair")
        data_src = _read_file(img_path)

    qform_code, sform_code = struct.unpack_from("<2h", buf, 252)
    if sform_code > 0:
        rows = struct.unpack_from("<12f", buf, 280)
        affine = np.eye(4, dtype=np.float64)
        affine[0, :] = rows[0:4]
        affine[1, :] = rows[4:8]
        affine[2, :] = rows[8:12]
        if not np.all(np.isfinite(affine)):
            raise NonInvertibleAffine(f"{path}: sform rows contain non-finite values")
    elif qform_code > 0:
        affine = _quaternion_affine(buf, spacing)
    else:
        affine = np.diag((*spacing, 1.0)).astype(np.float64)
    if abs(np.linalg.det(affine[:3, :3])) <= 1e-12:
        raise NonInvertibleAffine(f"{path}: voxel-to-world matrix is singular")

    nvox = nx * ny * nz
    nbytes = nvox * np_dtype.itemsize
    if len(data_src) < vox_offset + nbytes:
        raise TruncatedPayload(
            f"{path}: payload needs {vox_offset + nbytes} bytes, file has {len(data_src)}"
        )
    raw = np.frombuffer(data_src, dtype=np_dtype, count=nvox, offset=vox_offset)
    # on-disk order is x-fastest
    data = np.ascontiguousarray(raw.reshape((nx, ny, nz), order="F"), dtype=np.float32)
    if scl_slope != 0.0 and not (scl_slope == 1.0 and scl_inter == 0.0):
        # extreme slopes on extreme payloads may overflow; that is the
        # file's problem, not a parse failure
        with np.errstate(invalid="ignore", over="ignore"):
            data = data * np.float32(scl_slope) + np.float32(scl_inter)

    return Volume(data=data, spacing=spacing, affine=affine)


def write_nifti(volume: Volume, path: str | os.PathLike) -> None:
    """Write a single-file little-endian NIfTI-1 (.nii or .nii.gz), float32.

    The affine goes into the sform (code 1) and scl_slope is written as 0
    so that ``read_nifti`` round-trips the payload bit-exactly.
    """
    header = bytearray(SINGLE_FILE_OFFSET)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    nx, ny, nz = volume.shape
    struct.pack_into("<8h", header, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", header, 70, 16, 32)  # float32
    sx, sy, sz = volume.spacing
    struct.pack_into("<8f", header, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<3f", header, 108, float(SINGLE_FILE_OFFSET), 0.0, 0.0)
    struct.pack_into("<2h", header, 252, 0, 1)  # qform off, sform on
    aff = volume.affine
    struct.pack_into("<4f", header, 280, *aff[0, :])
    struct.pack_into("<4f", header, 296, *aff[1, :])
    struct.pack_into("<4f", header, 312, *aff[2, :])
    header[344:348] = _MAGIC_SINGLE
    payload = np.asarray(volume.data, dtype="<f4").tobytes(order="F")
    _write_file(path, bytes(header) + payload)


@dataclass
class TensorBlob:
    """Raw tensor container: float32 or uint8 payload plus JSON sidecar."""

    data: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data)
        if data.dtype not in _BLOB_CODE_FOR:
            raise UnsupportedDtype(f"blob dtype must be float32 or uint8, got {data.dtype}")
        if data.ndim < 1 or data.ndim > 8:
            raise HeaderError(f"blob ndim must be in 1..8, got {data.ndim}")
        self.data = data


def _sidecar_path(path: str) -> str:
    base, _ = os.path.splitext(path)
    return base + ".json"


def write_blob(blob: TensorBlob, path: str | os.PathLike) -> None:
    """Write magic + dtype code + ndim + u32 dims + row-major payload."""
    path = str(path)
    data = blob.data
    head = bytearray()
    head += BLOB_MAGIC
    head += struct.pack("<BB", _BLOB_CODE_FOR[data.dtype], data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape)
    le = data.astype(data.dtype.newbyteorder("<"), copy=False)
    _write_file(path, bytes(head) + le.tobytes(order="C"))
    if blob.meta:
        text = json.dumps(blob.meta, sort_keys=True, indent=2) + "\n"
        _write_file(_sidecar_path(path), text.encode("utf-8"))


def read_blob(path: str | os.PathLike) -> TensorBlob:
    """Read a blob written by :func:`write_blob`; loads the sidecar if present."""
    path = str(path)
    buf = _read_file(path)
    if len(buf) < 6:
        raise TruncatedPayload(f"{path}: too short for a blob header")
    if buf[:4] != BLOB_MAGIC:
        raise BadMagic(f"{path}: magic {buf[:4]!r} is not {BLOB_MAGIC!r}")
    code, ndim = struct.unpack_from("<BB", buf, 4)
    dtype = _BLOB_DTYPE_CODES.get(code)
    if dtype is None:
        raise UnsupportedDtype(f"{path}: blob dtype code {code} is not supported")
    if not 1 <= ndim <= 8:
        raise HeaderError(f"{path}: blob ndim {ndim} outside 1..8")
    dims_end = 6 + 4 * ndim
    if len(buf) < dims_end:
        raise TruncatedPayload(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{ndim}I", buf, 6)
    count = math.prod(dims)
    nbytes = count * dtype.itemsize
    if len(buf) - dims_end != nbytes:
        raise LengthMismatch(
            f"{path}: payload is {len(buf) - dims_end} bytes, dims {dims} require {nbytes}"
        )
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=dims_end).reshape(dims)

    meta: dict[str, Any] = {}
    sidecar = _sidecar_path(path)
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    return TensorBlob(data=np.array(data), meta=meta)

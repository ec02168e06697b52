"""Independent NIfTI-1 writer used as the test oracle.

Built directly from the published field table (name / type / byte offset),
serialized with one sequential struct format string so it shares no code
with the library's offset-based writer.
"""

from __future__ import annotations

import struct

import numpy as np

# One format string covering all 348 header bytes, in field order.
_HEADER_FMT = (
    "<"
    "i"      # sizeof_hdr        @ 0
    "10s"    # data_type         @ 4
    "18s"    # db_name           @ 14
    "i"      # extents           @ 32
    "h"      # session_error     @ 36
    "c"      # regular           @ 38
    "c"      # dim_info          @ 39
    "8h"     # dim               @ 40
    "3f"     # intent_p1..p3     @ 56
    "h"      # intent_code       @ 68
    "h"      # datatype          @ 70
    "h"      # bitpix            @ 72
    "h"      # slice_start       @ 74
    "8f"     # pixdim            @ 76
    "f"      # vox_offset        @ 108
    "f"      # scl_slope         @ 112
    "f"      # scl_inter         @ 116
    "h"      # slice_end         @ 120
    "c"      # slice_code        @ 122
    "c"      # xyzt_units        @ 123
    "f"      # cal_max           @ 124
    "f"      # cal_min           @ 128
    "f"      # slice_duration    @ 132
    "f"      # toffset           @ 136
    "i"      # glmax             @ 140
    "i"      # glmin             @ 144
    "80s"    # descrip           @ 148
    "24s"    # aux_file          @ 228
    "h"      # qform_code        @ 252
    "h"      # sform_code        @ 254
    "3f"     # quatern_b,c,d     @ 256
    "3f"     # qoffset_x,y,z     @ 268
    "4f"     # srow_x            @ 280
    "4f"     # srow_y            @ 296
    "4f"     # srow_z            @ 312
    "16s"    # intent_name       @ 328
    "4s"     # magic             @ 344
)

DTYPE_CODES = {
    np.dtype("uint8"): (2, 8),
    np.dtype("int16"): (4, 16),
    np.dtype("int32"): (8, 32),
    np.dtype("float32"): (16, 32),
    np.dtype("float64"): (64, 64),
}


def reference_nifti_bytes(
    data: np.ndarray,
    spacing=(1.0, 1.0, 1.0),
    affine: np.ndarray | None = None,
    scl_slope: float = 0.0,
    scl_inter: float = 0.0,
    magic: bytes = b"n+1\x00",
    sform_code: int = 1,
    qform_code: int = 0,
    quaternion=(0.0, 0.0, 0.0),
    qoffset=(0.0, 0.0, 0.0),
    qfac: float = 1.0,
    vox_offset: float = 352.0,
) -> bytes:
    """Serialize a 3D array to single-file NIfTI-1 bytes, field by field."""
    data = np.asarray(data)
    if affine is None:
        affine = np.diag((*spacing, 1.0))
    code, bitpix = DTYPE_CODES[data.dtype]
    nx, ny, nz = data.shape
    header = struct.pack(
        _HEADER_FMT,
        348,
        b"", b"",
        0, 0, b"r", b"\x00",
        3, nx, ny, nz, 1, 1, 1, 1,
        0.0, 0.0, 0.0,
        0,
        code,
        bitpix,
        0,
        qfac, spacing[0], spacing[1], spacing[2], 0.0, 0.0, 0.0, 0.0,
        vox_offset,
        scl_slope,
        scl_inter,
        0, b"\x00", b"\x00",
        0.0, 0.0, 0.0, 0.0,
        0, 0,
        b"", b"",
        qform_code,
        sform_code,
        quaternion[0], quaternion[1], quaternion[2],
        qoffset[0], qoffset[1], qoffset[2],
        affine[0, 0], affine[0, 1], affine[0, 2], affine[0, 3],
        affine[1, 0], affine[1, 1], affine[1, 2], affine[1, 3],
        affine[2, 0], affine[2, 1], affine[2, 2], affine[2, 3],
        b"",
        magic,
    )
    assert len(header) == 348
    pad = b"\x00" * (int(vox_offset) - 348) if vox_offset >= 348 else b""
    # x varies fastest on disk
    return header + pad + data.tobytes(order="F")

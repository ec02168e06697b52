"""Geometric standardization: reorientation, resampling, crop/pad, row
localization and the left/right width split.

All functions are pure: they take a :class:`Volume` and return a new one
(or the input itself when the operation is an exact identity), so per-study
work can run data-parallel without locks.

Axis conventions after canonical (RAS) reorientation:

* array axis 0 = x = width (left/right),
* array axis 1 = y = height (the row-localization axis),
* array axis 2 = z = the MIP projection axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import WidthTooSmall
from .volume import Volume, dominant_axes

HEIGHT_AXIS = 1


class Interp(enum.Enum):
    """Interpolation kernel for :func:`resample`.

    Masks must always use ``NEAREST`` so their values stay binary.
    """

    TRILINEAR = "trilinear"
    NEAREST = "nearest"


@dataclass(frozen=True)
class RowWindow:
    """Contiguous index window along one array axis."""

    start: int
    length: int
    axis: int = HEIGHT_AXIS

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"window start must be >= 0, got {self.start}")
        if self.length < 1:
            raise ValueError(f"window length must be >= 1, got {self.length}")

    @property
    def stop(self) -> int:
        return self.start + self.length


def _translate_affine(affine: np.ndarray, index_offset: tuple[int, int, int]) -> np.ndarray:
    """Affine for a view whose index (0,0,0) sits at `index_offset` in the parent."""
    out = np.array(affine, dtype=np.float64)
    out[:3, 3] += out[:3, :3] @ np.asarray(index_offset, dtype=np.float64)
    return out


def reorient_canonical(volume: Volume) -> Volume:
    """Permute/flip axes so the volume is RAS; world positions are kept.

    The permutation comes from the affine's dominant direction cosines.  An
    already-RAS volume is returned unchanged.
    """
    axes = dominant_axes(volume.affine)
    if axes == [(0, 1), (1, 1), (2, 1)]:
        return volume

    # source voxel axis and flip flag for each canonical output axis
    source_axis = [0, 0, 0]
    flip = [False, False, False]
    for voxel_axis, (world_axis, sign) in enumerate(axes):
        source_axis[world_axis] = voxel_axis
        flip[world_axis] = sign < 0

    data = volume.data.transpose(source_axis)
    flip_dims = [w for w in range(3) if flip[w]]
    if flip_dims:
        data = np.flip(data, axis=flip_dims)

    old = volume.affine
    affine = np.eye(4, dtype=np.float64)
    affine[:3, 3] = old[:3, 3]
    for w in range(3):
        c = source_axis[w]
        col = old[:3, c]
        if flip[w]:
            affine[:3, w] = -col
            affine[:3, 3] += col * (volume.shape[c] - 1)
        else:
            affine[:3, w] = col
    spacing = tuple(volume.spacing[source_axis[w]] for w in range(3))
    return Volume(np.ascontiguousarray(data), spacing, affine)


def _lerp_axis(data: np.ndarray, axis: int, n_out: int, ratio: float) -> np.ndarray:
    """Linear interpolation of one axis onto `n_out` samples at `pos = j*ratio`."""
    n_in = data.shape[axis]
    pos = np.arange(n_out, dtype=np.float64) * ratio
    lo = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    # clamp-to-edge: once both taps hit the same voxel, the blend must be
    # an exact copy, not a*(1-f)+a*f (which can differ by an ulp)
    frac = np.where(hi == lo, 0.0, frac)

    shape = [1, 1, 1]
    shape[axis] = n_out
    frac = frac.reshape(shape)
    low_vals = np.take(data, lo, axis=axis)
    high_vals = np.take(data, hi, axis=axis)
    return low_vals * (1.0 - frac) + high_vals * frac


def resample(volume: Volume, target: tuple[float, float, float], interp: Interp) -> Volume:
    """Resample onto `target` spacing (mm); index (0,0,0) keeps its world position.

    Output extents are ``max(1, round(n_i * s_i / t_i))`` per axis.  Samples
    that fall outside the source grid take the edge value.  Trilinear
    interpolation runs separably in float64 and is exact when the target
    equals the source spacing.
    """
    target = tuple(float(t) for t in target)
    if any(not np.isfinite(t) or t <= 0 for t in target):
        raise ValueError(f"target spacing must be positive, got {target}")
    source = volume.spacing
    shape = volume.shape
    n_out = tuple(
        max(1, int(np.floor(shape[i] * source[i] / target[i] + 0.5))) for i in range(3)
    )
    ratios = tuple(target[i] / source[i] for i in range(3))

    if interp is Interp.NEAREST:
        idx = []
        for i in range(3):
            pos = np.arange(n_out[i], dtype=np.float64) * ratios[i]
            idx.append(np.clip(np.rint(pos).astype(np.int64), 0, shape[i] - 1))
        data = volume.data[np.ix_(*idx)]
    else:
        acc = volume.data.astype(np.float64)
        for axis in range(3):
            if n_out[axis] == shape[axis] and ratios[axis] == 1.0:
                continue
            acc = _lerp_axis(acc, axis, n_out[axis], ratios[axis])
        data = acc.astype(np.float32)

    affine = np.array(volume.affine, dtype=np.float64)
    for i in range(3):
        affine[:3, i] *= ratios[i]
    return Volume(np.ascontiguousarray(data), target, affine)


def crop_or_pad(
    volume: Volume, target_shape: tuple[int, int, int], fill: float = 0.0
) -> Volume:
    """Center-crop or pad each axis to `target_shape`.

    Odd size differences put the extra padded voxel on the high-index side
    and remove the extra cropped voxel from the high-index side; retained
    voxels keep their world positions.
    """
    target_shape = tuple(int(t) for t in target_shape)
    if any(t < 1 for t in target_shape):
        raise ValueError(f"target shape must be >= 1 per axis, got {target_shape}")
    if target_shape == volume.shape:
        return volume

    out = np.full(target_shape, np.float32(fill), dtype=np.float32)
    src_slices = []
    dst_slices = []
    origin_offset = [0, 0, 0]
    for i in range(3):
        n, t = volume.shape[i], target_shape[i]
        if n >= t:
            start = (n - t) // 2
            src_slices.append(slice(start, start + t))
            dst_slices.append(slice(0, t))
            origin_offset[i] = start
        else:
            pad_low = (t - n) // 2
            src_slices.append(slice(0, n))
            dst_slices.append(slice(pad_low, pad_low + n))
            origin_offset[i] = -pad_low
    out[tuple(dst_slices)] = volume.data[tuple(src_slices)]
    affine = _translate_affine(volume.affine, tuple(origin_offset))
    return Volume(out, volume.spacing, affine)


def localize_rows(volume: Volume, window: int = 256) -> RowWindow:
    """Brightest contiguous `window` of rows along the height axis.

    Maximizes total intensity inside the window; ties go to the lowest
    start index.  If the axis has at most `window` rows the full axis is
    returned.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    extent = volume.shape[HEIGHT_AXIS]
    if extent <= window:
        return RowWindow(0, extent)
    row_sums = volume.data.sum(axis=(0, 2), dtype=np.float64)
    window_sums = np.array(
        [np.sum(row_sums[s : s + window]) for s in range(extent - window + 1)]
    )
    return RowWindow(int(np.argmax(window_sums)), window)


def extract_rows(volume: Volume, rows: RowWindow) -> Volume:
    """Slice the row window out of the volume, keeping world positions."""
    if rows.stop > volume.shape[rows.axis]:
        raise ValueError(
            f"window [{rows.start}, {rows.stop}) exceeds axis extent "
            f"{volume.shape[rows.axis]}"
        )
    slices = [slice(None)] * 3
    slices[rows.axis] = slice(rows.start, rows.stop)
    offset = [0, 0, 0]
    offset[rows.axis] = rows.start
    return Volume(
        np.ascontiguousarray(volume.data[tuple(slices)]),
        volume.spacing,
        _translate_affine(volume.affine, tuple(offset)),
    )


def split_lr(volume: Volume) -> tuple[Volume, Volume]:
    """Split at 50% width: ``([0, nx//2), [nx//2, nx))`` along array axis 0.

    In RAS the first (low-x) half is the patient's right side.  For odd
    widths the second half gets the extra column.  Concatenating the halves
    along axis 0 reproduces the input.
    """
    nx = volume.shape[0]
    if nx < 2:
        raise WidthTooSmall(f"cannot split width {nx} < 2")
    half = nx // 2
    low = Volume(
        np.ascontiguousarray(volume.data[:half]), volume.spacing, volume.affine
    )
    high = Volume(
        np.ascontiguousarray(volume.data[half:]),
        volume.spacing,
        _translate_affine(volume.affine, (half, 0, 0)),
    )
    return low, high

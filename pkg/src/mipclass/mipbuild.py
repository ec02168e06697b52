"""Four-channel MIP construction per breast side.

The channel stack for one (patient, side) is, in fixed order:

0. first post-contrast MIP,
1. subtraction 1 (post1 − pre, clamped at 0),
2. subtraction 2 (post2 − pre, clamped at 0),
3. last subtraction (final post − pre, clamped at 0),

each projected along z after geometric standardization, row localization
on post1, the 50% width split, and (when present) breast-mask application.
Negative subtraction values are clamped: uptake is the signal, and the
downstream normalization maps each channel to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .errors import (
    AlreadyNormalized,
    GridMismatch,
    MissingPre,
    NonBinaryMask,
    TooFewPhases,
)
from .geometry import (
    Interp,
    RowWindow,
    crop_or_pad,
    extract_rows,
    localize_rows,
    reorient_canonical,
    resample,
    split_lr,
)
from .tensorio import TensorBlob
from .volume import Volume

CHANNEL_NAMES = ("post1", "sub1", "sub2", "sub_last")

# Channel-wise normalization constants for the 4-channel stacks.
PAPER_MEANS = (0.2074, 0.1290, 0.1396, 0.1470)
PAPER_STDS = (0.2110, 0.1629, 0.1620, 0.1626)

SIDES = ("right", "left")  # low-x half first; see split convention below

# The low-x half of a canonical (RAS) volume is labeled "right".  This is
# a fixed convention of this pipeline, recorded in every stack's metadata
# so downstream consumers can audit it against their own label source.
LATERALITY_CONVENTION = "low-x-is-right"

_MASK_TOL = 1e-6


@dataclass(frozen=True)
class NormConstants:
    """Per-channel means/stds applied after min-max rescaling."""

    means: tuple[float, float, float, float] = PAPER_MEANS
    stds: tuple[float, float, float, float] = PAPER_STDS

    def __post_init__(self) -> None:
        if len(self.means) != 4 or len(self.stds) != 4:
            raise ValueError("normalization constants must have 4 channels")
        if any(s <= 0 for s in self.stds):
            raise ValueError(f"stds must be positive, got {self.stds}")


@dataclass(frozen=True)
class Study:
    """One patient's acquisition: pre, ordered posts, optional mask, labels."""

    patient_id: str
    pre: Volume | None
    posts: tuple[Volume, ...]
    mask: Volume | None = None
    label_left: int | None = None
    label_right: int | None = None

    def label_for(self, side: str) -> int | None:
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {side!r}")
        return self.label_left if side == "left" else self.label_right


@dataclass(frozen=True)
class PhaseSet:
    """The four phases the channels are built from (post2 may alias last)."""

    pre: Volume
    post1: Volume
    post2: Volume
    last: Volume


@dataclass(frozen=True)
class BuildConfig:
    """Geometry parameters for stack construction."""

    spacing: tuple[float, float, float] = (0.7, 0.7, 3.0)
    shape: tuple[int, int, int] = (512, 512, 32)
    row_window: int = 256


@dataclass(frozen=True)
class MipStack:
    """4-channel 2D stack for one breast side; ``channels[c][x, y]``."""

    channels: np.ndarray
    side: str
    patient_id: str
    normalized: bool = False
    # per-channel (min, max) recorded by normalize_stack, for invertibility
    norm_bounds: tuple[tuple[float, float], ...] | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        channels = np.asarray(self.channels, dtype=np.float32)
        if channels.ndim != 3 or channels.shape[0] != 4:
            raise ValueError(f"stack must be (4, W, H), got {channels.shape}")
        if min(channels.shape[1:]) < 1:
            raise ValueError(f"stack spatial dims must be >= 1, got {channels.shape}")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        if not self.normalized and float(channels.min()) < 0.0:
            raise ValueError("unnormalized stacks must be nonnegative (post-clamp)")
        object.__setattr__(self, "channels", channels)


def select_phases(study: Study) -> PhaseSet:
    """Pick pre, first, second and last post-contrast phases.

    With exactly two posts, ``post2`` and ``last`` alias the same volume so
    the channel count stays fixed.
    """
    if study.pre is None:
        raise MissingPre(f"{study.patient_id}: no pre-contrast volume")
    if len(study.posts) < 2:
        raise TooFewPhases(
            f"{study.patient_id}: need >= 2 post-contrast phases, got {len(study.posts)}"
        )
    return PhaseSet(
        pre=study.pre,
        post1=study.posts[0],
        post2=study.posts[1],
        last=study.posts[-1],
    )


def _same_grid(a: Volume, b: Volume) -> bool:
    return (
        a.shape == b.shape
        and a.spacing == b.spacing
        and np.allclose(a.affine, b.affine, atol=1e-6)
    )


def _check_mask_values(values: np.ndarray) -> None:
    lo, hi = float(values.min()), float(values.max())
    if lo < -_MASK_TOL or hi > 1.0 + _MASK_TOL:
        raise NonBinaryMask(f"mask values span [{lo}, {hi}], outside [0, 1]")


def _regrid_mask_nearest(mask: Volume, target: Volume) -> np.ndarray:
    """Binary mask sampled at target voxel centers by nearest neighbor.

    Composes target-index -> world -> mask-index and rounds; indices are
    clamped to the mask grid (same edge convention as resampling).
    """
    to_mask = np.linalg.inv(mask.affine) @ target.affine
    rot, shift = to_mask[:3, :3], to_mask[:3, 3]
    nx, ny, nz = target.shape
    x = np.arange(nx, dtype=np.float64).reshape(nx, 1, 1)
    y = np.arange(ny, dtype=np.float64).reshape(1, ny, 1)
    z = np.arange(nz, dtype=np.float64).reshape(1, 1, nz)
    binary = mask.data >= 0.5
    idx = []
    for i in range(3):
        pos = rot[i, 0] * x + rot[i, 1] * y + rot[i, 2] * z + shift[i]
        idx.append(np.clip(np.rint(pos).astype(np.int64), 0, mask.shape[i] - 1))
    return binary[idx[0], idx[1], idx[2]]


def apply_mask(volume: Volume, mask: Volume) -> Volume:
    """Zero out voxels outside the breast mask (threshold 0.5).

    A mask on a different grid is first nearest-resampled onto the
    volume's grid through world coordinates.
    """
    _check_mask_values(mask.data)
    if _same_grid(volume, mask):
        binary = mask.data >= 0.5
    else:
        binary = _regrid_mask_nearest(mask, volume)
    data = np.where(binary, volume.data, np.float32(0.0))
    return Volume(data, volume.spacing, volume.affine)


def subtract_clamped(post: Volume, pre: Volume) -> Volume:
    """max(post − pre, 0), elementwise, on identical grids."""
    if not _same_grid(post, pre):
        raise GridMismatch(
            f"subtraction needs matching grids: {post.shape}/{post.spacing} vs "
            f"{pre.shape}/{pre.spacing}"
        )
    data = np.maximum(post.data - pre.data, np.float32(0.0))
    return Volume(data, post.spacing, post.affine)


def mip_z(volume: Volume) -> np.ndarray:
    """Maximum intensity projection along z: out[x, y] = max_z v[x, y, z]."""
    return volume.data.max(axis=2)


def _standardize(volume: Volume, cfg: BuildConfig, interp: Interp) -> Volume:
    return crop_or_pad(
        resample(reorient_canonical(volume), cfg.spacing, interp), cfg.shape
    )


def _side_half(volume: Volume, rows: RowWindow, side: str) -> Volume:
    halves = split_lr(extract_rows(volume, rows))
    return halves[0] if side == "right" else halves[1]


def build_stack(study: Study, side: str, cfg: BuildConfig = BuildConfig()) -> MipStack:
    """Run the §-ordered pipeline for one breast side and stack the 4 MIPs.

    Reorient -> resample -> crop/pad each phase; localize rows on post1 and
    reuse that window everywhere; split at 50% width and keep `side`; apply
    the (identically standardized) mask; subtract; project along z.
    """
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    phases = select_phases(study)

    standardized: dict[int, Volume] = {}
    for vol in (phases.pre, phases.post1, phases.post2, phases.last):
        if id(vol) not in standardized:
            standardized[id(vol)] = _standardize(vol, cfg, Interp.TRILINEAR)
    pre = standardized[id(phases.pre)]
    post1 = standardized[id(phases.post1)]
    post2 = standardized[id(phases.post2)]
    last = standardized[id(phases.last)]

    rows = localize_rows(post1, cfg.row_window)

    mask_half: Volume | None = None
    if study.mask is not None:
        _check_mask_values(study.mask.data)
        std_mask = _standardize(study.mask, cfg, Interp.NEAREST)
        mask_half = _side_half(std_mask, rows, side)

    def finish(vol: Volume) -> Volume:
        half = _side_half(vol, rows, side)
        return half if mask_half is None else apply_mask(half, mask_half)

    pre, post1, post2, last = finish(pre), finish(post1), finish(post2), finish(last)

    channels = np.stack(
        [
            mip_z(post1),
            mip_z(subtract_clamped(post1, pre)),
            mip_z(subtract_clamped(post2, pre)),
            mip_z(subtract_clamped(last, pre)),
        ]
    )
    meta = {
        "channel_order": list(CHANNEL_NAMES),
        "row_window_start": rows.start,
        "row_window_length": rows.length,
        "laterality_convention": LATERALITY_CONVENTION,
        "masked": study.mask is not None,
        "n_posts": len(study.posts),
    }
    return MipStack(
        channels=channels,
        side=side,
        patient_id=study.patient_id,
        normalized=False,
        meta=meta,
    )


def normalize_stack(stack: MipStack, constants: NormConstants = NormConstants()) -> MipStack:
    """Min-max each channel to [0, 1], then standardize with fixed constants.

    A constant channel maps to all zeros before standardization.  The
    per-channel (min, max) are recorded on the result so the transform can
    be inverted.
    """
    if stack.normalized:
        raise AlreadyNormalized(f"{stack.patient_id}/{stack.side}: already normalized")
    data = stack.channels.astype(np.float64)
    bounds = []
    out = np.empty_like(data)
    for c in range(4):
        lo, hi = float(data[c].min()), float(data[c].max())
        bounds.append((lo, hi))
        unit = np.zeros_like(data[c]) if hi == lo else (data[c] - lo) / (hi - lo)
        out[c] = (unit - constants.means[c]) / constants.stds[c]
    return replace(
        stack,
        channels=out.astype(np.float32),
        normalized=True,
        norm_bounds=tuple(bounds),
        meta={**stack.meta, "norm_means": list(constants.means), "norm_stds": list(constants.stds)},
    )


def denormalize_stack(stack: MipStack, constants: NormConstants = NormConstants()) -> MipStack:
    """Invert normalize_stack using the recorded per-channel bounds."""
    if not stack.normalized:
        raise ValueError(f"{stack.patient_id}/{stack.side}: stack is not normalized")
    if stack.norm_bounds is None:
        raise ValueError("cannot invert: per-channel min/max were not recorded")
    data = stack.channels.astype(np.float64)
    out = np.empty_like(data)
    for c in range(4):
        lo, hi = stack.norm_bounds[c]
        unit = data[c] * constants.stds[c] + constants.means[c]
        out[c] = unit * (hi - lo) + lo
    meta = {k: v for k, v in stack.meta.items() if k not in ("norm_means", "norm_stds")}
    return replace(
        stack,
        channels=out.astype(np.float32),
        normalized=False,
        norm_bounds=None,
        meta=meta,
    )


def stack_to_blob(stack: MipStack) -> TensorBlob:
    """Package a stack as a tensor blob; metadata goes to the JSON sidecar."""
    meta = {
        "patient_id": stack.patient_id,
        "side": stack.side,
        "normalized": stack.normalized,
        **stack.meta,
    }
    if stack.norm_bounds is not None:
        meta["norm_bounds"] = [list(b) for b in stack.norm_bounds]
    return TensorBlob(data=stack.channels, meta=meta)


def stack_from_blob(blob: TensorBlob) -> MipStack:
    """Rebuild a MipStack from a blob written by :func:`stack_to_blob`."""
    meta = dict(blob.meta)
    patient_id = meta.pop("patient_id", "")
    side = meta.pop("side", "")
    normalized = bool(meta.pop("normalized", False))
    bounds = meta.pop("norm_bounds", None)
    return MipStack(
        channels=blob.data,
        side=side,
        patient_id=patient_id,
        normalized=normalized,
        norm_bounds=None if bounds is None else tuple((float(a), float(b)) for a, b in bounds),
        meta=meta,
    )


def stack_filename(patient_id: str, side: str) -> str:
    return f"{patient_id}_{side}.mct"

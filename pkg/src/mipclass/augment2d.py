"""Seeded 2D augmentation of MIP stacks.

Every transform draws from its own counter-based (Philox) stream keyed by
``(seed, transform index)``, so outputs are bit-identical across runs,
platforms, and scheduling orders.  Geometric transforms use one parameter
set for all four channels, which keeps the channels spatially aligned.

Implemented families: horizontal/vertical flip, rotation, affine
(scale/shear/translate), brightness, contrast, gaussian noise, gaussian
blur, coarse dropout.  Magnitude defaults are this library's choices and
are fully configurable through :class:`AugmentPolicy`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .mipbuild import PAPER_MEANS, PAPER_STDS, MipStack

# fixed stream indices; changing these changes every sampled augmentation
_STREAMS = {
    "hflip": 0,
    "vflip": 1,
    "rotate": 2,
    "affine": 3,
    "brightness": 4,
    "contrast": 5,
    "noise": 6,
    "blur": 7,
    "dropout": 8,
}

_BLUR_MIN_SIGMA = 1e-3


@dataclass(frozen=True)
class AugmentPolicy:
    """Per-transform probabilities and magnitude ranges."""

    hflip_p: float = 0.0
    vflip_p: float = 0.0
    rotate_p: float = 0.0
    rotate_deg: float = 15.0
    affine_p: float = 0.0
    scale_range: tuple[float, float] = (0.9, 1.1)
    shear_deg: float = 10.0
    translate_frac: float = 0.05
    brightness_p: float = 0.0
    brightness_delta: float = 0.2
    contrast_p: float = 0.0
    contrast_delta: float = 0.2
    noise_p: float = 0.0
    noise_sigma: float = 0.05
    blur_p: float = 0.0
    blur_sigma: float = 1.5
    dropout_p: float = 0.0
    dropout_max_holes: int = 8
    dropout_max_size: int = 32

    def __post_init__(self) -> None:
        probs = {
            "hflip_p": self.hflip_p,
            "vflip_p": self.vflip_p,
            "rotate_p": self.rotate_p,
            "affine_p": self.affine_p,
            "brightness_p": self.brightness_p,
            "contrast_p": self.contrast_p,
            "noise_p": self.noise_p,
            "blur_p": self.blur_p,
            "dropout_p": self.dropout_p,
        }
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        magnitudes = (
            self.rotate_deg,
            *self.scale_range,
            self.shear_deg,
            self.translate_frac,
            self.brightness_delta,
            self.contrast_delta,
        )
        if not all(math.isfinite(m) for m in magnitudes):
            raise ValueError("magnitude ranges must be finite")
        if self.scale_range[0] <= 0 or self.scale_range[1] < self.scale_range[0]:
            raise ValueError(f"bad scale range {self.scale_range}")
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ValueError("sigmas must be >= 0")
        if self.dropout_max_holes < 0 or self.dropout_max_size < 0:
            raise ValueError("dropout bounds must be >= 0")


def default_policy() -> AugmentPolicy:
    """Everything enabled at p=0.5 with mid-strength magnitudes."""
    return AugmentPolicy(
        hflip_p=0.5,
        vflip_p=0.5,
        rotate_p=0.5,
        rotate_deg=15.0,
        affine_p=0.5,
        scale_range=(0.9, 1.1),
        shear_deg=10.0,
        translate_frac=0.05,
        brightness_p=0.5,
        brightness_delta=0.2,
        contrast_p=0.5,
        contrast_delta=0.2,
        noise_p=0.5,
        noise_sigma=0.05,
        blur_p=0.5,
        blur_sigma=1.5,
        dropout_p=0.5,
        dropout_max_holes=8,
        dropout_max_size=32,
    )


def identity_policy() -> AugmentPolicy:
    return AugmentPolicy()


def derive_seed(global_seed: int, patient_id: str, side: str, epoch: int) -> int:
    """Stable per-sample seed: first 8 LE bytes of sha256(seed:patient:side:epoch)."""
    text = f"{global_seed}:{patient_id}:{side}:{epoch}"
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _stream(seed: int, name: str) -> np.random.Generator:
    key = ((int(seed) & 0xFFFFFFFFFFFFFFFF) << 64) | _STREAMS[name]
    return np.random.Generator(np.random.Philox(key=key))


def _fill_values(stack: MipStack) -> np.ndarray:
    """Per-channel value meaning "zero signal" in the stack's current scale."""
    if not stack.normalized:
        return np.zeros(4, dtype=np.float64)
    means = stack.meta.get("norm_means", list(PAPER_MEANS))
    stds = stack.meta.get("norm_stds", list(PAPER_STDS))
    return (0.0 - np.asarray(means, dtype=np.float64)) / np.asarray(stds, dtype=np.float64)


def _warp_matrix(
    shape: tuple[int, int],
    angle_deg: float,
    scale: float,
    shear_deg: float,
    translate: tuple[float, float],
) -> np.ndarray:
    """Forward 3x3 homogeneous transform about the image center (pixel units)."""
    cx, cy = (shape[0] - 1) / 2.0, (shape[1] - 1) / 2.0
    theta = math.radians(angle_deg)
    sh = math.tan(math.radians(shear_deg))
    rot = np.array(
        [
            [math.cos(theta), -math.sin(theta), 0.0],
            [math.sin(theta), math.cos(theta), 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    shear = np.array([[1.0, sh, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    scl = np.diag((scale, scale, 1.0))
    to_center = np.array(
        [[1.0, 0.0, cx + translate[0]], [0.0, 1.0, cy + translate[1]], [0.0, 0.0, 1.0]]
    )
    from_center = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    return to_center @ rot @ shear @ scl @ from_center


def _apply_warp(channels: np.ndarray, forward: np.ndarray) -> np.ndarray:
    """Bilinear warp of every channel by the same matrix, edge-clamped."""
    inverse = np.linalg.inv(forward)
    out = np.empty_like(channels)
    for c in range(channels.shape[0]):
        out[c] = ndimage.affine_transform(
            channels[c],
            matrix=inverse[:2, :2],
            offset=inverse[:2, 2],
            order=1,
            mode="nearest",
            output=np.float32,
        )
    return out


def augment(stack: MipStack, seed: int, policy: AugmentPolicy) -> MipStack:
    """Apply the sampled transforms; pure in (stack, seed, policy).

    The applied-transform names land in ``meta["augment_applied"]`` in
    application order.
    """
    channels = stack.channels.copy()
    w, h = channels.shape[1], channels.shape[2]
    applied: list[str] = []

    if _stream(seed, "hflip").random() < policy.hflip_p:
        channels = channels[:, ::-1, :]
        applied.append("hflip")
    if _stream(seed, "vflip").random() < policy.vflip_p:
        channels = channels[:, :, ::-1]
        applied.append("vflip")

    angle = 0.0
    scale = 1.0
    shear = 0.0
    translate = (0.0, 0.0)
    rot_rng = _stream(seed, "rotate")
    if rot_rng.random() < policy.rotate_p:
        angle = float(rot_rng.uniform(-policy.rotate_deg, policy.rotate_deg))
        applied.append("rotate")
    aff_rng = _stream(seed, "affine")
    if aff_rng.random() < policy.affine_p:
        scale = float(aff_rng.uniform(*policy.scale_range))
        shear = float(aff_rng.uniform(-policy.shear_deg, policy.shear_deg))
        translate = (
            float(aff_rng.uniform(-policy.translate_frac, policy.translate_frac)) * w,
            float(aff_rng.uniform(-policy.translate_frac, policy.translate_frac)) * h,
        )
        applied.append("affine")
    if angle != 0.0 or scale != 1.0 or shear != 0.0 or translate != (0.0, 0.0):
        channels = _apply_warp(
            np.ascontiguousarray(channels),
            _warp_matrix((w, h), angle, scale, shear, translate),
        )

    bri_rng = _stream(seed, "brightness")
    if bri_rng.random() < policy.brightness_p:
        delta = np.float32(bri_rng.uniform(-policy.brightness_delta, policy.brightness_delta))
        channels = channels + delta
        applied.append("brightness")
    con_rng = _stream(seed, "contrast")
    if con_rng.random() < policy.contrast_p:
        factor = np.float32(1.0 + con_rng.uniform(-policy.contrast_delta, policy.contrast_delta))
        means = channels.mean(axis=(1, 2), keepdims=True)
        channels = (channels - means) * factor + means
        applied.append("contrast")

    noise_rng = _stream(seed, "noise")
    if noise_rng.random() < policy.noise_p:
        sigma = float(noise_rng.uniform(0.0, policy.noise_sigma))
        if sigma > 0.0:
            channels = channels + noise_rng.normal(0.0, sigma, channels.shape).astype(np.float32)
            applied.append("noise")

    blur_rng = _stream(seed, "blur")
    if blur_rng.random() < policy.blur_p:
        sigma = float(blur_rng.uniform(0.0, policy.blur_sigma))
        if sigma > _BLUR_MIN_SIGMA:
            blurred = np.empty_like(channels, dtype=np.float32)
            for c in range(4):
                blurred[c] = ndimage.gaussian_filter(
                    channels[c].astype(np.float32), sigma, mode="nearest"
                )
            channels = blurred
            applied.append("blur")

    drop_rng = _stream(seed, "dropout")
    if (
        policy.dropout_max_holes > 0
        and policy.dropout_max_size > 0
        and drop_rng.random() < policy.dropout_p
    ):
        fills = _fill_values(stack)
        channels = np.array(channels, dtype=np.float32)
        n_holes = int(drop_rng.integers(1, policy.dropout_max_holes + 1))
        for _ in range(n_holes):
            hw = int(drop_rng.integers(1, policy.dropout_max_size + 1))
            hh = int(drop_rng.integers(1, policy.dropout_max_size + 1))
            x0 = int(drop_rng.integers(0, max(1, w - hw + 1)))
            y0 = int(drop_rng.integers(0, max(1, h - hh + 1)))
            for c in range(4):
                channels[c, x0 : x0 + hw, y0 : y0 + hh] = np.float32(fills[c])
        applied.append("dropout")

    if not stack.normalized:
        # the unnormalized domain is nonnegative by construction; additive
        # transforms must not take it below its floor
        channels = np.maximum(channels, np.float32(0.0))

    return replace(
        stack,
        channels=np.ascontiguousarray(channels, dtype=np.float32),
        meta={**stack.meta, "augment_applied": applied, "augment_seed": int(seed)},
    )

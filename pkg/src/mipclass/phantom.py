"""Synthetic multi-phase breast studies for end-to-end pipeline testing.

Each phantom is two ellipsoidal tissue blobs (one per side) on a dark
background, plus an optional lesion per side whose enhancement over the
post-contrast phases follows its label: malignant lesions peak in the
first post phase and wash out, benign lesions enhance progressively.
The geometry, labels, and every random draw are fixed by (cohort seed,
patient id), so regenerating a cohort is byte-identical.
"""

from __future__ import annotations

import csv
import io
import os
from pathlib import Path

import numpy as np

from .augment2d import derive_seed
from .evalkit import BENIGN, LABEL_STRINGS, MALIGNANT, NO_LESION
from .mipbuild import Study
from .tensorio import _write_file, write_nifti
from .volume import Volume

NATIVE_SHAPE = (64, 64, 16)
NATIVE_SPACING = (1.4, 1.4, 6.0)
NATIVE_ORIGIN = (-44.1, -44.1, -45.0)

N_POSTS = 3
TISSUE_AMP = 100.0
LESION_AMP = 600.0
NOISE_SIGMA = 0.5
MASK_THRESHOLD = 10.0

# Fractions of full lesion amplitude per post phase.  Malignant = rapid
# initial enhancement with delayed washout; benign = slow and monotone.
KINETICS = {
    NO_LESION: (0.0, 0.0, 0.0),
    BENIGN: (0.35, 0.70, 1.00),
    MALIGNANT: (1.00, 0.72, 0.45),
}
# Background tissue enhances mildly and monotonically in every study.
TISSUE_RAMP = (1.10, 1.25, 1.40)

# Breast centers in voxel units; low-x blob is the anatomical right side.
_SIDE_CENTERS = {"right": 16.0, "left": 48.0}
_TISSUE_SEMI = (12.0, 18.0, 6.5)
_LESION_SEMI = (3.5, 3.5, 1.8)
_CENTER_Y = 32.0
_CENTER_Z = 8.0

# (label_right, label_left) dealt round the cohort; six combinations give
# every per-side class and every per-patient maximum a steady share.
_LABEL_CYCLE = (
    (NO_LESION, NO_LESION),
    (BENIGN, NO_LESION),
    (NO_LESION, MALIGNANT),
    (BENIGN, BENIGN),
    (MALIGNANT, NO_LESION),
    (MALIGNANT, BENIGN),
)


def cycle_labels(index: int) -> tuple[int, int]:
    """(label_right, label_left) for the index-th patient of a cohort."""
    return _LABEL_CYCLE[index % len(_LABEL_CYCLE)]


def _ellipsoid(center: tuple[float, float, float], semi: tuple[float, float, float]):
    """max(0, 1 - r^2) profile on the native grid, float64."""
    gx, gy, gz = np.ogrid[0 : NATIVE_SHAPE[0], 0 : NATIVE_SHAPE[1], 0 : NATIVE_SHAPE[2]]
    r2 = (
        ((gx - center[0]) / semi[0]) ** 2
        + ((gy - center[1]) / semi[1]) ** 2
        + ((gz - center[2]) / semi[2]) ** 2
    )
    return np.maximum(0.0, 1.0 - r2)


def _ras_affine() -> np.ndarray:
    affine = np.eye(4)
    affine[0, 0], affine[1, 1], affine[2, 2] = NATIVE_SPACING
    affine[:3, 3] = NATIVE_ORIGIN
    return affine


def _to_lps(data: np.ndarray, affine: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Store the same physical volume with flipped x/y index axes."""
    flipped = np.ascontiguousarray(data[::-1, ::-1, :])
    out = affine.copy()
    for axis in (0, 1):
        out[:3, 3] += out[:3, axis] * (data.shape[axis] - 1)
        out[:3, axis] = -out[:3, axis]
    return flipped, out


def generate_study(patient_id: str, index: int, cohort_seed: int) -> Study:
    """One synthetic study; every third patient is stored in LPS order."""
    rng = np.random.Generator(
        np.random.Philox(key=derive_seed(cohort_seed, patient_id, "phantom", 0))
    )
    label_right, label_left = cycle_labels(index)
    labels = {"right": label_right, "left": label_left}

    pedestal = np.zeros(NATIVE_SHAPE)
    lesions = {}
    for side in ("right", "left"):
        cx = _SIDE_CENTERS[side]
        tissue_scale = rng.uniform(0.9, 1.1)
        jitter = rng.uniform(-1.0, 1.0, size=2)
        pedestal += (
            TISSUE_AMP
            * tissue_scale
            * _ellipsoid((cx + jitter[0], _CENTER_Y + jitter[1], _CENTER_Z), _TISSUE_SEMI)
        )
        # Draw lesion placement unconditionally so the stream layout does
        # not depend on the labels; unlabeled sides just discard it.
        dx = rng.uniform(-4.0, 4.0)
        dy = rng.uniform(-6.0, 6.0)
        dz = rng.uniform(-2.0, 2.0)
        lesion_scale = rng.uniform(0.9, 1.1)
        profile = _ellipsoid((cx + dx, _CENTER_Y + dy, _CENTER_Z + dz), _LESION_SEMI)
        lesions[side] = LESION_AMP * lesion_scale * profile**2

    mask_data = (pedestal > MASK_THRESHOLD).astype(np.float64)

    phases = [pedestal + rng.normal(0.0, NOISE_SIGMA, NATIVE_SHAPE)]
    for p in range(N_POSTS):
        signal = pedestal * TISSUE_RAMP[p]
        for side in ("right", "left"):
            signal = signal + lesions[side] * KINETICS[labels[side]][p]
        phases.append(signal + rng.normal(0.0, NOISE_SIGMA, NATIVE_SHAPE))

    affine = _ras_affine()
    arrays = [np.maximum(ph, 0.0) for ph in phases] + [mask_data]
    if index % 3 == 2:
        converted = [_to_lps(a, affine) for a in arrays]
        arrays = [c[0] for c in converted]
        affine = converted[0][1]

    volumes = [Volume(a, NATIVE_SPACING, affine) for a in arrays]
    return Study(
        patient_id=patient_id,
        pre=volumes[0],
        posts=tuple(volumes[1 : 1 + N_POSTS]),
        mask=volumes[-1],
        label_left=label_left,
        label_right=label_right,
    )


def study_file_names(patient_id: str) -> dict[str, str]:
    """Relative paths (to the manifest directory) for one study's files."""
    stem = f"studies/{patient_id}"
    names = {"pre": f"{stem}_pre.nii.gz", "mask": f"{stem}_mask.nii.gz"}
    for p in range(N_POSTS):
        names[f"post{p + 1}"] = f"{stem}_post{p + 1}.nii.gz"
    return names


def write_cohort(n: int, seed: int, out_dir: str | os.PathLike) -> Path:
    """Generate n studies plus a manifest CSV; returns the manifest path."""
    if n < 1:
        raise ValueError(f"cohort size must be >= 1, got {n}")
    out = Path(out_dir)
    (out / "studies").mkdir(parents=True, exist_ok=True)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["patient_id", "pre_path", "post_paths", "mask_path", "label_left", "label_right"]
    )
    for index in range(n):
        patient_id = f"p{index:03d}"
        study = generate_study(patient_id, index, seed)
        names = study_file_names(patient_id)
        write_nifti(study.pre, out / names["pre"])
        for p, post in enumerate(study.posts):
            write_nifti(post, out / names[f"post{p + 1}"])
        write_nifti(study.mask, out / names["mask"])
        writer.writerow(
            [
                patient_id,
                names["pre"],
                ";".join(names[f"post{p + 1}"] for p in range(N_POSTS)),
                names["mask"],
                LABEL_STRINGS[study.label_left],
                LABEL_STRINGS[study.label_right],
            ]
        )

    manifest = out / "manifest.csv"
    _write_file(manifest, buffer.getvalue().encode("utf-8"))
    return manifest

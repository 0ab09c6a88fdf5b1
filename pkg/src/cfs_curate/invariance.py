"""Deterministic photometric/geometric augmentations and linear CKA
similarity between original-corpus and augmented-corpus features.

Images are (H, W, 3) float arrays in [0, 1]; every augmentation clamps
its output back to [0, 1]. All six transforms are pure functions, so an
invariance report is reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from .errors import DegenerateFeatureError, DimensionError, RangeError
from .validation import check_image

AUGMENTATION_KINDS = ("brightness", "contrast", "saturation", "crop", "flip", "scale")

DEFAULT_MAGNITUDES = {
    "brightness": 0.3,
    "contrast": 0.5,
    "saturation": 0.5,
    "crop": 0.2,
    "flip": 0.0,  # ignored
    "scale": 0.5,
}

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    magnitude: float

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise RangeError(f"unknown augmentation kind {self.kind!r}")
        if self.kind in ("crop", "scale") and not 0 <= self.magnitude < 1:
            raise RangeError(
                f"{self.kind} magnitude must be in [0, 1), got {self.magnitude}"
            )


def default_specs() -> list[AugmentationSpec]:
    return [AugmentationSpec(kind, DEFAULT_MAGNITUDES[kind]) for kind in AUGMENTATION_KINDS]


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-centered source coordinates."""
    if out_h < 1 or out_w < 1:
        raise RangeError(f"target size {out_h}x{out_w} must be positive")
    h, w = image.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = image[y0][:, x0] * (1 - wx) + image[y0][:, x1] * wx
    bottom = image[y1][:, x0] * (1 - wx) + image[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def augment(image, spec: AugmentationSpec) -> np.ndarray:
    """Apply one deterministic augmentation; output clamped to [0, 1].

    brightness: add magnitude to every value.
    contrast: scale deviations from the per-image mean by (1 + magnitude).
    saturation: blend each pixel toward its luma gray by magnitude.
    crop: center-crop to the (1 - magnitude) fraction, resize back.
    flip: mirror horizontally (magnitude ignored).
    scale: bilinear downsize by (1 - magnitude), then upsize back.
    """
    image = check_image(image)
    m = spec.magnitude
    if spec.kind == "brightness":
        out = image + m
    elif spec.kind == "contrast":
        mean = image.mean()
        out = mean + (image - mean) * (1.0 + m)
    elif spec.kind == "saturation":
        luma = image @ LUMA_WEIGHTS
        out = image * (1.0 - m) + luma[:, :, None] * m
    elif spec.kind == "flip":
        out = image[:, ::-1, :]
    elif spec.kind == "crop":
        h, w = image.shape[:2]
        ch = max(1, int(round(h * (1.0 - m))))
        cw = max(1, int(round(w * (1.0 - m))))
        top = (h - ch) // 2
        left = (w - cw) // 2
        out = resize_bilinear(image[top:top + ch, left:left + cw], h, w)
    else:  # scale
        h, w = image.shape[:2]
        dh = max(1, int(round(h * (1.0 - m))))
        dw = max(1, int(round(w * (1.0 - m))))
        out = resize_bilinear(resize_bilinear(image, dh, dw), h, w)
    return np.clip(out, 0.0, 1.0)


def cka_linear(x, y) -> float:
    """Linear centered-kernel alignment between two feature matrices.

    Both matrices are column-centered; the score is
    ||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F), symmetric in (X, Y),
    invariant to orthogonal transforms and positive isotropic scaling.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise DimensionError("cka_linear expects 2-D feature matrices")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise DimensionError("cka_linear needs at least 2 rows")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    denom_x = np.linalg.norm(xc.T @ xc)
    denom_y = np.linalg.norm(yc.T @ yc)
    if denom_x == 0.0 or denom_y == 0.0:
        raise DegenerateFeatureError("all-zero centered feature matrix")
    return float(np.linalg.norm(yc.T @ xc) ** 2 / (denom_x * denom_y))


def batch_from_images(images) -> np.ndarray:
    """(N, H, W, 3) images in [0,1] -> (N, 3, H, W) encoder input."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise DimensionError(f"expected (N, H, W, 3) images, got {arr.shape}")
    return np.ascontiguousarray(arr.transpose(0, 3, 1, 2))


def images_from_batch(batch) -> np.ndarray:
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise DimensionError(f"expected (N, 3, H, W) batch, got {arr.shape}")
    return np.ascontiguousarray(arr.transpose(0, 2, 3, 1))


@dataclass(frozen=True)
class CkaEntry:
    kind: str
    magnitude: float
    score: float


@dataclass
class CkaReport:
    model_id: str
    corpus_id: str
    entries: list[CkaEntry] = field(default_factory=list)

    def score(self, kind: str) -> float:
        for entry in self.entries:
            if entry.kind == kind:
                return entry.score
        raise KeyError(kind)


def invariance_report(config: enc.ViTConfig, params, images, specs=None,
                      model_id="model", corpus_id="corpus", mode="batch") -> CkaReport:
    """CKA between original-corpus and augmented-corpus features.

    The corpus is encoded once, then re-encoded after each augmentation;
    one entry per requested augmentation, in request order. The default batch mode
    lets batch-norm stems see the whole corpus, which is the regime where
    the stem variants differ.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] < 2:
        raise DimensionError("invariance_report needs at least 2 (H, W, 3) images")
    if specs is None:
        specs = default_specs()
    base = enc.encode_batch(batch_from_images(images), config, params, mode=mode)
    entries = []
    for spec in specs:
        shifted = np.stack([augment(img, spec) for img in images])
        feats = enc.encode_batch(batch_from_images(shifted), config, params, mode=mode)
        entries.append(CkaEntry(
            kind=spec.kind,
            magnitude=spec.magnitude,
            score=cka_linear(base.features, feats.features),
        ))
    return CkaReport(model_id=model_id, corpus_id=corpus_id, entries=entries)

"""Three-view preprocessing: whole frame, compact face crop, eyes-and-mouth crop.

Face bounding boxes and eyes/mouth masks come from the dataset manifest;
no detection or parsing happens here. All view construction is pure and
deterministic, so records can be processed in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (AnnotationMissingError, DimensionError, FaceTooSmallError,
                     MaskMissingError)
from .tensor import Tensor

SCENARIOS = tuple(f"{place}_{time}" for place in ("indoor", "outdoor", "its")
                  for time in ("day", "night"))

MIN_FACE_SIDE = 96  # faces with a smaller bbox side are rejected, like the dataset cleaning rule
VIEW_SIZE = 224


@dataclass
class ImageRecord:
    """One dataset image plus its manifest annotations."""

    id: str
    pixels: np.ndarray  # (3,H,W) floats in [0,1]
    face_bbox: tuple[int, int, int, int] | None = None  # (x0,y0,x1,y1) pixel coords
    eyes_mouth_mask: np.ndarray | None = None  # (H,W) {0,1}
    scenario: str = "indoor_day"
    mos: np.ndarray | None = None  # six labels when present

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise DimensionError(f"pixels must be (3,H,W), got {self.pixels.shape}")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise DimensionError("pixel values must lie in [0,1]")
        if self.scenario not in SCENARIOS:
            raise DimensionError(f"unknown scenario {self.scenario!r}")
        _, h, w = self.pixels.shape
        if self.face_bbox is not None:
            x0, y0, x1, y1 = self.face_bbox
            if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                raise DimensionError(f"bbox {self.face_bbox} outside image {w}x{h}")
        if self.eyes_mouth_mask is not None:
            m = np.asarray(self.eyes_mouth_mask, dtype=np.float64)
            if m.shape != (h, w):
                raise DimensionError(f"mask shape {m.shape} != image spatial {(h, w)}")
            if not np.isin(m, (0.0, 1.0)).all():
                raise DimensionError("mask must be {0,1}-valued")
            self.eyes_mouth_mask = m
        if self.mos is not None:
            self.mos = np.asarray(self.mos, dtype=np.float64)
            if self.mos.shape != (6,):
                raise DimensionError("mos must hold six values")


@dataclass
class ViewTriplet:
    """The three resized model inputs for one image."""

    x_o: Tensor
    x_f: Tensor
    x_em: Tensor

    def tensors(self) -> tuple[Tensor, Tensor, Tensor]:
        return self.x_o, self.x_f, self.x_em


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (C,H,W) array, half-pixel centers, edges clamped."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise DimensionError("resize_bilinear expects (C,H,W)")
    _, h, w = img.shape
    if out_h < 1 or out_w < 1:
        raise DimensionError("target size must be positive")

    sy = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[None, :, None]
    fx = (sx - x0)[None, None, :]

    top = img[:, y0[:, None], x0[None, :]] * (1 - fx) + img[:, y0[:, None], x1[None, :]] * fx
    bot = img[:, y1[:, None], x0[None, :]] * (1 - fx) + img[:, y1[:, None], x1[None, :]] * fx
    return top * (1 - fy) + bot * fy


def build_views(record: ImageRecord, out_size: int = VIEW_SIZE,
                min_face: int = MIN_FACE_SIDE) -> ViewTriplet:
    """Build the (whole, face, eyes-mouth) views at ``out_size``.

    The mask is applied to the face crop before resizing, so mask edges stay
    aligned with crop coordinates. Raises if the bbox or mask is missing or
    the face is below ``min_face`` pixels on either side.
    """
    if record.face_bbox is None:
        raise AnnotationMissingError(f"record {record.id}: no face bbox in manifest")
    x0, y0, x1, y1 = record.face_bbox
    if min(x1 - x0, y1 - y0) < min_face:
        raise FaceTooSmallError(
            f"record {record.id}: bbox side {min(x1 - x0, y1 - y0)} < {min_face}")
    if record.eyes_mouth_mask is None:
        raise MaskMissingError(
            f"record {record.id}: no eyes/mouth mask; pass an all-ones mask to override")

    whole = resize_bilinear(record.pixels, out_size, out_size)
    crop = record.pixels[:, y0:y1, x0:x1]
    face = resize_bilinear(crop, out_size, out_size)
    masked = crop * record.eyes_mouth_mask[None, y0:y1, x0:x1]
    eyes_mouth = resize_bilinear(masked, out_size, out_size)
    return ViewTriplet(Tensor(whole), Tensor(face), Tensor(eyes_mouth))

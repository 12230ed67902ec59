"""Line-delimited JSON manifest and 8-bit PNG payload handling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IngestError
from .views import ImageRecord


@dataclass
class ManifestRow:
    id: str
    image_path: str
    bbox: tuple[int, int, int, int] | None
    mask_path: str | None
    scenario: str
    mos: list[float] | None

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id,
            "image_path": self.image_path,
            "bbox": list(self.bbox) if self.bbox is not None else None,
            "mask_path": self.mask_path,
            "scenario": self.scenario,
            "mos": self.mos,
        }, sort_keys=True)


def load_manifest(path) -> list[ManifestRow]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            rows.append(ManifestRow(
                id=obj["id"],
                image_path=obj["image_path"],
                bbox=tuple(obj["bbox"]) if obj.get("bbox") is not None else None,
                mask_path=obj.get("mask_path"),
                scenario=obj.get("scenario", "indoor_day"),
                mos=obj.get("mos"),
            ))
        except (KeyError, ValueError) as exc:
            raise IngestError(f"{path}:{lineno}: bad manifest line ({exc})")
    return rows


def write_manifest(rows, path) -> None:
    Path(path).write_text("".join(row.to_json() + "\n" for row in rows))


def save_image(pixels: np.ndarray, path) -> None:
    """Write a (3,H,W) float [0,1] array as 8-bit RGB PNG."""
    arr = np.clip(np.asarray(pixels) * 255.0, 0, 255).round().astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def save_mask(mask: np.ndarray, path) -> None:
    arr = (np.asarray(mask) > 0.5).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 127).astype(np.float64)


def load_record(row: ManifestRow, root) -> ImageRecord:
    """Materialize a manifest row into an in-memory record."""
    root = Path(root)
    pixels = load_image(root / row.image_path)
    mask = load_mask(root / row.mask_path) if row.mask_path else None
    mos = np.asarray(row.mos, dtype=np.float64) if row.mos is not None else None
    return ImageRecord(id=row.id, pixels=pixels, face_bbox=row.bbox,
                       eyes_mouth_mask=mask, scenario=row.scenario, mos=mos)


def require_labels(rows) -> None:
    """Raise IngestError naming rows that lack the six training labels."""
    missing = [row.id for row in rows if row.mos is None or len(row.mos) != 6]
    if missing:
        raise IngestError(f"manifest rows missing six-dimension labels: {missing}",
                          offending_ids=missing)

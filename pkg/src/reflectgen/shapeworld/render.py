"""Deterministic rasterizer: 4x4 cell grid, 7x7 glyph masks, flat palette.

Glyph fill ratios are chosen to land inside the detector's per-shape
bounding-box bands (square 1.0, circle ~0.76, triangle ~0.57, cross ~0.27)
with a 1-pixel gap between glyphs in adjacent cells so same-color objects
never merge into one connected component.
"""

from __future__ import annotations

import numpy as np

from .grammar import SHAPES
from .scene import GRID, SceneGraph

IMAGE_SIZE = 32
CELL = IMAGE_SIZE // GRID  # 8 px
GLYPH = 7

PALETTE = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
}
BACKGROUNDS = {"black": (0.0, 0.0, 0.0)}


def _disc_mask() -> np.ndarray:
    yy, xx = np.mgrid[0:GLYPH, 0:GLYPH]
    return ((yy - 3) ** 2 + (xx - 3) ** 2) <= 10.24


def _square_mask() -> np.ndarray:
    return np.ones((GLYPH, GLYPH), dtype=bool)


def _triangle_mask() -> np.ndarray:
    m = np.zeros((GLYPH, GLYPH), dtype=bool)
    for r in range(GLYPH):
        width = r + 1
        start = (GLYPH - width) // 2
        m[r, start:start + width] = True
    return m


def _cross_mask() -> np.ndarray:
    m = np.zeros((GLYPH, GLYPH), dtype=bool)
    m[3, :] = True
    m[:, 3] = True
    return m


GLYPH_MASKS: dict[str, np.ndarray] = {
    "circle": _disc_mask(),
    "square": _square_mask(),
    "triangle": _triangle_mask(),
    "cross": _cross_mask(),
}

# mask centroid offsets within the glyph box, used for symbolic relation checks
GLYPH_CENTROIDS: dict[str, tuple[float, float]] = {}
for _name in SHAPES:
    _ys, _xs = np.nonzero(GLYPH_MASKS[_name])
    GLYPH_CENTROIDS[_name] = (float(_ys.mean()), float(_xs.mean()))


def glyph_fill(shape: str) -> float:
    m = GLYPH_MASKS[shape]
    ys, xs = np.nonzero(m)
    h = ys.max() - ys.min() + 1
    w = xs.max() - xs.min() + 1
    return m.sum() / (h * w)


def render(scene: SceneGraph) -> np.ndarray:
    """Rasterize to a float32 (32, 32, 3) image with values in [0, 1]."""
    img = np.empty((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.float32)
    img[:] = BACKGROUNDS[scene.background]
    for obj in scene.objects:
        r0, c0 = obj.cell[0] * CELL, obj.cell[1] * CELL
        mask = GLYPH_MASKS[obj.shape]
        block = img[r0:r0 + GLYPH, c0:c0 + GLYPH]
        block[mask] = PALETTE[obj.color]
    return img


def object_centroid(shape: str, cell: tuple[int, int]) -> tuple[float, float]:
    """Pixel centroid (y, x) of a rendered object; mirrors the detector's math."""
    cy, cx = GLYPH_CENTROIDS[shape]
    return cell[0] * CELL + cy, cell[1] * CELL + cx


def write_ppm(path, image: np.ndarray) -> None:
    """Binary PPM (P6), 8-bit, canonical 32x32 size."""
    if image.shape != (IMAGE_SIZE, IMAGE_SIZE, 3):
        raise ValueError(f"expected (32, 32, 3) image, got {image.shape}")
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n".encode())
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P6"):
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(f) for f in fields)
    if (w, h) != (IMAGE_SIZE, IMAGE_SIZE) or maxval != 255:
        raise ValueError(f"{path}: expected 32x32 maxval 255, got {w}x{h} maxval {maxval}")
    data = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=pos)
    return (data.reshape(h, w, 3).astype(np.float32)) / 255.0

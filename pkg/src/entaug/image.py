"""8-bit image container and PPM output."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


@dataclass
class Image:
    """Row-major 8-bit image, shape (height, width, channels), 1 or 3 channels."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise InvalidInputError(f"pixels must be uint8, got {px.dtype}")
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise InvalidInputError(f"pixels must have shape (h, w, 1|3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError(f"empty image shape {px.shape}")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def copy(self) -> "Image":
        return Image(self.pixels.copy())


def write_ppm(img: Image, path) -> None:
    """Write a binary PPM (P6). Grayscale images are replicated to RGB."""
    px = img.pixels
    if px.shape[2] == 1:
        px = np.repeat(px, 3, axis=2)
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + px.tobytes())

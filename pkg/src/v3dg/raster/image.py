"""RGBA image container plus the quality/downsampling helpers.

Images hold premultiplied linear RGB in channels 0..2 and accumulated alpha
in channel 3, as produced by front-to-back compositing over a transparent
black background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSNR_CAP_DB = 99.0


@dataclass
class ImageRGBA:
    """(H, W, 4) float array; alpha in [0,1], all channels finite."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 4:
            raise ValueError("image data must have shape (H, W, 4)")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        return self.data[:, :, :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.data[:, :, 3]

    def validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains non-finite values")
        if self.alpha.size and (self.alpha.min() < 0.0 or self.alpha.max() > 1.0 + 1e-9):
            raise ValueError("alpha must lie in [0, 1]")

    def on_white(self) -> np.ndarray:
        """Composite onto a white background, returning (H, W, 3) RGB."""
        return self.rgb + (1.0 - self.alpha)[:, :, None]

    @staticmethod
    def blank(width: int, height: int) -> "ImageRGBA":
        return ImageRGBA(np.zeros((height, width, 4)))


def downsample_box(img: ImageRGBA, k: int) -> ImageRGBA:
    """Box-filter downsample by an integer factor: each output pixel is the
    mean of its k x k block over all four channels."""
    if k < 1:
        raise ValueError("downsample factor must be a positive integer")
    if k == 1:
        return ImageRGBA(img.data.copy())
    h, w = img.height, img.width
    if h % k or w % k:
        raise ValueError(f"image size {w}x{h} is not divisible by {k}")
    blocks = img.data.reshape(h // k, k, w // k, k, 4)
    return ImageRGBA(blocks.mean(axis=(1, 3)))


def psnr(a: ImageRGBA, b: ImageRGBA) -> float:
    """PSNR in dB between two images composited onto white, capped at 99 dB
    for identical inputs."""
    if a.data.shape != b.data.shape:
        raise ValueError("psnr requires images of equal dimensions")
    mse = float(np.mean((a.on_white() - b.on_white()) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


def to_png_bytes(img: ImageRGBA) -> bytes:
    """Encode as 8-bit straight-alpha PNG."""
    import io as _io

    from PIL import Image as _PILImage

    alpha = img.alpha
    safe = np.maximum(alpha, 1e-12)[:, :, None]
    straight = np.where(alpha[:, :, None] > 0.0, img.rgb / safe, 0.0)
    rgba = np.concatenate([straight, alpha[:, :, None]], axis=2)
    u8 = (np.clip(rgba, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    buf = _io.BytesIO()
    _PILImage.fromarray(u8, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def write_png(img: ImageRGBA, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_png_bytes(img))


def from_png_bytes(data: bytes) -> ImageRGBA:
    """Decode an 8-bit straight-alpha PNG back to the premultiplied layout."""
    import io as _io

    from PIL import Image as _PILImage

    im = _PILImage.open(_io.BytesIO(data)).convert("RGBA")
    rgba = np.asarray(im, dtype=np.float64) / 255.0
    premult = rgba.copy()
    premult[:, :, :3] *= rgba[:, :, 3:4]
    return ImageRGBA(premult)

"""Image preparation: decode, shorter-side resize, center crop, PPM P6 out.

Resampling is implemented here (separable Catmull-Rom bicubic, kernel
stretched by the scale factor when shrinking) rather than delegated to the
codec library, so output bytes are stable across library versions and the
engine never needs resampling code. PIL is used only to decode files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PreprocessError(ValueError):
    pass


def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Catmull-Rom kernel (a = -0.5), support [-2, 2]."""
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (a + 2.0) * t[near] ** 3 - (a + 3.0) * t[near] ** 2 + 1.0
    out[far] = a * (t[far] ** 3 - 5.0 * t[far] ** 2 + 8.0 * t[far] - 4.0)
    return out


def _axis_weights(src_len: int, dst_len: int) -> np.ndarray:
    """Dense [dst_len, src_len] row-normalized resampling matrix.

    Downscaling stretches the kernel by the scale factor (antialias);
    coordinates follow the pixel-center convention, borders replicate.
    """
    scale = src_len / dst_len
    stretch = max(scale, 1.0)
    support = 2.0 * stretch
    weights = np.zeros((dst_len, src_len), dtype=np.float64)
    for i in range(dst_len):
        center = (i + 0.5) * scale - 0.5
        lo = int(np.floor(center - support))
        hi = int(np.ceil(center + support))
        taps = np.arange(lo, hi + 1)
        w = _cubic((taps - center) / stretch)
        keep = w != 0.0
        taps, w = taps[keep], w[keep]
        w /= w.sum()
        np.add.at(weights[i], np.clip(taps, 0, src_len - 1), w)
    return weights


def resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resize of a [H, W, C] float64 image."""
    h, w = image.shape[:2]
    rows = _axis_weights(h, out_h)
    cols = _axis_weights(w, out_w)
    tmp = np.einsum("oh,hwc->owc", rows, image)
    return np.einsum("ow,hwc->hoc", cols, tmp)


def resize_shorter_side(image: np.ndarray, target: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h <= w:
        return resize(image, target, max(int(round(w * target / h)), target))
    return resize(image, max(int(round(h * target / w)), target), target)


def center_crop(image: np.ndarray, size: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h < size or w < size:
        raise PreprocessError(f"image {h}x{w} smaller than crop {size}")
    top, left = (h - size) // 2, (w - size) // 2
    return image[top:top + size, left:left + size]


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image), 0.0, 255.0).astype(np.uint8)


def load_rgb(path) -> np.ndarray:
    """Decode any PIL-readable image as [H, W, 3] float64 in 0..255."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")  # grayscale replicates to 3 channels
            arr = np.asarray(rgb, dtype=np.float64)
    except (OSError, UnidentifiedImageError) as exc:
        raise PreprocessError(f"cannot decode image '{path}': {exc}") from exc
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise PreprocessError(f"degenerate image '{path}'")
    return arr


def write_ppm(path, pixels: np.ndarray) -> None:
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def preprocess_image(path, size: int, out_path) -> None:
    """Decode -> shorter-side resize to `size` -> center crop -> binary PPM."""
    if size < 1:
        raise PreprocessError(f"bad target size {size}")
    image = load_rgb(path)
    if image.shape[0] != size or image.shape[1] != size:
        image = center_crop(resize_shorter_side(image, size), size)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_ppm(out_path, to_uint8(image))

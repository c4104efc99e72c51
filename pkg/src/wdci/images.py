"""Image layout conversion and 8-bit PNG IO.

Arrays cross module boundaries as float32 in [0, 1]; PNG files are 8-bit per
channel and divided by 255 on load.
"""

import numpy as np
from PIL import Image

from .errors import ShapeError


def to_bchw(img):
    """Lift (H, W), (H, W, C) or (B, C, H, W) to rank 4; returns (arr, layout)."""
    img = np.asarray(img)
    if img.ndim == 2:
        return img[None, None], "hw"
    if img.ndim == 3:
        return np.ascontiguousarray(img.transpose(2, 0, 1))[None], "hwc"
    if img.ndim == 4:
        return img, "bchw"
    raise ShapeError(f"unsupported image rank {img.ndim}")


def from_bchw(arr, layout):
    if layout == "hw":
        return arr[0, 0]
    if layout == "hwc":
        return np.ascontiguousarray(arr[0].transpose(1, 2, 0))
    return arr


def load_png(path) -> np.ndarray:
    """Read a PNG as float32 (H, W, 3) in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def save_png(path, img) -> None:
    """Write a float image in [0, 1] (values are clipped) as 8-bit PNG."""
    img = np.asarray(img)
    if img.ndim == 4:
        if img.shape[0] != 1:
            raise ShapeError("save_png expects a single image, got a batch")
        img = img[0].transpose(1, 2, 0)
    arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def reflect_pad_to_multiple(img_bchw, multiple):
    """Pad bottom/right reflectively; returns (padded, (pad_h, pad_w))."""
    h, w = img_bchw.shape[2], img_bchw.shape[3]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        img_bchw = np.pad(img_bchw, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")
    return img_bchw, (ph, pw)

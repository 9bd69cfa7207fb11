"""File output helpers: atomic writes and grayscale PNG rendering."""

from __future__ import annotations

import io
import os
import tempfile

import numpy as np
from PIL import Image


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_grayscale_png(array, path, sidecar: bool = True) -> None:
    """Render a 2D array as an 8-bit grayscale PNG with min/max scaling.

    The scale actually used is recorded in ``<path>.scale.txt`` so that
    images from different runs can be compared quantitatively.  Flat arrays
    render black.
    """
    a = np.asarray(array, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D array, got shape {a.shape}")
    lo = float(a.min())
    hi = float(a.max())
    span = hi - lo
    if span <= 0:
        img = np.zeros(a.shape, dtype=np.uint8)
    else:
        img = np.clip(np.round((a - lo) / span * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
    if sidecar:
        atomic_write_text(os.fspath(path) + ".scale.txt", f"min {lo:.17g}\nmax {hi:.17g}\n")

"""Disk format: raw little-endian float32 payload plus a JSON sidecar.

The data file holds the row-major float32 values and nothing else; all
metadata lives in a sidecar at `<path>.json` with keys "shape" and "kind"
("image" or "sinogram"), plus "angles" for sinograms, an optional "range"
tag for images, and an optional "created" timestamp. Keeping timestamps
out of the payload makes repeated saves of the same array byte-identical.
"""

import json
import warnings
from pathlib import Path

import numpy as np

from .errors import FileFormatError, ParameterError
from .operators import VALUE_RANGES, Image, Sinogram
from .validation import as_float_array

__all__ = [
    "sidecar_path",
    "save_array",
    "load_array",
    "save_image",
    "load_image",
    "save_sinogram",
    "load_sinogram",
]

KINDS = ("image", "sinogram")


def sidecar_path(path):
    return Path(str(path) + ".json")


def _warn_outside_range(values, tag):
    lo, hi = VALUE_RANGES[tag]
    if values.size and (values.min() < lo or values.max() > hi):
        warnings.warn(
            f"values span [{values.min():.4g}, {values.max():.4g}], outside the "
            f"{tag!r} range [{lo}, {hi}]",
            stacklevel=3,
        )


def save_array(path, values, kind="image", angles=None, value_range=None, created=None):
    """Write the float32 payload and its sidecar. Returns the data path."""
    values = as_float_array(values, "values")
    if kind not in KINDS:
        raise ParameterError(f"kind must be one of {KINDS}, got {kind!r}")
    meta = {"shape": [int(s) for s in values.shape], "kind": kind}
    if angles is not None:
        meta["angles"] = [float(a) for a in np.asarray(angles)]
    if value_range is not None:
        if value_range not in VALUE_RANGES:
            raise ParameterError(f"unknown value_range {value_range!r}")
        meta["range"] = value_range
        _warn_outside_range(values, value_range)
    if created is not None:
        meta["created"] = str(created)
    path = Path(path)
    path.write_bytes(values.astype("<f4").tobytes())
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n")
    return path


def load_array(path):
    """Read a payload and its sidecar. Returns (float64 array, meta dict)."""
    path = Path(path)
    sidecar = sidecar_path(path)
    if not path.is_file():
        raise FileFormatError(f"missing data file: {path}")
    if not sidecar.is_file():
        raise FileFormatError(f"missing sidecar: {sidecar}")
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"sidecar {sidecar} is not valid JSON: {exc}") from exc
    if not isinstance(meta, dict):
        raise FileFormatError(f"sidecar {sidecar} must hold a JSON object")
    for key in ("shape", "kind"):
        if key not in meta:
            raise FileFormatError(f"sidecar {sidecar} is missing {key!r}")
    if meta["kind"] not in KINDS:
        raise FileFormatError(f"unknown kind {meta['kind']!r} in {sidecar}")
    try:
        shape = tuple(int(s) for s in meta["shape"])
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"bad shape {meta['shape']!r} in {sidecar}") from exc
    if any(s < 0 for s in shape):
        raise FileFormatError(f"bad shape {shape!r} in {sidecar}")
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    raw = path.read_bytes()
    if len(raw) != expected:
        raise FileFormatError(
            f"{path} holds {len(raw)} bytes, expected {expected} for shape {shape}"
        )
    values = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    if "range" in meta:
        if meta["range"] not in VALUE_RANGES:
            raise FileFormatError(f"unknown range tag {meta['range']!r} in {sidecar}")
        _warn_outside_range(values, meta["range"])
    return values, meta


def save_image(path, image):
    return save_array(path, image.pixels, kind="image", value_range=image.value_range)


def load_image(path):
    values, meta = load_array(path)
    if meta["kind"] != "image":
        raise FileFormatError(f"{path} holds a {meta['kind']!r}, expected an image")
    if values.ndim != 2:
        raise FileFormatError(f"image payload must be 2-D, got shape {values.shape}")
    return Image(values, meta.get("range", "unit"))


def save_sinogram(path, sinogram):
    return save_array(path, sinogram.values, kind="sinogram", angles=sinogram.angles)


def load_sinogram(path):
    values, meta = load_array(path)
    if meta["kind"] != "sinogram":
        raise FileFormatError(f"{path} holds a {meta['kind']!r}, expected a sinogram")
    if "angles" not in meta:
        raise FileFormatError(f"sinogram sidecar for {path} is missing 'angles'")
    if values.ndim != 2:
        raise FileFormatError(f"sinogram payload must be 2-D, got shape {values.shape}")
    angles = np.asarray(meta["angles"], dtype=np.float64)
    if angles.shape != (values.shape[0],):
        raise FileFormatError(
            f"{angles.size} angles for {values.shape[0]} projection rows in {path}"
        )
    return Sinogram(values, angles)

"""Binary PGM (P5) export with deterministic grayscale normalization."""

from __future__ import annotations

import numpy as np

from .util import fmt_float


def gray_levels(values: np.ndarray, log_scale: bool = False) -> np.ndarray:
    """Map a real grid to uint8 levels.

    Linear min-max stretch to 0..255 (np.rint, ties to even); a constant
    grid has no contrast to stretch and maps to mid-gray 128 by convention.
    ``log_scale`` stretches log10(values) instead, so decade-spaced inputs
    land on equally spaced levels; non-positive values are clamped to the
    smallest positive entry first.
    """
    v = np.asarray(values, dtype=float)
    if log_scale:
        pos = v[v > 0]
        if pos.size == 0:
            return np.full(v.shape, 128, dtype=np.uint8)
        v = np.log10(np.maximum(v, pos.min()))
    lo = v.min()
    hi = v.max()
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    scaled = np.rint(255.0 * (v - lo) / (hi - lo))
    return scaled.astype(np.uint8)


def write_pgm(
    values: np.ndarray, path, log_scale: bool = False, comments: list[str] | None = None
) -> None:
    """P5 binary PGM; rows of ``values`` become image rows."""
    levels = gray_levels(values, log_scale=log_scale)
    if levels.ndim != 2:
        raise ValueError("PGM export needs a 2-D grid")
    height, width = levels.shape
    header = ["P5"]
    for c in comments or []:
        header.append("# " + c)
    header.append("%d %d" % (width, height))
    header.append("255")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(levels.tobytes())


def axis_comment(name: str, axis: np.ndarray) -> str:
    axis = np.asarray(axis, dtype=float)
    step = axis[1] - axis[0] if axis.size > 1 else 0.0
    return "%s %s %s %d" % (name, fmt_float(axis[0]), fmt_float(step), axis.size)

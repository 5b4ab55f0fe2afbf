"""Grid-to-image rendering for the CLI: CSV grids in, P5 PGM out.

The input is the delay/velocity image CSV written by the imaging runner
(columns delay_s, velocity_mps, magnitude, delay-major order); any CSV
whose first two columns enumerate a complete rectangular grid in the same
order works.  Scaling and the byte mapping are those of
:func:`rfsense.pgm.gray_levels`.
"""

from __future__ import annotations

import numpy as np

from ..pgm import axis_comment, write_pgm


class RenderError(ValueError):
    pass


def load_grid_csv(path):
    """Read (row_axis, col_axis, values) from a 3-column grid CSV."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if len(cols) != 3:
            raise RenderError("expected 3 columns, got %r" % header)
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise RenderError("line %d: expected 3 values" % ln)
            try:
                rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise RenderError("line %d: %s" % (ln, exc)) from exc
    if not rows:
        raise RenderError("no data rows")
    data = np.array(rows)
    row_axis = np.unique(data[:, 0])
    col_axis = np.unique(data[:, 1])
    if row_axis.size * col_axis.size != data.shape[0]:
        raise RenderError("rows do not form a complete rectangular grid")
    values = data[:, 2].reshape(row_axis.size, col_axis.size)
    # verify the file really is row-major over (row_axis, col_axis)
    expect_rows = np.repeat(row_axis, col_axis.size)
    expect_cols = np.tile(col_axis, row_axis.size)
    if not (np.array_equal(data[:, 0], expect_rows) and np.array_equal(data[:, 1], expect_cols)):
        raise RenderError("grid rows are not in row-major axis order")
    return row_axis, col_axis, values, cols


def render_csv_to_pgm(csv_path, pgm_path, log_scale: bool = False) -> None:
    row_axis, col_axis, values, names = load_grid_csv(csv_path)
    comments = [axis_comment(names[0], row_axis), axis_comment(names[1], col_axis)]
    write_pgm(values, pgm_path, log_scale=log_scale, comments=comments)

"""Schema-versioned CSV emission shared by the CLI and the plotting side.

Every file starts with a ``# schema=v1`` comment line, then a header row.
Floats are written with repr (shortest round-trip), so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

SCHEMA_LINE = "# schema=v1"

TRAJECTORY_COLUMNS = (
    "time",
    "norm_H",
    "norm_L4",
    "norm_Hdelta",
    "grad_u_L2",
    "z_L4",
    "energy_residual",
)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(SCHEMA_LINE + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_trajectory_csv(path, traj):
    cols = [traj.times] + [traj.column(name) for name in TRAJECTORY_COLUMNS[1:]]
    write_csv(path, TRAJECTORY_COLUMNS, zip(*cols))


def read_csv(path):
    """Read one of our CSVs back as (header, list of string rows)."""
    with open(path) as fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise ValueError(f"{path}: unsupported schema line {first!r}")
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows

"""Static telemetry figures (SVG): position vs setpoint, velocity, motor commands."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .flight import TELEMETRY_COLUMNS


def read_telemetry(path: str | Path) -> np.ndarray:
    """Load a telemetry CSV, checking the header and every value.

    Raises:
        SchemaError: naming the offending column.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file, expected header {','.join(TELEMETRY_COLUMNS)}")
    header = rows[0]
    for i, col in enumerate(TELEMETRY_COLUMNS):
        if i >= len(header) or header[i] != col:
            got = header[i] if i < len(header) else "<missing>"
            raise SchemaError(f"{path}: column {i} should be {col!r}, got {got!r}")
    if len(header) != len(TELEMETRY_COLUMNS):
        raise SchemaError(f"{path}: unexpected extra column {header[len(TELEMETRY_COLUMNS)]!r}")
    if len(rows) < 2:
        raise SchemaError(f"{path}: no data rows")
    data = np.empty((len(rows) - 1, len(TELEMETRY_COLUMNS)))
    for r, row in enumerate(rows[1:]):
        if len(row) != len(TELEMETRY_COLUMNS):
            raise SchemaError(f"{path}: row {r + 1} has {len(row)} fields")
        for c, value in enumerate(row):
            try:
                data[r, c] = float(value)
            except ValueError:
                raise SchemaError(f"{path}: bad value {value!r} in column {TELEMETRY_COLUMNS[c]!r}") from None
    return data


def _col(name):
    return TELEMETRY_COLUMNS.index(name)


def render_report(paths, out_dir: str | Path) -> list:
    """One figure per quantity group; two inputs are drawn side by side."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = list(paths)
    if not 1 <= len(paths) <= 2:
        raise ValueError("report takes one or two telemetry files")
    logs = [read_telemetry(p) for p in paths]
    titles = [Path(p).stem for p in paths]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    ncols = len(logs)

    fig, axes = plt.subplots(3, ncols, figsize=(6 * ncols, 7), sharex="col", squeeze=False)
    for j, (d, title) in enumerate(zip(logs, titles)):
        t = d[:, 0]
        for i, axis in enumerate("xyz"):
            ax = axes[i, j]
            ax.plot(t, d[:, _col(f"pos_{axis}")], label="position")
            ax.plot(t, d[:, _col(f"sp_{axis}")], "--", label="setpoint")
            ax.set_ylabel(f"{axis} [m]")
        axes[0, j].set_title(title)
        axes[0, j].legend(loc="best")
        axes[-1, j].set_xlabel("time [s]")
    fig.tight_layout()
    written.append(out_dir / "position.svg")
    fig.savefig(written[-1])
    plt.close(fig)

    fig, axes = plt.subplots(1, ncols, figsize=(6 * ncols, 3.5), squeeze=False)
    for j, (d, title) in enumerate(zip(logs, titles)):
        ax = axes[0, j]
        for axis in "xyz":
            ax.plot(d[:, 0], d[:, _col(f"vel_{axis}")], label=f"v{axis}")
        ax.set_title(title)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("velocity [m/s]")
        ax.legend(loc="best")
    fig.tight_layout()
    written.append(out_dir / "velocity.svg")
    fig.savefig(written[-1])
    plt.close(fig)

    fig, axes = plt.subplots(1, ncols, figsize=(6 * ncols, 3.5), squeeze=False)
    for j, (d, title) in enumerate(zip(logs, titles)):
        ax = axes[0, j]
        for m in range(1, 5):
            ax.plot(d[:, 0], d[:, _col(f"motor_{m}")], lw=0.8, label=f"motor {m}")
        ax.set_title(title)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("normalized speed cmd")
        ax.set_ylim(-0.05, 1.05)
        ax.legend(loc="best")
    fig.tight_layout()
    written.append(out_dir / "motors.svg")
    fig.savefig(written[-1])
    plt.close(fig)
    return written

"""Trajectory artifacts: delimited output and SVG line plots.

Both writers are deterministic: floats are printed with 17 significant
digits (enough to round-trip doubles exactly) and the SVG path omits
volatile metadata, so identical runs produce byte-identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib as mpl
from matplotlib.figure import Figure
import numpy as np

from .errors import ScenarioError
from .simulate import Trajectory

__all__ = ["csv_header", "write_csv", "read_csv", "write_svg"]

#: Fixed salt for SVG element ids, keeping output byte-stable across runs.
SVG_HASH_SALT = "gridreduce"
FLOAT_FORMAT = "%.17g"


def _indexed(prefix: str, count: int) -> list[str]:
    return [f"{prefix}_{k + 1}" for k in range(count)]


def _columns(trajectory: Trajectory) -> list[tuple[str, np.ndarray]]:
    pairs = [("time", trajectory.times)]
    pairs += zip(_indexed("eta", trajectory.eta.shape[1]), trajectory.eta.T)
    if trajectory.theta is not None:
        pairs += zip(_indexed("theta", trajectory.theta.shape[1]), trajectory.theta.T)
    pairs += zip(_indexed("omega", trajectory.omega_g.shape[1]), trajectory.omega_g.T)
    if trajectory.xi is not None:
        pairs += zip(_indexed("xi", trajectory.xi.shape[1]), trajectory.xi.T)
    pairs += zip(_indexed("u", trajectory.u.shape[1]), trajectory.u.T)
    pairs += [(name, trajectory.channels[name]) for name in sorted(trajectory.channels)]
    return pairs


def csv_header(trajectory: Trajectory) -> list[str]:
    """Column names the CSV writer will emit for this trajectory."""
    return [name for name, _ in _columns(trajectory)]


def write_csv(trajectory: Trajectory, path) -> None:
    """Write one row per sample: time, states, inputs, monitor channels."""
    pairs = _columns(trajectory)
    table = np.column_stack([series for _, series in pairs])
    lines = [",".join(name for name, _ in pairs)]
    lines.extend(",".join(FLOAT_FORMAT % value for value in row) for row in table)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a file written by write_csv back into (header, samples)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ScenarioError(f"{path}: empty delimited file")
    header = lines[0].split(",")
    data = np.array([[float(cell) for cell in line.split(",")] for line in lines[1:]])
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ScenarioError(f"{path}: rows do not match the header")
    return header, data


def _channel_series(
    trajectory: Trajectory, name: str, nominal_hz: float
) -> tuple[np.ndarray, str]:
    """Series and y-label for a figure channel name."""
    if name == "frequency_hz":
        return nominal_hz + trajectory.omega_g / (2.0 * np.pi), "frequency (Hz)"
    if name == "injection":
        return trajectory.u, "injection (pu)"
    if name in trajectory.channels:
        return trajectory.channels[name][:, None], name.replace("_", " ")
    raise ScenarioError(
        f"unknown figure channel {name!r}; expected frequency_hz, injection, "
        f"or one of: {', '.join(sorted(trajectory.channels)) or 'none'}"
    )


def write_svg(trajectory: Trajectory, channels, path, nominal_hz: float = 50.0) -> None:
    """Render the named channels as stacked line plots in one SVG file."""
    channels = list(channels)
    if not channels:
        raise ValueError("at least one figure channel is required")
    fig = Figure(figsize=(8.0, 2.8 * len(channels)), layout="tight")
    axes = fig.subplots(len(channels), 1, sharex=True, squeeze=False)[:, 0]
    for axis, name in zip(axes, channels):
        series, label = _channel_series(trajectory, name, nominal_hz)
        for col in range(series.shape[1]):
            suffix = f" {col + 1}" if series.shape[1] > 1 else ""
            axis.plot(trajectory.times, series[:, col], lw=1.0, label=f"{name}{suffix}")
        axis.set_ylabel(label)
        axis.grid(True, alpha=0.3)
        if series.shape[1] > 1:
            axis.legend(loc="best", fontsize="small")
    axes[-1].set_xlabel("time (s)")
    with mpl.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})

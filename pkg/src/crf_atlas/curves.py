"""Response-curve data model and curve-level utilities.

A camera response curve is stored as N uniformly spaced samples on [0, 1]
with the endpoints pinned to (0, 0) and (1, 1). The grid convention is
u_i = i / (N - 1) for i = 0..N-1, so both endpoints are on-grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DORF_SAMPLE_COUNT = 1024
ENDPOINT_TOL = 1e-9


class DegenerateCurveError(ValueError):
    """Raised when samples cannot be normalized (constant input)."""


class DorfParseError(ValueError):
    """Raised on malformed response-curve documents; carries record/line info."""

    def __init__(self, message, record_index=None, line_number=None):
        self.record_index = record_index
        self.line_number = line_number
        prefix = []
        if record_index is not None:
            prefix.append(f"record {record_index}")
        if line_number is not None:
            prefix.append(f"line {line_number}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


def sample_grid(n: int) -> np.ndarray:
    """Uniform grid u_i = i/(n-1), endpoints exactly 0 and 1."""
    if n < 2:
        raise ValueError(f"grid needs at least 2 positions, got {n}")
    return np.linspace(0.0, 1.0, n)


@dataclass(frozen=True)
class ResponseCurve:
    """An intensity response sampled on the uniform grid.

    Invariants (checked on construction): all samples in [0, 1], first
    sample 0 and last sample 1 within 1e-9, at least two samples.
    """

    id: str
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError(f"curve {self.id!r}: need a 1-D sequence of >= 2 samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError(f"curve {self.id!r}: non-finite sample")
        if samples.min() < -ENDPOINT_TOL or samples.max() > 1.0 + ENDPOINT_TOL:
            raise ValueError(f"curve {self.id!r}: samples outside [0, 1]")
        if abs(samples[0]) > ENDPOINT_TOL or abs(samples[-1] - 1.0) > ENDPOINT_TOL:
            raise ValueError(
                f"curve {self.id!r}: endpoints ({samples[0]}, {samples[-1]}) not pinned to (0, 1)"
            )
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def grid(self) -> np.ndarray:
        return sample_grid(self.n)

    def with_id(self, new_id: str) -> "ResponseCurve":
        return ResponseCurve(new_id, self.samples)


def normalize(raw_samples, curve_id: str = "curve") -> ResponseCurve:
    """Affine-map samples so the curve passes through (0,0) and (1,1).

    Applies (x - x_first) / (x_last - x_first), clamps to [0, 1] and pins
    the endpoints exactly. Constant input raises DegenerateCurveError.
    """
    raw = np.asarray(raw_samples, dtype=np.float64)
    if raw.ndim != 1 or raw.size < 2:
        raise ValueError("need a 1-D sequence of >= 2 samples")
    span = raw[-1] - raw[0]
    if span == 0.0:
        raise DegenerateCurveError(
            f"curve {curve_id!r}: first and last samples are equal ({raw[0]}), cannot normalize"
        )
    mapped = (raw - raw[0]) / span
    mapped = np.clip(mapped, 0.0, 1.0)
    mapped[0] = 0.0
    mapped[-1] = 1.0
    return ResponseCurve(curve_id, mapped)


def evaluate(curve: ResponseCurve, x) -> float | np.ndarray:
    """Piecewise-linear interpolation of the curve at x in [0, 1]."""
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
        raise ValueError(f"evaluation point outside [0, 1]: {x}")
    out = np.interp(x_arr, curve.grid, curve.samples)
    return float(out) if np.isscalar(x) or x_arr.ndim == 0 else out


def isotonic_projection(values: np.ndarray) -> np.ndarray:
    """Nearest non-decreasing sequence in least squares (pool adjacent violators)."""
    y = np.asarray(values, dtype=np.float64)
    n = y.size
    # stack of (block mean, block weight), merged while out of order
    means = np.empty(n)
    counts = np.empty(n)
    top = 0
    for i in range(n):
        means[top] = y[i]
        counts[top] = 1.0
        top += 1
        while top > 1 and means[top - 2] > means[top - 1]:
            total = counts[top - 2] + counts[top - 1]
            means[top - 2] = (
                means[top - 2] * counts[top - 2] + means[top - 1] * counts[top - 1]
            ) / total
            counts[top - 2] = total
            top -= 1
    return np.repeat(means[:top], counts[:top].astype(np.intp))


def invert(curve: ResponseCurve) -> ResponseCurve:
    """Inverse curve on the same grid.

    Projects the samples to a non-decreasing sequence (isotonic regression),
    breaks remaining flat runs by adding i * 1e-9, swaps axes, and resamples
    onto the uniform grid by linear interpolation.
    """
    n = curve.n
    y = isotonic_projection(curve.samples)
    y = y + np.arange(n) * 1e-9
    grid = sample_grid(n)
    inv = np.interp(grid, y, grid)
    return normalize(inv, f"{curve.id}^-1")


def discrete_derivative(curve: ResponseCurve) -> np.ndarray:
    """Adjacent sample differences d_i = s[i+1] - s[i] (unscaled)."""
    return np.diff(curve.samples)


def smoothness(curve: ResponseCurve) -> float:
    """l2 norm of the discrete derivative."""
    return float(np.linalg.norm(discrete_derivative(curve)))


def auc_label(curve: ResponseCurve) -> float:
    """Signed area between the curve and the diagonal: sum_i (s_i - u_i)."""
    return float(np.sum(curve.samples - curve.grid))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

_GRID_WARN_TOL = 1e-3


def _parse_float_line(line: str, expected: int, record_index: int, line_number: int) -> np.ndarray:
    tokens = line.split()
    values = np.empty(len(tokens))
    for j, tok in enumerate(tokens):
        try:
            values[j] = float(tok)
        except ValueError:
            raise DorfParseError(
                f"non-numeric token {tok!r}", record_index=record_index, line_number=line_number
            ) from None
    if values.size != expected:
        raise DorfParseError(
            f"expected {expected} samples, found {values.size}",
            record_index=record_index,
            line_number=line_number,
        )
    return values


def parse_dorf(text: str) -> list[ResponseCurve]:
    """Parse a response-curve database document into normalized curves.

    Record format (six lines): curve name, free-text info, the literal
    "I =", 1024 whitespace-separated floats, the literal "B =", 1024
    floats. Records are concatenated; blank lines between records are
    ignored. The I row is validated against the uniform grid (a warning is
    emitted if it deviates by more than 1e-3); the B row becomes the curve.
    """
    lines = text.splitlines()
    numbered = [(i + 1, ln) for i, ln in enumerate(lines)]
    pos = 0
    total = len(numbered)
    curves: list[ResponseCurve] = []
    record_index = 0

    def skip_blank():
        nonlocal pos
        while pos < total and not numbered[pos][1].strip():
            pos += 1

    while True:
        skip_blank()
        if pos >= total:
            break
        record_index += 1
        if pos + 6 > total:
            raise DorfParseError(
                "truncated record (expected 6 lines)",
                record_index=record_index,
                line_number=numbered[pos][0],
            )
        name_line = numbered[pos][1].strip()
        # info line is free text, kept only for format fidelity
        i_marker_no, i_marker = numbered[pos + 2]
        if i_marker.strip() != "I =":
            raise DorfParseError(
                f"expected 'I =' marker, found {i_marker.strip()!r}",
                record_index=record_index,
                line_number=i_marker_no,
            )
        i_line_no, i_line = numbered[pos + 3]
        irradiance = _parse_float_line(i_line, DORF_SAMPLE_COUNT, record_index, i_line_no)
        b_marker_no, b_marker = numbered[pos + 4]
        if b_marker.strip() != "B =":
            raise DorfParseError(
                f"expected 'B =' marker, found {b_marker.strip()!r}",
                record_index=record_index,
                line_number=b_marker_no,
            )
        b_line_no, b_line = numbered[pos + 5]
        brightness = _parse_float_line(b_line, DORF_SAMPLE_COUNT, record_index, b_line_no)

        deviation = np.max(np.abs(irradiance - sample_grid(DORF_SAMPLE_COUNT)))
        if deviation > _GRID_WARN_TOL:
            warnings.warn(
                f"record {record_index} ({name_line}): irradiance row deviates from the "
                f"uniform grid by {deviation:.2e}",
                stacklevel=2,
            )
        curves.append(normalize(brightness, curve_id=name_line or f"curve-{record_index}"))
        pos += 6
    return curves


def parse_curves_csv(text: str) -> list[ResponseCurve]:
    """CSV ingestion: one curve per row, first column id, then N floats."""
    curves = []
    for i, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) < 3:
            raise DorfParseError("row needs an id and >= 2 samples", line_number=i)
        try:
            values = np.array([float(c) for c in cells[1:]])
        except ValueError:
            raise DorfParseError("non-numeric sample", line_number=i) from None
        curves.append(normalize(values, curve_id=cells[0].strip()))
    return curves


def write_dorf(curves, grid_values=None) -> str:
    """Render curves in the six-line record format parsed by parse_dorf."""
    parts = []
    for curve in curves:
        if curve.n != DORF_SAMPLE_COUNT:
            raise ValueError(f"curve {curve.id!r}: expected {DORF_SAMPLE_COUNT} samples")
        grid = curve.grid if grid_values is None else np.asarray(grid_values)
        parts.append(curve.id)
        parts.append("synthetic response record")
        parts.append("I =")
        parts.append(" ".join(f"{v:.6f}" for v in grid))
        parts.append("B =")
        parts.append(" ".join(f"{v:.6f}" for v in curve.samples))
        parts.append("")
    return "\n".join(parts)


def resample(curve: ResponseCurve, n: int) -> ResponseCurve:
    """Curve resampled onto an n-point uniform grid."""
    return ResponseCurve(curve.id, np.interp(sample_grid(n), curve.grid, curve.samples))

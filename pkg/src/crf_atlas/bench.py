"""Metrics, summary statistics, benchmark drivers, and report emission.

Two drivers: a curve-fitting benchmark (mean fitting RMSE per model family
and parameter count over a curve database) and a calibration benchmark
(synthetic camera suite, several methods, varying correspondence counts).
Reports serialize to CSV/JSON bit-stably; curve plots and latent histograms
are emitted as minimal static SVG documents.
"""

from __future__ import annotations

import json
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from . import calibration as cal
from .classic import EMoRBasis, build_emor_basis, fit_model
from .curves import ResponseCurve, invert
from .optim import golden_section


def rmse(u, v) -> float:
    """Root mean squared difference of two equal-length vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.size == 0:
        raise ValueError(f"length mismatch or empty: {u.shape} vs {v.shape}")
    return float(np.sqrt(np.mean((u - v) ** 2)))


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    median: float
    sd: float
    max: float
    p95: float
    time_s: float
    count: int


def percentile_linear(values: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics at position q*(n-1)."""
    ordered = np.sort(values)
    pos = q * (ordered.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, ordered.size - 1)
    frac = pos - lo
    return float(ordered[lo] + frac * (ordered[hi] - ordered[lo]))


def summarize(h, elapsed_s: float = 0.0) -> SummaryStats:
    """Mean/median/sample-SD/max/P95 of a result vector (SD = 0 for one entry)."""
    values = np.asarray(h, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty result vector")
    if np.any(~np.isfinite(values)) or np.any(values < 0):
        raise ValueError("result vector entries must be finite and >= 0")
    return SummaryStats(
        mean=float(np.mean(values)),
        median=float(np.median(values)),
        sd=float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
        max=float(np.max(values)),
        p95=percentile_linear(values, 0.95),
        time_s=float(elapsed_s),
        count=int(values.size),
    )


# ---------------------------------------------------------------------------
# curve-fitting benchmark
# ---------------------------------------------------------------------------

SLR_REFINE_HALF_WIDTH = 1.0


def slr_fit_rmse(weights: ae.MLPWeights, curve: ResponseCurve) -> tuple[float, float]:
    """(best z, fitting RMSE) for one curve: encode, then 1-D refinement."""
    z0 = float(ae.encode(weights, curve)[0])
    target = curve.samples

    def objective(z: float) -> float:
        rec = ae.decode(weights, np.array([z])).samples
        return float(np.sqrt(np.mean((rec - target) ** 2)))

    z_best, best = golden_section(
        objective, z0 - SLR_REFINE_HALF_WIDTH, z0 + SLR_REFINE_HALF_WIDTH, tol=1e-6
    )
    start = objective(z0)
    if start < best:
        return z0, start
    return z_best, best


def run_fitting_bench(curves, families_with_dims, slr_weights: ae.MLPWeights | None = None,
                      basis: EMoRBasis | None = None) -> list[dict]:
    """Mean fitting RMSE per (family, parameter count) cell.

    families_with_dims maps family name to a list of parameter counts, e.g.
    {"gamma": [1], "emor": [1, 2, 3, 4]}. The PCA basis is built from the
    input curves when not supplied. Fit failures are recorded per cell.
    """
    rows = []
    need_basis = any(f == "emor" for f in families_with_dims)
    if need_basis and basis is None:
        basis = build_emor_basis(curves, K=max(families_with_dims.get("emor", [4])))
    for family, dims in families_with_dims.items():
        for dim in dims:
            start = time.perf_counter()
            errors = []
            failures = []
            if family == "slr":
                if slr_weights is None:
                    raise ValueError("slr row requires trained weights")
                for curve in curves:
                    errors.append(slr_fit_rmse(slr_weights, curve)[1])
            else:
                for curve in curves:
                    try:
                        _, fit_rmse = fit_model(family, curve, dim, basis=basis)
                        errors.append(fit_rmse)
                    except Exception as exc:
                        failures.append(f"{curve.id}: {exc}")
            elapsed = time.perf_counter() - start
            rows.append(
                {
                    "family": family,
                    "n_params": dim,
                    "mean_rmse": float(np.mean(errors)) if errors else float("nan"),
                    "curves": len(errors),
                    "failures": len(failures),
                    "time_s": elapsed,
                }
            )
    return rows


# ---------------------------------------------------------------------------
# calibration benchmark
# ---------------------------------------------------------------------------

DEFAULT_NOCCPS = (3, 6, 12, 24)
DEFAULT_EXPOSURES = (0.25, 0.5, 1.0, 2.0)


def parse_method(tag: str) -> tuple[str, str | None, int]:
    """'slr-ldl' -> (slr, ldl, 1); 'poly:3' -> (polynomial, None, 3)."""
    name = tag.strip()
    if name.startswith("slr"):
        variant = name.split("-", 1)[1] if "-" in name else "ldl"
        if variant not in ("ldl", "auc", "none"):
            raise ValueError(f"unknown slr variant in {tag!r}")
        return "slr", variant, 1
    if ":" in name:
        family, dim = name.split(":", 1)
        n_params = int(dim)
    else:
        family, n_params = name, {"gamma": 1}.get(name, 3)
    family = {"poly": "polynomial"}.get(family, family)
    if family not in ("gamma", "polynomial", "ggcm", "emor"):
        raise ValueError(f"unknown method tag {tag!r}")
    return family, None, n_params


@dataclass
class CalibrationBenchConfig:
    noccps: tuple[int, ...] = DEFAULT_NOCCPS
    exposures: tuple[float, ...] = DEFAULT_EXPOSURES
    noise_sigma: float = 0.01
    seeds: tuple[int, ...] = (0,)


def run_calibration_bench(camera_suite, methods, config: CalibrationBenchConfig,
                          slr_models: dict[str, ae.MLPWeights] | None = None,
                          basis: EMoRBasis | None = None) -> dict:
    """Calibrate every synthetic camera at every correspondence count.

    camera_suite is a list of (camera_id, true forward curve). For each
    method: per-camera inverse RMSE aggregated over seeds and counts into a
    result vector h (one entry per camera), summary stats over h, mean
    curve stability across the count levels, and evaluation counts.
    Per-camera failures are recorded, not fatal.
    """
    slr_models = slr_models or {}
    truths = {cam: invert(curve) for cam, curve in camera_suite}
    method_rows = []
    details = []
    for tag in methods:
        family, variant, n_params = parse_method(tag)
        weights = slr_models.get(variant) if family == "slr" else None
        if family == "slr" and weights is None:
            raise ValueError(f"method {tag!r} needs a trained model (variant {variant})")
        start = time.perf_counter()
        per_camera = []
        stabilities = []
        eval_counts = []
        failures = []
        for cam, curve in camera_suite:
            cam_errors = []
            for seed in config.seeds:
                level_curves = []
                for noccp in config.noccps:
                    obs_seed = zlib.crc32(f"{cam}|{seed}|{noccp}".encode())
                    obs = cal.synth_observations(
                        curve, noccp, config.noise_sigma, config.exposures,
                        seed=obs_seed, camera_id=cam,
                    )
                    try:
                        result = cal.calibrate(
                            obs, family, weights=weights, basis=basis, n_params=n_params,
                            grid_size=curve.n,
                        )
                    except Exception as exc:
                        failures.append(f"{cam}/seed{seed}/n{noccp}: {exc}")
                        continue
                    err = cal.rmse_vs_truth(result, truths[cam])
                    cam_errors.append(err)
                    eval_counts.append(result.evaluations)
                    level_curves.append(result.inverse_curve)
                    details.append(
                        {
                            "method": tag,
                            "camera": cam,
                            "seed": seed,
                            "noccp": noccp,
                            "rmse": err,
                            "evaluations": result.evaluations,
                            "ill_posed": result.ill_posed,
                        }
                    )
                if len(level_curves) >= 2:
                    stabilities.append(cal.stability(level_curves))
            if cam_errors:
                per_camera.append(float(np.mean(cam_errors)))
        elapsed = time.perf_counter() - start
        stats = summarize(per_camera, elapsed)
        method_rows.append(
            {
                "method": tag,
                "mean": stats.mean,
                "median": stats.median,
                "sd": stats.sd,
                "max": stats.max,
                "p95": stats.p95,
                "stability": float(np.mean(stabilities)) if stabilities else float("nan"),
                "mean_evaluations": float(np.mean(eval_counts)) if eval_counts else float("nan"),
                "cameras": len(per_camera),
                "failures": len(failures),
                "time_s": elapsed,
            }
        )
    return {"methods": method_rows, "details": details}


# ---------------------------------------------------------------------------
# report and plot-data emission
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rows: list[dict], fmt: str, path, columns: list[str] | None = None,
                strip_times: bool = False) -> None:
    """Write rows as CSV or JSON; identical inputs give identical bytes.

    strip_times zeroes wall-time columns so repeated runs compare equal.
    """
    rows = [dict(r) for r in rows]
    if strip_times:
        for r in rows:
            for key in r:
                if key == "time_s" or key.endswith("_time_s"):
                    r[key] = 0.0
    path = Path(path)
    if fmt == "csv":
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        lines = [",".join(columns)]
        for r in rows:
            lines.append(",".join(_format_cell(r.get(c, "")) for c in columns))
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "json":
        path.write_text(json.dumps(rows, indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def parse_report_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    columns = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for col, cell in zip(columns, cells):
            try:
                value = int(cell)
            except ValueError:
                try:
                    value = float(cell)
                except ValueError:
                    value = cell
            row[col] = value
        rows.append(row)
    return rows


SVG_WIDTH = 640
SVG_HEIGHT = 480
SVG_MARGIN = 48
SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#7f7f7f")


def _svg_coords(xs, ys):
    span_x = SVG_WIDTH - 2 * SVG_MARGIN
    span_y = SVG_HEIGHT - 2 * SVG_MARGIN
    pts = []
    for x, y in zip(xs, ys):
        px = SVG_MARGIN + x * span_x
        py = SVG_HEIGHT - SVG_MARGIN - y * span_y
        pts.append(f"{px:.2f},{py:.2f}")
    return pts


def curves_svg(named_curves, title: str = "") -> str:
    """Static SVG with one path element per curve, drawn on the unit square."""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{SVG_WIDTH // 2}" y="24" text-anchor="middle">{title}</text>')
    frame = _svg_coords([0, 1, 1, 0, 0], [0, 0, 1, 1, 0])
    parts.append(f'<polyline points="{" ".join(frame)}" fill="none" stroke="#999"/>')
    for i, (name, curve) in enumerate(named_curves):
        samples = curve.samples if isinstance(curve, ResponseCurve) else np.asarray(curve)
        xs = np.linspace(0.0, 1.0, samples.size)
        pts = _svg_coords(xs, samples)
        color = SVG_COLORS[i % len(SVG_COLORS)]
        parts.append(
            f'<path d="M {" L ".join(pts)}" fill="none" stroke="{color}" stroke-width="1.5">'
            f"<title>{name}</title></path>"
        )
        parts.append(
            f'<text x="{SVG_WIDTH - SVG_MARGIN}" y="{SVG_MARGIN + 16 * i}" text-anchor="end" '
            f'fill="{color}" font-size="12">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(histogram: ae.LatentHistogram, title: str = "latent distribution") -> str:
    """Static SVG of a latent histogram as one path over the bin tops."""
    counts = histogram.counts
    edges = histogram.edges
    peak = max(int(counts.max()), 1)
    xs, ys = [], []
    for i, c in enumerate(counts):
        x0 = (edges[i] - edges[0]) / (edges[-1] - edges[0])
        x1 = (edges[i + 1] - edges[0]) / (edges[-1] - edges[0])
        y = c / peak
        xs.extend([x0, x0, x1, x1])
        ys.extend([0.0, y, y, 0.0])
    pts = _svg_coords(xs, ys)
    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
            f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
            f'<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
            f'<text x="{SVG_WIDTH // 2}" y="24" text-anchor="middle">{title} '
            f"(mu={histogram.stats.mu:.3f}, sigma={histogram.stats.sigma:.3f})</text>",
            f'<path d="M {" L ".join(pts)}" fill="none" stroke="#1f77b4"/>',
            "</svg>",
        ]
    ) + "\n"


def emit_plot_data(named_curves, path, title: str = "") -> None:
    Path(path).write_text(curves_svg(named_curves, title=title))


def emit_histogram(histogram: ae.LatentHistogram, path, title: str = "latent distribution") -> None:
    Path(path).write_text(histogram_svg(histogram, title=title))

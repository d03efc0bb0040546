"""Inverse response-curve estimation from irradiance-intensity pairs.

Calibration minimizes the mean squared gap between estimated irradiance
g(intensity) and observed irradiance over the correspondence set. The
single-parameter families (latent autoencoder, gamma) use a coarse grid
plus golden-section refinement; the multi-parameter families use
Nelder-Mead on the inverse mapping directly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import autoencoder as ae
from .classic import EMoRBasis, _exponent_poly
from .curves import ResponseCurve, evaluate, invert, normalize, sample_grid
from .optim import grid_then_golden

LATENT_RANGE = (-4.0, 4.0)
LOG_GAMMA_RANGE = (math.log(0.05), math.log(20.0))
GRID_POINTS = 64
GOLDEN_TOL = 1e-6
GOLDEN_BUDGET = 100
NM_MAX_EVALS = 5000
NM_TOL = 1e-10

ONE_D_FAMILIES = ("slr", "gamma")
SIMPLEX_FAMILIES = ("polynomial", "ggcm", "emor")


@dataclass(frozen=True)
class Observation:
    """One correspondence: scene-side irradiance and image-side intensity."""

    irradiance: float
    intensity: float
    exposure: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.irradiance <= 1.0 and 0.0 <= self.intensity <= 1.0):
            raise ValueError(
                f"observation outside [0,1]: irradiance={self.irradiance}, intensity={self.intensity}"
            )


@dataclass(frozen=True)
class ObservationSet:
    camera_id: str
    channel: str
    observations: tuple[Observation, ...]

    def __post_init__(self):
        if len(self.observations) < 1:
            raise ValueError("observation set must hold at least one observation")
        if self.channel not in ("R", "G", "B", "mono"):
            raise ValueError(f"channel must be R/G/B/mono, got {self.channel!r}")
        object.__setattr__(self, "observations", tuple(self.observations))

    @property
    def irradiances(self) -> np.ndarray:
        return np.array([o.irradiance for o in self.observations])

    @property
    def intensities(self) -> np.ndarray:
        return np.array([o.intensity for o in self.observations])


@dataclass
class CalibrationResult:
    family: str
    parameters: np.ndarray
    inverse_curve: ResponseCurve
    objective_value: float
    evaluations: int
    wall_time_s: float
    ill_posed: bool = False


def observations_csv(sets) -> str:
    """Serialize observation sets as CSV (camera_id,channel,exposure,irradiance,intensity)."""
    lines = ["camera_id,channel,exposure,irradiance,intensity"]
    for obs_set in sets:
        for o in obs_set.observations:
            lines.append(
                f"{obs_set.camera_id},{obs_set.channel},{o.exposure!r},{o.irradiance!r},{o.intensity!r}"
            )
    return "\n".join(lines) + "\n"


def parse_observations_csv(text: str) -> list[ObservationSet]:
    """Parse the observation CSV; one set per (camera_id, channel) in file order."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty observation document")
    header = lines[0].strip()
    if header != "camera_id,channel,exposure,irradiance,intensity":
        raise ValueError(f"unexpected header: {header!r}")
    grouped: dict[tuple[str, str], list[Observation]] = {}
    order: list[tuple[str, str]] = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 5:
            raise ValueError(f"line {i}: expected 5 columns, found {len(cells)}")
        cam, channel = cells[0].strip(), cells[1].strip()
        try:
            exposure, irr, intensity = (float(c) for c in cells[2:])
        except ValueError:
            raise ValueError(f"line {i}: non-numeric value") from None
        key = (cam, channel)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(Observation(irradiance=irr, intensity=intensity, exposure=exposure))
    return [
        ObservationSet(camera_id=cam, channel=channel, observations=tuple(grouped[(cam, channel)]))
        for cam, channel in order
    ]


# ---------------------------------------------------------------------------
# synthetic observations
# ---------------------------------------------------------------------------


def synth_observations(true_curve: ResponseCurve, n_patches: int, noise_sigma: float,
                       exposures, seed: int, camera_id: str = "synthetic",
                       channel: str = "mono") -> ObservationSet:
    """Noisy correspondences sampled from a known response curve.

    n_patches base irradiances are drawn stratified-uniform in [0, 1]; each
    exposure scales them (clamped to [0, 1]); intensities are the curve
    values plus Gaussian noise, clamped to [0, 1]. Deterministic per seed.
    """
    if n_patches < 1:
        raise ValueError("need at least one patch")
    rng = np.random.default_rng(seed)
    strata = (np.arange(n_patches) + rng.random(n_patches)) / n_patches
    observations = []
    for exposure in exposures:
        if exposure <= 0:
            raise ValueError(f"exposure must be positive, got {exposure}")
        irr = np.clip(strata * exposure, 0.0, 1.0)
        intensity = evaluate(true_curve, irr) + rng.normal(0.0, noise_sigma, n_patches)
        intensity = np.clip(intensity, 0.0, 1.0)
        for j in range(n_patches):
            observations.append(
                Observation(irradiance=float(irr[j]), intensity=float(intensity[j]),
                            exposure=float(exposure))
            )
    return ObservationSet(camera_id=camera_id, channel=channel, observations=tuple(observations))


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


def _objective_from_curve_samples(intensities, irradiances, grid):
    def objective(samples: np.ndarray) -> float:
        est = np.interp(intensities, grid, samples)
        return float(np.mean((est - irradiances) ** 2))

    return objective


def _is_ill_posed(obs: ObservationSet) -> bool:
    intensities = obs.intensities
    return len(obs.observations) < 2 or float(np.ptp(intensities)) == 0.0


def calibrate(obs: ObservationSet, family: str, weights: ae.MLPWeights | None = None,
              basis: EMoRBasis | None = None, n_params: int = 3,
              grid_size: int = 1024) -> CalibrationResult:
    """Estimate the inverse response curve that maps intensity to irradiance.

    family 'slr' searches the decoder latent on [-4, 4] (forward decode,
    numeric inversion); 'gamma' searches log gamma; 'polynomial', 'ggcm'
    and 'emor' run Nelder-Mead on the inverse-curve parameters directly,
    started from identity-equivalent values.
    """
    start = time.perf_counter()
    intensities = obs.intensities
    irradiances = obs.irradiances
    grid = sample_grid(grid_size)
    ill_posed = _is_ill_posed(obs)

    if family == "slr":
        if weights is None:
            raise ValueError("slr calibration requires trained weights")
        obj = _objective_from_curve_samples(
            intensities, irradiances, sample_grid(weights.arch.input_size))
        cache: dict[float, np.ndarray] = {}

        def inverse_samples(z: float) -> np.ndarray:
            if z not in cache:
                curve = ae.decode(weights, np.array([z]))
                cache[z] = invert(curve).samples
            return cache[z]

        z_best, best, evals = grid_then_golden(
            lambda z: obj(inverse_samples(z)), *LATENT_RANGE,
            grid_points=GRID_POINTS, tol=GOLDEN_TOL, golden_budget=GOLDEN_BUDGET,
        )
        inverse = ResponseCurve(f"{obs.camera_id}-slr-inverse", inverse_samples(z_best))
        params = np.array([z_best])
    elif family == "gamma":
        def gamma_obj(log_g: float) -> float:
            est = np.power(intensities, math.exp(log_g))
            return float(np.mean((est - irradiances) ** 2))

        log_best, best, evals = grid_then_golden(
            gamma_obj, *LOG_GAMMA_RANGE,
            grid_points=GRID_POINTS, tol=GOLDEN_TOL, golden_budget=GOLDEN_BUDGET,
        )
        g = math.exp(log_best)
        inverse = normalize(np.power(grid, g), f"{obs.camera_id}-gamma-inverse")
        params = np.array([g])
    elif family in SIMPLEX_FAMILIES:
        params, best, evals, inverse = _calibrate_simplex(
            obs, family, n_params, basis, grid)
    else:
        raise ValueError(f"unknown calibration family {family!r}")

    return CalibrationResult(
        family=family,
        parameters=np.asarray(params, dtype=np.float64),
        inverse_curve=inverse,
        objective_value=float(best),
        evaluations=int(evals),
        wall_time_s=time.perf_counter() - start,
        ill_posed=ill_posed,
    )


def _calibrate_simplex(obs, family, n_params, basis, grid):
    intensities = obs.intensities
    irradiances = obs.irradiances

    if family == "polynomial":
        design = np.column_stack([intensities ** (i + 1) for i in range(n_params)])
        grid_design = np.column_stack([grid ** (i + 1) for i in range(n_params)])

        def value(theta):
            return float(np.mean((design @ theta - irradiances) ** 2))

        def curve_samples(theta):
            return grid_design @ theta

        x0 = np.zeros(n_params)
        x0[0] = 1.0
    elif family == "ggcm":
        positive = intensities > 0

        def value(theta):
            exponent = _exponent_poly(theta, intensities[positive])
            est = np.zeros_like(intensities)
            est[positive] = np.power(intensities[positive], exponent)
            return float(np.mean((est - irradiances) ** 2))

        def curve_samples(theta):
            exponent = _exponent_poly(theta, grid[1:])
            return np.concatenate([[0.0], np.power(grid[1:], exponent)])

        x0 = np.zeros(n_params)
        x0[0] = 1.0
    else:  # emor
        if basis is None:
            raise ValueError("emor calibration requires a basis")
        if n_params > basis.k_max:
            raise ValueError(f"n_params={n_params} exceeds basis size {basis.k_max}")
        h_k = basis.H[:, :n_params]
        basis_grid = sample_grid(basis.n)

        def curve_full(theta):
            return basis.f0 + h_k @ theta

        def value(theta):
            est = np.interp(intensities, basis_grid, curve_full(theta))
            return float(np.mean((est - irradiances) ** 2))

        def curve_samples(theta):
            return np.interp(grid, basis_grid, curve_full(theta))

        x0 = h_k.T @ (basis_grid - basis.f0)

    result = minimize(
        value, x0, method="Nelder-Mead",
        options={"maxfev": NM_MAX_EVALS, "xatol": NM_TOL, "fatol": NM_TOL},
    )
    theta = result.x
    inverse = normalize(curve_samples(theta), f"{obs.camera_id}-{family}-inverse")
    return theta, float(result.fun), int(result.nfev), inverse


def stability(curves) -> float:
    """Total variance: summed per-sample population variance across curves."""
    if len(curves) < 2:
        raise ValueError("need at least 2 curves")
    data = np.stack([c.samples for c in curves])
    if data.ndim != 2:
        raise ValueError("curves must share one grid")
    return float(np.sum(np.var(data, axis=0)))


def rmse_vs_truth(result: CalibrationResult, truth: ResponseCurve) -> float:
    """RMSE between the calibrated inverse curve and the true inverse."""
    est = result.inverse_curve
    if est.n != truth.n:
        raise ValueError(f"grid mismatch: {est.n} vs {truth.n}")
    return float(np.sqrt(np.mean((est.samples - truth.samples) ** 2)))

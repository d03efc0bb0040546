"""Classical parametric response-curve models: gamma, polynomial, GGCM, EMoR.

The EMoR-style basis is a PCA decomposition of a curve collection (mean
curve plus orthonormal eigenvector columns); the other three families are
closed-form curve models fitted per curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .curves import ResponseCurve, normalize, sample_grid
from .optim import golden_section

GAMMA_SEARCH_RANGE = (0.05, 20.0)


class FitDidNotConverge(RuntimeError):
    """Solver hit its iteration cap; carries the best parameters found so far."""

    def __init__(self, message, parameters, rmse):
        super().__init__(message)
        self.parameters = np.asarray(parameters, dtype=np.float64)
        self.rmse = float(rmse)


@dataclass(frozen=True)
class GammaModel:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class PolynomialModel:
    """f(x) = sum_{i=1..M} w_i x^i; no constant term, so f(0) = 0."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        if len(self.coefficients) < 1:
            raise ValueError("polynomial needs at least one coefficient")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def order(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class GGCMModel:
    """f(x) = x ** P(x) with P a polynomial (constant term included)."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        if len(self.coefficients) < 1:
            raise ValueError("exponent polynomial needs at least one coefficient")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))


def eval_gamma(model: GammaModel, x):
    x = np.asarray(x, dtype=np.float64)
    out = np.power(x, model.gamma)
    return float(out) if out.ndim == 0 else out


def eval_polynomial(model: PolynomialModel, x):
    x = np.asarray(x, dtype=np.float64)
    # Horner on sum w_i x^i = x * (w_1 + x * (w_2 + ...))
    acc = np.zeros_like(x)
    for coeff in reversed(model.coefficients):
        acc = acc * x + coeff
    out = acc * x
    return float(out) if out.ndim == 0 else out


def _exponent_poly(coefficients, x):
    acc = np.zeros_like(x)
    for coeff in reversed(coefficients):
        acc = acc * x + coeff
    return acc


def eval_ggcm(model: GGCMModel, x):
    """x ** P(x); the x = 0 value is the limit 0 when P(0) > 0, else a domain error."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    p0 = model.coefficients[0]
    at_zero = x == 0.0
    if np.any(at_zero) and p0 <= 0.0:
        raise ValueError(f"x=0 is outside the model domain (exponent P(0)={p0} <= 0)")
    out = np.empty_like(x)
    nz = ~at_zero
    out[nz] = np.power(x[nz], _exponent_poly(model.coefficients, x[nz]))
    out[at_zero] = 0.0
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# EMoR-style PCA basis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EMoRBasis:
    """Mean curve f0 plus orthonormal eigenvector columns H (N x K).

    eigenvalues holds the K leading sample-covariance eigenvalues in
    non-increasing order; total_energy is the sum over all components, so
    cumulative energy fractions can be formed for any k <= K.
    """

    f0: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    total_energy: float

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=np.float64).copy()
        H = np.asarray(self.H, dtype=np.float64).copy()
        ev = np.asarray(self.eigenvalues, dtype=np.float64).copy()
        if H.shape != (f0.size, ev.size):
            raise ValueError(f"basis shape mismatch: f0 {f0.shape}, H {H.shape}, ev {ev.shape}")
        if np.any(np.diff(ev) > 1e-12):
            raise ValueError("eigenvalues must be non-increasing")
        for arr in (f0, H, ev):
            arr.flags.writeable = False
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def n(self) -> int:
        return self.f0.size

    @property
    def k_max(self) -> int:
        return self.eigenvalues.size

    def energy_fraction(self, k: int) -> float:
        """Cumulative eigenvalue energy of the top k components."""
        if self.total_energy == 0.0:
            return 1.0
        return float(np.sum(self.eigenvalues[:k]) / self.total_energy)


@dataclass(frozen=True)
class EMoRModel:
    basis: EMoRBasis
    c: tuple[float, ...]

    def __post_init__(self):
        if len(self.c) > self.basis.k_max:
            raise ValueError(f"{len(self.c)} coefficients exceed basis size {self.basis.k_max}")
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))


def build_emor_basis(curves, K: int) -> EMoRBasis:
    """PCA basis of a curve collection via SVD of the centered data matrix.

    Eigenvalues are those of the sample covariance (1/(C-1) scaling). Sign
    convention: each eigenvector's largest-magnitude entry is positive.
    """
    data = np.stack([c.samples for c in curves])
    count, n = data.shape
    if count < 2:
        raise ValueError("need at least 2 curves")
    if K > min(n, count):
        raise ValueError(f"K={K} exceeds min(sample count {n}, curve count {count})")
    f0 = data.mean(axis=0)
    centered = data - f0
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    eigenvalues = s**2 / (count - 1)
    vectors = vt[:K].T
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            vectors[:, j] = -col
    return EMoRBasis(
        f0=f0,
        H=vectors,
        eigenvalues=eigenvalues[:K],
        total_energy=float(np.sum(eigenvalues)),
    )


def emor_project(curve: ResponseCurve, basis: EMoRBasis, k: int) -> EMoRModel:
    """Coefficients c = H_k^T (f - f0)."""
    if k > basis.k_max:
        raise ValueError(f"k={k} exceeds basis size {basis.k_max}")
    coeffs = basis.H[:, :k].T @ (curve.samples - basis.f0)
    return EMoRModel(basis=basis, c=tuple(coeffs))


def emor_reconstruct(model: EMoRModel) -> ResponseCurve:
    """f0 + sum_i c_i h_i, endpoint-normalized."""
    raw = model.basis.f0 + model.basis.H[:, : len(model.c)] @ np.asarray(model.c)
    return normalize(raw, curve_id="emor-reconstruction")


def emor_raw_reconstruction(model: EMoRModel) -> np.ndarray:
    """Unnormalized reconstruction, used by the fitting metrics."""
    return model.basis.f0 + model.basis.H[:, : len(model.c)] @ np.asarray(model.c)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def _rmse(u, v) -> float:
    return float(np.sqrt(np.mean((np.asarray(u) - np.asarray(v)) ** 2)))


def fit_gamma(curve: ResponseCurve) -> tuple[GammaModel, float]:
    """Golden-section search on log gamma minimizing RMSE on the curve grid."""
    grid = curve.grid
    target = curve.samples

    def objective(log_gamma: float) -> float:
        return _rmse(np.power(grid, math.exp(log_gamma)), target)

    lo, hi = GAMMA_SEARCH_RANGE
    log_best, _ = golden_section(objective, math.log(lo), math.log(hi), tol=1e-10,
                                 max_evals=200)
    model = GammaModel(gamma=math.exp(log_best))
    return model, _rmse(eval_gamma(model, grid), target)


def fit_polynomial(curve: ResponseCurve, n_params: int) -> tuple[PolynomialModel, float]:
    """Unconstrained linear least squares on the monomial design matrix."""
    grid = curve.grid
    design = np.column_stack([grid ** (i + 1) for i in range(n_params)])
    coeffs, *_ = np.linalg.lstsq(design, curve.samples, rcond=None)
    model = PolynomialModel(coefficients=tuple(coeffs))
    return model, _rmse(design @ coeffs, curve.samples)


def _ggcm_rmse_full_grid(model: GGCMModel, curve: ResponseCurve) -> float:
    """Reported RMSE on the full grid, with the x=0 limit convention."""
    grid = curve.grid
    p0 = model.coefficients[0]
    if p0 > 0:
        fitted = eval_ggcm(model, grid)
    elif p0 == 0:
        fitted = np.concatenate([[1.0], eval_ggcm(model, grid[1:])])
    else:
        return math.inf
    return _rmse(fitted, curve.samples)


def fit_ggcm(curve: ResponseCurve, n_params: int) -> tuple[GGCMModel, float]:
    """Nelder-Mead on the exponent polynomial, started at the plain-gamma point.

    The x=0 sample is excluded from the optimization objective (the model is
    defined there only by limit); the reported RMSE covers the full grid.
    """
    grid = curve.grid[1:]
    target = curve.samples[1:]
    log_x = np.log(grid)

    def objective(coeffs: np.ndarray) -> float:
        exponent = _exponent_poly(coeffs, grid)
        return _rmse(np.exp(exponent * log_x), target)

    x0 = np.zeros(n_params)
    x0[0] = 1.0
    result = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-10},
    )
    model = GGCMModel(coefficients=tuple(result.x))
    rmse = _ggcm_rmse_full_grid(model, curve)
    if not result.success:
        raise FitDidNotConverge(
            f"GGCM fit hit the iteration cap on curve {curve.id!r}", result.x, rmse
        )
    return model, rmse


def fit_emor(curve: ResponseCurve, basis: EMoRBasis, k: int) -> tuple[EMoRModel, float]:
    """Closed-form projection onto the leading k basis vectors."""
    model = emor_project(curve, basis, k)
    return model, _rmse(emor_raw_reconstruction(model), curve.samples)


def fit_model(family: str, curve: ResponseCurve, n_params: int, basis: EMoRBasis | None = None):
    """Fit one model family to a curve; returns (model, rmse on the curve grid)."""
    if n_params < 1:
        raise ValueError("n_params must be >= 1")
    if family == "gamma":
        if n_params != 1:
            raise ValueError("the gamma family has exactly one parameter")
        return fit_gamma(curve)
    if family == "polynomial":
        return fit_polynomial(curve, n_params)
    if family == "ggcm":
        return fit_ggcm(curve, n_params)
    if family == "emor":
        if basis is None:
            raise ValueError("emor fitting requires a basis")
        return fit_emor(curve, basis, n_params)
    raise ValueError(f"unknown model family {family!r}")


def export_basis_csv(basis: EMoRBasis) -> tuple[str, str]:
    """(basis CSV, eigenvalue CSV): column 1 f0, columns 2..K+1 eigenvectors."""
    header = ",".join(["f0"] + [f"h{j + 1}" for j in range(basis.k_max)])
    rows = [header]
    table = np.column_stack([basis.f0, basis.H])
    for row in table:
        rows.append(",".join(repr(v) for v in row))
    eig_rows = ["eigenvalue"] + [repr(v) for v in basis.eigenvalues]
    return "\n".join(rows) + "\n", "\n".join(eig_rows) + "\n"

import numpy as np
import pytest

from crf_atlas import autoencoder as ae
from crf_atlas import curves as cv


def make_gamma_curve(gamma: float, n: int = 1024, curve_id: str | None = None) -> cv.ResponseCurve:
    grid = cv.sample_grid(n)
    return cv.normalize(grid**gamma, curve_id or f"gamma-{gamma}")


def make_random_monotone(rng: np.random.Generator, n: int = 1024) -> cv.ResponseCurve:
    steps = rng.random(n - 1) ** 2
    samples = np.concatenate([[0.0], np.cumsum(steps)])
    return cv.normalize(samples, "random-monotone")


@pytest.fixture(scope="session")
def gamma_family_curves():
    """Small deterministic curve population used across module tests."""
    rng = np.random.default_rng(11)
    gammas = np.exp(rng.normal(-0.4, 0.4, 24)).clip(0.3, 3.0)
    return [make_gamma_curve(g, curve_id=f"fixture-{i}") for i, g in enumerate(gammas)]


@pytest.fixture(scope="session")
def tiny_trained_model():
    """Small model trained on 64-sample gamma curves (for latent-search tests)."""
    n = 64
    grid = cv.sample_grid(n)
    rng = np.random.default_rng(7)
    gammas = np.exp(rng.normal(-0.5, 0.35, 24)).clip(0.3, 2.8)
    curves = [cv.normalize(grid**g, f"tt-{i}") for i, g in enumerate(gammas)]
    arch = ae.ArchSpec(encoder_hidden=(32,), input_size=n, latent_dim=1, dropout_keep=1.0)
    weights, report = None, None
    for stage, (lr, epochs) in enumerate(((3e-3, 2500), (5e-4, 1500), (1e-4, 1000))):
        config = ae.TrainConfig(epochs=epochs, learning_rate=lr, seed=2 + stage,
                                constraint="ldl", lambda_smooth=1e-5)
        weights, report = ae.train(curves, arch, config, initial_weights=weights)
    return weights, curves, report


@pytest.fixture(scope="session")
def small_dorf_file(tmp_path_factory):
    """Eight-record curve database document in the six-line format."""
    curves = [make_gamma_curve(g, curve_id=f"doc-{i}")
              for i, g in enumerate((0.4, 0.55, 0.7, 0.9, 1.1, 1.4, 1.9, 2.5))]
    path = tmp_path_factory.mktemp("dorf") / "small_dorf.txt"
    path.write_text(cv.write_dorf(curves))
    return path

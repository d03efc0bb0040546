import numpy as np

from crf_atlas import datasets


def test_generator_deterministic():
    a = datasets.generate_synthetic_curves()
    b = datasets.generate_synthetic_curves()
    assert len(a) == 201
    for c1, c2 in zip(a, b):
        assert c1.id == c2.id
        assert np.array_equal(c1.samples, c2.samples)


def test_generated_curves_are_valid_and_monotone():
    curves = datasets.generate_synthetic_curves()
    for curve in curves[:20]:
        assert curve.n == 1024
        assert curve.samples[0] == 0.0 and curve.samples[-1] == 1.0
        assert np.all(np.diff(curve.samples) >= 0)


def test_bundled_dorf_parses():
    curves = datasets.load_bundled_dorf()
    assert len(curves) == 201
    assert all(c.n == 1024 for c in curves)


def test_split_train_holdout():
    curves = datasets.load_bundled_dorf()
    train, held = datasets.split_train_holdout(curves)
    assert len(held) == 14
    assert len(train) == 187
    held_ids = {c.id for c in held}
    assert all(c.id not in held_ids for c in train)


def test_asset_paths_exist():
    assert datasets.asset_path(datasets.BUNDLED_DORF).exists()

import numpy as np
import pytest

from streamridge.analysis import prototype_correlations
from streamridge.errors import TooManyClasses
from streamridge.synthgen import SynthSpec, class_means, generate


def test_deterministic():
    spec = SynthSpec(num_classes=6, dim=32, samples_per_class=20, seed=9)
    a = generate(spec)
    b = generate(spec)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_orthogonal_means_when_rho_zero():
    spec = SynthSpec(num_classes=8, dim=64, samples_per_class=5,
                     common_strength=0.0, noise=0.01, seed=1)
    means = class_means(spec)
    corr = prototype_correlations(means, stage="raw")
    assert corr.mean_abs_offdiag() < 0.15


def test_strong_common_direction_correlates_means():
    spec = SynthSpec(num_classes=10, dim=96, samples_per_class=5,
                     common_strength=0.95, noise=0.01, seed=2)
    means = class_means(spec)
    corr = prototype_correlations(means, stage="raw")
    assert corr.mean_abs_offdiag() > 0.8


def test_mean_geometry():
    spec = SynthSpec(num_classes=5, dim=40, samples_per_class=3,
                     common_strength=0.6, noise=0.1, seed=3)
    means = class_means(spec)
    # unit norms and pairwise dot = rho^2 by construction
    assert np.allclose(np.linalg.norm(means, axis=1), 1.0)
    dots = means @ means.T
    off = dots[~np.eye(5, dtype=bool)]
    assert np.allclose(off, 0.36, atol=1e-9)


def test_law_of_large_numbers():
    spec = SynthSpec(num_classes=3, dim=16, samples_per_class=1000,
                     common_strength=0.4, noise=0.5, seed=4)
    ds = generate(spec)
    means = class_means(spec)
    for cls in range(3):
        emp = ds.features[ds.labels == cls].mean(axis=0)
        # per-component tolerance: 5 sigma / sqrt(n)
        assert np.abs(emp - means[cls]).max() < 5 * 0.5 / np.sqrt(1000)


def test_generated_dataset_validates():
    ds = generate(SynthSpec(num_classes=4, dim=20, samples_per_class=10, seed=5))
    ds.validate()
    assert ds.n == 40
    assert ds.num_classes == 4


def test_too_many_classes():
    with pytest.raises(TooManyClasses):
        generate(SynthSpec(num_classes=20, dim=20, samples_per_class=2, seed=0))


def test_invalid_params():
    with pytest.raises(ValueError):
        SynthSpec(3, 16, 5, common_strength=1.0).validate()
    with pytest.raises(ValueError):
        SynthSpec(3, 16, 5, noise=0.0).validate()

"""Synthetic multicollinear class clusters.

Class means share a controllable common direction: mean_i = rho * u +
sqrt(1 - rho^2) * q_i where u is a fixed random unit vector and the q_i are
mutually orthonormal directions orthogonal to u (QR of a seeded Gaussian
block).  rho near 1 reproduces the prototype-crowding regime every
decorrelation claim is tested against; rho = 0 gives orthogonal class means.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .embed_store import EmbeddingDataset
from .errors import TooManyClasses


@dataclass
class SynthSpec:
    num_classes: int
    dim: int
    samples_per_class: int
    common_strength: float = 0.5   # rho in [0, 1)
    noise: float = 0.1             # within-class sigma, > 0
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.common_strength < 1.0:
            raise ValueError(f"common_strength must be in [0, 1), got {self.common_strength}")
        if self.noise <= 0:
            raise ValueError(f"noise must be positive, got {self.noise}")
        if self.num_classes < 1 or self.dim < 1 or self.samples_per_class < 1:
            raise ValueError("num_classes, dim, samples_per_class must be positive")
        # one slot is used by the shared direction
        if self.num_classes >= self.dim:
            raise TooManyClasses(self.num_classes, self.dim)


def class_means(spec: SynthSpec) -> np.ndarray:
    """(num_classes, dim) ground-truth means; deterministic in the seed."""
    spec.validate()
    c, d, rho = spec.num_classes, spec.dim, spec.common_strength
    raw = rng.normals(spec.seed, rng.STREAM_SYNTH_DIRS, 0, (c + 1) * d)
    block = raw.reshape(c + 1, d).T  # columns: shared direction then class dirs
    q, r = np.linalg.qr(block)
    # fix the sign convention so the result is unique
    q = q * np.sign(np.diag(r))[None, :]
    u = q[:, 0]
    ortho = q[:, 1:].T
    return rho * u[None, :] + np.sqrt(1.0 - rho * rho) * ortho


def generate(spec: SynthSpec) -> EmbeddingDataset:
    """Sample spec.samples_per_class points around each class mean."""
    means = class_means(spec)
    c, d, n_per = spec.num_classes, spec.dim, spec.samples_per_class
    noise = rng.normals(spec.seed, rng.STREAM_SYNTH_NOISE, 0, c * n_per * d)
    noise = noise.reshape(c * n_per, d) * spec.noise
    features = np.repeat(means, n_per, axis=0) + noise
    labels = np.repeat(np.arange(c, dtype=np.int64), n_per)
    ds = EmbeddingDataset(features=features, labels=labels, num_classes=c)
    ds.validate()
    return ds

"""Sparse conditional vectors for the generator.

A mask bit per discrete one-hot slot is drawn by thresholding chi-squared
samples at 1/2; the masked copy of a real record's discrete slots is the
condition the generator (and discriminators) see. Pairing each drawn
condition with the record it came from gives training-by-sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import RecordLayout

DEFAULT_DOF = 2


@dataclass(frozen=True)
class MaskConfig:
    """Degrees of freedom for the chi-squared mask draw."""

    dof: int = DEFAULT_DOF
    seed: int = 0

    def __post_init__(self):
        if self.dof < 1:
            raise ValueError("dof must be >= 1")


@dataclass(frozen=True)
class ConditionVector:
    bits: np.ndarray           # {0,1} per discrete slot
    alphas: np.ndarray         # the chi-squared draws behind the bits
    masked_values: np.ndarray  # bits * reference record's discrete slots

    def check(self) -> None:
        assert ((self.bits == 1) == (self.alphas < 0.5)).all()
        assert (self.masked_values[self.bits == 0] == 0).all()


def draw_mask(n_t: int, config: MaskConfig, rng: np.random.Generator):
    """Draw alphas i.i.d. chi-squared(dof); bit is 1 iff alpha < 1/2 (strict)."""
    if n_t < 0:
        raise ValueError("n_t must be >= 0")
    alphas = rng.chisquare(config.dof, size=n_t)
    bits = (alphas < 0.5).astype(float)
    return bits, alphas


def build_condition(
    record: np.ndarray,
    layout: RecordLayout,
    config: MaskConfig,
    rng: np.random.Generator,
) -> ConditionVector:
    """Mask the record's discrete slots; a zero-width condition is valid for
    schemas with no discrete columns."""
    n_t = layout.n_t
    bits, alphas = draw_mask(n_t, config, rng)
    discrete_slots = np.asarray(record, dtype=float)[layout.discrete_start : layout.discrete_start + n_t]
    return ConditionVector(bits=bits, alphas=alphas, masked_values=bits * discrete_slots)


def sample_training_batch(
    encoded: np.ndarray,
    layout: RecordLayout,
    batch: int,
    config: MaskConfig,
    rng: np.random.Generator,
):
    """Uniformly sample real encoded records and pair each with a fresh
    condition built from that same record."""
    if len(encoded) == 0:
        raise ValueError("empty dataset")
    if batch <= 0:
        raise ValueError("batch must be > 0")
    idx = rng.integers(0, len(encoded), size=batch)
    return [(encoded[i], build_condition(encoded[i], layout, config, rng)) for i in idx]


def draw_condition_batch(
    encoded: np.ndarray,
    layout: RecordLayout,
    batch: int,
    config: MaskConfig,
    rng: np.random.Generator,
):
    """Vectorized equivalent of sample_training_batch for the training loop:
    returns (real records, masked condition values) as dense matrices."""
    if len(encoded) == 0:
        raise ValueError("empty dataset")
    if batch <= 0:
        raise ValueError("batch must be > 0")
    idx = rng.integers(0, len(encoded), size=batch)
    real = np.asarray(encoded)[idx]
    n_t = layout.n_t
    alphas = rng.chisquare(config.dof, size=(batch, n_t))
    bits = (alphas < 0.5).astype(float)
    start = layout.discrete_start
    return real, bits * real[:, start : start + n_t]

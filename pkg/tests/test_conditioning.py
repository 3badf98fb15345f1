import numpy as np
import pytest
from scipy import stats

from tabsynth.conditioning import (
    MaskConfig,
    build_condition,
    draw_condition_batch,
    draw_mask,
    sample_training_batch,
)
from tabsynth.schema import ColumnKind, ColumnMeta, TableSchema, build_layout


@pytest.fixture
def layout():
    schema = TableSchema(
        columns=(
            ColumnMeta("x", ColumnKind.CONTINUOUS),
            ColumnMeta("d", ColumnKind.DISCRETE, ("p", "q", "r")),
            ColumnMeta("b", ColumnKind.BINARY, ("n", "y")),
        )
    )
    return build_layout(schema, modes=2)


def encoded_record(layout, scalar=0.2, mode=0, d_idx=1, b_idx=0):
    vec = np.zeros(layout.total_width)
    vec[0] = scalar
    vec[1 + mode] = 1.0
    vec[layout.discrete_start + d_idx] = 1.0
    vec[layout.discrete_start + 3 + b_idx] = 1.0
    return vec


class TestDrawMask:
    def test_threshold_is_strict_at_half(self):
        # piecewise rule checked directly on the boundary values
        for alpha, expected in [(0.3, 1.0), (0.7, 0.0), (0.5, 0.0)]:
            assert float(alpha < 0.5) == expected

    def test_bit_density_dof2(self):
        # P(chi2_2 < 0.5) = 1 - exp(-1/4), frozen from the closed-form CDF
        bits, _ = draw_mask(100_000, MaskConfig(dof=2), np.random.default_rng(0))
        assert bits.mean() == pytest.approx(1 - np.exp(-0.25), abs=0.01)

    def test_bit_density_dof8(self):
        # numerical CDF value: P(chi2_8 < 0.5) ~= 1.4e-4
        bits, _ = draw_mask(100_000, MaskConfig(dof=8), np.random.default_rng(0))
        assert bits.mean() <= 0.002

    def test_alphas_follow_chi2(self):
        for dof in (1, 2, 4, 8):
            _, alphas = draw_mask(10_000, MaskConfig(dof=dof), np.random.default_rng(dof))
            _, p = stats.kstest(alphas, stats.chi2(dof).cdf)
            assert p > 0.01, f"dof={dof}"

    def test_bits_consistent_with_alphas(self):
        bits, alphas = draw_mask(1000, MaskConfig(dof=2), np.random.default_rng(1))
        assert ((alphas < 0.5) == (bits == 1.0)).all()

    def test_sparsity_decreases_with_dof(self):
        densities = []
        for dof in (1, 2, 4, 8):
            bits, _ = draw_mask(100_000, MaskConfig(dof=dof), np.random.default_rng(0))
            densities.append(bits.mean())
        assert densities == sorted(densities, reverse=True)
        assert len(set(densities)) == len(densities)

    def test_zero_slots_allowed(self):
        bits, alphas = draw_mask(0, MaskConfig(dof=2), np.random.default_rng(0))
        assert bits.size == 0 and alphas.size == 0

    def test_dof_must_be_positive(self):
        with pytest.raises(ValueError):
            MaskConfig(dof=0)


class TestBuildCondition:
    def test_all_bits_off_gives_zero_condition(self, layout, monkeypatch):
        record = encoded_record(layout)

        class AllBig:
            def chisquare(self, dof, size):
                return np.full(size, 5.0)

        cv = build_condition(record, layout, MaskConfig(dof=2), AllBig())
        assert (cv.masked_values == 0).all()

    def test_all_bits_on_reveals_discrete_slots(self, layout):
        record = encoded_record(layout)

        class AllSmall:
            def chisquare(self, dof, size):
                return np.full(size, 0.1)

        cv = build_condition(record, layout, MaskConfig(dof=2), AllSmall())
        expected = record[layout.discrete_start :]
        assert (cv.masked_values == expected).all()

    def test_elementwise_product(self, layout):
        record = encoded_record(layout, d_idx=1)

        class Fixed:
            def __init__(self, alphas):
                self._a = np.asarray(alphas, dtype=float)

            def chisquare(self, dof, size):
                return self._a

        # one-hot [0,1,0] with bits [1,0,1] masks to all zeros
        cv = build_condition(record, layout, MaskConfig(dof=2), Fixed([0.1, 0.9, 0.1, 0.9, 0.9]))
        assert cv.masked_values[:3].tolist() == [0.0, 0.0, 0.0]
        cv.check()

    def test_never_invents_values(self, layout):
        record = encoded_record(layout)
        rng = np.random.default_rng(0)
        for _ in range(50):
            cv = build_condition(record, layout, MaskConfig(dof=2), rng)
            slots = record[layout.discrete_start :]
            assert all(v in (0.0, s) for v, s in zip(cv.masked_values, slots))


class TestSampleTrainingBatch:
    def _encoded(self, layout, n=4):
        return np.stack([encoded_record(layout, d_idx=i % 3, b_idx=i % 2) for i in range(n)])

    def test_batch_of_500_from_four_rows(self, layout):
        encoded = self._encoded(layout)
        pairs = sample_training_batch(encoded, layout, 500, MaskConfig(dof=2), np.random.default_rng(0))
        assert len(pairs) == 500
        for rec, cv in pairs[:20]:
            assert any((rec == row).all() for row in encoded)
            cv.check()

    def test_deterministic_given_seed(self, layout):
        encoded = self._encoded(layout)
        a = sample_training_batch(encoded, layout, 50, MaskConfig(dof=2), np.random.default_rng(9))
        b = sample_training_batch(encoded, layout, 50, MaskConfig(dof=2), np.random.default_rng(9))
        for (ra, ca), (rb, cb) in zip(a, b):
            assert (ra == rb).all()
            assert (ca.masked_values == cb.masked_values).all()
            assert (ca.alphas == cb.alphas).all()

    def test_empty_dataset_rejected(self, layout):
        with pytest.raises(ValueError, match="empty"):
            sample_training_batch(np.zeros((0, layout.total_width)), layout, 5, MaskConfig(), np.random.default_rng(0))

    def test_nonpositive_batch_rejected(self, layout):
        encoded = self._encoded(layout)
        with pytest.raises(ValueError, match="batch"):
            sample_training_batch(encoded, layout, 0, MaskConfig(), np.random.default_rng(0))

    def test_vectorized_path_matches_contract(self, layout):
        encoded = self._encoded(layout)
        real, cond = draw_condition_batch(encoded, layout, 64, MaskConfig(dof=2), np.random.default_rng(3))
        assert real.shape == (64, layout.total_width)
        assert cond.shape == (64, layout.n_t)
        slots = real[:, layout.discrete_start :]
        assert np.all((cond == 0) | (cond == slots))

import numpy as np
import pytest

from comptll import dct_core as dc


def fdct_reference(block, level_shift):
    """Literal transcription of the transform definition: for each (u, v),
    sum b[i,j] * cos((2i+1)u*pi/16) * cos((2j+1)v*pi/16), scaled by
    c_u*c_v/4. Independent of the matrix-product implementation."""
    b = np.asarray(block, dtype=np.float64)
    if level_shift:
        b = b - 128.0
    i = np.arange(8)
    out = np.zeros((8, 8))
    for u in range(8):
        cu = 1 / np.sqrt(2) if u == 0 else 1.0
        ci = np.cos((2 * i + 1) * u * np.pi / 16)
        for v in range(8):
            cv = 1 / np.sqrt(2) if v == 0 else 1.0
            cj = np.cos((2 * i + 1) * v * np.pi / 16)
            out[u, v] = cu * cv / 4 * np.sum(b * np.outer(ci, cj))
    return out


class TestFdct:
    def test_uniform_128_shifted_is_zero(self):
        out = dc.fdct(np.full((8, 8), 128), level_shift=True)
        np.testing.assert_allclose(out, 0.0, atol=1e-10)

    def test_uniform_244_unshifted_dc(self):
        out = dc.fdct(np.full((8, 8), 244), level_shift=False)
        assert out[0, 0] == pytest.approx(1952.0, abs=1e-9)
        assert np.abs(out).sum() == pytest.approx(1952.0, abs=1e-8)

    def test_uniform_244_shifted_dc(self):
        out = dc.fdct(np.full((8, 8), 244), level_shift=True)
        assert out[0, 0] == pytest.approx(928.0, abs=1e-9)

    def test_dc_is_eight_times_mean(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            b = rng.integers(0, 256, size=(8, 8))
            out = dc.fdct(b, level_shift=False)
            assert out[0, 0] == pytest.approx(8 * b.mean(), abs=1e-9)

    @pytest.mark.parametrize("level_shift", [False, True])
    def test_matches_brute_force(self, level_shift):
        rng = np.random.default_rng(7)
        for _ in range(200):
            b = rng.integers(0, 256, size=(8, 8))
            got = dc.fdct(b, level_shift=level_shift)
            want = fdct_reference(b, level_shift)
            assert np.max(np.abs(got - want)) < 1e-9

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            dc.fdct(np.zeros((4, 4)))


class TestIdct:
    def test_zero_coeffs_give_128(self):
        out = dc.idct(np.zeros((8, 8)), level_shift=True)
        assert (out == 128).all()

    def test_uniform_round_trip(self):
        b = np.full((8, 8), 244)
        assert (dc.idct(dc.fdct(b)) == 244).all()

    def test_random_round_trip_exact(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            b = rng.integers(0, 256, size=(8, 8))
            assert (dc.idct(dc.fdct(b)).astype(np.int64) == b).all()

    def test_energy_preservation(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            b = rng.integers(0, 256, size=(8, 8)).astype(np.float64) - 128
            coeffs = dc.fdct(b + 128, level_shift=True)
            e_spatial = np.sum(b * b)
            e_freq = np.sum(coeffs * coeffs)
            assert e_freq == pytest.approx(e_spatial, rel=1e-6)


class TestQuantize:
    def table(self, value=16):
        return dc.QuantTable(np.full((8, 8), value), 50)

    def test_worked_dc(self):
        coeffs = np.zeros((8, 8))
        coeffs[0, 0] = 1952.0
        q = dc.quantize(coeffs, self.table())
        assert q[0, 0] == 122
        assert np.abs(q).sum() == 122

    def test_zero_block(self):
        assert (dc.quantize(np.zeros((8, 8)), self.table()) == 0).all()

    def test_half_away_from_zero(self):
        coeffs = np.zeros((8, 8))
        coeffs[0, 1] = -24.0   # -1.5 rounds to -2
        coeffs[0, 2] = 24.0    # +1.5 rounds to +2
        q = dc.quantize(coeffs, self.table())
        assert q[0, 1] == -2
        assert q[0, 2] == 2

    def test_monotone_per_coefficient(self):
        t = self.table(13)
        rng = np.random.default_rng(3)
        base = rng.uniform(-500, 500, size=(8, 8))
        q0 = dc.quantize(base, t)
        bumped = base.copy()
        bumped[3, 4] += 40.0
        q1 = dc.quantize(bumped, t)
        assert q1[3, 4] >= q0[3, 4]

    def test_dequantize_error_bound(self):
        t = dc.scale_quant_table(dc.BASE_LUMA_TABLE, 50)
        rng = np.random.default_rng(17)
        for _ in range(50):
            coeffs = rng.uniform(-1000, 1000, size=(8, 8))
            err = np.abs(dc.dequantize(dc.quantize(coeffs, t), t) - coeffs)
            assert (err <= t.q / 2 + 1e-9).all()

    def test_quantize_dequantize_idempotent(self):
        t = dc.scale_quant_table(dc.BASE_LUMA_TABLE, 50)
        rng = np.random.default_rng(19)
        for _ in range(50):
            q = rng.integers(-100, 100, size=(8, 8))
            again = dc.quantize(dc.dequantize(q, t), t)
            assert (again == q).all()

    def test_dequantize_worked(self):
        q = np.zeros((8, 8), dtype=int)
        q[0, 0] = 122
        assert dc.dequantize(q, self.table())[0, 0] == 1952.0


class TestScaleQuantTable:
    def test_quality_50_is_base(self):
        t = dc.scale_quant_table(dc.BASE_LUMA_TABLE, 50)
        assert (t.q == dc.BASE_LUMA_TABLE).all()
        assert t.quality == 50

    def test_quality_100_all_ones(self):
        assert (dc.scale_quant_table(dc.BASE_LUMA_TABLE, 100).q == 1).all()

    def test_quality_1_clamps(self):
        t = dc.scale_quant_table(dc.BASE_LUMA_TABLE, 1)
        assert t.q[0, 0] == 255

    @pytest.mark.parametrize("bad", [0, 101, -5])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(ValueError):
            dc.scale_quant_table(dc.BASE_LUMA_TABLE, bad)

    def test_entries_never_below_one(self):
        for quality in (1, 25, 75, 99, 100):
            assert dc.scale_quant_table(dc.BASE_LUMA_TABLE, quality).q.min() >= 1


class TestZigzag:
    def test_first_three_positions(self):
        b = np.arange(64).reshape(8, 8)
        seq = dc.zigzag(b)
        assert seq[0] == b[0, 0]
        assert seq[1] == b[0, 1]
        assert seq[2] == b[1, 0]

    def test_is_permutation(self):
        seq = dc.zigzag(np.arange(64).reshape(8, 8))
        assert sorted(seq) == list(range(64))

    def test_round_trip(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            b = rng.integers(-1000, 1000, size=(8, 8))
            assert (dc.inverse_zigzag(dc.zigzag(b)) == b).all()


class TestQuantTable:
    def test_rejects_zero_entry(self):
        q = np.ones((8, 8), dtype=int)
        q[0, 0] = 0
        with pytest.raises(ValueError):
            dc.QuantTable(q, 50)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            dc.QuantTable(np.ones((4, 4), dtype=int), 50)

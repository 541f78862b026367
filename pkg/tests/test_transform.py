import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridvid.errors import ShapeError
from gridvid.grids import OccupancyMask, occupancy_from_grid
from gridvid.transform import (
    CUBE,
    ZIGZAG,
    PCABasis,
    QuantizationSpec,
    dct3,
    default_q_matrix,
    dequantize,
    idct3,
    pca_backproject,
    pca_fit,
    pca_project,
    quantize,
    tile_cubes,
    unzigzag3,
    untile_cubes,
    zigzag3,
)


def dct3_reference(cube):
    """Direct O(N^6) evaluation of the 3D type-II orthonormal DCT."""
    n = CUBE
    out = np.zeros((n, n, n))
    scale = np.full(n, np.sqrt(2.0 / n))
    scale[0] = np.sqrt(1.0 / n)
    for u in range(n):
        for v in range(n):
            for w in range(n):
                acc = 0.0
                for i in range(n):
                    for j in range(n):
                        for k in range(n):
                            acc += (cube[i, j, k]
                                    * np.cos((2 * i + 1) * u * np.pi / (2 * n))
                                    * np.cos((2 * j + 1) * v * np.pi / (2 * n))
                                    * np.cos((2 * k + 1) * w * np.pi / (2 * n)))
                out[u, v, w] = scale[u] * scale[v] * scale[w] * acc
    return out


class TestDct:
    def test_constant_cube_dc(self):
        coeffs = dct3(np.ones((8, 8, 8)))
        assert abs(coeffs[0, 0, 0] - 22.627417) < 1e-5
        ac = coeffs.copy()
        ac[0, 0, 0] = 0.0
        assert np.abs(ac).max() < 1e-5

    def test_single_cosine_concentrates(self):
        i = np.arange(8)
        cube = np.broadcast_to(np.cos((2 * i + 1) * np.pi / 16)[:, None, None], (8, 8, 8)).copy()
        coeffs = dct3(cube)
        expected = np.zeros((8, 8, 8))
        expected[1, 0, 0] = coeffs[1, 0, 0]
        assert np.abs(coeffs - expected).max() < 1e-10
        assert abs(coeffs[1, 0, 0]) > 1.0

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        cube = rng.normal(size=(8, 8, 8))
        assert np.abs(dct3(cube) - dct3_reference(cube)).max() < 1e-9

    def test_round_trip_and_energy(self):
        rng = np.random.default_rng(1)
        cubes = rng.normal(size=(100, 8, 8, 8))
        coeffs = dct3(cubes)
        assert np.abs(idct3(coeffs) - cubes).max() < 1e-5
        energy_in = (cubes ** 2).sum(axis=(1, 2, 3))
        energy_out = (coeffs ** 2).sum(axis=(1, 2, 3))
        assert np.abs(energy_out - energy_in).max() / energy_in.max() < 1e-4


class TestQuantize:
    def test_direct_example(self):
        spec = QuantizationSpec(1.0, np.full((8, 8, 8), 2.0))
        coeffs = np.full((8, 8, 8), 10.6)
        assert np.all(quantize(coeffs, spec) == 5)

    def test_half_away_from_zero(self):
        spec = QuantizationSpec(1.0, np.ones((8, 8, 8)))
        coeffs = np.full((8, 8, 8), 2.5)
        assert np.all(quantize(coeffs, spec) == 3)
        assert np.all(quantize(-coeffs, spec) == -3)

    def test_error_bound_elementwise(self):
        rng = np.random.default_rng(2)
        q = rng.uniform(0.5, 40, size=(8, 8, 8))
        spec = QuantizationSpec(0.37, q)
        coeffs = rng.normal(scale=50, size=(20, 8, 8, 8))
        err = np.abs(dequantize(quantize(coeffs, spec), spec) - coeffs)
        assert np.all(err <= 0.5 * spec.step + 1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        spec = QuantizationSpec(0.2, default_q_matrix())
        coeffs = rng.normal(scale=30, size=(5, 8, 8, 8))
        once = quantize(coeffs, spec)
        again = quantize(dequantize(once, spec), spec)
        assert np.array_equal(once, again)

    def test_small_scale_bound(self):
        spec = QuantizationSpec(1e-4, np.ones((8, 8, 8)))
        coeffs = np.round(np.random.default_rng(4).normal(size=(8, 8, 8)), 4)
        err = np.abs(dequantize(quantize(coeffs, spec), spec) - coeffs)
        assert np.all(err <= 0.5 * 1e-4 + 1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            QuantizationSpec(0.0, np.ones((8, 8, 8)))
        with pytest.raises(ValueError):
            QuantizationSpec(1.0, np.zeros((8, 8, 8)))


class TestZigzag:
    def test_dc_first_and_declared_prefix(self):
        assert ZIGZAG[0].tolist() == [0, 0, 0]
        assert ZIGZAG[:4].tolist() == [[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0]]

    def test_is_permutation(self):
        flat = ZIGZAG[:, 0] * 64 + ZIGZAG[:, 1] * 8 + ZIGZAG[:, 2]
        assert sorted(flat.tolist()) == list(range(512))

    def test_order_matches_rule(self):
        sums = ZIGZAG.sum(axis=1)
        assert np.all(np.diff(sums) >= 0)
        for s in range(22):
            block = ZIGZAG[sums == s]
            assert block.tolist() == sorted(block.tolist())

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_round_trip(self, seed):
        cube = np.random.default_rng(seed).integers(-100, 100, size=(8, 8, 8))
        assert np.array_equal(unzigzag3(zigzag3(cube)), cube)

    def test_batched(self):
        rng = np.random.default_rng(5)
        cubes = rng.normal(size=(7, 8, 8, 8))
        assert np.array_equal(unzigzag3(zigzag3(cubes)), cubes)


class TestTiling:
    def test_full_16_cube(self):
        tensor = np.random.default_rng(6).normal(size=(16, 16, 16))
        mask = occupancy_from_grid(np.ones_like(tensor), 8)
        origins, cubes = tile_cubes(tensor, mask)
        assert len(cubes) == 8
        assert np.array_equal(untile_cubes(origins, cubes, (16, 16, 16)), tensor)

    def test_250_axis_padding(self):
        tensor = np.zeros((250, 8, 8))
        tensor[:] = 1.0
        mask = occupancy_from_grid(tensor, 8)
        origins, cubes = tile_cubes(tensor, mask)
        assert mask.occupied.shape[0] == 32
        assert len(cubes) == 32
        assert np.all(cubes[-1][2:, :, :] == 0.0)
        assert np.array_equal(untile_cubes(origins, cubes, tensor.shape), tensor)

    def test_sparse_round_trip(self):
        rng = np.random.default_rng(7)
        tensor = np.where(rng.uniform(size=(24, 40, 17)) < 0.002, rng.normal(size=(24, 40, 17)), 0.0)
        mask = occupancy_from_grid(tensor, 8)
        origins, cubes = tile_cubes(tensor, mask)
        assert len(cubes) == mask.cube_count
        assert np.array_equal(untile_cubes(origins, cubes, tensor.shape), tensor)

    def test_only_occupied_cubes_emitted(self):
        tensor = np.zeros((16, 16, 16))
        tensor[0, 0, 0] = 5.0
        mask = occupancy_from_grid(tensor, 8)
        origins, cubes = tile_cubes(tensor, mask)
        assert len(cubes) == 1 and origins.tolist() == [[0, 0, 0]]

    def test_mask_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tile_cubes(np.zeros((16, 16, 16)), OccupancyMask(np.ones((1, 1, 1), bool), 8))


class TestPca:
    def test_single_direction_data(self):
        rng = np.random.default_rng(8)
        direction = np.array([2.0, -1.0, 0.5])
        direction /= np.linalg.norm(direction)
        data = rng.normal(size=(10, 1)) * direction[None, :]
        basis = pca_fit(data)
        lead = basis.matrix[:, 0]
        assert np.abs(np.abs(lead @ direction) - 1.0) < 1e-8
        assert lead[np.abs(lead).argmax()] > 0

    def test_orthonormality(self):
        rng = np.random.default_rng(9)
        basis = pca_fit(rng.normal(size=(200, 13)))
        gram = basis.matrix.T @ basis.matrix
        assert np.abs(gram - np.eye(13)).max() < 1e-5

    def test_zero_matrix_gives_identity(self):
        basis = pca_fit(np.zeros((5, 4)))
        assert np.array_equal(basis.matrix, np.eye(4))

    def test_full_rank_round_trip(self):
        rng = np.random.default_rng(10)
        data = rng.normal(size=(50, 7))
        basis = pca_fit(data)
        back = pca_backproject(pca_project(data, basis), basis)
        assert np.abs(back - data).max() < 1e-5

    def test_identity_basis_projection(self):
        data = np.arange(12.0).reshape(3, 4)
        basis = PCABasis(np.eye(4))
        assert np.array_equal(pca_project(data, basis), data)

    def test_rank_one_data_exact_with_q1(self):
        rng = np.random.default_rng(11)
        direction = rng.normal(size=5)
        direction /= np.linalg.norm(direction)
        data = rng.normal(size=(30, 1)) * direction[None, :]
        basis = pca_fit(data, rank=1)
        back = pca_backproject(pca_project(data, basis), basis)
        assert np.abs(back - data).max() < 1e-4

    def test_constant_column_handled(self):
        data = np.zeros((10, 3))
        data[:, 0] = 4.0
        basis = pca_fit(data)
        assert np.abs(basis.matrix.T @ basis.matrix - np.eye(3)).max() < 1e-8

    def test_energy_descending(self):
        rng = np.random.default_rng(12)
        data = rng.normal(size=(100, 6)) * np.array([10, 5, 2, 1, 0.5, 0.1])
        basis = pca_fit(data)
        assert np.all(np.diff(basis.energy) <= 1e-9)

    def test_dimension_mismatch(self):
        basis = PCABasis(np.eye(3))
        with pytest.raises(ShapeError):
            pca_project(np.zeros((4, 2)), basis)


class TestLossyStageMonotonicity:
    def test_size_and_mse_monotone_in_sq(self):
        rng = np.random.default_rng(13)
        smooth = rng.normal(size=(6, 8, 8, 8)).cumsum(axis=1).cumsum(axis=2).cumsum(axis=3)
        sizes = []
        mses = []
        for sq in (0.01, 0.1, 1.0, 4.0, 16.0):
            spec = QuantizationSpec(sq, default_q_matrix())
            q = quantize(dct3(smooth), spec)
            recon = idct3(dequantize(q, spec))
            mses.append(float(((recon - smooth) ** 2).mean()))
            sizes.append(int(np.count_nonzero(q)) + int(np.abs(q).sum()))
        assert sizes == sorted(sizes, reverse=True)
        assert mses == sorted(mses)

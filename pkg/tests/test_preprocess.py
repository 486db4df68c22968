import numpy as np
import pytest

from dirmix.errors import ChannelMismatch
from dirmix.fmap import FeatureStack, LayerGrid
from dirmix.preprocess import (
    augment_with_layer1,
    pca_fit,
    pca_reconstruct,
    pca_transform,
    preprocess_stack,
)


def grid_from_matrix(X, h, w):
    return LayerGrid.from_array(X.reshape(h, w, -1).astype(np.float32))


class TestPcaFit:
    def test_exact_two_dim_subspace(self, rng):
        # data spanning exactly 2 of 5 dimensions, balanced spectrum
        basis = np.linalg.qr(rng.standard_normal((5, 2)))[0]
        coords = rng.standard_normal((200, 2)) * np.array([2.0, 1.5])
        X = coords @ basis.T
        model = pca_fit(X, 0.90)
        assert model.retained == 2
        projected = pca_transform(model, X)
        rebuilt = pca_reconstruct(model, projected)
        np.testing.assert_allclose(rebuilt, X, atol=1e-10)

    def test_isotropic_needs_all_dims(self):
        # points +-c e_i: exactly isotropic sample covariance
        X = np.vstack([3.0 * np.eye(4), -3.0 * np.eye(4)])
        model = pca_fit(X, 0.90)
        assert model.retained == 4
        np.testing.assert_allclose(
            model.explained_variance_ratios[:4], 0.25, atol=1e-12
        )

    def test_matches_eigensolver_oracle(self, rng):
        X = rng.standard_normal((100, 6)) @ np.diag([3, 2.5, 2, 1, 0.5, 0.1])
        model = pca_fit(X, 0.90)
        centered = X - X.mean(axis=0)
        cov = np.zeros((6, 6))
        for row in centered:
            cov += np.outer(row, row)
        cov /= len(X)
        eigvals = np.sort(np.real(np.linalg.eig(cov)[0]))[::-1]
        ratios = eigvals / eigvals.sum()
        np.testing.assert_allclose(
            model.explained_variance_ratios, ratios, atol=1e-10
        )
        kept = np.cumsum(ratios)[model.retained - 1]
        assert kept >= 0.90 - 1e-12
        if model.retained > 1:
            assert np.cumsum(ratios)[model.retained - 2] < 0.90

    def test_wide_layer_uses_dual_problem(self, rng):
        # more channels than pixels
        X = rng.standard_normal((8, 20))
        model = pca_fit(X, 0.95)
        assert model.retained <= 8
        proj = model.projection
        np.testing.assert_allclose(
            proj.T @ proj, np.eye(model.retained), atol=1e-10
        )

    def test_ratios_nonincreasing_and_sum_bounded(self, rng):
        X = rng.standard_normal((60, 5))
        model = pca_fit(X, 0.9)
        ratios = model.explained_variance_ratios
        assert np.all(np.diff(ratios) <= 1e-12)
        assert ratios.sum() <= 1.0 + 1e-12

    def test_sign_convention(self, rng):
        X = rng.standard_normal((50, 4)) * np.array([3.0, 1.0, 0.5, 0.1])
        model = pca_fit(X, 0.99)
        for j in range(model.retained):
            col = model.projection[:, j]
            assert col[np.argmax(np.abs(col))] > 0

    def test_all_constant_features_degenerate(self):
        X = np.full((30, 3), 2.5)
        model = pca_fit(X, 0.9)
        assert model.retained == 1
        assert model.explained_variance_ratios[0] == 1.0

    def test_orthonormal_projection(self, rng):
        X = rng.standard_normal((80, 5))
        model = pca_fit(X, 0.99)
        gram = model.projection.T @ model.projection
        np.testing.assert_allclose(gram, np.eye(model.retained), atol=1e-10)

    def test_threshold_validation(self, rng):
        with pytest.raises(ValueError):
            pca_fit(rng.standard_normal((10, 2)), 0.0)
        with pytest.raises(ValueError):
            pca_fit(rng.standard_normal((10, 2)), 1.5)


class TestPcaTransform:
    def test_mean_maps_to_zero(self, rng):
        X = rng.standard_normal((40, 3))
        model = pca_fit(X, 0.9)
        out = pca_transform(model, X.mean(axis=0)[None, :])
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_norm_preserved_with_full_basis(self, rng):
        X = rng.standard_normal((50, 4))
        model = pca_fit(X, 1.0)
        assert model.retained == 4
        projected = pca_transform(model, X)
        np.testing.assert_allclose(
            np.linalg.norm(projected, axis=1),
            np.linalg.norm(X - X.mean(axis=0), axis=1),
            atol=1e-10,
        )

    def test_projected_covariance_diagonal(self, rng):
        X = rng.standard_normal((200, 5)) @ rng.standard_normal((5, 5))
        model = pca_fit(X, 0.95)
        projected = pca_transform(model, X)
        cov = np.cov(projected.T, bias=True)
        off_diag = cov - np.diag(np.diag(cov))
        assert np.max(np.abs(off_diag)) < 1e-8

    def test_channel_mismatch(self, rng):
        model = pca_fit(rng.standard_normal((20, 3)), 0.9)
        with pytest.raises(ChannelMismatch):
            pca_transform(model, rng.standard_normal((5, 4)))

    def test_layergrid_roundtrip_shape(self, rng):
        layer = grid_from_matrix(rng.standard_normal((12, 5)), 3, 4)
        model = pca_fit(layer, 0.9)
        out = pca_transform(model, layer)
        assert out.shape == (3, 4, model.retained)
        assert out.dtype == np.float64


class TestAugment:
    def test_single_layer_identity(self, rng):
        stack = FeatureStack([grid_from_matrix(rng.standard_normal((4, 2)), 2, 2)])
        assert augment_with_layer1(stack) is stack

    def test_channel_arithmetic(self, rng):
        layers = [
            LayerGrid.from_array(rng.standard_normal((8, 8, 3)).astype(np.float32)),
            LayerGrid.from_array(rng.standard_normal((4, 4, 5)).astype(np.float32)),
            LayerGrid.from_array(rng.standard_normal((2, 2, 7)).astype(np.float32)),
        ]
        out = augment_with_layer1(FeatureStack(layers))
        assert out[0].channels == 3
        assert out[1].channels == 5 + 3
        assert out[2].channels == 7 + 3

    def test_constant_layer1_appends_constants(self, rng):
        const = np.full((8, 8, 2), 1.5, dtype=np.float32)
        layers = [
            LayerGrid.from_array(const),
            LayerGrid.from_array(rng.standard_normal((4, 4, 3)).astype(np.float32)),
        ]
        out = augment_with_layer1(FeatureStack(layers))
        appended = out[1].values[:, :, 3:]
        np.testing.assert_allclose(appended, 1.5, atol=1e-6)

    def test_pooled_values_are_block_means(self):
        base = np.arange(16, dtype=np.float32).reshape(4, 4, 1)
        layers = [
            LayerGrid.from_array(base),
            LayerGrid.from_array(np.zeros((2, 2, 1), np.float32)),
        ]
        out = augment_with_layer1(FeatureStack(layers))
        np.testing.assert_allclose(
            out[1].values[:, :, 1], [[2.5, 4.5], [10.5, 12.5]], atol=1e-6
        )


class TestPipeline:
    def test_augment_before_pca_and_determinism(self, rng):
        layers = [
            LayerGrid.from_array(rng.standard_normal((8, 8, 4)).astype(np.float32)),
            LayerGrid.from_array(rng.standard_normal((4, 4, 6)).astype(np.float32)),
        ]
        stack = FeatureStack(layers)
        data1, models1 = preprocess_stack(stack, 0.9)
        data2, models2 = preprocess_stack(stack, 0.9)
        # PCA saw the augmented channel count on layer 2
        assert models2[1].n_features == 6 + 4
        for (x1, g1), (x2, g2) in zip(data1, data2):
            np.testing.assert_array_equal(x1, x2)
            assert g1 == g2
        assert [m.retained for m in models1] == [m.retained for m in models2]

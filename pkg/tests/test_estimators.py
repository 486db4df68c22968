import numpy as np
from sklearn.base import clone

from conftest import two_blob_data
from dirmix.estimators import DirichletMixture, MultilayerSegmenter, StackPreprocessor
from dirmix.fmap import FeatureStack, LayerGrid
from dirmix.metrics import adjusted_rand_index


def make_stack(rng, side=8, separation=8.0):
    labels = (np.indices((side, side))[1] >= side // 2).astype(int)
    fine = rng.standard_normal((side, side, 3)).astype(np.float32)
    fine[labels == 1] += separation
    coarse = fine[::2, ::2] + rng.standard_normal(
        (side // 2, side // 2, 3)
    ).astype(np.float32)
    return FeatureStack([
        LayerGrid.from_array(fine), LayerGrid.from_array(coarse)
    ]), labels


class TestDirichletMixture:
    def test_fit_predict_recovers_clusters(self, rng):
        X, truth = two_blob_data(rng, n_per=80, separation=9.0, d=2)
        est = DirichletMixture(n_components=2, random_state=1)
        labels = est.fit_predict(X)
        assert adjusted_rand_index(labels, truth) == 1.0
        assert est.converged_
        assert est.means_.shape == (2, 2)
        assert est.covariances_.shape == (2, 2, 2)

    def test_student_attributes(self, rng):
        X, _ = two_blob_data(rng, n_per=60, separation=6.0, d=2)
        est = DirichletMixture(n_components=2, density="student",
                               random_state=0).fit(X)
        assert est.scales_.shape == (2, 2, 2)
        assert est.dofs_.shape == (2,)

    def test_get_params_round_trip(self):
        est = DirichletMixture(n_components=3, density="student", sigma=2.0)
        params = est.get_params()
        assert params["n_components"] == 3
        rebuilt = clone(est)
        assert rebuilt.get_params() == params

    def test_spatial_rule_by_name(self, rng):
        side = 6
        labels = (np.indices((side, side))[1] >= 3).astype(int).ravel()
        X = rng.standard_normal((36, 2))
        X[labels == 1] += 8.0
        est = DirichletMixture(
            n_components=2, update_rule="smoothing", grid=(side, side),
            sigma=0.75, random_state=0,
        ).fit(X)
        assert adjusted_rand_index(est.labels_, labels) == 1.0

    def test_deterministic_across_fits(self, rng):
        X, _ = two_blob_data(rng, n_per=50, separation=5.0, d=2)
        a = DirichletMixture(n_components=2, random_state=9).fit(X)
        b = DirichletMixture(n_components=2, random_state=9).fit(X)
        np.testing.assert_array_equal(a.means_, b.means_)
        assert a.log_posterior_trace_ == b.log_posterior_trace_


class TestStackPreprocessor:
    def test_fit_transform_shapes(self, rng):
        stack, _ = make_stack(rng)
        pre = StackPreprocessor(variance_threshold=0.9)
        data = pre.fit_transform(stack)
        assert len(data) == 2
        for (X, grid), model in zip(data, pre.models_):
            assert X.shape == (grid[0] * grid[1], model.retained)


class TestMultilayerSegmenter:
    def test_fit_and_labels(self, rng):
        stack, truth = make_stack(rng)
        seg = MultilayerSegmenter(
            n_components=2, variant="c", sigmas=[1.25, 0.75],
            n_iter=6, random_state=0,
        ).fit(stack)
        labels = seg.labels(1).labels
        assert adjusted_rand_index(labels, truth) == 1.0
        assert seg.labels(2).grid == (4, 4)
        assert len(seg.traces_) == 2

    def test_variant_b_shared_state(self, rng):
        stack, _ = make_stack(rng)
        seg = MultilayerSegmenter(
            n_components=2, variant="b", sigmas=[1.0, 0.75],
            n_iter=4, random_state=0,
        ).fit(stack)
        assert seg.state_.shared_mixing is not None

    def test_preprocess_toggle(self, rng):
        stack, _ = make_stack(rng)
        seg = MultilayerSegmenter(
            n_components=2, preprocess=False, sigmas=[1.0, 0.75],
            n_iter=3, random_state=0,
        ).fit(stack)
        # without PCA the fitted means live in the raw feature space
        assert seg.state_.params[0].means.shape[1] == 3

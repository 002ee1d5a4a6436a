import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from owrkit.datasets import SyntheticSpec, gen_synthetic
from owrkit.estimator import DeepNNORecognizer, NNORecognizer, OpenWorldRecognizer


def blob_data(seed=0, n_classes=6):
    spec = SyntheticSpec(
        generator="gaussian_blobs", n_classes=n_classes, dim=3, samples_per_class=30,
        variance_range=(0.5, 1.0), spacing=12.0, seed=seed,
    )
    return gen_synthetic(spec)


def episode_xy(data, classes):
    mask = np.isin(data.labels, list(classes)) & (data.split == 0)
    return data.samples[mask], data.labels[mask]


def quick_ours(**over):
    kw = dict(
        feature_dims=(8, 4), epochs_initial=3, epochs_incremental=2,
        learning_rate=0.01, batch_size=16, threshold_epochs=5,
        memory_budget=60, random_state=0,
    )
    kw.update(over)
    return OpenWorldRecognizer(**kw)


def test_fit_predict_shapes_and_reject_label():
    data = blob_data()
    X, y = episode_xy(data, (0, 1, 2))
    est = quick_ours().fit(X, y)
    out = est.predict(data.samples)
    assert out.shape == (len(data.samples),)
    assert set(np.unique(out)) <= {-1, 0, 1, 2}
    closed = est.predict_closed(data.samples)
    assert -1 not in closed
    assert set(np.unique(closed)) <= {0, 1, 2}


def test_closed_accuracy_on_seen_classes():
    data = blob_data()
    X, y = episode_xy(data, (0, 1, 2))
    est = quick_ours(epochs_initial=6).fit(X, y)
    test_mask = np.isin(data.labels, [0, 1, 2]) & (data.split == 1)
    acc = (est.predict_closed(data.samples[test_mask]) == data.labels[test_mask]).mean()
    assert acc >= 0.9


def test_partial_fit_grows_classes():
    data = blob_data()
    est = quick_ours()
    est.partial_fit(*episode_xy(data, (0, 1)))
    np.testing.assert_array_equal(est.classes_, [0, 1])
    est.partial_fit(*episode_xy(data, (2, 3)))
    np.testing.assert_array_equal(est.classes_, [0, 1, 2, 3])
    closed = est.predict_closed(data.samples[:10])
    assert set(np.unique(closed)) <= {0, 1, 2, 3}


def test_partial_fit_rejects_seen_class():
    data = blob_data()
    est = quick_ours().fit(*episode_xy(data, (0, 1)))
    with pytest.raises(ValueError):
        est.partial_fit(*episode_xy(data, (1, 2)))


def test_partial_fit_rejects_width_change():
    data = blob_data()
    est = quick_ours().fit(*episode_xy(data, (0, 1)))
    X, y = episode_xy(data, (2, 3))
    with pytest.raises(ValueError, match="features"):
        est.partial_fit(X[:, :2], y)


def test_transform_feature_width():
    data = blob_data()
    est = quick_ours(feature_dims=(8, 4)).fit(*episode_xy(data, (0, 1)))
    feats = est.transform(data.samples[:7])
    assert feats.shape == (7, 4)
    assert np.isfinite(feats).all()


def test_not_fitted_errors():
    est = quick_ours()
    for call in (est.predict, est.predict_closed, est.transform):
        with pytest.raises(NotFittedError):
            call(np.zeros((2, 3)))


def test_negative_labels_rejected():
    with pytest.raises(ValueError, match="non-negative"):
        quick_ours().fit(np.zeros((4, 3)), [-1, 0, 0, 1])


def test_get_set_params_round_trip():
    est = quick_ours(learning_rate=0.123)
    params = est.get_params()
    assert params["learning_rate"] == 0.123
    est.set_params(memory_budget=99)
    assert est.get_params()["memory_budget"] == 99


def test_clone_is_unfitted_copy():
    data = blob_data()
    est = quick_ours(snnl_weight=0.5).fit(*episode_xy(data, (0, 1)))
    dup = clone(est)
    assert dup.get_params() == est.get_params()
    assert not hasattr(dup, "model_")


@pytest.mark.parametrize("seed", [0, 3, 11])
def test_same_seed_same_predictions(seed):
    data = blob_data(seed=seed)
    runs = []
    for _ in range(2):
        est = quick_ours(random_state=seed)
        est.fit(*episode_xy(data, (0, 1)))
        est.partial_fit(*episode_xy(data, (2, 3)))
        runs.append(est.predict(data.samples))
    np.testing.assert_array_equal(runs[0], runs[1])


def test_nno_transform_is_identity():
    data = blob_data()
    X, y = episode_xy(data, (0, 1, 2))
    est = NNORecognizer().fit(X, y)
    probe = data.samples[:9]
    np.testing.assert_array_equal(est.transform(probe), probe)
    out = est.predict(data.samples)
    assert set(np.unique(out)) <= {-1, 0, 1, 2}


def test_nno_incremental_smoke():
    data = blob_data()
    est = NNORecognizer(random_state=1)
    est.partial_fit(*episode_xy(data, (0, 1)))
    est.partial_fit(*episode_xy(data, (2,)))
    np.testing.assert_array_equal(est.classes_, [0, 1, 2])
    test_mask = np.isin(data.labels, [0, 1, 2]) & (data.split == 1)
    acc = (est.predict_closed(data.samples[test_mask]) == data.labels[test_mask]).mean()
    assert acc >= 0.9


def test_deepnno_smoke_and_determinism():
    data = blob_data()
    preds = []
    for _ in range(2):
        est = DeepNNORecognizer(
            feature_dims=(8, 4), epochs_initial=3, epochs_incremental=2,
            learning_rate=0.01, batch_size=16, memory_budget=60, random_state=2,
        )
        est.fit(*episode_xy(data, (0, 1)))
        est.partial_fit(*episode_xy(data, (2, 3)))
        preds.append(est.predict(data.samples))
    np.testing.assert_array_equal(preds[0], preds[1])
    assert set(np.unique(preds[0])) <= {-1, 0, 1, 2, 3}

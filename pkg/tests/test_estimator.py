import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from supcomm.core import ValidationError, co_clustering_error
from supcomm.estimator import SupervisedCommunityClassifier, SupervisedCommunityRegressor
from supcomm.evaluate import fit_method
from supcomm.simulate import Sec5Design, generate_sec5


@pytest.fixture(scope="module")
def data():
    train, labels, _ = generate_sec5(Sec5Design(t=0.1, sigma=0.5, seed=4))
    test, _, _ = generate_sec5(Sec5Design(t=0.1, sigma=0.5, seed=5, N=100))
    return train, test, labels


def test_params_roundtrip_and_clone():
    est = SupervisedCommunityRegressor(n_communities=3, lam=0.1, rho_grid=(1.0,))
    params = est.get_params()
    assert params["n_communities"] == 3 and params["rho_grid"] == (1.0,)
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(n_communities=5)
    assert est.n_communities == 5


def test_regressor_fit_predict(data):
    train, test, labels = data
    est = SupervisedCommunityRegressor(n_communities=4, rho_grid=(1.0, 10.0))
    est.fit(train.adjacency, train.responses)
    assert co_clustering_error(est.labels_, labels) == 0.0
    assert est.B_.shape == (40, 40) and est.C_.shape == (4, 4)
    assert est.score(test.adjacency, test.responses) > 0.9


def test_regressor_matches_functional_api(data):
    train, _, labels = data
    est = SupervisedCommunityRegressor(n_communities=4, use_admm=False, init=labels)
    est.fit(train.adjacency, train.responses)
    model = fit_method("oracle", train, true_labels=labels)
    np.testing.assert_array_equal(est.C_, model.C)
    np.testing.assert_array_equal(est.predict(train.adjacency), model.predict(train.adjacency))


def test_classifier_with_string_classes(data):
    train, test, _ = data
    cut = np.median(train.responses)
    y = np.where(train.responses > cut, "high", "low")
    clf = SupervisedCommunityClassifier(n_communities=4, use_admm=False).fit(train.adjacency, y)
    assert list(clf.classes_) == ["high", "low"]
    proba = clf.predict_proba(test.adjacency)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    pred = clf.predict(test.adjacency)
    np.testing.assert_array_equal(pred == "low", proba[:, 1] >= 0.5)
    truth = np.where(test.responses > cut, "high", "low")
    assert np.mean(pred == truth) > 0.7


def test_input_validation(data):
    train, _, _ = data
    est = SupervisedCommunityRegressor()
    with pytest.raises(ValidationError, match="responses"):
        est.fit(train.adjacency, train.responses[:-1])
    with pytest.raises(ValidationError, match="n_communities"):
        SupervisedCommunityRegressor(n_communities=41).fit(train.adjacency, train.responses)
    with pytest.raises(ValidationError, match="two classes"):
        SupervisedCommunityClassifier().fit(train.adjacency, np.zeros(train.n_samples))
    bad = train.adjacency.copy()
    bad[0, 0, 1] = np.nan
    with pytest.raises(ValidationError, match="NaN"):
        est.fit(bad, train.responses)


def test_predict_before_fit_and_wrong_size(data):
    train, _, _ = data
    with pytest.raises(NotFittedError):
        SupervisedCommunityRegressor().predict(train.adjacency)
    est = SupervisedCommunityRegressor(use_admm=False).fit(train.adjacency, train.responses)
    with pytest.raises(ValidationError, match="nodes"):
        est.predict(np.zeros((2, 10, 10)))

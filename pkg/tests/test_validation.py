import json

import pytest

from cfinsler import metric_from_config, validate_metric
from cfinsler.geometry import PseudoconvexityError

from oracles import FAMILIES


@pytest.mark.parametrize("name", ["flat", "quartic", "z_twisted", "hermitian_general"])
def test_valid_metrics_pass(name):
    rep = validate_metric(metric_from_config(FAMILIES[name]), 64, 0)
    assert rep.passed and rep.pseudoconvex
    assert rep.max_homogeneity_residual < 1e-12 and rep.max_euler_residual < 1e-12
    rep.raise_for_failure()


def test_non_convex_metric_reports_witness():
    rep = validate_metric(metric_from_config({"family": "quartic_perturbation", "n": 2, "lambda": -0.9}), 128, 0)
    assert not rep.passed and rep.min_levi_eigenvalue < 0
    assert set(rep.witness) == {"z", "v"}
    with pytest.raises(PseudoconvexityError):
        rep.raise_for_failure()
    json.dumps(rep.as_dict(), allow_nan=False)


def test_indefinite_metric_is_reported_without_nan():
    spec = {"family": "expression", "n": 2, "G": "abs2(v1) - 2*abs2(v2)"}
    rep = validate_metric(metric_from_config(spec), 32, 0)
    assert not rep.passed
    json.dumps(rep.as_dict(), allow_nan=False)


def test_sampling_is_reproducible():
    m = metric_from_config(FAMILIES["z_twisted_general"])
    a, b = validate_metric(m, 32, 5), validate_metric(m, 32, 5)
    assert a.as_dict() == b.as_dict()

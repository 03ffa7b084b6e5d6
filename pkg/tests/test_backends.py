import numpy as np
import pytest

from agent_logit.backends import BACKENDS, get_backend
from agent_logit.backends.backend_parallel import ParallelBackend
from agent_logit.backends.backend_sequential import SequentialBackend
from agent_logit.config import EstimatorConfig
from agent_logit.estimation import estimate_glam


def test_registry():
    assert set(BACKENDS) == {"sequential", "parallel"}
    assert get_backend("sequential") is SequentialBackend
    with pytest.raises(ValueError, match="Unknown backend 'gpu'. Available: sequential, parallel"):
        get_backend("gpu")


def test_parallel_solves_match_sequential(two_taste_markets):
    ds, _, _ = two_taste_markets
    cfg = EstimatorConfig(M=2, tol=0.1, threads=3)
    priors = np.tile([[-1.0, -1.0]], (len(ds), 1))
    args = (ds.spec, ds.design_tensor, ds.shares_matrix, priors, cfg.tol, cfg.max_tol_doublings, ds.agent_ids)

    seq = SequentialBackend(cfg).solve_agents(*args)
    par = ParallelBackend(cfg).solve_agents(*args)

    assert [s.agent_id for s in par] == list(ds.agent_ids)
    for a, b in zip(seq, par):
        np.testing.assert_array_equal(a.theta, b.theta)
        assert a.status == b.status
        assert a.objective == b.objective


def test_estimates_do_not_depend_on_the_backend(two_taste_markets):
    ds, _, _ = two_taste_markets
    seq = estimate_glam(ds, EstimatorConfig(M=2, tol=0.1, seed=0, max_iterations=10))
    par = estimate_glam(ds, EstimatorConfig(M=2, tol=0.1, seed=0, max_iterations=10, backend="parallel", threads=2))

    np.testing.assert_array_equal(seq.theta_matrix(), par.theta_matrix())
    np.testing.assert_array_equal(seq.priors, par.priors)
    assert seq.to_dict() == par.to_dict()

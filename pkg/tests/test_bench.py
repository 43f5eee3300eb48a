import math

import numpy as np
import pytest

from stochprox.bench import (
    DEFAULT_BATCH,
    DEFAULT_LAMBDA,
    TINY_CFG,
    MaskedQuadratic,
    compute_tiny_tv_reference,
    load_tiny_tv_reference,
    masked_quadratic_problem,
    run_suite,
    tiny_tv_problem,
)
from stochprox.prox import norm
from stochprox.schedules import validate_fb_conditions
from stochprox.solvers import kkt_residual


def test_default_schedules():
    assert DEFAULT_LAMBDA(500) == 0.5
    assert DEFAULT_BATCH(10) == 13


def test_masked_quadratic_is_unbiased():
    c = np.linspace(-2, 2, 9)
    q = MaskedQuadratic(c, noise_sd=0.05, seed=3)
    aa = np.zeros(9)
    for i in range(20_000):
        a, _ = q.sample(i)
        aa += a * a
    # E[A^2] = I: each entry is 2 Bernoulli(1/2) with variance 1
    assert np.max(np.abs(aa / 20_000 - 1.0)) <= 4 / math.sqrt(20_000) * 3


def test_masked_quadratic_oracle_is_batch_mean():
    c = np.array([0.5, -1.5, 3.0])
    q = MaskedQuadratic(c, seed=1)
    x = np.array([0.1, 0.2, 0.3])
    m = q.batch_for(4)
    expected = np.zeros(3)
    for i in range(m):
        a, y = q.sample(i)
        expected += a * (a * x - y)
    np.testing.assert_allclose(q(x, 4), expected / m, rtol=1e-12)
    # shrinking the batch resets the running sums
    np.testing.assert_allclose(q(x, 4), expected / m, rtol=1e-12)
    q(x, 10)
    np.testing.assert_allclose(q(x, 4), expected / m, rtol=1e-12)


def test_masked_quadratic_conditions_hold():
    problem, x0, solution = masked_quadratic_problem()
    r = validate_fb_conditions(problem.gamma, problem.lam, problem.tau, problem.vartheta)
    assert r.overall
    assert np.all(np.abs(solution) <= 1.0)


def test_reference_file_reproducible():
    # independent regeneration at a shorter horizon: the deterministic iteration has
    # converged to rounding level long before 10^4 steps
    x, v = compute_tiny_tv_reference(10_000)
    xs, vs = load_tiny_tv_reference()
    assert norm(x - xs) <= 1e-9 * norm(xs)
    assert norm(v - vs) <= 1e-9 * max(norm(vs), 1.0)
    problem, _ = tiny_tv_problem()
    assert kkt_residual(problem, xs, [vs]) <= 1e-12


def test_reference_is_nontrivial():
    xs, vs = load_tiny_tv_reference()
    assert xs.shape == (TINY_CFG.height, TINY_CFG.width)
    assert vs.shape == (2, TINY_CFG.height, TINY_CFG.width)
    # the TV term is active: some dual groups sit on the weight-radius circle
    radii = np.hypot(vs[0], vs[1])
    assert np.max(radii) == pytest.approx(5.0, rel=1e-9)


def test_unknown_suite():
    with pytest.raises(KeyError, match="unknown suite"):
        run_suite("nope")


@pytest.mark.parametrize("suite", ["prox", "linops", "fb-quadratic", "pd-tiny-tv"])
def test_suites_pass(suite):
    checks, seconds = run_suite(suite)
    assert checks
    failed = [c for c in checks if not c.passed]
    assert not failed, failed


def test_oracle_stats_suite_reports_both_checks():
    checks, _ = run_suite("oracle-stats")
    by_name = {c.name: c for c in checks}
    assert set(by_name) == {"unbiased_single_sample", "variance_decay_slope"}
    assert by_name["variance_decay_slope"].passed
    assert "rel err" in by_name["unbiased_single_sample"].detail

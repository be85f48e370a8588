import csv
import math

import numpy as np
import pytest
from scipy import stats

from greenstop._backend import HAVE_NUMBA
from greenstop.errors import ParameterError
from greenstop.model import EXAMPLE_1, EXAMPLE_2, ModelParams
from greenstop.montecarlo import (
    PolicyEstimate,
    SimConfig,
    estimate_policy_value,
    first_passage,
    green_ratio_check,
    halving_study,
    occupation_times,
    optimality_scan,
    paired_difference,
    path_rng,
    sample_marginal,
    step_exact,
)

LAW_MATRIX = [EXAMPLE_1, EXAMPLE_2, ModelParams(0.5, 0.7, 2.0, 3.0), ModelParams(2.0, 0.0, 1.5, 0.5)]


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(horizon_eps=1.0), dict(horizon_eps=0.0), dict(n_paths=0),
                                dict(seed=-1)])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        SimConfig(**kw)


def test_horizon():
    cfg = SimConfig(dt=0.01, horizon_eps=1e-6)
    assert cfg.horizon(2.0) == pytest.approx(math.log(1e6) / 2)
    assert cfg.n_steps(2.0) == math.ceil(math.log(1e6) / 2 / 0.01)


def test_step_pure_decay(rng):
    # sigma = lam = 0 is rejected by ModelParams; a negligible jump rate never fires
    q = ModelParams(1.0, 0.0, 1e-300, 1.0)
    assert step_exact(q, 1.0, 1.0, rng) == pytest.approx(math.exp(-1.0))


def test_step_mean_one_step(rng):
    x = step_exact(EXAMPLE_1, np.zeros(100_000), 1.0, rng)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - (1 - math.exp(-1))) < 3 * se


def test_step_variance_no_jumps(rng):
    x = step_exact(EXAMPLE_2, np.zeros(100_000), 1.0, rng)
    v = x.var(ddof=1)
    exact = (1 - math.exp(-2)) / 2
    assert abs(v - exact) < 3 * exact * math.sqrt(2 / (x.size - 1))


def test_step_rejects_bad_dt(rng):
    with pytest.raises(ParameterError):
        step_exact(EXAMPLE_1, 0.0, 0.0, rng)


def test_step_is_exact_in_distribution():
    # one step of length 1 and 50 chained steps must have the same law
    a = sample_marginal(EXAMPLE_1, 0.3, 1.0, 20_000, seed=1)
    b = sample_marginal(EXAMPLE_1, 0.3, 1.0, 20_000, seed=2, dt=0.02)
    assert stats.ks_2samp(a, b).pvalue > 1e-3


@pytest.mark.parametrize("p", LAW_MATRIX)
@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_marginal_mean_law(p, t):
    x = sample_marginal(p, 0.4, t, 50_000, seed=hash((t, p.gamma)) % 2**32)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - p.mean(0.4, t)) < 4 * se


@pytest.mark.parametrize("p", LAW_MATRIX)
def test_marginal_variance_law(p):
    x = sample_marginal(p, 0.0, 1.0, 50_000, seed=3)
    v = x.var(ddof=1)
    # SE of the sample variance from the fourth central moment
    m4 = np.mean((x - x.mean()) ** 4)
    se = math.sqrt((m4 - v**2) / x.size)
    assert abs(v - p.variance(1.0)) < 4 * se


def test_immediate_stop(ex1):
    est = estimate_policy_value(ex1, 0.7, 0.5, SimConfig(n_paths=50))
    assert est.mean == 0.7 and est.std_error == 0.0
    assert est.ci95 == (0.7, 0.7)


def test_unreachable_threshold(ex1):
    est = estimate_policy_value(ex1, 0.0, 1e6, SimConfig(n_paths=100, dt=0.01))
    assert est.mean == 0.0
    assert est.n_truncated == 100


def test_reproducible(ex1):
    cfg = SimConfig(n_paths=300, seed=99)
    a = estimate_policy_value(ex1, 0.0, 1.1, cfg)
    b = estimate_policy_value(ex1, 0.0, 1.1, cfg)
    assert a.mean == b.mean and a.std_error == b.std_error
    assert np.array_equal(a.payoffs, b.payoffs)
    c = estimate_policy_value(ex1, 0.0, 1.1, SimConfig(n_paths=300, seed=100))
    assert c.mean != a.mean


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_backends_agree_per_path(ex1):
    cfg = SimConfig(n_paths=300, seed=5)
    t1, s1, k1 = first_passage(ex1.params, 1.0, -0.5, [0.2, 1.1, 0.8], cfg, backend="numba")
    t2, s2, k2 = first_passage(ex1.params, 1.0, -0.5, [0.2, 1.1, 0.8], cfg, backend="numpy")
    assert np.array_equal(k1, k2)
    assert np.allclose(t1, t2, rtol=0, atol=1e-12)
    assert np.allclose(s1, s2, rtol=0, atol=1e-10)
    o1 = occupation_times(ex1.params, 1.0, [0.0, 1.0], [[-1, 0], [0.5, 2]], SimConfig(n_paths=20), backend="numba")
    o2 = occupation_times(ex1.params, 1.0, [0.0, 1.0], [[-1, 0], [0.5, 2]], SimConfig(n_paths=20), backend="numpy")
    assert np.allclose(o1, o2, rtol=0, atol=1e-12)


def test_passage_times_monotone_in_threshold(ex1):
    tau, _, _ = first_passage(ex1.params, 1.0, 0.0, [0.5, 1.0, 1.5], SimConfig(n_paths=200, seed=2))
    assert np.all(np.diff(tau, axis=1) >= 0)


def test_overshoot_signs(ex1):
    cfg = SimConfig(n_paths=2000, seed=4)
    b = 1.0
    est = estimate_policy_value(ex1, 0.0, b, cfg, record=True)
    kind, state = est.paths["kind"], est.paths["state"]
    jump, diff = kind == 2, kind == 1
    assert jump.sum() > 50 and diff.sum() > 50
    assert np.all(state[jump] - b > 0)
    over = state[diff] - b
    assert np.all(over >= 0)
    assert np.all(over < 6 * ex1.params.sigma * math.sqrt(cfg.dt))


def test_dump_paths(ex1, tmp_path):
    est = estimate_policy_value(ex1, 0.0, 1.0, SimConfig(n_paths=20), record=True)
    est.dump_paths(tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["path_id", "tau", "payoff", "crossing_type"]
    assert len(rows) == 21
    assert {r[3] for r in rows[1:]} <= {"diffusive", "jump", "none"}
    with pytest.raises(ValueError):
        estimate_policy_value(ex1, 0.0, 1.0, SimConfig(n_paths=5)).dump_paths(tmp_path / "q.csv")


def test_estimate_json():
    e = PolicyEstimate(mean=0.5, std_error=0.01, n_paths=100)
    d = e.to_dict()
    assert set(d) >= {"mean", "se", "n", "ci95"}
    assert d["ci95"] == [pytest.approx(0.5 - 0.0196), pytest.approx(0.5 + 0.0196)]


def test_scan_single_matches_policy(ex1):
    cfg = SimConfig(n_paths=200, seed=8)
    (s,) = optimality_scan(ex1, 0.0, [1.1], cfg)
    e = estimate_policy_value(ex1, 0.0, 1.1, cfg)
    assert s.mean == e.mean and s.std_error == e.std_error


def test_scan_all_immediate(ex1):
    res = optimality_scan(ex1, 2.0, [-1.0, 0.5, 2.0], SimConfig(n_paths=10))
    assert all(r.mean == 2.0 and r.std_error == 0.0 for r in res)


def test_scan_rejects_empty(ex1):
    with pytest.raises(ParameterError):
        optimality_scan(ex1, 0.0, [], SimConfig(n_paths=10))


def test_paired_difference(ex1):
    res = optimality_scan(ex1, 0.0, [0.9, 1.1], SimConfig(n_paths=500, seed=3))
    d, se = paired_difference(res[0], res[1])
    assert d == pytest.approx(res[0].mean - res[1].mean)
    # common random numbers make the paired SE much smaller than the independent one
    assert se < 0.5 * math.hypot(res[0].std_error, res[1].std_error)


def test_discounted_mass_is_exact():
    cfg = SimConfig(n_paths=4, dt=1e-3)
    occ = occupation_times(EXAMPLE_1, 1.0, [0.0, 2.0], [[-np.inf, np.inf]], cfg)
    n, dt = cfg.n_steps(1.0), cfg.dt
    left_point = dt * -math.expm1(-n * dt) / -math.expm1(-dt)
    assert np.allclose(occ, left_point, rtol=1e-12, atol=0)
    assert left_point == pytest.approx(-math.expm1(-n * dt), rel=dt)


def test_green_ratio_identical_states():
    r = green_ratio_check(EXAMPLE_1, 1.0, 0.0, 0.0, [[-1, -0.5], [-2, -1.5]], SimConfig(n_paths=200))
    assert r.ratio1 == 1.0 and r.ratio2 == 1.0


def test_green_ratio_small():
    r = green_ratio_check(EXAMPLE_1, 1.0, 1.0, 0.0, [[-1, -0.5], [-2, -1.5]], SimConfig(n_paths=1000, seed=1))
    assert not r.inconclusive
    assert abs(r.difference) < 3 * r.se
    assert r.ratio1 <= 1 + 3 * r.se1 and r.ratio2 <= 1 + 3 * r.se2


def test_green_ratio_inconclusive():
    # intervals far below z are essentially never visited
    r = green_ratio_check(EXAMPLE_1, 1.0, 1.0, 0.0, [[-30, -29], [-40, -39]], SimConfig(n_paths=20, dt=0.01))
    assert r.inconclusive


@pytest.mark.parametrize("sets,x,z", [([[-1, 0.5], [-2, -1.5]], 1.0, 0.0), ([[-1, -0.5]], 1.0, 0.0),
                                      ([[-1, -0.5], [-2, -1.5]], -1.0, 0.0)])
def test_green_ratio_preconditions(sets, x, z):
    with pytest.raises(ParameterError):
        green_ratio_check(EXAMPLE_1, 1.0, x, z, sets, SimConfig(n_paths=5))


def test_halving_study(ex1):
    res = halving_study(ex1, 0.0, 1.1, SimConfig(n_paths=200, dt=0.004))
    assert res["fine"]["n"] == 200
    assert res["difference"] == pytest.approx(res["fine"]["mean"] - res["coarse"]["mean"])


def test_path_streams_distinct():
    a = path_rng(1, 0).standard_normal(4)
    b = path_rng(1, 1).standard_normal(4)
    c = path_rng(1, 0, role=1).standard_normal(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, path_rng(1, 0).standard_normal(4))

"""Acceptance criteria; each test also enforces its runtime budget."""

import time

import numpy as np
import pytest

from rumornet.fit import fit_curve, fit_four_points, fit_group_size_cdf, infer_network_params
from rumornet.model import (
    TABLE1,
    TABLE2,
    CurveCoefficients,
    df_dt,
    eval_F,
    law_coeffs_of_usg,
    predict_curve,
    time_to_fraction,
)
from rumornet.netgen import PopulationConfig, SurveyDistributions, build_network
from rumornet.spread import (
    BurnSeries,
    EnsembleSpec,
    SpreadParams,
    first_passage,
    run,
    run_ensemble,
    select_seed,
)

DESK = PopulationConfig(n_total=2000)
X_LEVELS = [round(0.1 * k, 1) for k in range(1, 10)]


@pytest.fixture
def budget():
    start = time.perf_counter()
    limit = []
    yield limit.append
    elapsed = time.perf_counter() - start
    assert elapsed < limit[0], f"runtime {elapsed:.2f}s over budget {limit[0]}s"


def test_c01_cross_table_consistency(budget):
    budget(1.0)
    rel = {"aa": 0.07, "bb": 0.01, "cc": 0.07, "ee": 0.01, "gg": 0.07}
    for pu, tab in TABLE1.items():
        ref = tab.to_fraction()
        got = law_coeffs_of_usg(pu, TABLE2)
        assert got.units == "fraction"
        for k, tol in rel.items():
            r, g = getattr(ref, k), getattr(got, k)
            assert abs(g - r) <= tol * abs(r), (pu, k, g, r)


def test_c02_initial_condition_and_inverse(budget):
    budget(1.0)
    for k in range(1, 11):
        p = 0.01 * k
        for pu in (0.0, 0.05, 0.1):
            c = predict_curve(SpreadParams(p, 0.03, pu)).coeffs
            assert abs(eval_F(0.0, c) - p) <= 1e-12
            for x in X_LEVELS:
                if x > p:
                    assert abs(eval_F(time_to_fraction(x, c), c) - x) <= 1e-9


def test_c03_ode_identity(budget):
    budget(1.0)
    rng = np.random.default_rng(2024)
    t = np.linspace(0, 100, 2001)
    h = 1e-4
    for _ in range(20):
        c = CurveCoefficients.from_initial(rng.uniform(3, 60), rng.uniform(0.05, 0.999),
                                           rng.uniform(0.005, 0.2), b=rng.uniform(-5, 5))
        central = (eval_F(t + h, c) - eval_F(t - h, c)) / (2 * h)
        assert np.max(np.abs(central - df_dt(eval_F(t, c), c.a, c.epsilon))) < 1e-6


def test_c04_desk_scale_curve_law(budget):
    budget(120.0)
    ens = run_ensemble(DESK, EnsembleSpec(5, 10, 100, master_seed=0), SpreadParams(0.02, 0.02, 0.0))
    f = ens.series.f
    res = fit_curve(ens.series)
    assert res.r_squared >= 0.98
    assert f[100] > 0.95
    assert np.all(np.diff(f) >= 0)
    # sigmoidal: growth rate rises then falls, peaking strictly inside the run
    peak = int(np.argmax(np.diff(f)))
    assert 0 < peak < 99


def test_c05_usg_acceleration(budget):
    budget(600.0)
    ordered = 0
    for seed in range(20):
        t50 = [first_passage(run_ensemble(DESK, EnsembleSpec(5, 10, 100, master_seed=seed),
                                          SpreadParams(0.02, 0.01, pu)).series, 0.5)
               for pu in (0.0, 0.05, 0.10)]
        ordered += t50[0] > t50[1] > t50[2]
    print(f"usg ordering held in {ordered}/20 ensembles")
    assert ordered >= 19


def test_c06_four_point_forecasting(budget):
    budget(10.0)
    c = predict_curve(SpreadParams(0.05, 0.01, 0.0)).coeffs
    t = np.linspace(0.25, 1.0, 4) * time_to_fraction(0.19, c)
    f = eval_F(t, c)
    exact = fit_four_points(np.c_[t, f], 0.05).coefficients
    assert exact.a == pytest.approx(c.a, rel=0.01)
    assert exact.epsilon == pytest.approx(c.epsilon, rel=0.01)
    t50 = time_to_fraction(0.5, c)
    rng = np.random.default_rng(7)
    good = 0
    for _ in range(100):
        noisy = f * (1 + 0.01 * rng.standard_normal(4))
        fc = fit_four_points(np.c_[t, noisy], 0.05).coefficients
        good += abs(time_to_fraction(0.5, fc) - t50) <= 0.10 * t50
    assert good >= 90


def test_c07_inference_round_trip(budget):
    budget(10.0)
    grid = (0.02, 0.05, 0.08)
    for pii in grid:
        for pip in grid:
            for pu in grid:
                c = predict_curve(SpreadParams(pii, pip, pu)).coeffs
                series = BurnSeries(eval_F(np.arange(101), c), 10000)
                inf = infer_network_params(series, pii)
                assert abs(inf.p_usg - pu) <= 0.01, (pii, pip, pu, inf.p_usg)
                assert abs(inf.p_ip - pip) <= 0.10 * pip, (pii, pip, pu, inf.p_ip)


def test_c08_distribution_fidelity(budget):
    budget(5.0)
    dist = SurveyDistributions()
    cfg = PopulationConfig(n_total=20000, groups_per_capita=10000 * dist.mean_group_size() / 14000)
    sizes = build_network(cfg).group_sizes
    assert len(sizes) == 10000
    support = dist.group_size_support()
    ecdf = np.searchsorted(np.sort(sizes), support, side="right") / len(sizes)
    assert np.max(np.abs(ecdf - dist.group_size_cdf(support))) < 0.02
    res = fit_group_size_cdf(sizes, dist)
    assert abs(res.coefficients["lam"] - 0.1113) <= 0.05 * 0.1113
    assert res.r_squared >= 0.99


def bfs_counts(net, seed, T):
    out = {i: set() for i in range(net.n_total)}
    for s, d in zip(net.p2p_src.tolist(), net.p2p_dst.tolist()):
        out[s].add(d)
    for g in net.groups:
        members = set(g.tolist())
        for m in members:
            out[m] |= members - {m}
    burned = set(int(i) for i in seed)
    counts = [len(burned)]
    frontier = set(burned)
    for _ in range(T):
        frontier = set().union(*(out[s] for s in frontier)) - burned
        burned |= frontier
        counts.append(len(burned))
    return np.array(counts)


@pytest.mark.parametrize("method", ["fast", "naive"])
def test_c09_degenerate_oracles(budget, method):
    budget(1.0)
    net = build_network(PopulationConfig(n_total=50, penetration=0.9, groups_per_capita=0.3, rng_seed=3))
    rng = np.random.default_rng(0)
    seed = select_seed(net, 0.05, rng)
    if len(seed) == 0:
        seed = net.connected[:1]
    s = run(net, SpreadParams(0.05, 1.0, 0.0), seed, [], rng, 30, method)
    assert np.array_equal(np.rint(s.f * net.n_connected).astype(int), bfs_counts(net, seed, 30))
    flat = run(net, SpreadParams(0.05, 0.0, 0.0), seed, [], rng, 30, method)
    assert np.all(flat.f == len(seed) / net.n_connected)


def test_c10_worked_chain(budget):
    budget(1.0)
    for units in ("percent", "fraction"):
        row = TABLE1[0.0] if units == "percent" else TABLE1[0.0].to_fraction()
        assert row.units == units
        pred = predict_curve(SpreadParams(0.02, 0.01, 0.0), laws=row)
        assert pred.coeffs.a == pytest.approx(31.0, abs=0.5)
        assert pred.coeffs.epsilon == pytest.approx(0.981, abs=0.002)
        assert time_to_fraction(0.5, pred.coeffs) == pytest.approx(54.9, abs=1.0)
    poly = predict_curve(SpreadParams(0.02, 0.01, 0.0)).coeffs
    assert poly.a == pytest.approx(31.0, abs=0.5)
    assert time_to_fraction(0.5, poly) == pytest.approx(54.9, abs=1.0)

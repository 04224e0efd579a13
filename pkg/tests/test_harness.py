import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_minimax import estimators as est
from sparse_minimax import harness as hs
from sparse_minimax import sparse_classes as sc

NW = {"name": "nw", "kind": "nadaraya_watson", "bandwidth": {"scale": 1.0, "exponent": -0.5}}


def small_config(**kw):
    doc = {"target": {"kind": "Jk", "k": 2, "C": 2.0}, "estimators": [NW],
           "n_grid": [128, 256, 512, 1024], "replications": 4, "master_seed": 7}
    doc.update(kw)
    return hs.ExperimentConfig.from_dict(doc)


# --- config ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        small_config(n_grid=[256, 128])
    with pytest.raises(ValueError):
        small_config(replications=0)
    with pytest.raises(ValueError):
        small_config(sigma=0.0)
    with pytest.raises(ValueError):
        small_config(bogus=1)
    with pytest.raises(ValueError):
        small_config(estimators=[NW, NW])


def test_config_round_trip(tmp_path):
    cfg = small_config()
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert hs.ExperimentConfig.load(p) == cfg


def test_unknown_sampling_law_rejected():
    with pytest.raises(ValueError):
        hs.draw_target({"kind": "Jk", "k": 1, "C": 1.0, "law": "worst"}, np.random.default_rng(0))


# --- data ---------------------------------------------------------------------------

def test_tiny_noise_reproduces_target():
    f = sc.sample_jk(3, 2.0, np.random.default_rng(0))
    d = hs.generate_data(f, 1000, 1e-12, np.random.default_rng(1))
    assert np.max(np.abs(d.ys - f.params.evaluate(d.xs))) <= 1e-9


def test_noise_is_centered():
    f = sc.make_jk(0.0, [])
    n, sigma = 10 ** 6, 0.5
    d = hs.generate_data(f, n, sigma, np.random.default_rng(2))
    assert abs(d.ys.mean()) <= 4 * sigma / math.sqrt(n)
    assert np.all((d.xs >= 0) & (d.xs <= 1))


def test_same_seed_same_data():
    f = sc.sample_jk(3, 2.0, np.random.default_rng(0))
    a = hs.generate_data(f, 500, 0.5, hs.cell_rng(3, hs.STREAM_DATA, 500, 0))
    b = hs.generate_data(f, 500, 0.5, hs.cell_rng(3, hs.STREAM_DATA, 500, 0))
    assert a.xs.tobytes() == b.xs.tobytes() and a.ys.tobytes() == b.ys.tobytes()
    c = hs.generate_data(f, 500, 0.5, hs.cell_rng(3, hs.STREAM_DATA, 500, 1))
    assert c.xs.tobytes() != a.xs.tobytes()


def test_generate_data_rejects_bad_args():
    f = sc.make_jk(0.0, [])
    with pytest.raises(ValueError):
        hs.generate_data(f, 0, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        hs.generate_data(f, 10, 0.0, np.random.default_rng(0))


# --- risk ---------------------------------------------------------------------------

def test_risk_of_truth_is_zero():
    f = sc.sample_jk(3, 2.0, np.random.default_rng(4))
    assert hs.estimate_l2_risk(f, f).risk == 0.0


def test_risk_of_zero_against_scaled_indicator():
    f = sc.make_jk(0.0, [(0.5, math.sqrt(2))])
    zero = sc.make_jk(0.0, [])
    assert hs.estimate_l2_risk(zero, f).risk == pytest.approx(1.0, abs=1e-9)


def test_mc_agrees_with_exact():
    rng = np.random.default_rng(5)
    for _ in range(20):
        f = sc.sample_jk(3, 2.0, rng)
        g = sc.sample_jk(3, 2.0, rng)
        exact = hs.estimate_l2_risk(g, f, "exact")
        mc = hs.estimate_l2_risk(g, f, "mc", 20000, rng)
        assert exact.se == 0.0 and mc.se > 0
        assert abs(mc.risk - exact.risk) <= 3 * mc.se


def test_exact_falls_back_to_mc_with_warning():
    f = sc.sample_i0(2, 2.0, ["step2d"], np.random.default_rng(0), d=2)
    with pytest.warns(RuntimeWarning):
        r = hs.estimate_l2_risk(f, f, "exact", 1000, np.random.default_rng(1))
    assert r.method == "mc" and r.risk == 0.0


def test_exact_risk_of_kernel_fit_matches_mc():
    f = sc.sample_jk(2, 2.0, np.random.default_rng(6))
    d = hs.generate_data(f, 256, 0.5, np.random.default_rng(7))
    e = est.kernel_ridge(d, est.kernel_from_dict({"type": "laplace", "length_scale": 1.0}), 1e-2)
    exact = hs.estimate_l2_risk(e, f, "exact")
    mc = hs.estimate_l2_risk(e, f, "mc", 200000, np.random.default_rng(8))
    assert abs(exact.risk - mc.risk) <= 3 * mc.se


# --- sweep ---------------------------------------------------------------------------

def test_constructive_zero_noise_risk_within_ramp_error():
    # the ramps interpolate the data, so each jump costs at most h^2 times
    # the gap between the samples that straddle it
    cfg = hs.ExperimentConfig.from_dict({
        "target": {"kind": "Jk", "k": 3, "C": 2.0}, "sigma": 1e-12,
        "estimators": [{"name": "deep", "kind": "deep_constructive"}],
        "n_grid": [2048], "replications": 1, "master_seed": 11})
    res = hs.run_sweep(cfg)
    f = res.target
    (rec,) = res.records
    assert rec.error is None
    d = hs.generate_data(f, 2048, cfg.sigma, hs.cell_rng(11, hs.STREAM_DATA, 2048, 0))
    xs = np.sort(d.xs[:, 0])
    bound = 0.0
    for t, a in zip(f.params.locations, f.params.heights):
        j = np.searchsorted(xs, t)
        gap = xs[min(j, len(xs) - 1)] - xs[max(j - 1, 0)]
        bound += a * a * gap
    assert rec.risk <= bound


def test_doubling_replications_halves_squared_se():
    r20 = hs.run_sweep(small_config(replications=20)).report("nw")
    r40 = hs.run_sweep(small_config(replications=40)).report("nw")
    ratio = np.mean(np.square(r40.risk_se)) / np.mean(np.square(r20.risk_se))
    assert 0.25 <= ratio <= 1.0


def test_sweep_is_deterministic_and_thread_independent():
    cfg = small_config()
    a = hs.run_sweep(cfg, threads=1)
    b = hs.run_sweep(cfg, threads=1)
    c = hs.run_sweep(cfg, threads=4)
    csv_a = hs.cells_csv(a.records)
    assert csv_a == hs.cells_csv(b.records) == hs.cells_csv(c.records)
    assert hs.reports_json(a.reports, cfg) == hs.reports_json(c.reports, cfg)
    assert csv_a.splitlines()[0] == "estimator,n,rep,risk,risk_se,fit_seconds"


def test_cell_failure_is_recorded_and_excluded():
    bad = {"name": "bad", "kind": "kernel_ridge", "kernel": {"type": "nope"}, "lambda": 1.0}
    res = hs.run_sweep(small_config(estimators=[NW, bad]))
    rep = res.report("bad")
    assert rep.failures == 4 * 4
    assert all(u == 0 for u in rep.replications_used)
    assert math.isnan(rep.slope)
    assert res.report("nw").failures == 0
    assert all("error" in c for c in rep.cells)
    doc = json.loads(hs.reports_json(res.reports, res.config))
    assert doc["reports"][1]["slope"] is None


def test_resampled_targets_differ_per_cell():
    cfg = small_config(resample_target=True)
    f1 = hs.draw_target(cfg.target, hs.target_rng(cfg, 128, 0))
    f2 = hs.draw_target(cfg.target, hs.target_rng(cfg, 128, 1))
    assert not np.array_equal(f1.params.locations, f2.params.locations)


def test_outputs_written_and_csv_round_trips(tmp_path):
    res = hs.run_sweep(small_config())
    paths = hs.write_outputs(res, tmp_path)
    assert set(paths) == {"csv", "json", "svg"}
    back = hs.read_cells_csv(paths["csv"])
    assert [(r.estimator, r.n, r.rep, r.risk) for r in back] == \
           [(r.estimator, r.n, r.rep, r.risk) for r in res.records]
    doc = json.loads(open(paths["json"]).read())
    rep = doc["reports"][0]
    for key in ("estimator", "slope", "slope_se", "reference_exponent", "cells"):
        assert key in rep
    assert rep["label"] == "average-case over the sampler"
    svg = open(paths["svg"]).read()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


# --- rate fitting ---------------------------------------------------------------------

NS = [128 * 2 ** i for i in range(7)]


def test_fit_exact_power_laws():
    fit = hs.fit_rate([(n, 3.0 / n) for n in NS])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
    fit = hs.fit_rate([(n, 0.7 * n ** -0.5) for n in NS])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)


def test_fit_recovers_perturbed_slopes():
    rng = np.random.default_rng(13)
    x = np.log(NS)
    hits = 0
    for _ in range(100):
        slope = rng.uniform(-1.2, -0.3)
        y = 0.5 + slope * x + rng.normal(scale=0.1, size=x.size)
        fit = hs.fit_rate(list(zip(NS, np.exp(y))))
        hits += abs(fit.slope - slope) <= 1.96 * fit.slope_se
    # 95% intervals on 5 degrees of freedom cover a bit under 95%; allow slack
    assert hits >= 85


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-6, 1e3), min_size=7, max_size=7), st.floats(1e-3, 1e3))
def test_fit_scale_invariance(risks, scale):
    a = hs.fit_rate(list(zip(NS, risks)))
    b = hs.fit_rate([(n, scale * r) for n, r in zip(NS, risks)])
    assert b.slope == pytest.approx(a.slope, abs=1e-9)
    assert b.intercept - a.intercept == pytest.approx(math.log(scale), abs=1e-9)


def test_fit_drops_nonpositive_with_warning():
    pts = [(n, 1.0 / n) for n in NS[:5]] + [(NS[5], 0.0), (NS[6], -1.0)]
    with pytest.warns(RuntimeWarning, match="dropped 2"):
        fit = hs.fit_rate(pts)
    assert fit.points_used == 5 and fit.slope == pytest.approx(-1.0)


def test_fit_needs_four_points():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            hs.fit_rate([(n, 1.0 / n) for n in NS[:3]] + [(NS[3], 0.0)])
    with pytest.raises(ValueError):
        hs.fit_rate([(n, 1.0 / n) for n in NS[:3]])


# --- reference curves -----------------------------------------------------------------

def test_reference_curves_jk():
    curves = hs.reference_curves({"kind": "Jk", "k": 3, "C": 2.0}, NS)
    shapes = {(c.exponent, c.log_power) for c in curves}
    assert (-1.0, 3.0) in shapes and (-0.5, 0.0) in shapes
    assert all("shape only" in c.label for c in curves)
    deep = next(c for c in curves if c.log_power == 3.0)
    assert deep.values[0] == pytest.approx(NS[0] ** -1 * math.log(NS[0]) ** 3)


def test_reference_curves_jp():
    spec = {"kind": "Jp", "p": 2 / 3, "C1": 1.0, "C2": 1.0, "beta": 1.0}
    ex = hs.reference_exponents(spec)
    assert ex["alpha"] == pytest.approx(1.0)
    assert ex["deep"] == pytest.approx(-2 / 3)
    assert ex["linear_tail"] == pytest.approx(-0.5)
    curves = hs.reference_curves(spec, NS)
    assert any(c.exponent == pytest.approx(-2 / 3) for c in curves)
    minimax = next(c for c in curves if c.label.startswith("minimax"))
    assert minimax.log_power == pytest.approx(-4 / 3)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 1.99), st.floats(0.1, 5.0))
def test_deep_beats_linear_iff_p_below_one(p, beta):
    ex = hs.reference_exponents({"kind": "Jp", "p": p, "C1": 1, "C2": 1, "beta": beta})
    assert (ex["deep"] < ex["linear"]) == (p < 1)


def test_bandwidth_policy():
    assert hs.bandwidth_for(0.1, 1000) == 0.1
    assert hs.bandwidth_for({"scale": 2.0, "exponent": -0.5}, 400) == pytest.approx(0.1)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_minimax import sparse_classes as sc
from sparse_minimax import wavelets


def brute_weak_lp(vals, p):
    # independent oracle: sort descending, scan every rank
    mags = sorted((abs(v) for v in vals if v != 0), reverse=True)
    best = 0.0
    for i, m in enumerate(mags, start=1):
        best = max(best, i ** (1.0 / p) * m)
    return best


def brute_tv(f, step=1e-4):
    # sup over partitions is reached on a grid that straddles every jump
    grid = np.arange(0.0, 1.0 + step / 2, step)
    grid = np.union1d(grid, np.clip(np.concatenate([f.params.locations - step / 3, f.params.locations]), 0, 1))
    vals = f.params.evaluate(grid[:, None])
    return float(np.sum(np.abs(np.diff(vals))))


def naive_haar(t):
    return np.where((t >= 0) & (t < 0.5), 1.0, np.where((t >= 0.5) & (t < 1), -1.0, 0.0))


sparse_lists = st.lists(st.one_of(st.just(0.0), st.floats(-10, 10, allow_nan=False)), max_size=40)


# --- weak lp ---------------------------------------------------------------

def test_weak_lp_examples():
    assert sc.weak_lp_norm(sc.CoeffSeq.from_dense([0, 0, 0]), 1.0) == 0.0
    assert sc.weak_lp_norm(sc.CoeffSeq.from_dense([3, 1, 2]), 1.0) == 4.0
    p = 0.5
    vals = [i ** (-1.0 / p) for i in range(1, 50)]
    assert sc.weak_lp_norm(vals, p) == pytest.approx(1.0, abs=1e-12)


def test_weak_lp_rejects_bad_p():
    for p in (0.0, 2.0, -1.0, 3.0):
        with pytest.raises(ValueError):
            sc.weak_lp_norm([1.0], p)


@settings(max_examples=200, deadline=None)
@given(sparse_lists, st.sampled_from([0.5, 1.0, 1.5]))
def test_weak_lp_matches_brute_force(vals, p):
    assert sc.weak_lp_norm(vals, p) == brute_weak_lp(vals, p)


@settings(max_examples=200, deadline=None)
@given(sparse_lists, st.floats(0.1, 1.9))
def test_weak_lp_below_lp(vals, p):
    assert sc.weak_lp_norm(vals, p) <= sc.lp_norm(vals, p) * (1 + 1e-12) + 1e-300


@settings(max_examples=100, deadline=None)
@given(sparse_lists, st.floats(-5, 5, allow_nan=False), st.randoms(use_true_random=False),
       st.sampled_from([0.5, 1.0, 1.5]))
def test_weak_lp_permutation_and_scale(vals, lam, rnd, p):
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    base = sc.weak_lp_norm(vals, p)
    assert sc.weak_lp_norm(shuffled, p) == base
    assert sc.weak_lp_norm([lam * v for v in vals], p) == pytest.approx(abs(lam) * base, rel=1e-12, abs=1e-300)


# --- l0 --------------------------------------------------------------------

def test_l0_examples():
    assert sc.l0_norm(sc.CoeffSeq.from_dense([0, 2, 0, -1])) == 2
    assert sc.l0_norm(sc.CoeffSeq.from_dense([0, 0])) == 0


def test_l0_dense_scan():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        dense = rng.normal(size=30) * (rng.uniform(size=30) < 0.2)
        assert sc.l0_norm(sc.CoeffSeq.from_dense(dense)) == sum(1 for v in dense if v != 0)


def test_coeffseq_drops_zeros_and_reads_absent_as_zero():
    a = sc.CoeffSeq({1: 2.0, 2: 0.0, 5: -1.0})
    assert a.keys == (1, 5)
    assert a[2] == 0.0 and a[5] == -1.0
    with pytest.raises(ValueError):
        sc.CoeffSeq([(1, 1.0), (1, 2.0)])


# --- tail compactness --------------------------------------------------------

def test_tail_examples():
    C2 = 2.0
    assert sc.tail_compactness_check(sc.CoeffSeq({1: math.sqrt(C2)}), C2, 1.0).ok
    res = sc.tail_compactness_check(sc.CoeffSeq({2: math.sqrt(2 * C2)}), C2, 1.0)
    assert not res.ok and res.first_violation == 1


def test_tail_rejects_bad_params():
    with pytest.raises(ValueError):
        sc.tail_compactness_check([1.0], 0.0, 1.0)
    with pytest.raises(ValueError):
        sc.tail_compactness_check([1.0], 1.0, -1.0)


def _brute_tail(dense, C2, beta):
    sq = np.asarray(dense, float) ** 2
    for m in range(1, len(dense) + 1):
        if sq[m:].sum() > C2 * m ** (-beta) * (1 + sc.REL_TOL):
            return m
    return None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=25),
       st.floats(0.1, 3), st.floats(0.2, 3))
def test_tail_ordinal_matches_brute_force(dense, C2, beta):
    res = sc.tail_compactness_check(dense, C2, beta)
    assert res.first_violation == _brute_tail(dense, C2, beta)
    assert res.ok == (res.first_violation is None)


def test_tail_on_jp_samples():
    rng = np.random.default_rng(3)
    w = wavelets.DyadicWavelet.haar()
    for _ in range(100):
        e = wavelets.sample_jp(w, 2 / 3, 1.0, 1.0, 1.0, 6, rng)
        assert sc.tail_compactness_check(e.coeffs, 1.0, 1.0, ordering="dyadic").ok


# --- total variation -----------------------------------------------------------

def test_total_variation_examples():
    assert sc.total_variation(sc.make_jk(0.0, [(0.5, 1.0)])) == 1.0
    f = sc.make_jk(1.0, [(0.3, 2.0), (0.7, -1.0)])
    assert sc.total_variation(f) == 3.0
    assert brute_tv(f) == pytest.approx(3.0, abs=1e-9)
    assert sc.total_variation(sc.make_jk(4.0, [])) == 0.0


def test_total_variation_matches_partition_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        f = sc.sample_jk(4, 2.0, rng)
        assert sc.total_variation(f) == pytest.approx(brute_tv(f), abs=1e-9)


def test_monotone_staircase_tv_is_rise():
    f = sc.make_jk(0.2, [(0.1, 0.5), (0.4, 0.25), (0.9, 1.0)])
    assert sc.total_variation(f) == pytest.approx(f(1.0) - f(0.0), abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.25, 0.5, 0.75, 1.0]), st.floats(-2, 2, allow_nan=False)),
                max_size=8))
def test_merging_duplicates_is_pointwise_neutral(jumps):
    f = sc.make_jk(0.3, jumps)
    x = np.linspace(0, 1, 41)
    naive = 0.3 + np.array([sum(a for t, a in jumps if xi >= t) for xi in x])
    np.testing.assert_allclose(f(x), naive, atol=1e-12)
    assert np.all(np.diff(f.params.locations) > 0)


# --- samplers ------------------------------------------------------------------

def test_sample_jk_properties():
    rng = np.random.default_rng(0)
    f = sc.sample_jk(1, 2.0, rng)
    assert len(f.params.locations) == 1
    assert abs(f.params.a0) <= 2.0 and abs(f.params.heights[0]) <= 2.0
    for _ in range(100):
        f = sc.sample_jk(3, 2.0, rng)
        assert sc.in_jk(f, 3, 2.0)
        assert sc.total_variation(f) <= 2.0 + 1e-12


def test_sample_i0_identity_atom():
    atom = sc.AffineAtom(1.0, [[1.0]], [0.0], "step")
    f = sc.make_i0([atom])
    x = np.linspace(0, 1, 101)
    np.testing.assert_array_equal(f(x), np.where(x >= 0.5, math.sqrt(2), 0.0))


def test_sample_i0_bounds_and_sup():
    rng = np.random.default_rng(5)
    for _ in range(50):
        f = sc.sample_i0(3, 2.0, ["step", "haar"], rng)
        assert sc.in_i0(f, 3, 2.0)
    f = sc.sample_i0(3, 2.0, ["step2d", "haar2d"], rng, d=2)
    g = np.linspace(0, 1, 100)
    pts = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    assert np.max(np.abs(f(pts))) <= 3 * 2.0 * math.sqrt(2) + 1e-12
    assert np.max(np.abs(f(pts))) <= f.sup_bound + 1e-12


def test_sample_affine_infeasible():
    with pytest.raises(sc.InfeasibleClassError):
        # |det A|^-1 <= C and |A_ij| <= C cannot both hold for tiny C
        sc.sample_affine(1, 0.5, np.random.default_rng(0), max_rounds=20)


def test_register_base_checks_norm():
    with pytest.raises(ValueError):
        sc.register_base("bad", lambda z: np.ones(len(z)) * 2.0, breakpoints=([],))


# --- evaluation ------------------------------------------------------------------

def test_eval_examples():
    f = sc.make_jk(0.0, [(0.5, 1.0)])
    assert sc.eval_target(f, 0.25) == 0.0
    assert sc.eval_target(f, 0.75) == 1.0
    with pytest.raises(ValueError):
        sc.eval_target(f, 1.5)


def test_kp_eval_matches_termwise_sum():
    rng = np.random.default_rng(11)
    w = wavelets.DyadicWavelet.haar()
    f = wavelets.sample_kp([w], 3, 2 / 3, 1.0, 1.0, 2.0, 1.0, 5, rng)
    x = rng.uniform(size=100)
    naive = np.zeros(100)
    for A, b, e in f.params.terms:
        z = A[0, 0] * x - b[0]
        for idx, a in e.coeffs.items():
            k, l = idx.k[0], idx.l[0]
            naive += a * 2 ** (k / 2) * naive_haar(2 ** k * z - l)
    np.testing.assert_allclose(f(x), naive, atol=1e-12)


# --- json --------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["Jk", "I0", "Jp", "Kp"])
def test_json_round_trip(kind):
    rng = np.random.default_rng(2)
    w = wavelets.DyadicWavelet.haar()
    f = {"Jk": lambda: sc.sample_jk(3, 2.0, rng),
         "I0": lambda: sc.sample_i0(2, 2.0, ["step"], rng),
         "Jp": lambda: wavelets.synthesize(wavelets.sample_jp(w, 2 / 3, 1, 1, 1, 5, rng)),
         "Kp": lambda: wavelets.sample_kp([w], 2, 2 / 3, 1, 1, 2, 1, 4, rng)}[kind]()
    doc = json.loads(json.dumps(sc.target_to_json(f)))
    g = sc.target_from_json(doc)
    x = rng.uniform(size=200)
    np.testing.assert_array_equal(f(x), g(x))
    assert sc.target_to_json(g) == doc

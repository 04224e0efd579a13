import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_minimax import quadrature
from sparse_minimax import sparse_classes as sc
from sparse_minimax import wavelets as wv

HAAR = wv.DyadicWavelet.haar()
HAAR2 = wv.DyadicWavelet.haar(2)


def naive_haar(t):
    # mother on [0,1): +1 on the left half, -1 on the right half
    if 0 <= t < 0.5:
        return 1.0
    if 0.5 <= t < 1:
        return -1.0
    return 0.0


def naive_dyadic(k, l, x):
    return 2 ** (k / 2) * naive_haar(2 ** k * x - l)


def test_index_validation():
    wv.windex(2, 3)
    for k, l in ((1, 2), (-1, 0), (0, -1)):
        with pytest.raises(ValueError):
            wv.windex(k, l)
    with pytest.raises(ValueError):
        wv.windex((1, 2), (0,))


def test_eval_examples():
    x = np.array([[0.1], [0.3], [0.6], [0.95]])
    np.testing.assert_array_equal(wv.eval_dyadic(HAAR, wv.windex(0, 0), x), [1, 1, -1, -1])
    assert wv.eval_dyadic(HAAR, wv.windex(1, 1), np.array([[0.8]]))[0] == pytest.approx(-math.sqrt(2))
    assert wv.eval_dyadic(HAAR, wv.windex(2, 3), np.array([[0.9]]))[0] == pytest.approx(-2.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 8), st.data(), st.floats(0, 1))
def test_eval_matches_naive_interpreter(k, data, x):
    l = data.draw(st.integers(0, 2 ** k - 1))
    got = wv.eval_dyadic(HAAR, wv.windex(k, l), np.array([[x]]))[0]
    assert got == pytest.approx(naive_dyadic(k, l, x), abs=1e-12)


def test_tensor_eval_is_product():
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(50, 2))
    idx = wv.windex((2, 1), (3, 0))
    want = [naive_dyadic(2, 3, a) * naive_dyadic(1, 0, b) for a, b in pts]
    np.testing.assert_allclose(wv.eval_dyadic(HAAR2, idx, pts), want, atol=1e-12)


def test_gram_identity_1d_and_2d():
    G = wv.gram_matrix(HAAR, wv.all_indices(1, 5))
    assert np.max(np.abs(G - np.eye(len(G)))) < 1e-10
    G2 = wv.gram_matrix(HAAR2, wv.all_indices(2, 3))
    assert np.max(np.abs(G2 - np.eye(len(G2)))) < 1e-10


def test_register_mother_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        wv.register_mother("box", lambda t: np.where((t >= 0) & (t < 1), 1.0, 0.0), breakpoints=[])
    with pytest.raises(KeyError):
        wv.get_mother("box")


def test_order_is_coarse_to_fine():
    idx = wv.all_indices(2, 2)
    levels = [i.level for i in idx]
    assert levels == sorted(levels)
    assert len(idx) == (1 + 2 + 4) ** 2


# --- analysis / synthesis ---------------------------------------------------------

def test_analyze_single_basis_function():
    e = wv.WaveletExpansion(HAAR, {wv.windex(1, 0): 1.0})
    c = wv.analyze(HAAR, wv.synthesize(e), 4)
    assert c.as_dict() == pytest.approx({wv.windex(1, 0): 1.0})


def test_analyze_zero():
    zero = sc.make_jk(0.0, [])
    assert len(wv.analyze(HAAR, zero, 4)) == 0


def test_analyze_step_matches_hand_integrals():
    f = sc.make_jk(0.0, [(0.5, math.sqrt(2))])
    c = wv.analyze(HAAR, f, 4)
    # <sqrt2 1_[1/2,1], psi_{0,0}> = -sqrt2/2; finer levels vanish on a constant half
    assert c.as_dict() == pytest.approx({wv.windex(0, 0): -math.sqrt(2) / 2})


def test_analyze_generic_step_against_symbolic_integral():
    t0 = 0.3
    f = sc.make_jk(0.0, [(t0, 1.0)])
    c = wv.analyze(HAAR, f, 4)
    for k in range(5):
        for l in range(2 ** k):
            a, mid, b = l / 2 ** k, (l + 0.5) / 2 ** k, (l + 1) / 2 ** k
            # integral of 2^{k/2} psi over [max(t0,.), .]
            pos = max(0.0, mid - max(a, t0))
            neg = max(0.0, b - max(mid, t0))
            want = 2 ** (k / 2) * (pos - neg)
            assert c[wv.windex(k, l)] == pytest.approx(want, abs=1e-12)


def test_analyze_smooth_uses_adaptive_path():
    f = sc.custom_target(lambda x: np.sin(3 * x[:, 0]), 1.0)
    c = wv.analyze(HAAR, f, 2)
    # closed form of sqrt2 (int_0^1/4 - int_1/4^1/2) sin 3x dx
    want = math.sqrt(2) / 3 * ((1 - math.cos(0.75)) - (math.cos(0.75) - math.cos(1.5)))
    assert c[wv.windex(1, 0)] == pytest.approx(want, abs=1e-9)


def test_round_trip_random_jp():
    rng = np.random.default_rng(4)
    for _ in range(5):
        e = wv.sample_jp(HAAR, 2 / 3, 1.0, 1.0, 1.0, 6, rng)
        back = wv.analyze(HAAR, wv.synthesize(e), 6)
        keys = set(back.keys) | set(e.coeffs.keys)
        assert max(abs(back[k] - e.coeffs[k]) for k in keys) <= 1e-8


def test_synthesize_single_and_pair():
    e = wv.WaveletExpansion(HAAR, {wv.windex(0, 0): 1.0})
    x = np.linspace(0, 0.999, 57)
    np.testing.assert_array_equal(wv.synthesize(e)(x), [naive_haar(t) for t in x])
    e2 = wv.WaveletExpansion(HAAR, {wv.windex(0, 0): 0.5, wv.windex(2, 1): -1.5})
    want = [0.5 * naive_dyadic(0, 0, t) - 1.5 * naive_dyadic(2, 1, t) for t in x]
    np.testing.assert_allclose(wv.synthesize(e2)(x), want, atol=1e-12)


def test_parseval():
    rng = np.random.default_rng(9)
    e = wv.sample_jp(HAAR, 1.0, 1.0, 1.0, 0.5, 6, rng)
    f = wv.synthesize(e)
    breaks = quadrature.merge_breaks(f.breakpoints()[0])
    x, w = quadrature.cell_nodes(breaks, 1)
    norm2 = float(np.dot(w, f(x) ** 2))
    assert norm2 == pytest.approx(float(np.sum(e.coeffs.values ** 2)), abs=1e-8)


def test_sup_norm_matches_dense_grid():
    rng = np.random.default_rng(1)
    e = wv.sample_jp(HAAR, 2 / 3, 1.0, 1.0, 1.0, 5, rng)
    grid = (np.arange(2 ** 10) + 0.5) / 2 ** 10
    assert e.sup_norm() == pytest.approx(np.max(np.abs(e.evaluate(grid[:, None]))), abs=1e-12)


# --- samplers ----------------------------------------------------------------------

def test_sample_jp_validators():
    rng = np.random.default_rng(12)
    attempts = []
    for _ in range(100):
        e = wv.sample_jp(HAAR, 2 / 3, 1.0, 1.0, 1.0, 6, rng)
        attempts.append(e.meta["attempts"])
        assert sc.weak_lp_norm(e.coeffs, 2 / 3) <= 1.0 + 1e-12
        assert wv.in_jp(e, 2 / 3, 1.0, 1.0, 1.0)
    assert 1 <= np.mean(attempts)


def test_sample_jp_infeasible():
    with pytest.raises(sc.InfeasibleClassError):
        wv.sample_jp(HAAR, 1.5, 10.0, 0.01, 3.0, 4, np.random.default_rng(0), max_tries=5)


def test_sample_kp_membership():
    rng = np.random.default_rng(6)
    for _ in range(50):
        f = wv.sample_kp([HAAR], 2, 2 / 3, 1.0, 1.0, 2.0, 1.0, 4, rng)
        assert wv.in_kp(f, 2, 2 / 3, 1.0, 1.0, 2.0, 1.0)


def test_kp_identity_reduces_to_jp():
    e = wv.sample_jp(HAAR, 2 / 3, 1.0, 1.0, 1.0, 5, np.random.default_rng(3))
    f = wv.make_kp([(np.eye(1), np.zeros(1), e)])
    x = np.linspace(0, 1, 301)
    np.testing.assert_array_equal(f(x), wv.synthesize(e)(x))


def test_kp_sup_bound_covers_grid():
    rng = np.random.default_rng(8)
    f = wv.sample_kp([HAAR], 3, 2 / 3, 1.0, 1.0, 2.0, 1.0, 5, rng)
    x = rng.uniform(size=20000)
    assert np.max(np.abs(f(x))) <= f.sup_bound


# --- truncation ---------------------------------------------------------------------

def test_truncation_identity_and_top1():
    e = wv.sample_jp(HAAR, 2 / 3, 1.0, 1.0, 1.0, 4, np.random.default_rng(2))
    t = wv.top_n_truncate(e, len(e.coeffs), 5)
    assert t.expansion.coeffs == e.coeffs and t.discarded_energy == 0.0
    e2 = wv.WaveletExpansion(HAAR, {wv.windex(0, 0): 0.3, wv.windex(1, 1): -0.7})
    t = wv.top_n_truncate(e2, 1, 3)
    assert t.expansion.coeffs.as_dict() == {wv.windex(1, 1): -0.7}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 40), st.integers(0, 7))
def test_truncation_energy_is_exact_and_bounded(seed, N, m):
    p, C1, C2, beta = 2 / 3, 1.0, 1.0, 1.0
    e = wv.sample_jp(HAAR, p, C1, C2, beta, 6, np.random.default_rng(seed))
    t = wv.top_n_truncate(e, N, m)
    kept = set(t.kept)
    dropped = sum(a * a for k, a in e.coeffs.items() if k not in kept)
    assert t.discarded_energy == pytest.approx(dropped, rel=1e-12, abs=1e-15)
    # Parseval: the L2 error of the truncation equals the discarded energy
    diff = sc.custom_target(lambda x: e.evaluate(x) - t.expansion.evaluate(x), 1.0)
    x, w = quadrature.cell_nodes(quadrature.merge_breaks(e.breakpoints()[0]), 1)
    assert float(np.dot(w, diff.params.evaluate(x[:, None]) ** 2)) == pytest.approx(dropped, abs=1e-10)
    assert t.discarded_energy <= t.bound * (1 + 1e-12)


def test_expansion_json_round_trip():
    e = wv.sample_jp(HAAR2, 1.0, 1.0, 1.0, 1.0, 3, np.random.default_rng(5))
    doc = json.loads(json.dumps(e.to_dict()))
    assert set(doc) == {"mothers", "coeffs", "bounds"}
    assert set(doc["coeffs"][0]) == {"k", "l", "a"}
    back = wv.WaveletExpansion.from_dict(doc)
    assert back.coeffs == e.coeffs

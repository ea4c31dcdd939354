import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfcert.dynamics import Box
from cbfcert.verifier import (
    DegenerateScheduleError,
    EmptySublevelSetError,
    Grid,
    ScalarField,
    Segment,
    VerifyConfig,
    build_segment_samples,
    certify,
    check_condition,
    gamma0,
    gamma_hat,
    grid_count,
    grid_in_band,
    recursion_constants,
    schedule_recursive,
    schedule_uniform,
    touches_boundary,
    zeta,
)

LH, LF = 1.6854, 1.4325
BOWL = ScalarField(lambda X: np.sum(X**2, axis=1) - 1.0, lambda X: 2 * X)
BOX = Box.cube(1.5, 2)
L_BOWL = 2 * 1.5 * math.sqrt(2)


def test_gamma_hat_hand_values():
    # -(1 - ab) delta / (a (1 - ab) + ab L_f)
    assert gamma_hat(0.2, 0.4, 0.01, LF) == pytest.approx(-0.6 * 0.01 / (0.12 + 0.4 * LF), rel=1e-12)
    assert gamma_hat(0.2, 0.4, 0.01, LF) == pytest.approx(-0.008658, abs=1e-6)
    assert gamma_hat(0.2, 0.6, 0.01, LF) == pytest.approx(-0.004258, abs=1e-6)
    assert gamma_hat(0.2, 0.8, 0.01, LF) == pytest.approx(-0.001686, abs=1e-6)
    g = gamma_hat(0.2, 1.0, 0.01, LF)
    assert g == 0.0 and math.copysign(1, g) == 1


def test_gamma_hat_rejects_bad_rates():
    with pytest.raises(ValueError):
        gamma_hat(0.5, 0.4, 0.01, LF)
    with pytest.raises(ValueError):
        gamma_hat(0.0, 0.0, 0.01, LF)


def test_recursion_constants_hand_values():
    a, b = recursion_constants(0.2, 0.4, LH, LF)
    assert a == pytest.approx(0.65904, abs=1e-5)
    assert b == pytest.approx(-0.29520, abs=1e-5)


def test_zeta_hand_value():
    assert zeta(0.2, 0.4, 0.01, -1.003, LH, LF) == pytest.approx(0.06148, abs=1e-5)
    with pytest.raises(ValueError):
        zeta(0.2, 0.4, 0.01, 0.1, LH, LF)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.0, 0.9),
    st.floats(0.01, 1.0),
    st.floats(1e-4, 0.1),
    st.floats(0.1, 20.0),
    st.floats(0.1, 5.0),
)
def test_recursion_fixed_point_is_gamma_hat(alpha, t, delta, lh, lf):
    ab = alpha + t * (1 - alpha)
    if ab >= 1.0:
        return
    a, b = recursion_constants(alpha, ab, lh, lf)
    assert 0 <= a < 1
    assert b * delta / (1 - a) == pytest.approx(gamma_hat(alpha, ab, delta, lf), rel=1e-10)


@pytest.mark.parametrize("ab,q", [(0.4, 34), (0.6, 20), (0.8, 11)])
def test_recursive_schedule(ab, q):
    s = schedule_recursive(-1.003, 0.2, ab, 0.01, LH, LF, tol=1e-6)
    assert s.q == q
    assert s.values[0] == -1.003 and s.values[-1] == gamma_hat(0.2, ab, 0.01, LF)
    assert all(np.diff(s.values) > 0)


def test_schedule_errors():
    with pytest.raises(DegenerateScheduleError):
        schedule_recursive(0.0, 0.2, 0.4, 0.01, LH, LF)
    with pytest.raises(DegenerateScheduleError):
        schedule_uniform(-0.001, -0.002, 3)
    s = schedule_uniform(-1.0, -0.1, 3)
    assert s.q == 3 and s.values[-1] == -0.1


def test_gamma0_finds_minimum():
    assert gamma0(BOWL, BOX) == pytest.approx(-1.0, abs=1e-6)
    shifted = ScalarField(lambda X: np.sum((X - 0.7) ** 2, axis=1) - 0.5)
    assert gamma0(shifted, BOX) == pytest.approx(-0.5, abs=1e-6)
    with pytest.raises(EmptySublevelSetError):
        gamma0(ScalarField(lambda X: np.ones(len(X))), BOX)


def test_grid_count_unit_square():
    box = Box([0.0, 0.0], [1.0, 1.0])
    for eps in (0.3, 0.1, 0.037):
        d = 2 * eps / math.sqrt(2)
        assert grid_count(box, eps) == math.ceil(1 / d) ** 2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 3), st.floats(0.02, 0.5))
def test_grid_is_eps_net(seed, n, eps):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, n)
    box = Box(lo, lo + rng.uniform(0.1, 2, n))
    grid = Grid.for_radius(box, eps)
    X = box.sample(rng, 1000)
    # nearest grid point is the cell centre
    idx = np.clip(np.floor((X - box.lower) / grid.spacing), 0, grid.counts - 1)
    dist = np.linalg.norm(X - grid.points(idx), axis=1)
    assert np.all(dist <= eps + 1e-12)


@pytest.mark.parametrize("band", [(-0.3, -0.1), (-1.2, 2.0), (5.0, 6.0), (-0.01, 0.0)])
def test_pruning_equals_brute_force(band):
    grid = Grid.for_radius(BOX, 0.01)
    P0, H0 = grid_in_band(BOWL, grid, *band)
    P1, H1 = grid_in_band(BOWL, grid, *band, prune_lip=L_BOWL)
    assert np.array_equal(P0, P1) and np.array_equal(H0, H1)


def test_inflated_band_covers_slab():
    eps = 0.02
    seg = Segment(1, -0.5, -0.3, eps, L_BOWL)
    P, H, _ = build_segment_samples(BOWL, BOX, seg, L_BOWL)
    rng = np.random.default_rng(0)
    X = BOX.sample(rng, 20000)
    X = X[(BOWL(X) >= -0.5) & (BOWL(X) <= -0.3)]
    d = np.min(np.linalg.norm(X[:, None, :] - P[None, :, :], axis=2), axis=1)
    assert d.max() <= eps


def _cfg(**kw):
    base = dict(alpha=0.5, alpha_bar=0.8, delta=0.01, gamma0=-1.0, threads=1)
    base.update(kw)
    return VerifyConfig(**base)


def test_certify_contraction():
    rep = certify(lambda X: 0.5 * X, BOWL, BOX, _cfg(), L_BOWL, 0.5, L_BOWL)
    assert rep.certified and rep.n_violations == 0 and not rep.box_clipped
    assert rep.n_tot < rep.n_base
    assert rep.schedule[-1] == rep.gamma_hat


def test_certify_expansion_fails_with_real_counterexamples():
    rep = certify(lambda X: 1.05 * X, BOWL, BOX, _cfg(), L_BOWL, 1.05, L_BOWL)
    assert rep.verdict == "failed" and rep.counterexamples
    X = np.array([c["state"] for c in rep.counterexamples])
    assert np.all(check_condition(lambda X: 1.05 * X, BOWL, X, 0.5, 0.01) > 0)


def test_grouped_counts_equal_per_segment():
    rep = certify(lambda X: 0.5 * X, BOWL, BOX, _cfg(schedule="uniform", q=6), L_BOWL, 0.5, L_BOWL)
    for s in rep.segments:
        seg = Segment(s.i, s.gamma_lo, s.gamma_hi, s.eps, L_BOWL)
        assert len(build_segment_samples(BOWL, BOX, seg)[0]) == s.n_samples
    assert rep.n_tot <= rep.n_tot_nominal


def test_count_only_skips_checks():
    rep = certify(lambda X: 1.05 * X, BOWL, BOX, _cfg(count_only=True), L_BOWL, 1.05, L_BOWL)
    assert rep.verdict == "not_checked" and not rep.counterexamples and rep.n_tot > 0


def test_box_clipping_blocks_certification():
    box = Box.cube(0.6, 2)
    assert touches_boundary(BOWL, box, -0.1)
    rep = certify(lambda X: 0.5 * X, BOWL, box, _cfg(), 2 * 0.6 * math.sqrt(2), 0.5)
    assert rep.box_clipped and rep.verdict == "failed"


def test_report_json_has_no_infinities():
    import json

    rep = certify(lambda X: 0.5 * X, BOWL, BOX, _cfg(count_only=True), L_BOWL, 0.5, L_BOWL)
    text = json.dumps(rep.to_dict(), allow_nan=False)
    assert '"schema_version": 1' in text

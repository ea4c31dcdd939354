"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the terminal
summary. Criteria 4, 9 and 10 train and verify a model and take a few minutes.
"""
import json
import math
import time

import numpy as np
import pytest

from cbfcert.cli import main, sample_sublevel, simulate_summary
from cbfcert.controller import control_law
from cbfcert.dynamics import Box, benchmark_system
from cbfcert.model import load_model
from cbfcert.neural import Mlp
from cbfcert.probabilistic import certify_probabilistic, kappa, required_samples
from cbfcert.synthesis import SampleSets, SynthConfig, init_model, penalized_loss, sample_datasets
from cbfcert.verifier import (
    Grid,
    ScalarField,
    VerifyConfig,
    certify,
    check_condition,
    gamma_hat,
    recursion_constants,
    schedule_recursive,
    verify,
)

LF, LH, G0 = 1.4325, 1.6854, -1.003
PUBLISHED_GAMMA = {0.4: -0.0086, 0.6: -0.00425, 0.8: -0.00168}
PUBLISHED_Q = {0.4: 32, 0.6: 20, 0.8: 11}
BOWL = ScalarField(lambda X: np.sum(X**2, axis=1) - 1.0, lambda X: 2 * X)


# ----------------------------------------------------------------- shared runs


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("acc")
    cfg = d / "run.json"
    cfg.write_text(json.dumps({"schema_version": 1, "synth": {"n_samples": 5000}}))
    t0 = time.perf_counter()
    assert main(["synth", "--config", str(cfg), "--seed", "0", "--out", str(d / "model.json")]) == 0
    return d, d / "model.json", time.perf_counter() - t0


@pytest.fixture(scope="module")
def verified(trained):
    d, model, _ = trained
    reports = []
    for name in ("rep_a.json", "rep_b.json"):
        main(["verify", str(model), "--alpha-bar", "0.8", "--seed", "0", "--threads", "1", "--out", str(d / name)])
        reports.append(d / name)
    return reports


# ------------------------------------------------------------------- criteria


def test_c01_gamma_hat_reproduction(criterion):
    t0 = time.perf_counter()
    got = {ab: gamma_hat(0.2, ab, 0.01, LF) for ab in PUBLISHED_GAMMA}
    dt = time.perf_counter() - t0
    ok = all(abs(got[ab] - PUBLISHED_GAMMA[ab]) <= 5e-4 for ab in PUBLISHED_GAMMA) and dt < 1.0
    criterion(1, ok, "gamma_hat " + ", ".join(f"{ab}: {g:.6f}" for ab, g in got.items()) + f" in {dt:.2e} s")


def test_c02_fixed_point_consistency(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        alpha = rng.uniform(0.0, 0.9)
        ab = rng.uniform(alpha, 0.999)
        delta, lh, lf = rng.uniform(1e-4, 0.1), rng.uniform(0.1, 20), rng.uniform(0.1, 5)
        a, b = recursion_constants(alpha, ab, lh, lf)
        gh = gamma_hat(alpha, ab, delta, lf)
        worst = max(worst, abs(b * delta / (1 - a) - gh) / abs(gh))
    criterion(2, worst <= 1e-10, f"max relative gap {worst:.2e} over 100 draws")


def test_c03_recursion_segment_counts(criterion):
    t0 = time.perf_counter()
    q = {ab: schedule_recursive(G0, 0.2, ab, 0.01, LH, LF, tol=1e-6).q for ab in PUBLISHED_Q}
    dt = time.perf_counter() - t0
    ok = all(abs(q[ab] - PUBLISHED_Q[ab]) <= 3 for ab in q) and dt < 1.0
    criterion(3, ok, f"q {q} vs published {PUBLISHED_Q} in {dt:.2e} s")


@pytest.mark.slow
def test_c04_segmentation_efficiency(trained, criterion):
    _, model_path, t_train = trained
    t0 = time.perf_counter()
    model = load_model(model_path)
    sys_ = model.make_system()
    rows, ok = [], True
    for ab in (0.4, 0.6, 0.8):
        rec = verify(sys_, model.controller, model.h_net, VerifyConfig(alpha_bar=ab, count_only=True, threads=1))
        uni = verify(
            sys_,
            model.controller,
            model.h_net,
            VerifyConfig(alpha_bar=ab, schedule="uniform", q=8, count_only=True, compute_base=False, threads=1),
        )
        # N_base is the q = 1 count over the same [gamma0, gamma_hat] range
        ok &= rec.n_tot < rec.n_base and uni.n_tot < 0.7 * rec.n_base
        rows.append(f"ab={ab}: q={len(rec.schedule) - 1} N_tot={rec.n_tot} N_base={rec.n_base} N(q=8)={uni.n_tot}")
    total = t_train + time.perf_counter() - t0
    ok &= total < 300
    criterion(4, ok, "; ".join(rows) + f"; {total:.0f} s incl. training")


def test_c05_eps_net_soundness(criterion):
    rng = np.random.default_rng(5)
    failures = 0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        lo = rng.uniform(-3, 1, n)
        box = Box(lo, lo + rng.uniform(0.2, 3, n))
        eps = float(rng.uniform(0.02, 0.4))
        grid = Grid.for_radius(box, eps)
        X = box.sample(rng, 1000)
        # exhaustive nearest grid point on small grids, cell lookup otherwise
        if grid.size <= 20000:
            P = grid.points(np.stack(np.unravel_index(np.arange(grid.size), grid.counts), axis=1))
            dist = np.sqrt(((X[:, None, :] - P[None]) ** 2).sum(-1)).min(axis=1)
        else:
            idx = np.clip(np.floor((X - box.lower) / grid.spacing), 0, grid.counts - 1)
            dist = np.linalg.norm(X - grid.points(idx), axis=1)
        failures += int(np.sum(dist > eps))
    criterion(5, failures == 0, f"{failures} audited points farther than eps from the grid")


def test_c06_oracle_equivalence(criterion):
    box = Box.cube(2.0, 2)
    lh = 2 * 2.0 * math.sqrt(2)
    cfg = VerifyConfig(alpha=0.0, alpha_bar=1.0, delta=0.05, threads=1)
    rng = np.random.default_rng(6)
    scan = box.sample(rng, 10**6)
    scan = scan[BOWL(scan) <= 0]

    def relaxed_violations(step, X, ab=1.0):
        # r(x) = h(f(x)) - h(x) <= -ab h(x) on S(0)
        return (BOWL(step(X)) - BOWL(X)) > -ab * BOWL(X)

    half = lambda X: 0.5 * X  # noqa: E731
    grow = lambda X: 1.05 * X  # noqa: E731
    rep_c = certify(half, BOWL, box, cfg, lh, 0.5, lh)
    scan_c = int(relaxed_violations(half, scan).sum())
    rep_g = certify(grow, BOWL, box, cfg, lh, 1.05, lh)
    scan_g = int(relaxed_violations(grow, scan).sum())
    confirmed = 0
    if rep_g.counterexamples:
        C = np.array([c["state"] for c in rep_g.counterexamples])
        confirmed = int(np.sum(check_condition(grow, BOWL, C, 0.0, 0.05) > 0))
    ok = rep_c.certified and scan_c == 0 and rep_g.verdict == "failed" and confirmed > 0 and scan_g > 0
    criterion(
        6,
        ok,
        f"f=0.5x: verdict {rep_c.verdict} ({rep_c.n_violations} sampled violations, scan {scan_c}/{len(scan)}); "
        f"f=1.05x: verdict {rep_g.verdict}, {confirmed} counterexamples confirmed, scan {scan_g}/{len(scan)}",
    )


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def test_c07_gradient_checks(criterion):
    worst = {"grad_params": 0.0, "grad_input": 0.0, "penalized_loss": 0.0}
    h = 1e-6
    sys_ = benchmark_system()
    for k in range(10):
        rng = np.random.default_rng(700 + k)
        net = Mlp.init([2, 10, 10, 1], rng)
        X = rng.normal(size=(8, 2))
        up = rng.normal(size=(8, 1))
        theta = net.to_vec()
        fd = np.array(
            [
                (np.sum(up * net.from_vec(theta + h * e).forward(X)) - np.sum(up * net.from_vec(theta - h * e).forward(X))) / (2 * h)
                for e in np.eye(theta.size)
            ]
        )
        worst["grad_params"] = max(worst["grad_params"], _rel(net.grad_params(X, up), fd))
        J = net.grad_input(X)[:, 0, :]
        fdx = np.stack([(net.forward(X + h * e) - net.forward(X - h * e))[:, 0] / (2 * h) for e in np.eye(2)], axis=1)
        worst["grad_input"] = max(worst["grad_input"], _rel(J, fdx))

        cfg = SynthConfig(n_samples=300, alpha=0.2, seed=k)
        sets = sample_datasets(sys_, cfg, rng)
        sets = SampleSets(sets.safe[:15], sets.unsafe[:15], sets.decay[:25])
        model = init_model(sys_, cfg, rng)
        th = model.params() + rng.normal(scale=0.3, size=model.params().size)
        _, g = penalized_loss(th, model, sets, cfg, sys_)
        fdl = np.array(
            [
                (penalized_loss(th + h * e, model, sets, cfg, sys_)[0] - penalized_loss(th - h * e, model, sets, cfg, sys_)[0]) / (2 * h)
                for e in np.eye(th.size)
            ]
        )
        worst["penalized_loss"] = max(worst["penalized_loss"], _rel(g, fdl))
    ok = all(v <= 1e-5 for v in worst.values())
    criterion(7, ok, "max relative FD gap " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def _linear_scan(theta, vol, n, z):
    N = 2
    ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    while (7 * math.log(2 / theta) / (3 * (N - 1)) * vol / ball) ** (1 / n) > z:
        N += 1
    return N


def test_c08_probabilistic_path(criterion):
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(50):
        theta, vol, n, z = rng.uniform(0.01, 0.5), rng.uniform(0.05, 5), int(rng.integers(1, 4)), rng.uniform(0.2, 1.0)
        mismatches += required_samples(theta, vol, n, z) != _linear_scan(theta, vol, n, z)
    mono = 0
    for _ in range(1000):
        t1, t2 = np.sort(rng.uniform(1e-3, 0.99, 2))
        n1, n2 = np.sort(rng.integers(2, 10**6, 2))
        if n1 == n2 or t1 == t2:
            continue
        mono += not (kappa(t1, n1) > kappa(t1, n2) and kappa(t1, n1) > kappa(t2, n1))
    cfg = VerifyConfig(alpha=0.5, alpha_bar=0.8, delta=0.01, gamma0=-1.0, schedule="uniform", q=3, seed=8)
    lh = 2 * 1.5 * math.sqrt(2)
    rep = certify_probabilistic(lambda X: 0.5 * X, BOWL, Box.cube(1.5, 2), cfg, 0.1, lh, 0.5, 20000, prune_lip=lh)
    exact = rep.confidence == (1 - 0.1) ** 3
    ok = mismatches == 0 and mono == 0 and exact
    criterion(8, ok, f"{mismatches} required_samples mismatches, {mono} monotonicity failures, confidence {rep.confidence!r}")


@pytest.mark.slow
def test_c09_invariance(trained, verified, criterion):
    _, model_path, _ = trained
    rep = json.loads(verified[0].read_text())
    model = load_model(model_path)
    sys_ = model.make_system()
    box = sys_.verify_box
    rng = np.random.default_rng(9)
    X0 = sample_sublevel(model.h, box, rep["gamma_hat"], 100, rng)
    sim = simulate_summary(sys_, model, X0, 300)
    inv = sim["unsafe_hits"] == 0 and sim["max_h"] <= 0

    # pointwise audit of v(x) = r(x) + alpha h(x) <= -delta on S(0), then the S(-delta/alpha) rollouts
    alpha, delta = rep["alpha"], rep["delta"]
    S0 = sample_sublevel(model.h, box, 0.0, 20000, rng)

    def step(X):
        return sys_.step(X, control_law(model.controller, X))

    audit_bad = int(np.sum(check_condition(step, model.h, S0, alpha, delta) > 0))
    level = -delta / alpha
    inner = simulate_summary(sys_, model, sample_sublevel(model.h, box, level, 100, rng), 300)
    inner_ok = inner["max_h"] <= level
    prop3 = inner_ok if audit_bad == 0 else True
    ok = rep["verdict"] == "certified" and inv and prop3
    criterion(
        9,
        ok,
        f"verdict {rep['verdict']} ({rep['n_violations']} violations, box clipped {rep['box_clipped']}); "
        f"from S(gamma_hat): max h {sim['max_h']:.4g}, unsafe hits {sim['unsafe_hits']}; "
        f"audit violations on S(0) {audit_bad}/20000; from S(-delta/alpha): max h {inner['max_h']:.4g} vs {level:g}"
        + ("" if audit_bad == 0 else " (audit premise not met)"),
    )


@pytest.mark.slow
def test_c10_determinism(tmp_path, verified, criterion):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"schema_version": 1, "synth": {"n_samples": 2000, "warm_steps": 500, "steps": 500}}))
    outs = []
    for name in ("a.json", "b.json"):
        main(["synth", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / name)])
        outs.append((tmp_path / name).read_bytes())
    same_model = outs[0] == outs[1]
    reps = []
    for p in verified:
        d = json.loads(p.read_text())
        d.pop("wall_time_s")
        reps.append(json.dumps(d, sort_keys=True))
    same_report = reps[0] == reps[1]
    criterion(10, same_model and same_report, f"model bytes identical {same_model}; report identical (minus wall time) {same_report}")

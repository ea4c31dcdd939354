"""cbfcert command line: synth, verify, verify-prob, sweep, refine, simulate.

Exit codes: 0 success or certified, 1 configuration error, 2 training
abort, 3 certification failed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConfigError, from_mapping
from .controller import control_law
from .dynamics import SYSTEMS, Box, make_system
from .model import SCHEMA_VERSION, dump_json, load_model, save_model
from .probabilistic import RejectionBudgetError
from .synthesis import SynthConfig, TrainingError, refine, sample_datasets, train
from .verifier import DegenerateScheduleError, EmptySublevelSetError, VerifyConfig, base_count, gamma0, verify

EXIT_OK, EXIT_CONFIG, EXIT_TRAIN, EXIT_FAILED = 0, 1, 2, 3

log = logging.getLogger("cbfcert")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    system: str = "benchmark"
    synth: SynthConfig = SynthConfig()
    verify: VerifyConfig = VerifyConfig()


def load_run_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(data) - {"schema_version", "system", "synth", "verify"})
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    system = data.get("system", "benchmark")
    if system not in SYSTEMS:
        raise ConfigError(f"unknown system {system!r}")
    return RunConfig(system, from_mapping(SynthConfig, data.get("synth")), from_mapping(VerifyConfig, data.get("verify")))


def _replace(cfg, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        return dataclasses.replace(cfg, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _verify_cfg(args, run: RunConfig) -> VerifyConfig:
    return _replace(
        run.verify,
        alpha=args.alpha,
        alpha_bar=args.alpha_bar,
        delta=args.delta,
        schedule=args.schedule,
        q=args.q,
        target=args.target,
        lip_h=args.lip_h,
        lip_f=args.lip_f,
        lip_mode=args.lip_mode,
        seed=args.seed,
        threads=args.threads,
    )


def _load_model(path):
    try:
        return load_model(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"model file not found: {path}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: invalid model file ({exc})") from exc


def _write_rows(path, rows, fields=None):
    if fields is None:
        fields = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _sibling(out: str, suffix: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


# ------------------------------------------------------------------ commands


def cmd_synth(args, run: RunConfig) -> int:
    cfg = _replace(run.synth, seed=args.seed)
    sys_ = make_system(run.system)
    try:
        res = train(sys_, cfg)
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    out = args.out or "model.json"
    save_model(res.model, out)
    log_path = args.log or _sibling(out, ".log.csv")
    _write_rows(log_path, res.log)
    last = res.log[-1] if res.log else {}
    print(f"model -> {out}; log -> {log_path}; decay violations {last.get('decay_violations')}")
    return EXIT_OK


def _emit_report(report, args, kind: str) -> int:
    out = args.out or f"{kind}.json"
    dump_json(report.to_dict(), out)
    cex_path = args.counterexamples or _sibling(out, ".cex.json")
    if report.counterexamples:
        dump_json(report.counterexamples, cex_path)
    print(
        f"{report.verdict}: n_tot={report.n_tot} gamma_hat={report.gamma_hat:.6g} "
        f"q={len(report.schedule) - 1} -> {out}"
        + (f"; {len(report.counterexamples)} counterexamples -> {cex_path}" if report.counterexamples else "")
    )
    return EXIT_OK if report.certified else EXIT_FAILED


def cmd_verify(args, run: RunConfig) -> int:
    model = _load_model(args.model)
    cfg = _verify_cfg(args, run)
    report = verify(model.make_system(), model.controller, model.h_net, cfg)
    return _emit_report(report, args, "report")


def cmd_verify_prob(args, run: RunConfig) -> int:
    from .probabilistic import verify_probabilistic

    model = _load_model(args.model)
    cfg = _verify_cfg(args, run)
    report = verify_probabilistic(model.make_system(), model.controller, model.h_net, cfg, args.theta, args.volume_samples)
    return _emit_report(report, args, "report")


SWEEP_FIELDS = ["alpha_bar", "q_mode", "q", "gamma_hat", "n_tot", "n_base", "wall_time_s"]


def cmd_sweep(args, run: RunConfig) -> int:
    from .verifier import ScalarField, certify, make_schedule, resolve_lipschitz

    if not args.alpha_bars:
        raise ConfigError("sweep needs at least one --alpha-bar value")
    q_values = list(range(args.q_min, args.q_max + 1))
    if not q_values and not args.recursion:
        raise ConfigError("empty q range")
    model = _load_model(args.model)
    sys_ = model.make_system()
    base_cfg = _verify_cfg(args, run)
    box = Box(*base_cfg.box) if base_cfg.box is not None else sys_.verify_box
    h = ScalarField.from_net(model.h_net)
    from .neural import lipschitz_upper

    prune = lipschitz_upper(model.h_net)
    info = resolve_lipschitz(sys_, model.controller, model.h_net, box, base_cfg)
    g0 = base_cfg.gamma0 if base_cfg.gamma0 is not None else gamma0(h, box)

    def step(X):
        return sys_.step(X, control_law(model.controller, X))

    rows = []
    for ab in args.alpha_bars:
        cfg = _replace(base_cfg, alpha_bar=ab, gamma0=g0, compute_base=False)
        sched, gh = make_schedule(g0, _replace(cfg, schedule="uniform", q=1), info["l_h"], info["l_f"])
        n_base, _ = base_count(h, box, g0, sched.values[-1], cfg, info["l_h"], info["l_f"], prune)
        cells = [("recursion", None)] if args.recursion else []
        cells += [("uniform", q) for q in q_values]
        for mode, q in cells:
            c = _replace(cfg, schedule=mode, q=q)
            t0 = time.perf_counter()
            rep = certify(step, h, box, c, info["l_h"], info["l_f"], prune, info)
            rows.append(
                {
                    "alpha_bar": ab,
                    "q_mode": mode,
                    "q": len(rep.schedule) - 1,
                    "gamma_hat": rep.gamma_hat,
                    "n_tot": rep.n_tot,
                    "n_base": n_base,
                    "wall_time_s": round(time.perf_counter() - t0, 3),
                }
            )
            print(", ".join(f"{k}={rows[-1][k]}" for k in SWEEP_FIELDS))
    out = args.out or "sweep.csv"
    _write_rows(out, rows, SWEEP_FIELDS)
    return EXIT_OK


def _read_counterexamples(path) -> np.ndarray:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"counterexample file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(data, dict):
        data = data.get("counterexamples", [])
    if not isinstance(data, list):
        raise ConfigError(f"{path}: expected a JSON array of counterexamples")
    try:
        return np.array([c["state"] for c in data], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: each entry needs a 'state' field") from exc


def cmd_refine(args, run: RunConfig) -> int:
    model = _load_model(args.model)
    cex = _read_counterexamples(args.counterexamples_in)
    out = args.out or "refined.json"
    if len(cex) == 0:
        print("warning: no counterexamples; model left unchanged", file=sys.stderr)
        save_model(model, out)
        return EXIT_OK
    sys_ = model.make_system()
    scfg = _replace(run.synth, seed=args.seed)
    vcfg = _verify_cfg(args, run)
    n_steps = scfg.steps if args.steps is None else args.steps
    sets = sample_datasets(sys_, scfg, np.random.default_rng(scfg.seed))
    rows = []
    status = EXIT_OK
    for rnd in range(1, args.rounds + 1):
        try:
            res = refine(model, sets, scfg, sys_, cex, n_steps)
        except TrainingError as exc:
            print(f"training aborted: {exc}", file=sys.stderr)
            return EXIT_TRAIN
        model, sets = res.model, res.sets
        rows.extend({"round": rnd, **r} for r in res.log)
        if args.rounds == 1:
            break
        report = verify(sys_, model.controller, model.h_net, vcfg)
        print(f"round {rnd}: {report.verdict}, {len(report.counterexamples)} counterexamples")
        if report.certified:
            break
        cex = np.array([c["state"] for c in report.counterexamples])
    else:
        if args.rounds > 1:
            print(f"no certificate after {args.rounds} rounds", file=sys.stderr)
            status = EXIT_FAILED
    save_model(model, out)
    if rows:
        _write_rows(args.log or _sibling(out, ".log.csv"), rows)
    print(f"model -> {out}")
    return status


def sample_sublevel(h, box: Box, level: float, n: int, rng: np.random.Generator, budget_factor: int = 1000) -> np.ndarray:
    """Uniform draws from {x in box : h(x) <= level} by rejection."""
    out, have, drawn = [], 0, 0
    while have < n:
        if drawn >= budget_factor * max(n, 1):
            raise EmptySublevelSetError(f"could not draw {n} points with h <= {level}")
        X = box.sample(rng, max(4 * (n - have), 1024))
        drawn += len(X)
        X = X[h(X) <= level]
        out.append(X)
        have += len(X)
    return np.concatenate(out)[:n] if out else np.empty((0, box.dim))


def cmd_simulate(args, run: RunConfig) -> int:
    from .verifier import resolve_lipschitz
    from .verifier import gamma_hat as gamma_hat_fn

    model = _load_model(args.model)
    sys_ = model.make_system()
    vcfg = _verify_cfg(args, run)
    box = Box(*vcfg.box) if vcfg.box is not None else sys_.verify_box
    if args.level is not None:
        level = args.level
    else:
        info = resolve_lipschitz(sys_, model.controller, model.h_net, box, vcfg)
        level = gamma_hat_fn(vcfg.alpha, vcfg.alpha_bar, vcfg.delta, info["l_f"])
    rng = np.random.default_rng(vcfg.seed)
    X0 = sample_sublevel(model.h, box, level, args.starts, rng)
    summary = simulate_summary(sys_, model, X0, args.steps, args.out or "trajectories.csv")
    summary["level"] = level
    summary_path = args.summary or _sibling(args.out or "trajectories.csv", ".summary.json")
    dump_json(summary, summary_path)
    print(json.dumps(summary))
    return EXIT_OK


def simulate_summary(sys_, model, X0: np.ndarray, steps: int, csv_path: Optional[str] = None) -> dict:
    from .dynamics import simulate

    traj = simulate(sys_, model.controller, X0, steps)  # (T+1, B, n)
    T1, B, n = traj.shape
    H = model.h(traj.reshape(-1, n)).reshape(T1, B)
    unsafe = sys_.unsafe(traj.reshape(-1, n)).reshape(T1, B)
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["traj", "t", *[f"x{j + 1}" for j in range(n)], "h"])
            for b in range(B):
                for t in range(T1):
                    w.writerow([b, t, *map(repr, traj[t, b].tolist()), repr(float(H[t, b]))])
    return {
        "n_starts": int(B),
        "steps": int(T1 - 1),
        "max_h": float(H.max()) if H.size else None,
        "max_h_start": float(H[0].max()) if H.size else None,
        "unsafe_hits": int(unsafe.sum()),
        "trajectories_with_unsafe_hits": int(unsafe.any(axis=0).sum()),
    }


# ------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors; argparse's default 2 means training abort here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run config JSON (schema_version 1)")
    common.add_argument("--seed", type=int, help="override the config seeds")
    common.add_argument("--threads", type=int, help="worker threads for verification")
    common.add_argument("--out", help="primary output file")
    common.add_argument("-v", "--verbose", action="store_true")

    vflags = _Parser(add_help=False)
    vflags.add_argument("--alpha", type=float)
    vflags.add_argument("--alpha-bar", type=float)
    vflags.add_argument("--delta", type=float)
    vflags.add_argument("--schedule", choices=["recursion", "uniform"])
    vflags.add_argument("--q", type=int)
    vflags.add_argument("--target", choices=["gamma_hat", "zero"])
    vflags.add_argument("--lip-h", type=float)
    vflags.add_argument("--lip-f", type=float)
    vflags.add_argument("--lip-mode", choices=["upper", "sampled"])

    p = _Parser(prog="cbfcert", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="train a barrier and controller")
    s.add_argument("--log", help="training log CSV")
    s.set_defaults(func=cmd_synth)

    for name, func in (("verify", cmd_verify), ("verify-prob", cmd_verify_prob)):
        s = sub.add_parser(name, parents=[common, vflags], help=f"{name} a trained model")
        s.add_argument("model")
        s.add_argument("--counterexamples", help="where to write counterexamples on failure")
        if name == "verify-prob":
            s.add_argument("--theta", type=float, default=0.05)
            s.add_argument("--volume-samples", type=int, default=100_000)
        s.set_defaults(func=func)

    s = sub.add_parser("sweep", parents=[common, vflags], help="sample counts over q and alpha_bar")
    s.add_argument("model")
    s.add_argument("--alpha-bars", type=_floats, default=[0.4, 0.6, 0.8], help="comma-separated list")
    s.add_argument("--q-min", type=int, default=1)
    s.add_argument("--q-max", type=int, default=8)
    s.add_argument("--no-recursion", dest="recursion", action="store_false")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("refine", parents=[common, vflags], help="retrain with counterexamples")
    s.add_argument("model")
    s.add_argument("counterexamples_in", metavar="counterexamples")
    s.add_argument("--steps", type=int, help="stage-2 steps per round")
    s.add_argument("--rounds", type=int, default=1, help="max refine/verify rounds")
    s.add_argument("--log", help="training log CSV")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("simulate", parents=[common, vflags], help="closed-loop rollouts from S(gamma_hat)")
    s.add_argument("model")
    s.add_argument("--starts", type=int, default=100)
    s.add_argument("--steps", type=int, default=300)
    s.add_argument("--level", type=float, help="start level (default gamma_hat)")
    s.add_argument("--summary", help="summary JSON path")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        run = load_run_config(args.config)
        return args.func(args, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateScheduleError, EmptySublevelSetError, RejectionBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

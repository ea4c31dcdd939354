"""Sampled CBF synthesis: penalized hinge objective trained with Adam.

Stage 1 fits h as a safe/unsafe classifier (decay penalty off), stage 2
adds the closed-loop decay hinge and trains h and the controller jointly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .controller import Controller, control_law, control_law_vjp
from .dynamics import Box, ControlSystem
from .model import CbfModel
from .neural import Mlp

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    alpha: float = 0.01
    delta: float = 0.01
    l_u: float = 0.1
    tau_u: float = 2.0
    tau_s: float = 1.0
    tau_d: float = 10.0
    tau_r: float = 0.00025
    n_samples: int = 20000
    box: Optional[tuple] = None  # ((lo...), (hi...)); system sample box when None
    h_hidden: tuple = (10, 10)
    c_hidden: tuple = (10,)
    q_diag: tuple = (1.0,)
    lr: float = 1e-3
    lr_final: Optional[float] = None  # geometric decay from lr over each stage when set
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warm_steps: int = 5000
    steps: int = 20000
    batch_size: Optional[int] = None
    log_every: int = 500
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.delta < 0 or self.l_u <= 0 or self.tau_r < 0:
            raise ValueError("need delta >= 0, l_u > 0, tau_r >= 0")
        if min(self.tau_u, self.tau_s, self.tau_d) < 0:
            raise ValueError("penalties must be non-negative")
        if self.n_samples < 1 or self.warm_steps < 0 or self.steps < 0:
            raise ValueError("sample budget must be >= 1 and step counts >= 0")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass
class SampleSets:
    safe: np.ndarray
    unsafe: np.ndarray
    decay: np.ndarray

    def with_decay_points(self, X: np.ndarray) -> "SampleSets":
        return SampleSets(self.safe, self.unsafe, np.vstack([self.decay, np.atleast_2d(X)]))


def sample_datasets(sys: ControlSystem, cfg: SynthConfig, rng: np.random.Generator) -> SampleSets:
    box = Box(*cfg.box) if cfg.box is not None else sys.sample_box
    if box is None:
        raise ValueError(f"system {sys.name!r} has no sampling box; set SynthConfig.box")
    X = box.sample(rng, cfg.n_samples)
    sets = SampleSets(X[sys.safe(X)], X[sys.unsafe(X)], X[sys.decay_region(X)])
    for name in ("safe", "unsafe", "decay"):
        if len(getattr(sets, name)) == 0:
            raise ValueError(f"sampling produced an empty {name} set; check box and predicates")
    return sets


def init_model(sys: ControlSystem, cfg: SynthConfig, rng: np.random.Generator) -> CbfModel:
    h_net = Mlp.init([sys.n_x, *cfg.h_hidden, 1], rng)
    c_net = Mlp.init([sys.n_x, *cfg.c_hidden, sys.n_u], rng)
    q = np.broadcast_to(np.asarray(cfg.q_diag, dtype=float), (sys.n_u,))
    ctrl = Controller(c_net, q, sys.u_lo, sys.u_hi)
    return CbfModel(sys.name, sys.dt, h_net, ctrl)


def decay_residual(model: CbfModel, sys: ControlSystem, X: np.ndarray, alpha: float, delta: float):
    """h(f(x, u(x))) - (1 - alpha) h(x) + delta; the decay hinge argument."""
    U = control_law(model.controller, X)
    Xn = sys.step(X, U)
    return model.h(Xn) - (1.0 - alpha) * model.h(X) + delta


def penalized_loss(
    theta: np.ndarray,
    template: CbfModel,
    sets: SampleSets,
    cfg: SynthConfig,
    sys: ControlSystem,
    tau_d: Optional[float] = None,
) -> tuple[float, np.ndarray]:
    """Ridge plus averaged hinge penalties; returns (loss, gradient w.r.t. theta)."""
    tau_d = cfg.tau_d if tau_d is None else tau_d
    model = template.with_params(theta)
    h_net, ctrl = model.h_net, model.controller
    nh = h_net.n_params
    loss = cfg.tau_r * float(theta @ theta)
    grad = 2.0 * cfg.tau_r * theta.copy()
    g_h = grad[:nh]
    g_c = grad[nh:]

    if cfg.tau_u and len(sets.unsafe):
        y, pull = h_net.forward_vjp(sets.unsafe)
        m = cfg.l_u - y[:, 0]
        w = cfg.tau_u / len(sets.unsafe)
        loss += w * float(np.maximum(m, 0.0).sum())
        g_h -= pull((w * (m > 0))[:, None])[0]

    if cfg.tau_s and len(sets.safe):
        y, pull = h_net.forward_vjp(sets.safe)
        hs = y[:, 0]
        w = cfg.tau_s / len(sets.safe)
        loss += w * float(np.maximum(hs, 0.0).sum())
        g_h += pull((w * (hs > 0))[:, None])[0]

    if tau_d and len(sets.decay):
        X = sets.decay
        U = control_law(ctrl, X)
        Xn = sys.step(X, U)
        y_next, pull_next = h_net.forward_vjp(Xn)
        y_now, pull_now = h_net.forward_vjp(X)
        r = y_next[:, 0] - (1.0 - cfg.alpha) * y_now[:, 0] + cfg.delta
        act = r > 0
        w = tau_d / len(X)
        loss += w * float(r[act].sum())
        if act.any():
            wa = (w * act)[:, None]
            gp, gx_next = pull_next(wa)
            g_h += gp
            g_h -= (1.0 - cfg.alpha) * pull_now(wa)[0]
            # only active samples carry gradient into the controller
            _, _, Ju = sys.step_jacobian(X[act], U[act], wrt="u")
            up_u = np.einsum("ni,nij->nj", gx_next[act], Ju)
            g_c += control_law_vjp(ctrl, X[act], up_u)
    return loss, grad


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def violation_report(model: CbfModel, sets: SampleSets, cfg: SynthConfig, sys: ControlSystem) -> dict:
    """Re-evaluate every sampled constraint; counts and worst margins per family."""
    hu = model.h(sets.unsafe)
    hs = model.h(sets.safe)
    r = decay_residual(model, sys, sets.decay, cfg.alpha, cfg.delta)
    U = control_law(model.controller, sets.decay)
    return {
        "unsafe_below_lu": int(np.sum(hu < cfg.l_u)),
        "unsafe_nonpositive": int(np.sum(hu <= 0)),
        "safe_positive": int(np.sum(hs > 0)),
        "decay_violations": int(np.sum(r > 0)),
        "input_violations": int(np.sum((U < sys.u_lo) | (U > sys.u_hi))),
        "worst_unsafe_margin": float(np.max(cfg.l_u - hu)),
        "worst_safe_margin": float(np.max(hs)),
        "worst_decay_residual": float(np.max(r)),
        "n_unsafe": len(sets.unsafe),
        "n_safe": len(sets.safe),
        "n_decay": len(sets.decay),
    }


@dataclass
class TrainResult:
    model: CbfModel
    sets: SampleSets
    log: list = field(default_factory=list)


def _batches(sets: SampleSets, size: Optional[int], rng: np.random.Generator):
    if size is None:
        return sets

    def pick(X):
        if len(X) <= size:
            return X
        return X[rng.choice(len(X), size, replace=False)]

    return SampleSets(pick(sets.safe), pick(sets.unsafe), pick(sets.decay))


def run_stage(
    model: CbfModel,
    sets: SampleSets,
    cfg: SynthConfig,
    sys: ControlSystem,
    stage: str,
    n_steps: int,
    rng: np.random.Generator,
    log_rows: list,
) -> CbfModel:
    tau_d = 0.0 if stage == "warm" else cfg.tau_d
    theta = model.params()
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    decay = (cfg.lr_final / cfg.lr) ** (1.0 / max(n_steps - 1, 1)) if cfg.lr_final else 1.0
    for step in range(1, n_steps + 1):
        opt.lr = cfg.lr * decay ** (step - 1)
        loss, grad = penalized_loss(theta, model, _batches(sets, cfg.batch_size, rng), cfg, sys, tau_d)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite loss at {stage} step {step}: {loss}")
        theta = opt.step(theta, grad)
        if step % cfg.log_every == 0 or step == n_steps:
            current = model.with_params(theta)
            full_loss, _ = penalized_loss(theta, model, sets, cfg, sys, tau_d)
            row = {"step": step, "stage": stage, "loss": full_loss}
            row.update(violation_report(current, sets, cfg, sys))
            log_rows.append(row)
            log.info("%s step %d loss %.6g decay violations %d", stage, step, full_loss, row["decay_violations"])
    return model.with_params(theta)


def train(sys: ControlSystem, cfg: SynthConfig, rng: Optional[np.random.Generator] = None) -> TrainResult:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sets = sample_datasets(sys, cfg, rng)
    model = init_model(sys, cfg, rng)
    rows: list = []
    model = run_stage(model, sets, cfg, sys, "warm", cfg.warm_steps, rng, rows)
    model = run_stage(model, sets, cfg, sys, "main", cfg.steps, rng, rows)
    meta = {"alpha": cfg.alpha, "delta": cfg.delta, "l_u": cfg.l_u, "seed": cfg.seed}
    model = CbfModel(model.system, model.dt, model.h_net, model.controller, meta)
    return TrainResult(model, sets, rows)


def refine(
    model: CbfModel,
    sets: SampleSets,
    cfg: SynthConfig,
    sys: ControlSystem,
    extra_decay_points: np.ndarray,
    n_steps: int,
    rng: Optional[np.random.Generator] = None,
) -> TrainResult:
    """Warm-started stage-2 retraining with counterexamples appended to Z_d."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if len(extra_decay_points):
        sets = sets.with_decay_points(extra_decay_points)
    rows: list = []
    new = run_stage(model, sets, cfg, sys, "refine", n_steps, rng, rows) if n_steps else model
    return TrainResult(new, sets, rows)

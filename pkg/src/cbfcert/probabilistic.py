"""Probabilistic certification from i.i.d. samples of each level-set slab.

With zero empirical violations among N samples, the empirical Bernstein
bound caps the violation probability by kappa(theta, N); the largest ball
that fits inside a set of that measure must then be smaller than the
resolution bound zeta for the slab.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import Box
from .verifier import (
    ScalarField,
    VerifyConfig,
    check_condition,
    finite_or_none,
    gamma0,
    make_schedule,
    plan_segments,
    resolve_lipschitz,
    touches_boundary,
)

log = logging.getLogger(__name__)


class RejectionBudgetError(RuntimeError):
    pass


def kappa(theta: float, n: int) -> float:
    """Upper bound on the 0-1 risk after ``n`` clean i.i.d. samples, confidence 1 - theta."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if n < 2:
        raise ValueError("need at least 2 samples")
    return 7.0 * math.log(2.0 / theta) / (3.0 * (n - 1))


def ball_volume(n: int) -> float:
    """Lebesgue measure of the unit Euclidean ball in R^n."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def largest_ball_bound(theta: float, n_samples: int, vol_c: float, n: int) -> float:
    """Radius bound (kappa * vol(C) / vol(B))^(1/n) on any violating ball."""
    return (kappa(theta, n_samples) * vol_c / ball_volume(n)) ** (1.0 / n)


def required_samples(theta: float, vol_c: float, n: int, zeta_bound: float) -> int:
    """Smallest N >= 2 whose largest-ball bound is at most ``zeta_bound``."""
    if zeta_bound <= 0 or vol_c <= 0:
        raise ValueError("need zeta_bound > 0 and vol_c > 0")

    def ok(N):
        return largest_ball_bound(theta, N, vol_c, n) <= zeta_bound

    N = max(2, math.ceil(1.0 + 7.0 * math.log(2.0 / theta) * vol_c / (3.0 * ball_volume(n) * zeta_bound**n)))
    # settle floating-point ties against the defining inequality
    while not ok(N):
        N += 1
    while N > 2 and ok(N - 1):
        N -= 1
    return N


@dataclass(frozen=True)
class VolumeEstimate:
    volume: float
    half_width: float
    hits: int
    n: int

    @property
    def upper(self) -> float:
        return self.volume + self.half_width


def _hit_volume(hits: int, m: int, box_volume: float) -> VolumeEstimate:
    p = hits / m
    hw = 1.96 * math.sqrt(p * (1.0 - p) / m) * box_volume
    if hits == 0:
        # rule of three: 95% upper bound on a proportion with no hits
        hw = 3.0 / m * box_volume
    return VolumeEstimate(p * box_volume, hw, hits, m)


def estimate_segment_volume(
    h: Callable[[np.ndarray], np.ndarray],
    box: Box,
    gamma_lo: float,
    gamma_hi: float,
    m: int,
    rng: np.random.Generator,
) -> VolumeEstimate:
    """Monte Carlo volume of {x in box : gamma_lo <= h(x) <= gamma_hi} with a 95% half-width."""
    if m < 1000:
        raise ValueError("use at least 1000 volume samples")
    hv = h(box.sample(rng, m))
    hits = int(np.sum((hv >= gamma_lo) & (hv <= gamma_hi)))
    return _hit_volume(hits, m, box.volume)


@dataclass(frozen=True)
class Cover:
    """Equal-size boxes whose union contains a level band of h."""

    lower: np.ndarray  # (K, n) lower corners
    size: np.ndarray  # (n,) common edge lengths

    @property
    def volume(self) -> float:
        return float(len(self.lower) * np.prod(self.size))

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        k = rng.integers(0, len(self.lower), m)
        return self.lower[k] + rng.random((m, self.size.size)) * self.size


def band_cover(h, box: Box, lo: float, hi: float, lip: float, max_cells: int = 1 << 22, chunk: int = 1 << 18) -> Cover:
    """Bisect ``box`` and drop cells that provably miss {lo <= h <= hi}.

    A cell with centre c and half-diagonal r is dropped when the Lipschitz
    bound puts every h value in [h(c) - lip r, h(c) + lip r] outside the band.
    Refinement stops before the kept set would exceed ``max_cells``.
    """
    n = box.dim
    corners = box.lower[None, :].copy()
    size = box.widths.copy()
    children = np.array(list(np.ndindex(*([2] * n))), dtype=float)
    while True:
        centre = corners + 0.5 * size
        r = 0.5 * float(np.linalg.norm(size))
        hc = np.concatenate([h(centre[i:i + chunk]) for i in range(0, len(centre), chunk)])
        keep = (hc - lip * r <= hi) & (hc + lip * r >= lo)
        corners = corners[keep]
        if len(corners) == 0 or len(corners) * 2**n > max_cells:
            return Cover(corners, size)
        size = size / 2
        corners = (corners[:, None, :] + children[None] * size).reshape(-1, n)


def sample_in_band(
    h,
    region,
    lo: float,
    hi: float,
    n: int,
    rng: np.random.Generator,
    budget_factor: int = 1000,
):
    """n i.i.d. uniform draws from {x in region : lo <= h(x) <= hi} by rejection.

    ``region`` is a Box or a Cover; the draw budget is ``budget_factor * n``.
    Returns (X, h(X), number of draws).
    """
    out, have, drawn = [], 0, 0
    budget = budget_factor * n
    while have < n:
        if drawn >= budget:
            raise RejectionBudgetError(f"rejection budget exhausted for band [{lo}, {hi}]: {have}/{n}")
        batch = int(min(max(4 * (n - have), 4096), budget - drawn, 1 << 20))
        X = region.sample(rng, batch)
        drawn += batch
        hv = h(X)
        keep = (hv >= lo) & (hv <= hi)
        out.append((X[keep], hv[keep]))
        have += int(keep.sum())
    X = np.concatenate([o[0] for o in out])[:n]
    H = np.concatenate([o[1] for o in out])[:n]
    return X, H, drawn


@dataclass
class ProbReport:
    verdict: str
    theta: float
    confidence: float
    gamma0: float
    gamma_hat: float
    schedule: list
    volumes: list
    volume_half_widths: list
    required_n: list
    drawn: list
    eps_hat: list
    zetas: list
    segments: list
    counterexamples: list
    n_tot: int
    l_h: float
    l_f: float
    wall_time_s: float
    lipschitz: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    box_clipped: bool = False

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["schema_version"] = 1
        return d


def certify_probabilistic(
    step: Callable[[np.ndarray], np.ndarray],
    h: ScalarField,
    box: Box,
    cfg: VerifyConfig,
    theta: float,
    lip_h: float,
    lip_f: float,
    volume_samples: int = 100_000,
    lipschitz_info: Optional[dict] = None,
    prune_lip: Optional[float] = None,
) -> ProbReport:
    """Sampled certification with confidence (1 - theta)^q.

    With ``prune_lip`` (a Lipschitz bound of h on the box) each slab is drawn
    from a pruned cover of boxes instead of the whole box; the draws stay
    uniform on the slab, only the rejection rate changes.
    """
    t0 = time.perf_counter()
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    g0 = cfg.gamma0 if cfg.gamma0 is not None else gamma0(h, box)
    schedule, gh = make_schedule(g0, cfg, lip_h, lip_f)
    segments = plan_segments(schedule, cfg, lip_h, lip_f)
    n = box.dim

    # one shared Monte Carlo pass for all slab volumes
    vol_rng = np.random.default_rng([cfg.seed, 2**31 - 1])
    hv = h(box.sample(vol_rng, volume_samples))
    warnings, vols, hws, req, drawn, eps_hat, zetas, segs, cex = [], [], [], [], [], [], [], [], []
    for seg in segments:
        hits = int(np.sum((hv >= seg.gamma_lo) & (hv <= seg.gamma_hi)))
        est = _hit_volume(hits, volume_samples, box.volume)
        if est.volume < 1e-6 * box.volume:
            warnings.append(f"segment {seg.i}: estimated volume {est.volume:.3g} may not be full-dimensional")
        N = required_samples(theta, est.upper, n, seg.eps)
        rng = np.random.default_rng(cfg.seed ^ seg.i)
        try:
            region = box if prune_lip is None else band_cover(h, box, seg.gamma_lo, seg.gamma_hi, prune_lip)
            if isinstance(region, Cover) and len(region.lower) == 0:
                warnings.append(f"segment {seg.i}: Lipschitz cover is empty; slab has no points")
                X, H, n_drawn = np.empty((0, n)), np.empty(0), 0
            else:
                X, H, n_drawn = sample_in_band(h, region, seg.gamma_lo, seg.gamma_hi, N, rng)
        except RejectionBudgetError:
            if hits:
                raise
            # no volume hits and no draws either: treat the slab as measure zero
            warnings.append(f"segment {seg.i}: no samples found; treated as empty")
            X, H, n_drawn = np.empty((0, n)), np.empty(0), 1000 * N
        R = check_condition(step, h, X, cfg.alpha, cfg.delta, H) if len(X) else np.full(1, -np.inf)
        bad = np.flatnonzero(R > 0)
        cex.extend(
            {"state": X[j].tolist(), "h": float(H[j]), "residual": float(R[j]), "segment": seg.i}
            for j in bad[np.argsort(-R[bad], kind="stable")][: cfg.max_counterexamples]
        )
        vols.append(est.volume)
        hws.append(est.half_width)
        req.append(N)
        drawn.append(n_drawn)
        zetas.append(seg.eps)
        eps_hat.append(largest_ball_bound(theta, N, est.upper, n))
        segs.append(
            {
                "i": seg.i,
                "gamma_lo": seg.gamma_lo,
                "gamma_hi": seg.gamma_hi,
                "n_samples": N,
                "n_violations": int(bad.size),
                "worst_residual": finite_or_none(float(R.max())),
            }
        )
    cex = sorted(cex, key=lambda c: -c["residual"])[: cfg.max_counterexamples]
    cex.sort(key=lambda c: c["segment"])
    clipped = touches_boundary(h, box, schedule.values[-1])
    if clipped:
        warnings.append("sublevel set reaches the verification box boundary; it cannot be certified")
    return ProbReport(
        verdict="failed" if cex or clipped else "certified",
        theta=theta,
        confidence=(1.0 - theta) ** schedule.q,
        gamma0=g0,
        gamma_hat=gh,
        schedule=list(schedule.values),
        volumes=vols,
        volume_half_widths=hws,
        required_n=req,
        drawn=drawn,
        eps_hat=eps_hat,
        zetas=zetas,
        segments=segs,
        counterexamples=cex,
        n_tot=int(sum(req)),
        l_h=lip_h,
        l_f=lip_f,
        wall_time_s=time.perf_counter() - t0,
        lipschitz=lipschitz_info or {},
        warnings=warnings,
        box_clipped=clipped,
    )


def verify_probabilistic(sys, ctrl, h_net, cfg: VerifyConfig, theta: float, volume_samples: int = 100_000) -> ProbReport:
    from .controller import control_law
    from .neural import lipschitz_upper

    box = Box(*cfg.box) if cfg.box is not None else sys.verify_box
    info = resolve_lipschitz(sys, ctrl, h_net, box, cfg)

    def step(X):
        return sys.step(X, control_law(ctrl, X))

    return certify_probabilistic(
        step,
        ScalarField.from_net(h_net),
        box,
        cfg,
        theta,
        info["l_h"],
        info["l_f"],
        volume_samples,
        info,
        prune_lip=lipschitz_upper(h_net),
    )

"""Level-set-segmented certification of the barrier decay condition.

The sublevel set S(target) is split into slabs C_i = {gamma_{i-1} <= h <= gamma_i}.
Each slab is covered by an axis-aligned grid fine enough to be an eps_i-net,
with eps_i set by the Lipschitz resolution bound ``zeta``; the decay residual
is then checked at every retained grid point.
"""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import Box

log = logging.getLogger(__name__)

CORRECTED_B_NOTE = (
    "recursion constant b uses denominator L_h*L_f + (1 - alpha_bar)*L_h so that "
    "the fixed point of gamma <- a*gamma + b*delta equals gamma_hat"
)


class DegenerateScheduleError(ValueError):
    pass


class EmptySublevelSetError(ValueError):
    pass


@dataclass(frozen=True)
class ScalarField:
    """A scalar function on R^n evaluated on batches, with optional gradient."""

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return self.value(np.atleast_2d(X))

    def grad(self, X: np.ndarray, step: float = 1e-6) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.gradient is not None:
            return self.gradient(X)
        G = np.empty_like(X, dtype=float)
        for j in range(X.shape[1]):
            e = np.zeros(X.shape[1])
            e[j] = step
            G[:, j] = (self.value(X + e) - self.value(X - e)) / (2 * step)
        return G

    @classmethod
    def from_net(cls, net) -> "ScalarField":
        return cls(lambda X: net.forward(X)[:, 0], lambda X: net.grad_input(X)[:, 0, :])


@dataclass(frozen=True)
class LevelSchedule:
    values: tuple
    mode: str
    target: str = "gamma_hat"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size < 2 or np.any(np.diff(v) <= 0):
            raise DegenerateScheduleError(f"schedule must be strictly increasing: {v}")

    @property
    def q(self) -> int:
        return len(self.values) - 1


# ---------------------------------------------------------------- constants


def gamma_hat(alpha: float, alpha_bar: float, delta: float, lip_f: float) -> float:
    """Level of the invariant sublevel set certified by finite sampling."""
    if not (0.0 <= alpha <= alpha_bar <= 1.0):
        raise ValueError("need 0 <= alpha <= alpha_bar <= 1")
    if delta < 0 or lip_f <= 0:
        raise ValueError("need delta >= 0 and L_f > 0")
    den = alpha * (1.0 - alpha_bar) + alpha_bar * lip_f
    if den == 0:
        raise ValueError("alpha and alpha_bar cannot both be zero")
    # + 0.0 normalises -0.0 when alpha_bar = 1
    return -((1.0 - alpha_bar) / den) * delta + 0.0


def recursion_constants(alpha: float, alpha_bar: float, lip_h: float, lip_f: float) -> tuple[float, float]:
    """(a, b) of the worst-case level recursion gamma <- a*gamma + b*delta."""
    if not (0.0 <= alpha <= alpha_bar <= 1.0):
        raise ValueError("need 0 <= alpha <= alpha_bar <= 1")
    if lip_h <= 0 or lip_f <= 0:
        raise ValueError("Lipschitz constants must be positive")
    den = lip_h * lip_f + (1.0 - alpha_bar) * lip_h
    a = (1.0 - alpha_bar) * (lip_h * lip_f + (1.0 - alpha) * lip_h) / den
    b = -(1.0 - alpha_bar) * lip_h / den
    return a, b


def zeta(alpha: float, alpha_bar: float, delta: float, gamma: float, lip_h: float, lip_f: float) -> float:
    """Largest admissible net radius for the slab whose upper level is ``gamma``."""
    if gamma > 0:
        raise ValueError("levels must be non-positive")
    return (delta + (alpha_bar - alpha) * abs(gamma)) / (lip_h * lip_f + (1.0 - alpha_bar) * lip_h)


def schedule_recursive(
    gamma0: float,
    alpha: float,
    alpha_bar: float,
    delta: float,
    lip_h: float,
    lip_f: float,
    tol: float = 1e-6,
    max_segments: int = 100_000,
) -> LevelSchedule:
    target = gamma_hat(alpha, alpha_bar, delta, lip_f)
    if gamma0 >= target:
        raise DegenerateScheduleError(
            f"gamma0={gamma0:.6g} >= gamma_hat={target:.6g}: S(gamma_hat) is empty; decrease delta"
        )
    a, b = recursion_constants(alpha, alpha_bar, lip_h, lip_f)
    values = [gamma0]
    while True:
        g = a * values[-1] + b * delta
        if abs(g - target) < tol or g >= target:
            values.append(target)
            break
        values.append(g)
        if len(values) > max_segments:
            raise DegenerateScheduleError("recursion did not reach gamma_hat")
    return LevelSchedule(tuple(values), "recursion", "gamma_hat")


def schedule_uniform(gamma0: float, target: float, q: int, target_name: str = "gamma_hat") -> LevelSchedule:
    if q < 1:
        raise ValueError("q must be >= 1")
    if gamma0 >= target:
        raise DegenerateScheduleError(f"gamma0={gamma0:.6g} >= target={target:.6g}")
    values = np.linspace(gamma0, target, q + 1)
    values[-1] = target
    return LevelSchedule(tuple(float(v) for v in values), "uniform", target_name)


# --------------------------------------------------------------- gamma0


def gamma0(
    h: ScalarField,
    box: Box,
    n_starts: int = 100,
    iters: int = 500,
    grid_points: int = 4096,
) -> float:
    """min h over S(0) within ``box`` by multi-start projected gradient descent."""
    n = box.dim
    k = max(2, int(math.ceil(grid_points ** (1.0 / n))))
    axes = [np.linspace(lo, hi, k) for lo, hi in zip(box.lower, box.upper)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    vals = h(G)
    feasible = np.flatnonzero(vals <= 0)
    if feasible.size == 0:
        raise EmptySublevelSetError("empty sublevel set: no grid point with h <= 0")
    pick = feasible[np.unique(np.linspace(0, feasible.size - 1, n_starts).astype(int))]
    pick = np.union1d(pick, [int(np.argmin(vals))])
    X = G[pick].copy()
    f = vals[pick].copy()
    t = np.full(len(X), 0.1 * float(np.max(box.widths)))
    for _ in range(iters):
        g = h.grad(X)
        trial = np.clip(X - t[:, None] * g, box.lower, box.upper)
        ft = h(trial)
        ok = ft < f
        X[ok], f[ok] = trial[ok], ft[ok]
        t = np.where(ok, t * 1.5, t * 0.5)
        t = np.maximum(t, 1e-14)
    return float(min(f.min(), vals.min()))


# ----------------------------------------------------------------- grids


@dataclass(frozen=True)
class Grid:
    """Cell-centred axis-aligned grid; spacing <= d = 2 eps / sqrt(n) on every axis."""

    box: Box
    counts: np.ndarray
    spacing: np.ndarray

    @classmethod
    def for_radius(cls, box: Box, eps: float) -> "Grid":
        if eps <= 0:
            raise ValueError("net radius must be positive")
        d = grid_resolution(eps, box.dim)
        counts = np.maximum(np.ceil(box.widths / d).astype(np.int64), 1)
        return cls(box, counts, box.widths / counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def points(self, idx: np.ndarray) -> np.ndarray:
        return self.box.lower + (np.asarray(idx) + 0.5) * self.spacing


def grid_resolution(eps: float, n: int) -> float:
    return 2.0 * eps / math.sqrt(n)


def grid_count(box: Box, eps: float) -> int:
    return Grid.for_radius(box, eps).size


def _scan(h, grid: Grid, idx: np.ndarray, band_lo: float, band_hi: float):
    P = grid.points(idx)
    hv = h(P)
    m = (hv >= band_lo) & (hv <= band_hi)
    return P[m], hv[m], np.ravel_multi_index(idx[m].T, grid.counts)


def _candidate_blocks(h, grid: Grid, band_lo, band_hi, lip, leaf, chunk):
    """Start indices of leaf blocks that may hold a point with h in the band.

    Blocks are halved per axis level by level; a block is dropped once
    |h(p) - h(centre)| <= lip * radius proves the band is out of reach.
    """
    n = grid.box.dim
    size = 1 << int(math.ceil(math.log2(max(int(grid.counts.max()), leaf))))
    starts = np.zeros((1, n), dtype=np.int64)
    children = np.array(list(np.ndindex(*([2] * n))), dtype=np.int64)
    while True:
        stop = np.minimum(starts + size, grid.counts)
        lo, hi = grid.points(starts), grid.points(stop - 1)
        centre = 0.5 * (lo + hi)
        radius = 0.5 * np.linalg.norm(hi - lo, axis=1)
        hc = np.concatenate([h(centre[i:i + chunk]) for i in range(0, len(centre), chunk)]) if len(centre) else np.empty(0)
        keep = (hc - lip * radius <= band_hi) & (hc + lip * radius >= band_lo)
        starts = starts[keep]
        if size <= leaf or len(starts) == 0:
            return starts, size
        size //= 2
        starts = (starts[:, None, :] + size * children[None]).reshape(-1, n)
        starts = starts[np.all(starts < grid.counts, axis=1)]


def grid_in_band(
    h: Callable[[np.ndarray], np.ndarray],
    grid: Grid,
    band_lo: float,
    band_hi: float,
    prune_lip: Optional[float] = None,
    leaf: int = 4,
    chunk: int = 1 << 18,
) -> tuple[np.ndarray, np.ndarray]:
    """Grid points with h in [band_lo, band_hi], in lexicographic grid order.

    With ``prune_lip`` (a Lipschitz bound of h on the box) whole blocks are
    skipped when the bound proves h stays outside the band; the result is
    identical to scanning every grid point.
    """
    n = grid.box.dim
    out = []
    if prune_lip is None:
        for a in range(0, grid.size, chunk):
            flat = np.arange(a, min(a + chunk, grid.size))
            out.append(_scan(h, grid, np.stack(np.unravel_index(flat, grid.counts), axis=1), band_lo, band_hi))
    else:
        starts, size = _candidate_blocks(h, grid, band_lo, band_hi, prune_lip, leaf, chunk)
        offsets = np.array(list(np.ndindex(*([size] * n))), dtype=np.int64)
        per = max(1, chunk // len(offsets))
        for a in range(0, len(starts), per):
            idx = (starts[a:a + per, None, :] + offsets[None]).reshape(-1, n)
            idx = idx[np.all(idx < grid.counts, axis=1)]
            out.append(_scan(h, grid, idx, band_lo, band_hi))
    out = [o for o in out if len(o[0])]
    if not out:
        return np.empty((0, n)), np.empty(0)
    P, H, I = (np.concatenate(x) for x in zip(*out))
    order = np.argsort(I, kind="stable")
    return P[order], H[order]


@dataclass(frozen=True)
class Segment:
    i: int
    gamma_lo: float
    gamma_hi: float
    eps: float
    lip_h: float

    @property
    def band(self) -> tuple[float, float]:
        # inflated so the retained grid points still form an eps-net of the slab
        return self.gamma_lo - self.lip_h * self.eps, self.gamma_hi + self.lip_h * self.eps


def build_segment_samples(
    h: Callable[[np.ndarray], np.ndarray],
    box: Box,
    segment: Segment,
    prune_lip: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray, Grid]:
    """Rejection-filtered grid eps-net of slab ``segment``: (points, h values, grid)."""
    if segment.eps <= 0:
        raise ValueError(f"segment {segment.i}: eps must be positive")
    grid = Grid.for_radius(box, segment.eps)
    lo, hi = segment.band
    P, H = grid_in_band(h, grid, lo, hi, prune_lip)
    return P, H, grid


def touches_boundary(h, box: Box, level: float, per_face: int = 1 << 14) -> bool:
    """True if some sampled point on the box boundary has h <= level."""
    n = box.dim
    if n == 1:
        return bool(np.any(h(np.array([[box.lower[0]], [box.upper[0]]])) <= level))
    k = max(2, int(per_face ** (1.0 / (n - 1))))
    axes = [np.linspace(lo, hi, k) for lo, hi in zip(box.lower, box.upper)]
    for j in range(n):
        others = [axes[i] for i in range(n) if i != j]
        F = np.stack(np.meshgrid(*others, indexing="ij"), -1).reshape(-1, n - 1)
        for side in (box.lower[j], box.upper[j]):
            X = np.insert(F, j, side, axis=1)
            if np.any(h(X) <= level):
                return True
    return False


def check_condition(
    step: Callable[[np.ndarray], np.ndarray],
    h: Callable[[np.ndarray], np.ndarray],
    X: np.ndarray,
    alpha: float,
    delta: float,
    h_x: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Residual h(f(x)) - (1 - alpha) h(x) + delta; the sample passes iff <= 0."""
    X = np.atleast_2d(X)
    h_x = h(X) if h_x is None else h_x
    return h(step(X)) - (1.0 - alpha) * h_x + delta


# ------------------------------------------------------------ certification


@dataclass(frozen=True)
class VerifyConfig:
    alpha: float = 0.2
    alpha_bar: float = 0.4
    delta: float = 0.01
    schedule: str = "recursion"
    q: int = 8
    target: str = "gamma_hat"
    box: Optional[tuple] = None
    lip_h: Optional[float] = None
    lip_f: Optional[float] = None
    lip_mode: str = "upper"
    lip_samples: int = 20000
    lip_inflation: float = 1.1
    gamma0: Optional[float] = None
    recursion_tol: float = 1e-6
    fail_fast: bool = False
    compute_base: bool = True
    max_counterexamples: int = 1000
    threads: Optional[int] = None
    seed: int = 0
    count_only: bool = False  # plan and count the nets without checking the condition

    def __post_init__(self):
        if not (0.0 <= self.alpha <= self.alpha_bar <= 1.0):
            raise ValueError("need 0 <= alpha <= alpha_bar <= 1")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.schedule not in ("recursion", "uniform"):
            raise ValueError("schedule must be 'recursion' or 'uniform'")
        if self.target not in ("gamma_hat", "zero"):
            raise ValueError("target must be 'gamma_hat' or 'zero'")
        if self.lip_mode not in ("upper", "sampled"):
            raise ValueError("lip_mode must be 'upper' or 'sampled'")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.max_counterexamples < 1:
            raise ValueError("max_counterexamples must be >= 1")


@dataclass
class SegmentReport:
    i: int
    gamma_lo: float
    gamma_hi: float
    eps: float
    d: float
    n_samples: int
    n_grid: int
    n_violations: int
    worst_residual: float
    empty: bool = False
    group: int = 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["worst_residual"] = finite_or_none(self.worst_residual)
        return d


@dataclass
class VerificationReport:
    verdict: str
    gamma0: float
    gamma_hat: float
    schedule: list
    schedule_mode: str
    target: str
    segments: list
    counterexamples: list
    n_violations: int
    n_tot: int
    n_tot_nominal: int
    n_tot_grid: int
    n_base: Optional[int]
    n_base_grid: Optional[int]
    l_h: float
    l_f: float
    alpha: float
    alpha_bar: float
    delta: float
    wall_time_s: float
    lipschitz: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    box_clipped: bool = False

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    @property
    def worst_residual(self) -> float:
        vals = [s.worst_residual for s in self.segments if s.n_samples]
        return max(vals) if vals else float("-inf")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["segments"] = [s.to_dict() for s in self.segments]
        d["worst_residual"] = finite_or_none(self.worst_residual)
        d["schema_version"] = 1
        return d


def finite_or_none(x: float):
    # JSON has no infinities; an unchecked or empty segment has no worst residual
    return float(x) if np.isfinite(x) else None


def _counterexamples(P, H, R, seg_i, k):
    bad = np.flatnonzero(R > 0)
    if bad.size > k:
        bad = bad[np.argsort(-R[bad], kind="stable")[:k]]
    return [
        {"state": P[j].tolist(), "h": float(H[j]), "residual": float(R[j]), "segment": seg_i}
        for j in bad
    ]


def _group_segments(box: Box, segments: Sequence[Segment]) -> list[list[Segment]]:
    """Consecutive segments whose eps-nets land on the same grid."""
    groups: list[list[Segment]] = []
    prev = None
    for seg in segments:
        counts = tuple(Grid.for_radius(box, seg.eps).counts)
        if groups and counts == prev:
            groups[-1].append(seg)
        else:
            groups.append([seg])
        prev = counts
    return groups


def _run_group(step, h, box, group: list[Segment], cfg: VerifyConfig, prune_lip, gid: int):
    """Check one shared grid against every segment band in ``group``.

    Segments on the same grid have overlapping inflated bands; each grid point
    is checked once and attributed to every band containing it.
    """
    # the finest eps in the group defines the grid (all share the same counts)
    grid = Grid.for_radius(box, min(s.eps for s in group))
    lo = min(s.band[0] for s in group)
    hi = max(s.band[1] for s in group)
    P, H = grid_in_band(h, grid, lo, hi, prune_lip)
    if cfg.count_only or not len(P):
        R = np.full(len(P), -np.inf)
    else:
        R = check_condition(step, h, P, cfg.alpha, cfg.delta, H)
    reports, cex = [], []
    claimed = np.zeros(len(P), dtype=bool)
    for seg in group:
        blo, bhi = seg.band
        m = (H >= blo) & (H <= bhi)
        Rm = R[m]
        rep = SegmentReport(
            i=seg.i,
            gamma_lo=seg.gamma_lo,
            gamma_hi=seg.gamma_hi,
            eps=seg.eps,
            d=grid_resolution(seg.eps, box.dim),
            n_samples=int(m.sum()),
            n_grid=grid.size,
            n_violations=int(np.sum(Rm > 0)),
            worst_residual=float(Rm.max()) if Rm.size else float("-inf"),
            empty=not m.any(),
            group=gid,
        )
        if rep.empty:
            log.warning("segment %d retained no grid points", seg.i)
        reports.append(rep)
        # each violating point is reported once, under the first segment that holds it
        own = m & ~claimed
        claimed |= m
        idx = np.flatnonzero(own)
        cex.extend(_counterexamples(P[idx], H[idx], R[idx], seg.i, cfg.max_counterexamples))
    return reports, cex, int(len(P)), int(grid.size), int(np.sum(R > 0))


def plan_segments(schedule: LevelSchedule, cfg: VerifyConfig, lip_h: float, lip_f: float) -> list[Segment]:
    v = schedule.values
    segs = []
    for i in range(1, len(v)):
        eps = zeta(cfg.alpha, cfg.alpha_bar, cfg.delta, v[i], lip_h, lip_f)
        if eps <= 0:
            raise DegenerateScheduleError(
                f"segment {i}: zero net radius at level {v[i]}; delta > 0 is required"
            )
        segs.append(Segment(i, v[i - 1], v[i], eps, lip_h))
    return segs


def make_schedule(g0: float, cfg: VerifyConfig, lip_h: float, lip_f: float) -> tuple[LevelSchedule, float]:
    gh = gamma_hat(cfg.alpha, cfg.alpha_bar, cfg.delta, lip_f)
    target = gh if cfg.target == "gamma_hat" else 0.0
    if g0 >= target:
        raise DegenerateScheduleError(
            f"gamma0={g0:.6g} >= target level {target:.6g}; the certified set would be empty"
        )
    if cfg.schedule == "uniform":
        return schedule_uniform(g0, target, cfg.q, cfg.target), gh
    if cfg.target == "zero":
        # the recursion converges to gamma_hat; close the schedule at 0 with one extra slab
        sch = schedule_recursive(g0, cfg.alpha, cfg.alpha_bar, cfg.delta, lip_h, lip_f, cfg.recursion_tol)
        vals = sch.values if sch.values[-1] == 0.0 else sch.values + (0.0,)
        return LevelSchedule(vals, "recursion", "zero"), gh
    sch = schedule_recursive(g0, cfg.alpha, cfg.alpha_bar, cfg.delta, lip_h, lip_f, cfg.recursion_tol)
    return sch, gh


def base_count(h, box: Box, g0: float, target: float, cfg: VerifyConfig, lip_h, lip_f, prune_lip) -> tuple[int, int]:
    """Sample count of the one-shot (q = 1) net over [gamma0, target]; no residual checks."""
    eps = zeta(cfg.alpha, cfg.alpha_bar, cfg.delta, target, lip_h, lip_f)
    P, _, grid = build_segment_samples(h, box, Segment(1, g0, target, eps, lip_h), prune_lip)
    return len(P), grid.size


def certify(
    step: Callable[[np.ndarray], np.ndarray],
    h: ScalarField,
    box: Box,
    cfg: VerifyConfig,
    lip_h: float,
    lip_f: float,
    prune_lip: Optional[float] = None,
    lipschitz_info: Optional[dict] = None,
) -> VerificationReport:
    """Deterministic certification of a closed-loop map ``step`` against barrier ``h``."""
    t0 = time.perf_counter()
    g0 = cfg.gamma0 if cfg.gamma0 is not None else gamma0(h, box)
    schedule, gh = make_schedule(g0, cfg, lip_h, lip_f)
    segments = plan_segments(schedule, cfg, lip_h, lip_f)

    groups = _group_segments(box, segments)

    def run(item):
        gid, grp = item
        return _run_group(step, h, box, grp, cfg, prune_lip, gid)

    threads = cfg.threads or os.cpu_count() or 1
    results = []
    if cfg.fail_fast or threads == 1:
        for item in enumerate(groups):
            results.append(run(item))
            if cfg.fail_fast and results[-1][4]:
                break
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, enumerate(groups)))

    reports = [r for res in results for r in res[0]]
    cex = [c for res in results for c in res[1]]
    cex = sorted(cex, key=lambda c: -c["residual"])[: cfg.max_counterexamples]
    cex.sort(key=lambda c: c["segment"])
    n_base = n_base_grid = None
    if cfg.compute_base:
        target = schedule.values[-1]
        if schedule.q == 1:
            n_base, n_base_grid = reports[0].n_samples, reports[0].n_grid
        else:
            n_base, n_base_grid = base_count(h, box, g0, target, cfg, lip_h, lip_f, prune_lip)
    n_violations = sum(res[4] for res in results)
    notes = [CORRECTED_B_NOTE] if schedule.mode == "recursion" else []
    clipped = touches_boundary(h, box, schedule.values[-1])
    if clipped:
        notes.append(
            f"h <= {schedule.values[-1]:.6g} on the verification box boundary: the grids do not "
            "cover the part of the sublevel set outside the box, so it cannot be certified"
        )
    if cfg.count_only:
        verdict = "not_checked"
    else:
        verdict = "failed" if cex or clipped else "certified"
    return VerificationReport(
        verdict=verdict,
        gamma0=g0,
        gamma_hat=gh,
        schedule=list(schedule.values),
        schedule_mode=schedule.mode,
        target=schedule.target,
        segments=reports,
        counterexamples=cex,
        n_violations=n_violations,
        n_tot=sum(res[2] for res in results),
        n_tot_nominal=sum(r.n_samples for r in reports),
        n_tot_grid=sum(res[3] for res in results),
        n_base=n_base,
        n_base_grid=n_base_grid,
        l_h=lip_h,
        l_f=lip_f,
        alpha=cfg.alpha,
        alpha_bar=cfg.alpha_bar,
        delta=cfg.delta,
        wall_time_s=time.perf_counter() - t0,
        lipschitz=lipschitz_info or {},
        notes=notes,
        box_clipped=clipped,
    )


def resolve_lipschitz(sys, ctrl, h_net, box: Box, cfg: VerifyConfig) -> dict:
    """L_h and L_f per the config: overrides, composed upper bounds or sampled estimates."""
    from . import lipschitz as lip

    rng = np.random.default_rng(cfg.seed)
    h = ScalarField.from_net(h_net)
    region = lip.Region(box, lambda X: h(X) <= 0)
    info = {}
    if cfg.lip_h is not None:
        info["l_h"], info["l_h_method"] = float(cfg.lip_h), "manual"
    elif cfg.lip_mode == "sampled":
        info["l_h"] = cfg.lip_inflation * lip.sampled_gradient_bound(h, region, cfg.lip_samples, rng)
        info["l_h_method"] = "sampled"
    else:
        from .neural import lipschitz_upper

        info["l_h"], info["l_h_method"] = lipschitz_upper(h_net), "analytic"
    if cfg.lip_f is not None:
        info["l_f"], info["l_f_method"] = float(cfg.lip_f), "manual"
    elif cfg.lip_mode == "sampled":
        step = lambda X: sys.step(X, _control(ctrl, X))  # noqa: E731
        info["l_f"] = cfg.lip_inflation * lip.sampled_lip_lower(step, region, cfg.lip_samples, rng)
        info["l_f_method"] = "sampled"
    else:
        est = lip.closed_loop_lip_upper(sys, ctrl, h_net, region, cfg.lip_samples, rng, cfg.lip_inflation)
        info["l_f"], info["l_f_method"] = est.L_f, "analytic"
    info["region"] = {"box": box.to_list(), "sublevel": 0.0}
    return info


def _control(ctrl, X):
    from .controller import control_law

    return control_law(ctrl, X)


def verify(sys, ctrl, h_net, cfg: VerifyConfig) -> VerificationReport:
    """Full certification pipeline for a trained network barrier and controller."""
    from .neural import lipschitz_upper

    box = Box(*cfg.box) if cfg.box is not None else sys.verify_box
    if box is None:
        raise ValueError("no verification box configured")
    info = resolve_lipschitz(sys, ctrl, h_net, box, cfg)
    h = ScalarField.from_net(h_net)

    def step(X):
        return sys.step(X, _control(ctrl, X))

    return certify(step, h, box, cfg, info["l_h"], info["l_f"], lipschitz_upper(h_net), info)

"""Lipschitz constants of the barrier network and the closed-loop map."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .controller import control_law, controller_lipschitz
from .dynamics import Box, ControlSystem
from .neural import Mlp, lipschitz_upper


@dataclass(frozen=True)
class Region:
    """A box optionally intersected with a predicate, sampled by rejection."""

    box: Box
    predicate: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def sample(self, rng: np.random.Generator, n: int, budget_factor: int = 100) -> np.ndarray:
        if self.predicate is None:
            return self.box.sample(rng, n)
        out, have, drawn = [], 0, 0
        budget = budget_factor * n
        while have < n:
            if drawn >= budget:
                raise RuntimeError(f"rejection budget exhausted: {have}/{n} points after {drawn} draws")
            batch = min(max(2 * (n - have), 1024), budget - drawn)
            X = self.box.sample(rng, batch)
            drawn += batch
            X = X[self.predicate(X)]
            out.append(X)
            have += len(X)
        return np.concatenate(out)[:n]

    def describe(self) -> dict:
        return {"box": self.box.to_list(), "predicate": self.predicate is not None}


def _as_region(region: Union[Box, Region]) -> Region:
    return region if isinstance(region, Region) else Region(region)


@dataclass(frozen=True)
class LipschitzEstimates:
    L_h: float
    L_f: float
    method: str
    n_pairs: int
    region: dict
    L_x: Optional[float] = None
    L_u_gain: Optional[float] = None
    L_u: Optional[float] = None


def sampled_lip_lower(
    fn: Callable[[np.ndarray], np.ndarray],
    region: Union[Box, Region],
    n_pairs: int,
    rng: np.random.Generator,
) -> float:
    """max ||fn(x1) - fn(x2)|| / ||x1 - x2|| over i.i.d. uniform pairs in the region."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    region = _as_region(region)
    X = region.sample(rng, 2 * n_pairs)
    X1, X2 = X[0::2], X[1::2]
    num = np.linalg.norm(np.atleast_2d(fn(X1) - fn(X2)).reshape(n_pairs, -1), axis=1)
    den = np.linalg.norm(X1 - X2, axis=1)
    ok = den > 0
    return float(np.max(num[ok] / den[ok])) if ok.any() else 0.0


def sampled_gradient_bound(h, region: Union[Box, Region], n: int, rng: np.random.Generator) -> float:
    """max ||grad h|| over sampled points (a lower estimate of the Lipschitz constant)."""
    X = _as_region(region).sample(rng, n)
    return float(np.max(np.linalg.norm(h.grad(X), axis=1)))


def _max_spectral(J: np.ndarray) -> float:
    return float(np.max(np.linalg.svd(J, compute_uv=False)[:, 0]))


def closed_loop_lip_upper(
    sys: ControlSystem,
    ctrl,
    h_net: Mlp,
    region: Union[Box, Region],
    n_samples: int = 20000,
    rng: Optional[np.random.Generator] = None,
    inflation: float = 1.1,
) -> LipschitzEstimates:
    """L_f = L_x + L_u_gain * L_u composed from the discrete map and the controller.

    L_x and L_u_gain are the largest sampled spectral norms of the RK4 map's
    state and input Jacobians, inflated by ``inflation``; L_u bounds the
    control law (clamp is 1-Lipschitz). L_h is the product of layer norms.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    region = _as_region(region)
    X = region.sample(rng, n_samples)
    U = control_law(ctrl, X)
    _, Jx, Ju = sys.step_jacobian(X, U)
    L_x = inflation * _max_spectral(Jx)
    L_u_gain = inflation * _max_spectral(Ju)
    L_u = controller_lipschitz(ctrl)
    return LipschitzEstimates(
        L_h=lipschitz_upper(h_net),
        L_f=L_x + L_u_gain * L_u,
        method="analytic",
        n_pairs=n_samples,
        region=region.describe(),
        L_x=L_x,
        L_u_gain=L_u_gain,
        L_u=L_u,
    )

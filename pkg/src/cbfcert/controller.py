"""Box-constrained QP control law u(x) = argmin_{u in U} 0.5 u'Qu + c(x)'u with diagonal Q."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import Mlp, lipschitz_upper


@dataclass(frozen=True)
class Controller:
    net: Mlp
    q_diag: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray

    def __post_init__(self):
        for name in ("q_diag", "u_lo", "u_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if np.any(self.q_diag <= 0):
            raise ValueError("Q must be positive definite")
        if np.any(self.u_lo >= self.u_hi):
            raise ValueError("need u_lo < u_hi")
        if not (self.q_diag.size == self.u_lo.size == self.u_hi.size == self.net.output_dim):
            raise ValueError("Q, bounds and feature net output must share n_u")

    @property
    def n_u(self) -> int:
        return self.q_diag.size

    def with_net(self, net: Mlp) -> "Controller":
        return Controller(net, self.q_diag, self.u_lo, self.u_hi)

    def to_dict(self) -> dict:
        return {
            "q_diag": self.q_diag.tolist(),
            "u_lo": self.u_lo.tolist(),
            "u_hi": self.u_hi.tolist(),
            "feature_net": self.net.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Controller":
        return cls(Mlp.from_dict(d["feature_net"]), d["q_diag"], d["u_lo"], d["u_hi"])


def _unconstrained(ctrl: Controller, X):
    return -ctrl.net.forward(X) / ctrl.q_diag


def control_law(ctrl: Controller, x: np.ndarray) -> np.ndarray:
    return np.clip(_unconstrained(ctrl, x), ctrl.u_lo, ctrl.u_hi)


def interior_mask(ctrl: Controller, x: np.ndarray) -> np.ndarray:
    """1 where the clamp is inactive (kinks count as interior), 0 where saturated."""
    v = _unconstrained(ctrl, x)
    return ((v >= ctrl.u_lo) & (v <= ctrl.u_hi)).astype(float)


def control_law_grad(ctrl: Controller, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of u(x) w.r.t. feature-net parameters and w.r.t. x.

    Shapes ``(N, n_u, P)`` and ``(N, n_u, n_x)`` (leading axis dropped for a single x).
    """
    single = np.ndim(x) == 1
    X = np.atleast_2d(x)
    scale = (interior_mask(ctrl, X) / ctrl.q_diag)[:, :, None]
    d_theta = -scale * ctrl.net.param_jacobian(X)
    d_x = -scale * ctrl.net.grad_input(X)
    if single:
        return d_theta[0], d_x[0]
    return d_theta, d_x


def control_law_vjp(ctrl: Controller, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """sum_k upstream_k . du(x_k)/dtheta, without forming the full Jacobian."""
    X = np.atleast_2d(x)
    g = -np.atleast_2d(upstream) * interior_mask(ctrl, X) / ctrl.q_diag
    return ctrl.net.grad_params(X, g)


def controller_lipschitz(ctrl: Controller) -> float:
    return float(np.max(1.0 / ctrl.q_diag) * lipschitz_upper(ctrl.net))

"""Discrete-time control systems obtained by RK4 discretization of vector fields.

All functions operate on batches: states have shape ``(N, n_x)`` and inputs
``(N, n_u)``. A single state of shape ``(n_x,)`` is accepted where noted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]
# returns (df/dx, df/du) with shapes (N, n_x, n_x) and (N, n_x, n_u)
FieldJacobian = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
Predicate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError(f"invalid box bounds {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, radius: float, dim: int) -> "Box":
        """The infinity-norm ball ``radius * B_inf`` in ``dim`` dimensions."""
        return cls(-radius * np.ones(dim), radius * np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lower) & (x <= self.upper), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + rng.random((n, self.dim)) * self.widths

    def to_list(self) -> list[list[float]]:
        return [self.lower.tolist(), self.upper.tolist()]


def benchmark_vector_field(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    dx1 = x2 + np.cos(x1)
    dx2 = (1.0 - x1**2) * x2 - x1 + np.sin(x1) + u[..., 0]
    return np.stack([dx1, dx2], axis=-1)


def benchmark_field_jacobian(x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1, x2 = x[:, 0], x[:, 1]
    A = np.empty((x.shape[0], 2, 2))
    A[:, 0, 0] = -np.sin(x1)
    A[:, 0, 1] = 1.0
    A[:, 1, 0] = -2.0 * x1 * x2 - 1.0 + np.cos(x1)
    A[:, 1, 1] = 1.0 - x1**2
    B = np.zeros((x.shape[0], 2, 1))
    B[:, 1, 0] = 1.0
    return A, B


def rk4_step(field: VectorField, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step with ``u`` held constant over the interval."""
    k1 = field(x, u)
    k2 = field(x + 0.5 * dt * k1, u)
    k3 = field(x + 0.5 * dt * k2, u)
    k4 = field(x + dt * k3, u)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step_jvp(
    field: VectorField,
    jac: FieldJacobian,
    x: np.ndarray,
    u: np.ndarray,
    dt: float,
    dx: np.ndarray,
    du: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """RK4 step and its directional derivative along the tangent (dx, du), both (N, .)."""

    def apply(M, v):
        return np.sum(M * v[:, None, :], axis=2)

    def stage(y, dy):
        A, B = jac(y, u)
        return field(y, u), apply(A, dy) + apply(B, du)

    k1, d1 = stage(x, dx)
    k2, d2 = stage(x + 0.5 * dt * k1, dx + 0.5 * dt * d1)
    k3, d3 = stage(x + 0.5 * dt * k2, dx + 0.5 * dt * d2)
    k4, d4 = stage(x + dt * k3, dx + dt * d3)
    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x_next, dx + dt / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)


def rk4_step_jacobian(
    field: VectorField,
    jac: FieldJacobian,
    x: np.ndarray,
    u: np.ndarray,
    dt: float,
    wrt: str = "xu",
) -> tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
    """RK4 step together with its forward-mode sensitivities.

    Returns ``(x_next, dx_next/dx, dx_next/du)`` with Jacobian shapes
    ``(N, n_x, n_x)`` and ``(N, n_x, n_u)``; a block is None when its letter
    is missing from ``wrt``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    N, n, m = x.shape[0], x.shape[1], u.shape[1]
    x_next = rk4_step(field, x, u, dt)
    Jx = Ju = None
    if "x" in wrt:
        Jx = np.empty((N, n, n))
        for j in range(n):
            e = np.zeros((N, n))
            e[:, j] = 1.0
            Jx[:, :, j] = rk4_step_jvp(field, jac, x, u, dt, e, np.zeros((N, m)))[1]
    if "u" in wrt:
        Ju = np.empty((N, n, m))
        for j in range(m):
            e = np.zeros((N, m))
            e[:, j] = 1.0
            Ju[:, :, j] = rk4_step_jvp(field, jac, x, u, dt, np.zeros((N, n)), e)[1]
    return x_next, Jx, Ju


def finite_difference_jacobian(field: VectorField, step: float = 1e-6) -> FieldJacobian:
    """Central-difference Jacobian for vector fields registered without one."""

    def jac(x, u):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        n, m = x.shape[1], u.shape[1]
        A = np.empty((x.shape[0], n, n))
        B = np.empty((x.shape[0], n, m))
        for j in range(n):
            e = np.zeros(n)
            e[j] = step
            A[:, :, j] = (field(x + e, u) - field(x - e, u)) / (2 * step)
        for j in range(m):
            e = np.zeros(m)
            e[j] = step
            B[:, :, j] = (field(x, u + e) - field(x, u - e)) / (2 * step)
        return A, B

    return jac


def _never(x: np.ndarray) -> np.ndarray:
    return np.zeros(np.atleast_2d(x).shape[0], dtype=bool)


@dataclass(frozen=True)
class ControlSystem:
    """A continuous-time vector field discretized with RK4 at step ``dt``.

    The set predicates describe the safety problem: ``unsafe`` is X_u, ``safe``
    is X_s and ``decay_region`` is the set D on which the barrier must decay.
    """

    name: str
    field: VectorField
    n_x: int
    n_u: int
    dt: float
    u_lo: np.ndarray
    u_hi: np.ndarray
    jacobian: Optional[FieldJacobian] = None
    unsafe: Predicate = _never
    safe: Predicate = _never
    decay_region: Predicate = _never
    sample_box: Optional[Box] = None
    verify_box: Optional[Box] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "u_lo", np.asarray(self.u_lo, dtype=float).reshape(-1))
        object.__setattr__(self, "u_hi", np.asarray(self.u_hi, dtype=float).reshape(-1))
        if self.jacobian is None:
            object.__setattr__(self, "jacobian", finite_difference_jacobian(self.field))

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return rk4_step(self.field, x, u, self.dt)

    def step_jacobian(self, x, u, wrt: str = "xu"):
        return rk4_step_jacobian(self.field, self.jacobian, x, u, self.dt, wrt)


def _norm2(x):
    return np.sum(np.atleast_2d(x) ** 2, axis=1)


def benchmark_unsafe(x: np.ndarray) -> np.ndarray:
    r2 = _norm2(x)
    return (r2 <= 0.4**2) | (r2 >= 2.8**2)


def benchmark_safe(x: np.ndarray) -> np.ndarray:
    r2 = _norm2(x)
    return (r2 <= 2.0**2) & (r2 > 1.2**2)


def benchmark_decay_region(x: np.ndarray) -> np.ndarray:
    return _norm2(x) <= 2.5**2


def benchmark_system(dt: float = 0.1) -> ControlSystem:
    """Van der Pol-like oscillator with an annular safe set, u in [-2, 2]."""
    return ControlSystem(
        name="benchmark",
        field=benchmark_vector_field,
        jacobian=benchmark_field_jacobian,
        n_x=2,
        n_u=1,
        dt=dt,
        u_lo=np.array([-2.0]),
        u_hi=np.array([2.0]),
        unsafe=benchmark_unsafe,
        safe=benchmark_safe,
        decay_region=benchmark_decay_region,
        sample_box=Box.cube(3.0, 2),
        verify_box=Box.cube(2.5, 2),
    )


SYSTEMS: dict[str, Callable[..., ControlSystem]] = {"benchmark": benchmark_system}


def register_system(name: str, factory: Callable[..., ControlSystem]) -> None:
    SYSTEMS[name] = factory


def make_system(name: str, **kwargs) -> ControlSystem:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; known: {sorted(SYSTEMS)}") from None
    return factory(**kwargs)


def closed_loop_step(sys: ControlSystem, ctrl, x: np.ndarray, return_input: bool = False):
    """x+ = f(x, u(x)) for a controller exposing ``control_law``."""
    from .controller import control_law

    single = np.ndim(x) == 1
    X = np.atleast_2d(x)
    U = control_law(ctrl, X)
    Xn = sys.step(X, U)
    if single:
        Xn, U = Xn[0], U[0]
    return (Xn, U) if return_input else Xn


def simulate(sys: ControlSystem, ctrl, x0: np.ndarray, T: int) -> np.ndarray:
    """Closed-loop rollout. Returns shape ``(T+1, n_x)`` or ``(T+1, B, n_x)`` for batched starts."""
    if T < 0:
        raise ValueError("T must be non-negative")
    x = np.array(x0, dtype=float)
    traj = [x.copy()]
    for _ in range(T):
        x = closed_loop_step(sys, ctrl, x)
        traj.append(x)
    return np.stack(traj)

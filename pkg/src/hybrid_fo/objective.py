"""Quadratic steady-state objective and the projected-gradient machinery around it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import StabilizedPlant
from .errors import ConvergenceError, InvalidParameterError, StepsizeError

DEFAULT_TOL = 1e-10
MAX_ITER = 1_000_000


def _vec(v, n: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise InvalidParameterError(f"{name} must have {n} components, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} must be finite")
    return arr


def _spd(M, n: int, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (n, n):
        raise InvalidParameterError(f"{name} must be {n}x{n}, got {M.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-14 * max(1.0, np.abs(M).max())):
        raise InvalidParameterError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(M).min() <= 0.0:
        raise InvalidParameterError(f"{name} must be positive definite")
    return M


@dataclass(frozen=True)
class InputBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _vec(self.lo, 3, "lo")
        hi = _vec(self.hi, 3, "hi")
        if np.any(lo > hi):
            raise InvalidParameterError("box requires lo <= hi componentwise")
        if not np.linalg.norm(hi - lo) > 0:
            raise InvalidParameterError("box must have positive diameter")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, half_width: float) -> "InputBox":
        return cls(-half_width * np.ones(3), half_width * np.ones(3))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, v, atol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lo - atol) and np.all(v <= self.hi + atol))


@dataclass(frozen=True)
class QuadObjective:
    """``Phi(u, y) = 1/2 u'Q_u u + 1/2 (y - y_hat)'Q_y (y - y_hat)`` over the box."""

    Q_u: np.ndarray
    Q_y: np.ndarray
    y_hat: np.ndarray
    box: InputBox
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "Q_u", _spd(self.Q_u, 3, "Q_u"))
        object.__setattr__(self, "Q_y", _spd(self.Q_y, 6, "Q_y"))
        y_hat = _vec(self.y_hat, 6, "y_hat")
        if np.any(y_hat[3:] != 0.0):
            raise InvalidParameterError("target velocity components of y_hat must be zero")
        object.__setattr__(self, "y_hat", y_hat)
        gamma = float(self.gamma)
        if not (math.isfinite(gamma) and gamma > 0):
            raise InvalidParameterError("gamma must be positive")
        object.__setattr__(self, "gamma", gamma)


@dataclass(frozen=True)
class ConvexityConstants:
    L: float
    q: float
    lam_min_Qu: float
    gamma_max: float

    @property
    def valid(self) -> bool:
        return 0.0 < self.q < 1.0


def eval_phi(obj: QuadObjective, u, y) -> float:
    u = np.asarray(u, dtype=float)
    e = np.asarray(y, dtype=float) - obj.y_hat
    return float(0.5 * u @ obj.Q_u @ u + 0.5 * e @ obj.Q_y @ e)


def reduced_gradient(obj: QuadObjective, plant: StabilizedPlant, z, y_s) -> np.ndarray:
    """Gradient used by the in-loop iteration: ``Q_u z + H' Q_y (y_s - y_hat)``."""
    z = np.asarray(z, dtype=float)
    return obj.Q_u @ z + plant.H_stab.T @ (obj.Q_y @ (np.asarray(y_s, dtype=float) - obj.y_hat))


def project_box(v, box: InputBox) -> np.ndarray:
    return np.minimum(np.maximum(np.asarray(v, dtype=float), box.lo), box.hi)


def gd_step(obj: QuadObjective, plant: StabilizedPlant, z, y_s) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return project_box(z - obj.gamma * reduced_gradient(obj, plant, z, y_s), obj.box)


def compute_constants(obj: QuadObjective, plant: StabilizedPlant, check: bool = True) -> ConvexityConstants:
    """Smoothness constant ``L`` and contraction constant ``q`` of the iteration.

    With ``check=True`` a stepsize outside ``(0, 2/(lam_min(Q_u) + L))`` or a
    ``q`` outside ``(0, 1)`` raises :class:`StepsizeError`.
    """
    H = plant.H_stab
    L = float(np.linalg.eigvalsh(obj.Q_u + H.T @ obj.Q_y @ H).max())
    lam_min = float(np.linalg.eigvalsh(obj.Q_u).min())
    g = obj.gamma
    q = 1.0 - 2.0 * g * lam_min + g * g * L * L
    gamma_max = 2.0 / (lam_min + L)
    consts = ConvexityConstants(L=L, q=q, lam_min_Qu=lam_min, gamma_max=gamma_max)
    if check:
        if not g < gamma_max:
            raise StepsizeError(f"gamma={g} must be below 2/(lam_min(Q_u)+L)={gamma_max:.6g}")
        if not consts.valid:
            raise StepsizeError(f"q={q:.6g} is outside (0, 1) for gamma={g}")
    return consts


def solve_box_qp(P: np.ndarray, c: np.ndarray, box: InputBox, x0=None, tol: float = DEFAULT_TOL,
                 max_iter: int = MAX_ITER) -> np.ndarray:
    """Minimize ``1/2 x'Px + c'x`` over a box by projected gradient descent.

    Uses the step ``2/(mu + L)``; stops when the projected-gradient fixed-point
    residual drops to ``tol``.
    """
    eig = np.linalg.eigvalsh(P)
    step = 2.0 / (eig[0] + eig[-1])
    x = project_box(np.zeros(3) if x0 is None else x0, box)
    lo, hi = box.lo, box.hi
    for _ in range(max_iter):
        x_new = np.minimum(np.maximum(x - step * (P @ x + c), lo), hi)
        if np.linalg.norm(x_new - x) <= tol:
            return x_new
        x = x_new
    raise ConvergenceError(f"box QP did not converge in {max_iter} iterations")


def steady_state_qp(obj: QuadObjective, plant: StabilizedPlant, d) -> tuple[np.ndarray, np.ndarray]:
    """Hessian and linear term of ``u -> Phi(u, H u + d)``."""
    H = plant.H_stab
    P = obj.Q_u + H.T @ obj.Q_y @ H
    c = H.T @ obj.Q_y @ (np.asarray(d, dtype=float) - obj.y_hat)
    return P, c


def solve_optimal_input(obj: QuadObjective, plant: StabilizedPlant, d, tol: float = DEFAULT_TOL,
                        u0=None, max_iter: int = MAX_ITER) -> np.ndarray:
    """Minimizer of ``Phi(u, H_stab u + d)`` over the input box."""
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    P, c = steady_state_qp(obj, plant, _vec(d, 6, "d"))
    return solve_box_qp(P, c, obj.box, x0=u0, tol=tol, max_iter=max_iter)


def iterate_fixed_point(obj: QuadObjective, plant: StabilizedPlant, y_s, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Fixed point of :func:`gd_step` for a frozen sample ``y_s``.

    This is the point the in-loop iteration contracts toward between two
    output samples.
    """
    c = plant.H_stab.T @ (obj.Q_y @ (np.asarray(y_s, dtype=float) - obj.y_hat))
    return solve_box_qp(obj.Q_u, c, obj.box, tol=tol)


def rendezvous_state_and_input(obj: QuadObjective, plant: StabilizedPlant, d, tol: float = DEFAULT_TOL,
                               u0=None) -> tuple[np.ndarray, np.ndarray]:
    """``(x_tilde, u_tilde)``; ``u0`` warm-starts the input solve."""
    d = _vec(d, 6, "d")
    u = solve_optimal_input(obj, plant, d, tol=tol, u0=u0)
    # -A^-1 B u + A^-1 B K_eff d, with H = -A^-1 B
    x = plant.H_stab @ (u - plant.K_eff @ d)
    return x, u


def chosen_rendezvous_point(obj: QuadObjective, plant: StabilizedPlant, d, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Steady state induced by the optimal input under disturbance ``d``."""
    return rendezvous_state_and_input(obj, plant, d, tol=tol)[0]

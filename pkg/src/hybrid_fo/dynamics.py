"""Clohessy-Wiltshire relative dynamics and closed-form stabilizing gains.

The chaser state is ``x = (x, y, z, xdot, ydot, zdot)`` expressed in the
target-fixed CW frame. Gains are placed channel by channel: the eigenvalue
pairs ``(l1, l2)``, ``(l3, l4)`` and ``(l5, l6)`` are assigned to the radial,
along-track and cross-track channels, in the order they are listed.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    AssumptionViolationError,
    InvalidParameterError,
    NumericalError,
    SynthesisError,
)

MU_EARTH = 3.986e14
LEO_RADIUS = 6.871e6

# (row, col) of the eight gains that may be nonzero, numbered k1..k18 row-major.
GAIN_SLOTS = {
    1: (0, 0),
    4: (0, 3),
    5: (0, 4),
    8: (1, 1),
    10: (1, 3),
    11: (1, 4),
    15: (2, 2),
    18: (2, 5),
}


def _positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise InvalidParameterError(f"{name} must be finite and positive, got {value!r}")
    return value


@dataclass(frozen=True)
class OrbitalParams:
    """Target orbit and chaser mass. ``w`` is the mean motion sqrt(mu / a^3)."""

    mu: float = MU_EARTH
    a: float = LEO_RADIUS
    m_c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", _positive_finite("mu", self.mu))
        object.__setattr__(self, "a", _positive_finite("a", self.a))
        object.__setattr__(self, "m_c", _positive_finite("m_c", self.m_c))

    @property
    def w(self) -> float:
        return math.sqrt(self.mu / self.a**3)


@dataclass(frozen=True)
class CwModel:
    A_cw: np.ndarray
    B_cw: np.ndarray
    w: float
    m_c: float


def cw_matrices(w: float, m_c: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(A_cw, B_cw)`` for mean motion ``w`` (``w = 0`` is allowed)."""
    if not math.isfinite(w) or w < 0.0:
        raise InvalidParameterError(f"mean motion must be finite and non-negative, got {w!r}")
    m_c = _positive_finite("m_c", m_c)
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3, 0] = 3.0 * w**2
    A[3, 4] = 2.0 * w
    A[4, 3] = -2.0 * w
    A[5, 2] = -(w**2)
    B = np.vstack([np.zeros((3, 3)), np.eye(3)]) / m_c
    return A, B


def build_cw(params: OrbitalParams) -> CwModel:
    A, B = cw_matrices(params.w, params.m_c)
    return CwModel(A_cw=A, B_cw=B, w=params.w, m_c=params.m_c)


@dataclass(frozen=True)
class EigenSpec:
    """Six desired closed-loop eigenvalues, paired in listed order per channel."""

    lambdas: tuple[float, ...]

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        if len(lams) != 6:
            raise InvalidParameterError(f"need exactly 6 eigenvalues, got {len(lams)}")
        if not all(math.isfinite(v) for v in lams):
            raise InvalidParameterError("eigenvalues must be finite")
        if any(v >= 0.0 for v in lams):
            raise AssumptionViolationError(
                f"all desired eigenvalues must be real and strictly negative, got {lams}"
            )
        object.__setattr__(self, "lambdas", lams)

    @property
    def mu_max(self) -> int:
        return max(Counter(self.lambdas).values())

    @property
    def lambda_slow(self) -> float:
        """Element of smallest magnitude (slowest mode)."""
        return min(self.lambdas, key=abs)

    @property
    def lambda_fast(self) -> float:
        return max(self.lambdas, key=abs)

    @property
    def pairs(self) -> list[tuple[float, float]]:
        l = self.lambdas
        return [(l[0], l[1]), (l[2], l[3]), (l[4], l[5])]


@dataclass(frozen=True)
class GainMatrix:
    K: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.shape != (3, 6):
            raise InvalidParameterError(f"K must be 3x6, got {K.shape}")
        mask = np.ones((3, 6), dtype=bool)
        for r, c in GAIN_SLOTS.values():
            mask[r, c] = False
        if np.any(K[mask] != 0.0):
            raise InvalidParameterError("K has nonzero entries outside the eight gain slots")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    def k(self, index: int) -> float:
        """Gain ``k_index`` in row-major 1-based numbering."""
        r, c = divmod(index - 1, 6)
        return float(self.K[r, c])


def synthesize_gains(w: float, spec: EigenSpec) -> GainMatrix:
    (l1, l2), (l3, l4), (l5, l6) = spec.pairs
    K = np.zeros((3, 6))
    K[GAIN_SLOTS[1]] = 3.0 * w**2 + l1 * l2
    K[GAIN_SLOTS[4]] = -l1 - l2
    K[GAIN_SLOTS[5]] = 2.0 * w
    K[GAIN_SLOTS[8]] = l3 * l4
    K[GAIN_SLOTS[10]] = -2.0 * w
    K[GAIN_SLOTS[11]] = -l3 - l4
    K[GAIN_SLOTS[15]] = -(w**2) + l5 * l6
    K[GAIN_SLOTS[18]] = -l5 - l6
    return GainMatrix(K)


@dataclass(frozen=True)
class StabilizedPlant:
    """Closed loop ``xdot = A_stab x + B_stab u - B_stab K_eff d``.

    ``K_eff = m_c * K`` is the gain applied through the physical input path,
    so ``A_stab`` has the closed-form spectrum for any chaser mass.
    """

    A_stab: np.ndarray
    B_stab: np.ndarray
    K: GainMatrix
    K_eff: np.ndarray
    H_stab: np.ndarray
    spec: EigenSpec
    norm_A_inv: float
    norm_K: float
    m_c: float
    w: float
    A_inv: np.ndarray = field(repr=False)

    @property
    def disturbance_gain(self) -> np.ndarray:
        """Matrix ``B_stab K_eff`` mapping d into the state derivative (with a minus sign)."""
        return self.B_stab @ self.K_eff


def build_stabilized(cw: CwModel, gains: GainMatrix, spec: EigenSpec) -> StabilizedPlant:
    K_eff = cw.m_c * gains.K
    A = cw.A_cw - cw.B_cw @ K_eff
    B = cw.B_cw.copy()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SynthesisError(f"cannot factor A_stab: {exc}") from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-300) or np.linalg.cond(A) > 1e14:
        raise SynthesisError("A_stab is singular")
    A_inv = scipy.linalg.lu_solve(lu, np.eye(6))
    H = -A_inv @ B
    for arr in (A, B, K_eff, H, A_inv):
        arr.setflags(write=False)
    return StabilizedPlant(
        A_stab=A,
        B_stab=B,
        K=gains,
        K_eff=K_eff,
        H_stab=H,
        spec=spec,
        norm_A_inv=float(np.linalg.norm(A_inv, 2)),
        norm_K=float(np.linalg.norm(K_eff, 2)),
        m_c=cw.m_c,
        w=cw.w,
        A_inv=A_inv,
    )


def make_plant(params: OrbitalParams, lambdas: Sequence[float]) -> StabilizedPlant:
    """Convenience: CW model, gains and closed loop in one call."""
    spec = EigenSpec(tuple(lambdas))
    cw = build_cw(params)
    return build_stabilized(cw, synthesize_gains(cw.w, spec), spec)


def verify_eigen_placement(plant: StabilizedPlant, tol: float) -> bool:
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    try:
        eig = np.linalg.eigvals(plant.A_stab)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue solver failed: {exc}") from exc
    if np.max(np.abs(eig.imag)) > tol:
        return False
    # Real spectra: sorting gives the optimal one-to-one pairing.
    got = np.sort(eig.real)
    want = np.sort(np.asarray(plant.spec.lambdas))
    return bool(np.max(np.abs(got - want)) <= tol)


def matrix_exp_decay_bound(plant: StabilizedPlant, t: float) -> float:
    """Decay envelope ``mu_max |l_fast|/|l_slow| exp(-|l_slow| t)`` for ``||exp(A_stab t)||``."""
    if t < 0:
        raise InvalidParameterError(f"t must be non-negative, got {t}")
    spec = plant.spec
    slow, fast = abs(spec.lambda_slow), abs(spec.lambda_fast)
    return spec.mu_max * (fast / slow) * math.exp(-slow * t)

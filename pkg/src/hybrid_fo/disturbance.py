"""Bounded, differentiable disturbance signals ``t -> d(t)`` in R^6."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidParameterError

SQRT6 = math.sqrt(6.0)


class DisturbanceModel(ABC):
    """A signal with a declared bound on its norm (``d_max``) and on its rate (``d_bar``)."""

    @abstractmethod
    def _values(self, t: np.ndarray) -> np.ndarray:
        """Vectorized evaluation, shape ``(n, 6)``; ``t`` already validated."""

    @property
    @abstractmethod
    def d_max(self) -> float: ...

    @property
    @abstractmethod
    def d_bar(self) -> float: ...

    def eval(self, t: float) -> np.ndarray:
        if t < 0:
            raise InvalidParameterError(f"disturbance time must be non-negative, got {t}")
        return self._values(np.array([float(t)]))[0]

    def eval_many(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).reshape(-1)
        if t.size and t.min() < 0:
            raise InvalidParameterError("disturbance time must be non-negative")
        return self._values(t)

    def derivative_bound(self) -> float:
        return self.d_bar


class ZeroDisturbance(DisturbanceModel):
    def _values(self, t):
        return np.zeros((t.size, 6))

    @property
    def d_max(self):
        return 0.0

    @property
    def d_bar(self):
        return 0.0


@dataclass(frozen=True)
class ConstantDisturbance(DisturbanceModel):
    value: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.value, dtype=float).reshape(-1)
        if v.shape != (6,) or not np.all(np.isfinite(v)):
            raise InvalidParameterError("constant disturbance needs 6 finite components")
        object.__setattr__(self, "value", v)

    def _values(self, t):
        return np.broadcast_to(self.value, (t.size, 6)).copy()

    @property
    def d_max(self):
        return float(np.linalg.norm(self.value))

    @property
    def d_bar(self):
        return 0.0


@dataclass(frozen=True)
class SineDisturbance(DisturbanceModel):
    """``amplitude * sin(omega t)`` on all six channels."""

    amplitude: float
    omega: float

    def __post_init__(self):
        for name in ("amplitude", "omega"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")

    def _values(self, t):
        s = self.amplitude * np.sin(self.omega * t)
        return np.repeat(s[:, None], 6, axis=1)

    @property
    def d_max(self):
        return abs(self.amplitude) * SQRT6

    @property
    def d_bar(self):
        return abs(self.amplitude * self.omega) * SQRT6

    @property
    def d_bar_component(self) -> float:
        """Per-channel rate bound; understates the vector-norm bound by sqrt(6)."""
        return abs(self.amplitude * self.omega)


def make_disturbance(kind: str, amplitude: float = 0.0, omega: float = 1.0, value=None) -> DisturbanceModel:
    if kind == "zero":
        return ZeroDisturbance()
    if kind == "constant":
        if value is None:
            value = amplitude * np.ones(6)
        return ConstantDisturbance(np.asarray(value, dtype=float))
    if kind == "sine":
        return SineDisturbance(float(amplitude), float(omega))
    raise ConfigError(f"unknown disturbance kind {kind!r}; expected zero, constant or sine")

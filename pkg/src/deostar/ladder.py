"""Learning-rate ladders and their stochastic-approximation adaptation.

A ladder holds one learning rate per slot, optionally paired with a
temperature. Interior learning rates move so that every adjacent pair
approaches the same swap rate. A scalar correction buffer is tuned alongside
so that the deterministic swap condition fires at the target rate.

Slots and pairs are 0-based here: pair ``p`` couples slots ``p`` and ``p+1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InternalError, InvalidArgumentError

__all__ = [
    "Ladder",
    "GapState",
    "StepSchedule",
    "CorrectionBuffer",
    "geometric_init",
    "gap_floor",
    "update_ladder",
    "update_buffer",
]


def _as_vector(values, name):
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class Ladder:
    """Ordered learning rates with optional temperatures.

    Learning rates must be strictly increasing unless temperatures are given,
    in which case ties are allowed (chains may then differ by temperature
    alone). Both endpoints are pinned to ``fixed_boundaries``.
    """

    etas: np.ndarray
    taus: np.ndarray | None = None
    fixed_boundaries: tuple[float, float] | None = None

    def __post_init__(self):
        etas = _as_vector(self.etas, "etas")
        if etas.size < 2:
            raise InvalidArgumentError(f"a ladder needs P >= 2 slots, got {etas.size}")
        if np.any(etas <= 0):
            raise InvalidArgumentError(f"learning rates must be positive, got {etas}")
        taus = None
        if self.taus is not None:
            taus = _as_vector(self.taus, "taus")
            if taus.shape != etas.shape:
                raise InvalidArgumentError("taus and etas must have the same length")
            if np.any(taus <= 0) or np.any(np.diff(taus) < 0):
                raise InvalidArgumentError(f"temperatures must be positive and ascending, got {taus}")
        steps = np.diff(etas)
        if taus is None and np.any(steps <= 0) and np.ptp(etas) > 0:
            raise InvalidArgumentError(f"learning rates must be strictly increasing, got {etas}")
        if np.any(steps < 0):
            raise InvalidArgumentError(f"learning rates must be ascending, got {etas}")
        bounds = self.fixed_boundaries
        if bounds is None:
            bounds = (float(etas[0]), float(etas[-1]))
        bounds = (float(bounds[0]), float(bounds[1]))
        if etas[0] != bounds[0] or etas[-1] != bounds[1]:
            raise InvalidArgumentError(
                f"ladder endpoints {etas[0]}, {etas[-1]} differ from fixed boundaries {bounds}"
            )
        etas.flags.writeable = False
        if taus is not None:
            taus.flags.writeable = False
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "fixed_boundaries", bounds)

    @property
    def P(self) -> int:
        return int(self.etas.size)

    @property
    def is_flat(self) -> bool:
        return bool(self.etas[0] == self.etas[-1])

    def with_etas(self, etas) -> Ladder:
        return Ladder(etas, self.taus, self.fixed_boundaries)

    def temperatures(self, default: float = 1.0) -> np.ndarray:
        """Per-slot temperatures, ``default`` everywhere when none were given."""
        if self.taus is None:
            return np.full(self.P, float(default))
        return np.array(self.taus)


@dataclass(frozen=True)
class StepSchedule:
    """Robbins-Monro step sizes ``gamma_k = gamma0 * k0 / (k0 + k)``."""

    gamma0: float = 0.1
    k0: float = 1000.0

    def __post_init__(self):
        if not self.gamma0 >= 0:
            raise InvalidArgumentError(f"gamma0 must be >= 0, got {self.gamma0}")
        if not self.k0 > 0:
            raise InvalidArgumentError(f"k0 must be > 0, got {self.k0}")

    def __call__(self, k) -> float:
        return self.gamma0 * self.k0 / (self.k0 + k)


@dataclass(frozen=True)
class GapState:
    """Adjacent learning-rate gaps plus the step-size schedule driving them."""

    upsilons: np.ndarray
    step_sizes: StepSchedule = field(default_factory=StepSchedule)

    def __post_init__(self):
        ups = _as_vector(self.upsilons, "upsilons")
        if np.any(ups < 0):
            raise InvalidArgumentError(f"gaps must be nonnegative, got {ups}")
        object.__setattr__(self, "upsilons", ups)

    @classmethod
    def from_ladder(cls, ladder: Ladder, step_sizes: StepSchedule | None = None) -> GapState:
        return cls(np.diff(ladder.etas), step_sizes or StepSchedule())


@dataclass(frozen=True)
class CorrectionBuffer:
    """Nonnegative threshold used by the deterministic swap condition."""

    c: float = 0.0
    target_rate: float = 0.4

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c >= 0):
            raise InvalidArgumentError(f"buffer must be finite and >= 0, got {self.c}")
        if not 0 < self.target_rate < 1:
            raise InvalidArgumentError(f"target rate must lie in (0, 1), got {self.target_rate}")


def geometric_init(eta_low: float, eta_high: float, P: int, taus=None) -> Ladder:
    """Geometrically spaced ladder between two fixed learning rates."""
    if not (np.isfinite(eta_low) and np.isfinite(eta_high)) or not 0 < eta_low < eta_high:
        raise InvalidArgumentError(f"need 0 < eta_low < eta_high, got {eta_low}, {eta_high}")
    if int(P) != P or P < 2:
        raise InvalidArgumentError(f"P must be an integer >= 2, got {P}")
    P = int(P)
    etas = eta_low * (eta_high / eta_low) ** (np.arange(P) / (P - 1))
    etas[0], etas[-1] = eta_low, eta_high
    return Ladder(etas, taus, (eta_low, eta_high))


def gap_floor(ladder: Ladder) -> float:
    """Default smallest admissible gap: 1e-3 of the mean gap."""
    low, high = ladder.fixed_boundaries
    return 1e-3 * (high - low) / (ladder.P - 1)


def _indicator_field(indicators, target_rate, size, mask=None):
    ind = np.asarray(indicators, dtype=float).reshape(-1)
    if ind.size != size:
        raise InvalidArgumentError(f"expected {size} indicators, got {ind.size}")
    field_ = ind - target_rate
    if mask is not None:
        field_ = np.where(np.asarray(mask, dtype=bool), field_, 0.0)
    return field_


def ladder_step(etas: np.ndarray, field_: np.ndarray, gamma_k: float, eps_min: float) -> np.ndarray:
    """Raw interior update on arrays; boundaries are copied through untouched.

    Each interior point is the average of a forward proposal from its lower
    neighbour and a backward proposal from its upper neighbour.
    """
    scaled = np.maximum(eps_min, np.diff(etas)) * np.exp(gamma_k * field_)
    out = etas.copy()
    out[1:-1] = 0.5 * (etas[:-2] + etas[2:]) + 0.5 * (scaled[:-1] - scaled[1:])
    return out


def _repair(etas: np.ndarray, eps_min: float) -> np.ndarray:
    low, high = etas[0], etas[-1]
    span = high - low
    gaps = np.maximum(np.diff(np.sort(np.clip(etas, low, high))), eps_min)
    slack = span - gaps.size * eps_min
    excess = gaps - eps_min
    if slack <= 0 or excess.sum() <= 0:
        gaps = np.full(gaps.size, span / gaps.size)
    else:
        gaps = eps_min + excess * (slack / excess.sum())
    out = low + np.concatenate(([0.0], np.cumsum(gaps)))
    out[0], out[-1] = low, high
    return out


def update_ladder(
    ladder: Ladder,
    gaps: GapState | None,
    indicators,
    target_rate: float,
    gamma_k: float,
    *,
    mask=None,
    eps_min: float | None = None,
    repair: bool = True,
) -> Ladder:
    """One stochastic-approximation step on the interior learning rates.

    ``indicators[p]`` is the swap-condition outcome of pair ``(p, p+1)``.
    Pairs with ``mask[p]`` false contribute a zero field. A non-monotone
    result is repaired with a warning, or raises ``InternalError`` when
    ``repair`` is false.
    """
    if not gamma_k >= 0:
        raise InvalidArgumentError(f"gamma_k must be >= 0, got {gamma_k}")
    if ladder.is_flat:
        raise InvalidArgumentError("a flat ladder has no gaps to adapt")
    etas = np.array(ladder.etas)
    if gaps is not None and not np.allclose(gaps.upsilons, np.diff(etas), rtol=0, atol=1e-15):
        raise InvalidArgumentError("gap state is inconsistent with the ladder")
    eps = gap_floor(ladder) if eps_min is None else float(eps_min)
    field_ = _indicator_field(indicators, target_rate, ladder.P - 1, mask)
    new = ladder_step(etas, field_, float(gamma_k), eps)
    if not np.all(np.diff(new) > 0):
        if not repair:
            raise InternalError(f"ladder update lost monotonicity: {new}")
        warnings.warn("ladder update lost monotonicity; projecting back", RuntimeWarning, stacklevel=2)
        new = _repair(new, eps)
    return ladder.with_etas(new)


def update_buffer(buf: CorrectionBuffer, indicators, gamma_k: float) -> CorrectionBuffer:
    """Move the buffer by ``gamma_k`` times the excess swap rate, clamped at 0."""
    if not gamma_k >= 0:
        raise InvalidArgumentError(f"gamma_k must be >= 0, got {gamma_k}")
    ind = np.asarray(indicators, dtype=float).reshape(-1)
    if ind.size == 0:
        return buf
    c = max(0.0, buf.c + gamma_k * (ind.mean() - buf.target_rate))
    return CorrectionBuffer(c, buf.target_rate)

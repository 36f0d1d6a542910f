"""Exploration and exploitation transition kernels.

All kernels are driven by a stochastic gradient. The exploitation chain
usually runs SGLD; exploration chains run constant-learning-rate SGD (or its
momentum / preconditioned variants), whose gradient noise acts as an implicit
temperature proportional to the learning rate.

``grad_oracle(position, rng)`` returns a noisy gradient. Target models expose
``noisy_gradient`` with exactly this signature.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InvalidArgumentError, NumericalError

__all__ = [
    "KernelKind",
    "ChainState",
    "KernelSpec",
    "sgd_step",
    "sgld_step",
    "momentum_sgd_step",
    "preconditioned_sgd_step",
    "step",
    "batch_update",
]


class KernelKind(str, enum.Enum):
    SGD = "SGD"
    SGLD = "SGLD"
    MOMENTUM_SGD = "MomentumSGD"
    PRECONDITIONED_SGD = "PreconditionedSGD"


@dataclass(frozen=True)
class ChainState:
    """One replica: a position plus everything that travels with it on a swap.

    ``slot`` is 1-based and stays with the ladder rung. ``energy`` and ``grad``
    cache the last oracle call at ``position``; ``momentum`` and ``accum`` hold
    optimizer state for the momentum and RMSProp variants.
    """

    position: np.ndarray
    slot: int = 1
    momentum: np.ndarray | None = None
    energy: float = float("nan")
    grad: np.ndarray | None = None
    accum: np.ndarray | None = None
    particle: int = 0

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(-1)
        if not np.all(np.isfinite(pos)):
            raise NumericalError("non-finite position", pos)
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class KernelSpec:
    """Parameters of a single kernel application.

    ``tau`` only matters for SGLD. ``precond_diag`` defaults to the identity.
    With ``rms_decay`` set, the preconditioner is refreshed RMSProp-style from
    squared gradients instead of staying fixed.
    """

    kind: KernelKind = KernelKind.SGD
    eta: float = 0.01
    tau: float = 1.0
    momentum_coef: float = 0.9
    precond_diag: np.ndarray | None = None
    exploit_noise: bool = True
    rms_decay: float | None = None
    rms_eps: float = 1e-8

    def __post_init__(self):
        try:
            kind = KernelKind(self.kind)
        except ValueError as exc:
            raise InvalidArgumentError(str(exc)) from None
        object.__setattr__(self, "kind", kind)
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise InvalidArgumentError(f"eta must be positive, got {self.eta}")
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise InvalidArgumentError(f"tau must be >= 0, got {self.tau}")
        if not 0 <= self.momentum_coef < 1:
            raise InvalidArgumentError(f"momentum_coef must lie in [0, 1), got {self.momentum_coef}")
        if self.precond_diag is not None:
            diag = np.array(self.precond_diag, dtype=float).reshape(-1)
            if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
                raise InvalidArgumentError("precond_diag must be finite and positive")
            object.__setattr__(self, "precond_diag", diag)
        if self.rms_decay is not None and not 0 <= self.rms_decay < 1:
            raise InvalidArgumentError(f"rms_decay must lie in [0, 1), got {self.rms_decay}")

    @property
    def noise_scale(self) -> float:
        """Standard deviation of the injected Langevin noise per coordinate."""
        if self.kind is not KernelKind.SGLD or not self.exploit_noise:
            return 0.0
        return float(np.sqrt(2.0 * self.eta * self.tau))


def _gradient(state, grad_oracle, rng):
    g = np.asarray(grad_oracle(state.position, rng), dtype=float).reshape(state.position.shape)
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient", state.position)
    return g


def _finish(state, position, **changes):
    if not np.all(np.isfinite(position)):
        raise NumericalError("step produced a non-finite position", state.position)
    return replace(state, position=position, energy=float("nan"), grad=None, **changes)


def sgd_step(state: ChainState, spec: KernelSpec, grad_oracle, rng) -> ChainState:
    """``x' = x - eta * g`` with ``g`` a noisy gradient at ``x``."""
    g = _gradient(state, grad_oracle, rng)
    return _finish(state, state.position - spec.eta * g)


def sgld_step(state: ChainState, spec: KernelSpec, grad_oracle, rng) -> ChainState:
    """SGD move plus ``sqrt(2 eta tau) xi``.

    No normal draw happens when the noise scale is zero, so ``tau=0`` or
    ``exploit_noise=False`` reproduce :func:`sgd_step` bit for bit, including
    the state of ``rng`` afterwards.
    """
    g = _gradient(state, grad_oracle, rng)
    position = state.position - spec.eta * g
    scale = float(np.sqrt(2.0 * spec.eta * spec.tau)) if spec.exploit_noise else 0.0
    if scale > 0:
        position = position + scale * rng.standard_normal(position.shape)
    return _finish(state, position)


def momentum_sgd_step(state: ChainState, spec: KernelSpec, grad_oracle, rng) -> ChainState:
    """Heavy-ball update: ``m' = coef * m - eta * g``, ``x' = x + m'``."""
    g = _gradient(state, grad_oracle, rng)
    m = np.zeros_like(state.position) if state.momentum is None else state.momentum
    m_new = spec.momentum_coef * m - spec.eta * g
    return _finish(state, state.position + m_new, momentum=m_new)


def preconditioned_sgd_step(state: ChainState, spec: KernelSpec, grad_oracle, rng) -> ChainState:
    """``x' = x - eta * (D g)`` with a diagonal ``D``, optionally refreshed by RMSProp."""
    g = _gradient(state, grad_oracle, rng)
    changes = {}
    if spec.rms_decay is not None:
        acc = np.zeros_like(g) if state.accum is None else state.accum
        acc = spec.rms_decay * acc + (1.0 - spec.rms_decay) * g * g
        diag = 1.0 / (np.sqrt(acc) + spec.rms_eps)
        changes["accum"] = acc
    elif spec.precond_diag is not None:
        diag = spec.precond_diag
    else:
        diag = np.ones_like(g)
    return _finish(state, state.position - spec.eta * (diag * g), **changes)


_STEPS = {
    KernelKind.SGD: sgd_step,
    KernelKind.SGLD: sgld_step,
    KernelKind.MOMENTUM_SGD: momentum_sgd_step,
    KernelKind.PRECONDITIONED_SGD: preconditioned_sgd_step,
}


def step(state: ChainState, spec: KernelSpec, grad_oracle, rng) -> ChainState:
    """Dispatch on ``spec.kind``."""
    return _STEPS[spec.kind](state, spec, grad_oracle, rng)


def batch_update(spec: KernelSpec, positions, grads, etas, momentum=None, accum=None):
    """Deterministic part of a kernel step applied to many rows at once.

    ``etas`` has one learning rate per row. Returns the new positions and the
    updated ``(momentum, accum)`` arrays (unchanged when unused). Langevin
    noise is added by the caller so that it can come from per-slot streams.
    """
    step_ = etas[:, None] * grads if grads.ndim == 2 else etas * grads
    if spec.kind is KernelKind.MOMENTUM_SGD:
        momentum = spec.momentum_coef * momentum - step_
        return positions + momentum, momentum, accum
    if spec.kind is KernelKind.PRECONDITIONED_SGD:
        if spec.rms_decay is not None:
            accum = spec.rms_decay * accum + (1.0 - spec.rms_decay) * grads * grads
            diag = 1.0 / (np.sqrt(accum) + spec.rms_eps)
        else:
            diag = 1.0 if spec.precond_diag is None else spec.precond_diag
        scaled = diag * grads
        step_ = etas[:, None] * scaled if grads.ndim == 2 else etas * scaled
    return positions - step_, momentum, accum

"""Swap schedules and swap acceptance rules.

Pairs are numbered 1..P-1 as in the even/odd congruence: pair ``p`` couples
slots ``p`` and ``p+1`` (1-based). Arrays indexed by pair are 0-based, so
``arr[p - 1]`` belongs to pair ``p``.

Swaps exchange whatever travels with a position (the position itself, its
cached energy and gradient, optimizer state, particle id). Learning rates and
temperatures stay bound to slots.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InvalidArgumentError

__all__ = [
    "Scheme",
    "Rule",
    "SwapPolicy",
    "GateBank",
    "SwapDecision",
    "EWVariance",
    "eligible_pairs",
    "eligible_mask",
    "metropolis_corrected_rate",
    "metropolis_window_corrected_rate",
    "deterministic_condition",
    "pair_conditions",
    "attempt_swaps",
    "adj_sweep",
    "seo_step",
]


class Scheme(str, enum.Enum):
    ADJ = "ADJ"
    SEO = "SEO"
    DEO = "DEO"
    DEO_W = "DEO_W"
    NONE = "NONE"


class Rule(str, enum.Enum):
    METROPOLIS_CORRECTED = "metropolis"
    METROPOLIS_WINDOW_CORRECTED = "metropolis-window"
    DETERMINISTIC_BUFFER = "deterministic"

    @property
    def is_metropolis(self) -> bool:
        return self is not Rule.DETERMINISTIC_BUFFER


@dataclass(frozen=True)
class SwapPolicy:
    """Which pairs may swap when, and how a swap is decided."""

    scheme: Scheme = Scheme.DEO_W
    window: int = 1
    rule: Rule = Rule.DETERMINISTIC_BUFFER
    lambda_w: float = 0.0

    def __post_init__(self):
        try:
            scheme, rule = Scheme(self.scheme), Rule(self.rule)
        except ValueError as exc:
            raise InvalidArgumentError(str(exc)) from None
        if int(self.window) != self.window or self.window < 1:
            raise InvalidArgumentError(f"window must be an integer >= 1, got {self.window}")
        if scheme in (Scheme.ADJ, Scheme.SEO, Scheme.DEO, Scheme.NONE) and self.window != 1:
            raise InvalidArgumentError(f"scheme {scheme.value} requires window == 1")
        if scheme in (Scheme.ADJ, Scheme.SEO) and not rule.is_metropolis:
            raise InvalidArgumentError("ADJ and SEO schedules are only defined with Metropolis rules")
        if not (math.isfinite(self.lambda_w) and self.lambda_w >= 0):
            raise InvalidArgumentError(f"lambda_w must be >= 0, got {self.lambda_w}")
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "rule", rule)
        object.__setattr__(self, "window", int(self.window))
        object.__setattr__(self, "lambda_w", float(self.lambda_w))

    @property
    def effective_lambda(self) -> float:
        return self.lambda_w if self.rule is Rule.METROPOLIS_WINDOW_CORRECTED else 0.0


class GateBank:
    """Per-pair gates: a gate closes after an accepted swap and reopens at window starts."""

    def __init__(self, n_pairs: int, gates=None):
        self.gates = np.ones(n_pairs, dtype=bool) if gates is None else np.array(gates, dtype=bool)
        if self.gates.shape != (n_pairs,):
            raise InvalidArgumentError(f"expected {n_pairs} gates, got shape {self.gates.shape}")

    def __len__(self):
        return self.gates.size

    def __repr__(self):
        return f"GateBank({self.gates.astype(int).tolist()})"

    def __eq__(self, other):
        return isinstance(other, GateBank) and np.array_equal(self.gates, other.gates)

    def copy(self) -> GateBank:
        return GateBank(self.gates.size, self.gates)

    def open_all(self) -> None:
        self.gates[:] = True

    def freeze(self, pair: int) -> None:
        self.gates[pair - 1] = False

    def is_open(self, pair: int) -> bool:
        return bool(self.gates[pair - 1])


@dataclass(frozen=True)
class SwapDecision:
    """Outcome of one pair at one iteration.

    ``condition`` is the rule's verdict whether or not the pair was allowed to
    act on it; ``attempted`` means the pair was eligible with an open gate.
    """

    pair: int
    attempted: bool
    accepted: bool
    raw_energy_diff: float
    rate_or_threshold: float
    condition: bool = False

    def __post_init__(self):
        if self.accepted and not self.attempted:
            raise InvalidArgumentError("a swap cannot be accepted without being attempted")


class EWVariance:
    """Exponentially weighted mean/variance per pair with a half-life in updates."""

    def __init__(self, n: int, half_life: float = 200.0):
        if half_life <= 0:
            raise InvalidArgumentError("half_life must be positive")
        self.alpha = 1.0 - 0.5 ** (1.0 / half_life)
        self.mean = np.zeros(n)
        self.var = np.zeros(n)
        self.count = np.zeros(n, dtype=int)

    def update(self, values, mask=None) -> None:
        values = np.asarray(values, dtype=float)
        mask = np.ones(values.shape, bool) if mask is None else np.asarray(mask, bool)
        first = mask & (self.count == 0)
        later = mask & (self.count > 0)
        self.mean[first] = values[first]
        delta = values - self.mean
        self.mean[later] += self.alpha * delta[later]
        self.var[later] = (1 - self.alpha) * (self.var[later] + self.alpha * delta[later] ** 2)
        self.count[mask] += 1


def eligible_pairs(k: int, W: int, P: int) -> set[int]:
    """Pairs ``p`` in 1..P-1 whose parity matches the current window's parity."""
    return {int(p) for p in np.flatnonzero(eligible_mask(k, W, P)) + 1}


def eligible_mask(k: int, W: int, P: int) -> np.ndarray:
    if k < 0 or W < 1 or P < 2:
        raise InvalidArgumentError(f"need k >= 0, W >= 1, P >= 2; got {k}, {W}, {P}")
    parity = (k // W) % 2
    return np.arange(1, P) % 2 == parity


def _check_taus(tau_p, tau_q):
    if not (0 < tau_p < tau_q and math.isfinite(tau_q)):
        raise InvalidArgumentError(f"need 0 < tau_p < tau_q, got {tau_p}, {tau_q}")


def metropolis_corrected_rate(dU_tilde: float, tau_p: float, tau_q: float, sigma_p2: float) -> float:
    """Swap probability corrected for the variance of noisy energy estimates.

    ``dU_tilde`` is the noisy energy at the colder slot minus the hotter one.
    """
    return metropolis_window_corrected_rate(dU_tilde, tau_p, tau_q, sigma_p2, 0.0)


def metropolis_window_corrected_rate(
    dU_tilde: float, tau_p: float, tau_q: float, sigma_p2: float, lambda_w: float
) -> float:
    """Bias-corrected swap probability with an extra window penalty ``lambda_w``."""
    _check_taus(tau_p, tau_q)
    if not sigma_p2 >= 0:
        raise InvalidArgumentError(f"sigma_p2 must be >= 0, got {sigma_p2}")
    if not lambda_w >= 0:
        raise InvalidArgumentError(f"lambda_w must be >= 0, got {lambda_w}")
    d_t = 1.0 / tau_p - 1.0 / tau_q
    exponent = d_t * (dU_tilde - d_t * sigma_p2) - lambda_w
    return math.exp(min(exponent, 0.0))


def deterministic_condition(u_p: float, u_q: float, c: float) -> bool:
    """True iff the hotter slot's noisy energy plus the buffer is strictly lower."""
    return bool(u_q + c < u_p)


def pair_conditions(energies, taus, rule: Rule, c=0.0, sigma2=None, lambda_w=0.0, uniforms=None):
    """Evaluate the swap rule for every adjacent pair at once.

    Returns ``(dU, rate_or_threshold, condition)`` arrays of length P-1, with
    ``dU = U[p] - U[p+1]`` in slot order. Metropolis rules need ``uniforms``.
    """
    u = np.asarray(energies, dtype=float)
    du = u[:-1] - u[1:]
    if rule is Rule.DETERMINISTIC_BUFFER:
        return du, np.full(du.shape, float(c)), u[1:] + c < u[:-1]
    taus = np.asarray(taus, dtype=float)
    d_t = 1.0 / taus[:-1] - 1.0 / taus[1:]
    s2 = 0.0 if sigma2 is None else sigma2
    # Clipping the exponent at 0 first means exp cannot overflow.
    rate = np.exp(np.minimum(d_t * (du - d_t * s2) - lambda_w, 0.0))
    return du, rate, uniforms < rate


def _check_states(states):
    slots = [s.slot for s in states]
    if slots != list(range(1, len(states) + 1)):
        raise InvalidArgumentError(f"states must be sorted by slot 1..P, got slots {slots}")
    energies = np.array([s.energy for s in states], dtype=float)
    if not np.all(np.isfinite(energies)):
        raise InvalidArgumentError("every state needs a finite cached energy before a swap step")
    return energies


def _exchange(states, pair):
    """Swap the position-bound payloads of slots ``pair`` and ``pair+1``."""
    a, b = states[pair - 1], states[pair]
    states[pair - 1] = replace(b, slot=a.slot)
    states[pair] = replace(a, slot=b.slot)


def _rule_inputs(ladder, policy, buffer, sigma2):
    if policy.rule.is_metropolis:
        if ladder.taus is None or np.any(np.diff(ladder.taus) <= 0):
            raise InvalidArgumentError("Metropolis rules need strictly ascending temperatures")
        if sigma2 is None:
            sigma2 = 0.0
        return 0.0, sigma2
    return (0.0 if buffer is None else buffer.c), None


def _decisions(du, score, cond, attempted, accepted):
    return [
        SwapDecision(i + 1, bool(attempted[i]), bool(accepted[i]), float(du[i]), float(score[i]), bool(cond[i]))
        for i in range(du.size)
    ]


def attempt_swaps(states, ladder, policy: SwapPolicy, gates: GateBank, k: int, rng, *, buffer=None, sigma2=None):
    """One communication phase for iteration ``k``.

    Gates reopen first when ``k`` starts a window. Every eligible pair with an
    open gate whose rule fires exchanges positions and freezes its gate.
    ADJ and SEO schedules are dispatched to :func:`adj_sweep` and :func:`seo_step`.
    """
    if policy.scheme is Scheme.ADJ:
        new_states, decisions = adj_sweep(states, ladder, policy, rng, sigma2=sigma2)
        return new_states, gates.copy(), decisions
    if policy.scheme is Scheme.SEO:
        new_states, decisions = seo_step(states, ladder, policy, k, rng, sigma2=sigma2)
        return new_states, gates.copy(), decisions

    energies = _check_states(states)
    P = len(states)
    gates = gates.copy()
    if k % policy.window == 0:
        gates.open_all()
    c, s2 = _rule_inputs(ladder, policy, buffer, sigma2)
    uniforms = rng.random(P - 1) if policy.rule.is_metropolis else None
    du, score, cond = pair_conditions(energies, ladder.taus, policy.rule, c, s2, policy.effective_lambda, uniforms)
    if policy.scheme is Scheme.NONE:
        attempted = np.zeros(P - 1, dtype=bool)
    else:
        attempted = eligible_mask(k, policy.window, P) & gates.gates
    accepted = attempted & cond
    new_states = list(states)
    for pair in np.flatnonzero(accepted) + 1:
        _exchange(new_states, int(pair))
        gates.freeze(int(pair))
    return new_states, gates, _decisions(du, score, cond, attempted, accepted)


def adj_sweep(states, ladder, rule, rng, *, sigma2=None):
    """Sequential sweep over pairs 1..P-1; each attempt sees earlier swaps.

    ``rule`` may be a :class:`SwapPolicy` (its rule and lambda are used) or a
    :class:`Rule`.
    """
    policy = rule if isinstance(rule, SwapPolicy) else SwapPolicy(Scheme.ADJ, 1, rule)
    energies = _check_states(states)
    P = len(states)
    _, s2 = _rule_inputs(ladder, policy, None, sigma2)
    s2 = np.broadcast_to(np.asarray(s2, float), (P - 1,))
    new_states = list(states)
    decisions = []
    for i in range(P - 1):
        du, score, cond = pair_conditions(
            energies[i : i + 2], ladder.taus[i : i + 2], policy.rule, 0.0, s2[i], policy.effective_lambda, rng.random(1)
        )
        if cond[0]:
            _exchange(new_states, i + 1)
            energies[i], energies[i + 1] = energies[i + 1], energies[i]
        decisions.append(SwapDecision(i + 1, True, bool(cond[0]), float(du[0]), float(score[0]), bool(cond[0])))
    return new_states, decisions


def seo_step(states, ladder, rule, k, rng, *, sigma2=None):
    """A fair coin picks the even or odd pairs; that class attempts simultaneously."""
    policy = rule if isinstance(rule, SwapPolicy) else SwapPolicy(Scheme.SEO, 1, rule)
    energies = _check_states(states)
    P = len(states)
    _, s2 = _rule_inputs(ladder, policy, None, sigma2)
    parity = int(rng.random() < 0.5)
    uniforms = rng.random(P - 1)
    du, score, cond = pair_conditions(energies, ladder.taus, policy.rule, 0.0, s2, policy.effective_lambda, uniforms)
    attempted = np.arange(1, P) % 2 == parity
    accepted = attempted & cond
    new_states = list(states)
    for pair in np.flatnonzero(accepted) + 1:
        _exchange(new_states, int(pair))
    return new_states, _decisions(du, score, cond, attempted, accepted)

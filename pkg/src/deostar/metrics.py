"""Post-hoc analytics over sampler traces."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError

__all__ = [
    "count_round_trips",
    "round_trip_rate",
    "tv_distance",
    "histogram",
    "box_tv_distance",
    "mode_coverage",
    "acceptance_rates",
    "RunReport",
]


def _slots_of_particles(trace):
    """Convert a (T, P) particle-per-slot trace into slot-per-particle, validating rows."""
    tr = np.asarray(trace)
    if tr.ndim != 2:
        raise InvalidArgumentError(f"index trace must be 2-D (iterations, P), got shape {tr.shape}")
    if tr.shape[0] == 0:
        return np.empty((0, tr.shape[1]), dtype=int)
    P = tr.shape[1]
    if not np.array_equal(np.sort(tr, axis=1), np.broadcast_to(np.arange(P), tr.shape)):
        raise InvalidArgumentError("every trace row must be a permutation of 0..P-1")
    return np.argsort(tr, axis=1)


def count_round_trips(trace) -> np.ndarray:
    """Completed round trips per particle.

    ``trace[t, s]`` is the particle occupying slot ``s`` (0-based) at time
    ``t``. A trip completes when a particle that has visited both the lowest
    and highest slot is back at the slot it started from; the flags then
    restart from that position.
    """
    slots = _slots_of_particles(trace)
    T, P = slots.shape if slots.size else (0, np.asarray(trace).shape[1])
    counts = np.zeros(P, dtype=int)
    if T == 0:
        return counts
    top = P - 1
    for i in range(P):
        path = slots[:, i]
        start = path[0]
        # Only positions where the slot changes matter.
        keep = np.concatenate(([True], path[1:] != path[:-1]))
        lo = hi = False
        n = 0
        for z in path[keep].tolist():
            lo = lo or z == 0
            hi = hi or z == top
            if lo and hi and z == start:
                n += 1
                lo, hi = z == 0, z == top
        counts[i] = n
    return counts


def round_trip_rate(trace, per: int = 1000) -> float:
    """Round trips summed over particles, per ``per`` iterations."""
    tr = np.asarray(trace)
    if tr.shape[0] == 0:
        return 0.0
    return float(count_round_trips(tr).sum() * per / tr.shape[0])


def tv_distance(hist_a, hist_b) -> float:
    """Half the L1 distance between two normalized histograms on the same bins."""
    a = np.asarray(hist_a, dtype=float)
    b = np.asarray(hist_b, dtype=float)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"histograms must share a shape, got {a.shape} and {b.shape}")
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidArgumentError("histogram masses must be nonnegative")
    sa, sb = a.sum(), b.sum()
    if sa <= 0 or sb <= 0:
        raise InvalidArgumentError("histograms must carry positive mass")
    return float(0.5 * np.abs(a / sa - b / sb).sum())


def histogram(samples, edges):
    """Normalized histogram of ``samples`` (shape (n, d)) on ``edges``; mass outside is dropped."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    counts, _ = np.histogramdd(x, bins=edges)
    total = counts.sum()
    if total == 0:
        raise InvalidArgumentError("no samples fall inside the histogram bounds")
    return counts / total


def box_tv_distance(samples, reference, edges) -> float:
    """TV distance between in-box sample frequencies and a reference grid."""
    return tv_distance(histogram(samples, edges), reference)


def mode_coverage(samples, floor: float = 0.2, centers=None) -> int:
    """Number of unit cells around lattice modes holding more than ``floor`` times a uniform share.

    The default cells are centred on the 25 integer points of ``[-2, 2]^2``.
    Masses are taken relative to samples inside the union of cells.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise InvalidArgumentError(f"samples must have shape (n, 2), got {x.shape}")
    if centers is None:
        grid = np.arange(-2, 3)
        centers = np.array([(a, b) for a in grid for b in grid], dtype=float)
    centers = np.asarray(centers, dtype=float)
    cell = np.rint(x)
    inside = np.all(np.abs(x - cell) < 0.5, axis=1)
    counts = np.array([np.sum(inside & np.all(cell == c, axis=1)) for c in centers])
    total = counts.sum()
    if total == 0:
        return 0
    share = counts / total
    return int(np.sum(share > floor / len(centers)))


def acceptance_rates(decisions, basis: str = "attempted", start: int = 0) -> np.ndarray:
    """Per-pair accepted / attempted (or condition / evaluated) rates.

    ``decisions`` is either an iterable of :class:`~deostar.swap.SwapDecision`
    grouped by iteration, or a mapping with boolean arrays ``attempted``,
    ``accepted`` and ``condition`` of shape (iterations, P-1). Rows before
    ``start`` are skipped. Pairs never attempted get ``nan``.
    """
    if basis not in ("attempted", "evaluated"):
        raise InvalidArgumentError(f"basis must be 'attempted' or 'evaluated', got {basis!r}")
    if isinstance(decisions, dict):
        att = np.asarray(decisions["attempted"], bool)[start:]
        acc = np.asarray(decisions["accepted"], bool)[start:]
        cond = np.asarray(decisions.get("condition", acc), bool)[start:]
    else:
        rows = [list(r) for r in decisions][start:]
        if not rows:
            raise InvalidArgumentError("no decisions to summarize")
        att = np.array([[d.attempted for d in r] for r in rows], bool)
        acc = np.array([[d.accepted for d in r] for r in rows], bool)
        cond = np.array([[d.condition for d in r] for r in rows], bool)
    if basis == "evaluated":
        num, den = cond.sum(axis=0), np.full(cond.shape[1], cond.shape[0])
    else:
        num, den = acc.sum(axis=0), att.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.maximum(den, 1), np.nan)


@dataclass
class RunReport:
    """Summary of one sampler run; ``to_json`` drops the long traces unless asked."""

    iterations: int = 0
    window: int = 1
    round_trips_per_1000_iters: float = 0.0
    per_pair_acceptance: list = field(default_factory=list)
    per_pair_condition_rate: list = field(default_factory=list)
    tv_distance: float | None = None
    mode_coverage: int | None = None
    right_mode_weight: float | None = None
    final_etas: list = field(default_factory=list)
    final_buffer: float = 0.0
    ladder_repairs: int = 0
    ladder_trace: object = field(default_factory=list)
    buffer_trace: object = field(default_factory=list)
    status: str = "ok"

    def __post_init__(self):
        for name in ("per_pair_acceptance", "per_pair_condition_rate"):
            vals = np.asarray(getattr(self, name), dtype=float)
            finite = vals[np.isfinite(vals)]
            if np.any((finite < 0) | (finite > 1)):
                raise InvalidArgumentError(f"{name} must lie in [0, 1]")
        if self.tv_distance is not None and not 0 <= self.tv_distance <= 1 + 1e-12:
            raise InvalidArgumentError("tv_distance must lie in [0, 1]")

    def to_dict(self, include_traces: bool = False) -> dict:
        out = asdict(self)
        if not include_traces:
            out.pop("ladder_trace")
            out.pop("buffer_trace")
        return _jsonable(out)

    def to_json(self, include_traces: bool = False, **kwargs) -> str:
        return json.dumps(self.to_dict(include_traces), **kwargs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj

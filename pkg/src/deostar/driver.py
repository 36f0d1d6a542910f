"""Run orchestration and artifact output.

``run(config)`` fits a :class:`~deostar.sampler.DEOSampler` and, when the
config names an output directory, writes one directory per run:

``config.ini``
    the resolved configuration;
``ladder.csv``
    ``iter, eta_1..eta_P, buffer_c, accept_rate_1..accept_rate_{P-1}`` where the
    acceptance rates are running swap-condition frequencies;
``swaps.csv``
    ``iter, pair, attempted, accepted, dU, threshold_or_rate``;
``index.csv``
    ``iter`` and the particle id held by each slot;
``samples.csv``
    thinned recorded samples, ``iter, slot, x_1..x_d``;
``report.json``
    the :class:`~deostar.metrics.RunReport`.

If sampling hits a non-finite state the partial traces are flushed before the
:class:`~deostar.exceptions.NumericalError` propagates.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .config import FIELD_SECTIONS, RunConfig, coerce
from .exceptions import ConfigError, NumericalError
from .metrics import RunReport

__all__ = ["run", "sweep", "write_artifacts", "write_sweep_csv"]

log = logging.getLogger(__name__)


def run(config: RunConfig, output_dir=None) -> RunReport:
    """Execute one configured run; returns its report."""
    sampler = config.to_sampler()
    out = output_dir if output_dir is not None else config.output_dir
    try:
        sampler.fit()
    except NumericalError:
        if out is not None and hasattr(sampler, "report_"):
            write_artifacts(sampler, config, out)
            log.error("numerical error; partial traces written to %s", out)
        raise
    if out is not None:
        write_artifacts(sampler, config, out)
    return sampler.report_


def sweep(config: RunConfig, axis: str, values, output_dir=None):
    """Run ``config`` once per value of ``axis``; returns ``[(value, report), ...]``.

    With an output directory each run goes to ``<dir>/<axis>=<value>`` and a
    summary ``sweep.csv`` is written next to them.
    """
    if axis not in FIELD_SECTIONS:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    root = output_dir if output_dir is not None else config.output_dir
    results = []
    for raw in values:
        value = coerce(axis, raw)
        cfg = config.replace(**{axis: value})
        sub = None if root is None else Path(root) / f"{axis}={value}"
        results.append((value, run(cfg, sub)))
    if root is not None:
        write_sweep_csv(Path(root) / "sweep.csv", axis, results)
    return results


def write_sweep_csv(path, axis, results) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["round_trips_per_1000_iters", "tv_distance", "mode_coverage", "right_mode_weight", "final_buffer"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis, *cols])
        for value, rep in results:
            w.writerow([value, *("" if getattr(rep, c) is None else getattr(rep, c) for c in cols)])


def write_artifacts(sampler, config: RunConfig, out) -> Path:
    """Write the run directory for a fitted (possibly partial) sampler."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config.to_ini())

    etas = sampler.ladder_trace_
    K, P = etas.shape
    dec = sampler.decisions_
    iters = np.arange(K)

    cond = dec["condition"].astype(float)
    running = np.cumsum(cond, axis=0) / (iters[:, None] + 1.0) if K else cond
    header = ["iter", *[f"eta_{i}" for i in range(1, P + 1)], "buffer_c", *[f"accept_rate_{i}" for i in range(1, P)]]
    _save(out / "ladder.csv", header, np.column_stack([iters, etas, sampler.buffer_trace_, running]), ["%d"] + ["%.10g"] * (2 * P))

    rows = np.column_stack(
        [
            np.repeat(iters, P - 1),
            np.tile(np.arange(1, P), K),
            dec["attempted"].reshape(-1),
            dec["accepted"].reshape(-1),
            dec["dU"].reshape(-1),
            dec["score"].reshape(-1),
        ]
    )
    _save(out / "swaps.csv", ["iter", "pair", "attempted", "accepted", "dU", "threshold_or_rate"], rows,
          ["%d", "%d", "%d", "%d", "%.10g", "%.10g"])

    idx = sampler.index_trace_
    _save(out / "index.csv", ["iter", *[f"slot_{i}" for i in range(1, P + 1)]], np.column_stack([iters, idx]),
          ["%d"] * (P + 1))

    samples = sampler.sample_trace_
    keep = iters[:: config.thin]
    n_slots, d = samples.shape[1], samples.shape[2]
    if keep.size:
        block = samples[keep].reshape(-1, d)
        it = np.repeat(keep, n_slots)
        slot = np.tile(np.arange(1, n_slots + 1), keep.size)
        data = np.column_stack([it, slot, block])
    else:
        data = np.empty((0, 2 + d))
    _save(out / "samples.csv", ["iter", "slot", *[f"x_{i}" for i in range(1, d + 1)]], data,
          ["%d", "%d"] + ["%.10g"] * d)

    (out / "report.json").write_text(sampler.report_.to_json(indent=2))
    return out


def _save(path, header, data, fmt):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        if len(data):
            np.savetxt(fh, data, fmt=fmt, delimiter=",")

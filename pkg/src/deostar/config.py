"""Run configuration: INI files, presets and command-line overrides.

A config file has sections ``[target]``, ``[ladder]``, ``[swap]``,
``[kernels]`` and ``[run]``. Every key belongs to exactly one section; unknown
sections or keys are errors. Values given later win: defaults, then a preset,
then the file, then explicit overrides.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .exceptions import ConfigError, InvalidArgumentError
from .index_sim import optimal_window
from .kernels import KernelKind
from .swap import Rule, Scheme, SwapPolicy
from .targets import make_target

__all__ = ["RunConfig", "PRESETS", "parse_config", "load_preset", "read_ini", "default_output_root", "FIELD_SECTIONS"]


def _opt(conv):
    def parse(text):
        if isinstance(text, str) and text.strip().lower() in ("", "none", "auto"):
            return None
        return conv(text)

    parse.__name__ = f"optional_{conv.__name__}"
    return parse


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _sigma2(text):
    if isinstance(text, (int, float)):
        return float(text)
    low = str(text).strip().lower()
    return low if low in ("auto", "online") else float(low)


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run. Field metadata records the INI section and parser."""

    target: str = dataclasses.field(default="grid25", metadata={"section": "target", "parse": str})
    noise_grad_std: float | None = dataclasses.field(default=None, metadata={"section": "target", "parse": _opt(float)})
    noise_energy_std: float | None = dataclasses.field(default=None, metadata={"section": "target", "parse": _opt(float)})

    n_chains: int = dataclasses.field(default=16, metadata={"section": "ladder", "parse": _int})
    eta_low: float = dataclasses.field(default=0.003, metadata={"section": "ladder", "parse": float})
    eta_high: float = dataclasses.field(default=0.6, metadata={"section": "ladder", "parse": float})
    taus: tuple | None = dataclasses.field(default=None, metadata={"section": "ladder", "parse": _opt(_floats)})
    target_swap_rate: float = dataclasses.field(default=0.4, metadata={"section": "ladder", "parse": float})
    gamma0: float = dataclasses.field(default=0.1, metadata={"section": "ladder", "parse": float})
    k0: float = dataclasses.field(default=1000.0, metadata={"section": "ladder", "parse": float})
    buffer_gamma0: float | None = dataclasses.field(default=None, metadata={"section": "ladder", "parse": _opt(float)})
    adapt_ladder: bool = dataclasses.field(default=True, metadata={"section": "ladder", "parse": _bool})
    adapt_buffer: bool = dataclasses.field(default=True, metadata={"section": "ladder", "parse": _bool})

    scheme: str = dataclasses.field(default="DEO_W", metadata={"section": "swap", "parse": str})
    rule: str = dataclasses.field(default="deterministic", metadata={"section": "swap", "parse": str})
    window: int | None = dataclasses.field(default=None, metadata={"section": "swap", "parse": _opt(_int)})
    lambda_w: float = dataclasses.field(default=0.0, metadata={"section": "swap", "parse": float})
    indicator_scope: str = dataclasses.field(default="all", metadata={"section": "swap", "parse": str})
    sigma2: object = dataclasses.field(default="auto", metadata={"section": "swap", "parse": _sigma2})

    exploit_kernel: str = dataclasses.field(default="SGLD", metadata={"section": "kernels", "parse": str})
    explore_kernel: str = dataclasses.field(default="SGD", metadata={"section": "kernels", "parse": str})
    exploit_noise: bool = dataclasses.field(default=True, metadata={"section": "kernels", "parse": _bool})
    momentum_coef: float = dataclasses.field(default=0.9, metadata={"section": "kernels", "parse": float})
    rms_decay: float | None = dataclasses.field(default=None, metadata={"section": "kernels", "parse": _opt(float)})
    precond_diag: tuple | None = dataclasses.field(default=None, metadata={"section": "kernels", "parse": _opt(_floats)})

    n_iter: int = dataclasses.field(default=20000, metadata={"section": "run", "parse": _int})
    seed: int | None = dataclasses.field(default=0, metadata={"section": "run", "parse": _opt(_int)})
    burn_in: float = dataclasses.field(default=0.2, metadata={"section": "run", "parse": float})
    init_scale: float = dataclasses.field(default=1.0, metadata={"section": "run", "parse": float})
    sample_slots: str = dataclasses.field(default="exploit", metadata={"section": "run", "parse": str})
    thin: int = dataclasses.field(default=10, metadata={"section": "run", "parse": _int})
    hist_bounds: tuple | None = dataclasses.field(default=None, metadata={"section": "run", "parse": _opt(_floats)})
    hist_bins: int | None = dataclasses.field(default=None, metadata={"section": "run", "parse": _opt(_int)})
    output_dir: str | None = dataclasses.field(default=None, metadata={"section": "run", "parse": _opt(str)})
    name: str = dataclasses.field(default="run", metadata={"section": "run", "parse": str})

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------- checks
    def validate(self) -> None:
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        try:
            make_target(self.target, **self._target_kwargs())
            Scheme(self.scheme)
            Rule(self.rule)
            KernelKind(self.exploit_kernel)
            KernelKind(self.explore_kernel)
        except (InvalidArgumentError, ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        need(self.n_chains >= 2, f"n_chains must be >= 2, got {self.n_chains}")
        need(0 < self.eta_low <= self.eta_high < math.inf, "need 0 < eta_low <= eta_high")
        need(0 < self.target_swap_rate < 1, f"target_swap_rate must lie in (0, 1), got {self.target_swap_rate}")
        need(self.window is None or self.window >= 1, f"window must be >= 1, got {self.window}")
        need(self.lambda_w >= 0, f"lambda_w must be >= 0, got {self.lambda_w}")
        need(self.gamma0 >= 0 and self.k0 > 0, "need gamma0 >= 0 and k0 > 0")
        need(self.buffer_gamma0 is None or self.buffer_gamma0 >= 0, "buffer_gamma0 must be >= 0")
        need(self.n_iter >= 0, f"n_iter must be >= 0, got {self.n_iter}")
        need(0 <= self.burn_in < 1, f"burn_in must lie in [0, 1), got {self.burn_in}")
        need(self.init_scale >= 0, "init_scale must be >= 0")
        need(self.thin >= 1, f"thin must be >= 1, got {self.thin}")
        need(self.indicator_scope in ("all", "attempted"), f"bad indicator_scope {self.indicator_scope!r}")
        need(self.sample_slots in ("exploit", "all"), f"bad sample_slots {self.sample_slots!r}")
        need(0 <= self.momentum_coef < 1, "momentum_coef must lie in [0, 1)")
        need(self.rms_decay is None or 0 <= self.rms_decay < 1, "rms_decay must lie in [0, 1)")
        need(isinstance(self.sigma2, str) or self.sigma2 >= 0, "sigma2 must be >= 0")
        need(self.precond_diag is None or all(v > 0 for v in self.precond_diag), "precond_diag must be positive")
        if self.hist_bounds is not None:
            b = self.hist_bounds
            need(len(b) % 2 == 0 and all(lo < hi for lo, hi in zip(b[::2], b[1::2])),
                 "hist_bounds must list (low, high) pairs with low < high")
        need(self.hist_bins is None or self.hist_bins >= 1, "hist_bins must be >= 1")
        if self.taus is not None:
            need(len(self.taus) == self.n_chains, f"need {self.n_chains} taus, got {len(self.taus)}")
            need(all(t > 0 for t in self.taus), "taus must be positive")
            need(list(self.taus) == sorted(self.taus), "taus must be ascending")
        if Rule(self.rule).is_metropolis:
            need(self.taus is not None, "Metropolis rules need taus")
        if self.eta_low == self.eta_high:
            need(self.taus is not None or Scheme(self.scheme) is Scheme.NONE,
                 "a flat learning-rate ladder needs temperatures or scheme NONE")
        try:
            SwapPolicy(Scheme(self.scheme), self.resolved_window(), Rule(self.rule), self.lambda_w)
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from None

    def resolved_window(self) -> int:
        if self.window is not None:
            return self.window
        if Scheme(self.scheme) is Scheme.DEO_W:
            return optimal_window(self.n_chains, self.target_swap_rate)
        return 1

    # -------------------------------------------------------- conversions
    def _target_kwargs(self):
        kwargs = {}
        if self.noise_grad_std is not None:
            kwargs["noise_grad_std"] = self.noise_grad_std
        if self.noise_energy_std is not None:
            kwargs["noise_energy_std"] = self.noise_energy_std
        return kwargs

    def make_target(self):
        return make_target(self.target, **self._target_kwargs())

    def to_sampler(self):
        from .sampler import DEOSampler

        return DEOSampler(
            target=self.make_target(),
            n_chains=self.n_chains,
            eta_low=self.eta_low,
            eta_high=self.eta_high,
            taus=self.taus,
            target_swap_rate=self.target_swap_rate,
            window=self.window,
            scheme=self.scheme,
            rule=self.rule,
            lambda_w=self.lambda_w,
            exploit_kernel=self.exploit_kernel,
            explore_kernel=self.explore_kernel,
            exploit_noise=self.exploit_noise,
            n_iter=self.n_iter,
            gamma0=self.gamma0,
            k0=self.k0,
            buffer_gamma0=self.buffer_gamma0,
            adapt_ladder=self.adapt_ladder,
            adapt_buffer=self.adapt_buffer,
            indicator_scope=self.indicator_scope,
            sigma2=self.sigma2,
            burn_in=self.burn_in,
            sample_slots=self.sample_slots,
            init_scale=self.init_scale,
            momentum_coef=self.momentum_coef,
            rms_decay=self.rms_decay,
            precond_diag=self.precond_diag,
            hist_bounds=self.hist_bounds,
            hist_bins=self.hist_bins,
            random_state=self.seed,
        )

    def replace(self, **changes) -> RunConfig:
        unknown = set(changes) - set(FIELD_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for f in fields(self):
            section = f.metadata["section"]
            if not parser.has_section(section):
                parser.add_section(section)
            value = getattr(self, f.name)
            if value is None:
                text = "none"
            elif isinstance(value, tuple):
                text = ", ".join(repr(v) for v in value)
            else:
                text = str(value)
            parser.set(section, f.name, text)
        lines = []
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in parser.items(section)]
            lines.append("")
        return "\n".join(lines)


FIELD_SECTIONS = {f.name: f.metadata["section"] for f in fields(RunConfig)}
_PARSERS = {f.name: f.metadata["parse"] for f in fields(RunConfig)}

PRESETS = {
    "grid25-deo-star": {"name": "grid25-deo-star"},
    "grid25-deo": {"name": "grid25-deo", "window": 1},
    "grid25-sgld": {
        "name": "grid25-sgld",
        "eta_high": 0.003,
        "scheme": "NONE",
        "explore_kernel": "SGLD",
        "sample_slots": "all",
    },
    "mixture1d-bias": {
        "name": "mixture1d-bias",
        "target": "mixture1d",
        "noise_grad_std": 0.0,
        "noise_energy_std": 3.0,
        "n_chains": 2,
        "eta_low": 0.01,
        "eta_high": 0.01,
        "taus": (1.0, 10.0),
        "scheme": "DEO_W",
        "window": 100,
        "rule": "metropolis-window",
        "explore_kernel": "SGLD",
        "adapt_ladder": False,
        "adapt_buffer": False,
        "n_iter": 1_000_000,
    },
}


def coerce(key: str, value):
    """Parse one textual (or already typed) value for config key ``key``."""
    if key not in _PARSERS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return _PARSERS[key](value) if isinstance(value, str) else _coerce_typed(key, value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def _coerce_typed(key, value):
    if value is None:
        return None
    parse = _PARSERS[key]
    return parse(value) if parse in (_floats, _bool, _int) else value


def load_preset(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def read_ini(path) -> dict:
    """Flatten an INI file into ``{key: text}``, checking sections and keys."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    out = {}
    sections = set(FIELD_SECTIONS.values())
    for section in parser.sections():
        if section not in sections:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key, value in parser.items(section):
            if key == "preset" and section == "run":
                out["preset"] = value
                continue
            if FIELD_SECTIONS.get(key) != section:
                raise ConfigError(f"unknown key {key!r} in section [{section}] of {path}")
            out[key] = value
    return out


def parse_config(path=None, overrides=None, preset=None) -> RunConfig:
    """Build a :class:`RunConfig` from defaults, a preset, a file and overrides."""
    from_file = read_ini(path) if path is not None else {}
    preset = preset or from_file.pop("preset", None)
    from_file.pop("preset", None)
    values = {}
    if preset:
        values.update({k: coerce(k, v) for k, v in load_preset(preset).items()})
    values.update({k: coerce(k, v) for k, v in from_file.items()})
    values.update({k: coerce(k, v) for k, v in (overrides or {}).items()})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def default_output_root() -> Path:
    """Output root from ``DEOSTAR_OUTPUT_ROOT``, else ``./runs``."""
    return Path(os.environ.get("DEOSTAR_OUTPUT_ROOT", "runs"))

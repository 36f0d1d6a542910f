"""Target distributions with controllable gradient and energy noise.

Every target exposes the exact energy ``U`` and gradient, their noisy
versions ``U + sigma_e xi`` and ``grad U + sigma_g xi``, and a batched oracle
that takes pre-drawn standard normals so callers can control the streams.
Positions may carry leading batch dimensions; the last axis is ``dim``.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .exceptions import InvalidArgumentError

__all__ = [
    "TargetKind",
    "TargetModel",
    "Grid25",
    "Mixture1D",
    "Quadratic",
    "Custom",
    "make_target",
    "energy",
    "gradient",
    "noisy_energy",
    "noisy_gradient",
    "reference_density_grid",
    "GRID25_BOUNDS",
    "GRID25_BINS",
]

GRID25_BOUNDS = ((-3.0, 3.0), (-3.0, 3.0))
GRID25_BINS = (60, 60)
_TWO_PI = 2.0 * math.pi


class TargetKind(str, enum.Enum):
    GRID25 = "Grid25"
    MIXTURE1D = "Mixture1D"
    QUADRATIC = "Quadratic"
    CUSTOM = "Custom"


class TargetModel:
    """Base class; subclasses implement ``_energy`` and ``_gradient``."""

    kind: TargetKind = TargetKind.CUSTOM
    dim: int = 1

    def __init__(self, noise_grad_std: float = 0.0, noise_energy_std: float = 0.0):
        for name, value in (("noise_grad_std", noise_grad_std), ("noise_energy_std", noise_energy_std)):
            if not (math.isfinite(value) and value >= 0):
                raise InvalidArgumentError(f"{name} must be finite and >= 0, got {value}")
        self.noise_grad_std = float(noise_grad_std)
        self.noise_energy_std = float(noise_energy_std)

    def __repr__(self):
        return (
            f"{type(self).__name__}(noise_grad_std={self.noise_grad_std}, "
            f"noise_energy_std={self.noise_energy_std})"
        )

    def _check(self, position):
        x = np.asarray(position, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.dim:
            raise InvalidArgumentError(f"{self.kind.value} expects dim {self.dim}, got shape {x.shape}")
        return x

    def energy(self, position):
        """Exact energy; a float for one position, an array for a batch."""
        out = self._energy(self._check(position))
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, position):
        return self._gradient(self._check(position))

    def noisy_energy(self, position, rng):
        u = self.energy(position)
        if self.noise_energy_std == 0:
            return u
        return u + self.noise_energy_std * rng.standard_normal(np.shape(u))

    def noisy_gradient(self, position, rng):
        g = self.gradient(position)
        if self.noise_grad_std == 0:
            return g
        return g + self.noise_grad_std * rng.standard_normal(g.shape)

    def oracle(self, position, rng):
        """One noisy draw of ``(energy, gradient)`` at ``position``."""
        return self.noisy_energy(position, rng), self.noisy_gradient(position, rng)

    def oracle_batch(self, positions, z_energy, z_grad):
        """Noisy energies and gradients for rows of ``positions`` from given normals."""
        x = self._check(positions)
        u = self._energy(x) + self.noise_energy_std * z_energy
        g = self._gradient(x) + self.noise_grad_std * z_grad
        return u, g

    def _energy(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError


class Grid25(TargetModel):
    """Twenty-five cosine wells on a quadratic bowl.

    ``U = 0.2 |b|^2 - 2 (cos 2 pi b1 + cos 2 pi b2)``; the default noise is
    standard deviation 2 on both the energy and each gradient coordinate.
    """

    kind = TargetKind.GRID25
    dim = 2

    def __init__(self, noise_grad_std: float = 2.0, noise_energy_std: float = 2.0):
        super().__init__(noise_grad_std, noise_energy_std)

    def _energy(self, x):
        return 0.2 * np.sum(x * x, axis=-1) - 2.0 * np.sum(np.cos(_TWO_PI * x), axis=-1)

    def _gradient(self, x):
        return 0.4 * x + 2.0 * _TWO_PI * np.sin(_TWO_PI * x)


class Mixture1D(TargetModel):
    """``0.4 N(-4, 0.7^2) + 0.6 N(3, 0.5^2)``; ``exp(-U)`` is the normalized density."""

    kind = TargetKind.MIXTURE1D
    dim = 1
    weights = (0.4, 0.6)
    means = (-4.0, 3.0)
    stds = (0.7, 0.5)

    def __init__(self, noise_grad_std: float = 0.0, noise_energy_std: float = 0.0):
        super().__init__(noise_grad_std, noise_energy_std)
        self._log_norm = [math.log(w) - math.log(s * math.sqrt(_TWO_PI)) for w, s in zip(self.weights, self.stds)]

    def _log_components(self, x):
        x = x[..., 0]
        return [c - 0.5 * ((x - m) / s) ** 2 for c, m, s in zip(self._log_norm, self.means, self.stds)]

    def _energy(self, x):
        a, b = self._log_components(x)
        return -np.logaddexp(a, b)

    def _gradient(self, x):
        a, b = self._log_components(x)
        w_a = np.exp(a - np.logaddexp(a, b))
        xs = x[..., 0]
        (ma, mb), (sa, sb) = self.means, self.stds
        g = w_a * (xs - ma) / sa**2 + (1.0 - w_a) * (xs - mb) / sb**2
        return g[..., None]

    def oracle_batch(self, positions, z_energy, z_grad):
        # Shares the component log-densities between energy and gradient.
        x = self._check(positions)
        a, b = self._log_components(x)
        lse = np.logaddexp(a, b)
        w_a = np.exp(a - lse)
        xs = x[..., 0]
        (ma, mb), (sa, sb) = self.means, self.stds
        g = w_a * (xs - ma) / sa**2 + (1.0 - w_a) * (xs - mb) / sb**2
        return -lse + self.noise_energy_std * z_energy, g[..., None] + self.noise_grad_std * z_grad

    def right_mode_weight(self) -> float:
        return self.weights[1]


class Quadratic(TargetModel):
    """``U = 0.5 sum_i a_i x_i^2`` with per-coordinate curvature ``a``."""

    kind = TargetKind.QUADRATIC

    def __init__(self, curvature=1.0, dim: int = 1, noise_grad_std: float = 0.0, noise_energy_std: float = 0.0):
        super().__init__(noise_grad_std, noise_energy_std)
        a = np.broadcast_to(np.asarray(curvature, dtype=float), (int(dim),)).copy()
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise InvalidArgumentError("curvature must be finite and positive")
        self.curvature = a
        self.dim = int(dim)

    def _energy(self, x):
        return 0.5 * np.sum(self.curvature * x * x, axis=-1)

    def _gradient(self, x):
        return self.curvature * x


class Custom(TargetModel):
    """User-supplied ``energy_fn`` and ``grad_fn`` acting on arrays of shape ``(..., dim)``."""

    kind = TargetKind.CUSTOM

    def __init__(self, energy_fn, grad_fn, dim: int, noise_grad_std: float = 0.0, noise_energy_std: float = 0.0):
        super().__init__(noise_grad_std, noise_energy_std)
        if not callable(energy_fn) or not callable(grad_fn):
            raise InvalidArgumentError("energy_fn and grad_fn must be callable")
        if int(dim) < 1:
            raise InvalidArgumentError(f"dim must be >= 1, got {dim}")
        self.energy_fn, self.grad_fn, self.dim = energy_fn, grad_fn, int(dim)

    def _energy(self, x):
        return np.asarray(self.energy_fn(x), dtype=float)

    def _gradient(self, x):
        return np.asarray(self.grad_fn(x), dtype=float).reshape(x.shape)


_BUILTIN = {"grid25": Grid25, "mixture1d": Mixture1D, "quadratic": Quadratic}


def make_target(name: str, **kwargs) -> TargetModel:
    """Build a built-in target by (case-insensitive) name."""
    try:
        cls = _BUILTIN[name.lower()]
    except KeyError:
        raise InvalidArgumentError(f"unknown target {name!r}; choose from {sorted(_BUILTIN)}") from None
    return cls(**kwargs)


def energy(target: TargetModel, position):
    return target.energy(position)


def gradient(target: TargetModel, position):
    return target.gradient(position)


def noisy_energy(target: TargetModel, position, rng):
    return target.noisy_energy(position, rng)


def noisy_gradient(target: TargetModel, position, rng):
    return target.noisy_gradient(position, rng)


def reference_density_grid(target: TargetModel, bounds, bins, subdivisions: int = 10):
    """Bin masses of ``exp(-U)`` on a regular grid, normalized to sum to one.

    Each bin is integrated with a midpoint rule on ``subdivisions`` points per
    axis. ``bounds`` is one ``(low, high)`` pair per dimension and ``bins`` an
    int or one count per dimension. Returns ``(masses, edges)``.
    """
    bounds = [tuple(map(float, b)) for b in np.atleast_2d(np.asarray(bounds, dtype=float))]
    if len(bounds) != target.dim:
        raise InvalidArgumentError(f"need {target.dim} bound pairs, got {len(bounds)}")
    bins = np.broadcast_to(np.asarray(bins, dtype=int), (target.dim,))
    if any(lo >= hi for lo, hi in bounds) or np.any(bins < 1) or subdivisions < 1:
        raise InvalidArgumentError("bounds must be increasing and bins/subdivisions positive")
    edges, mids = [], []
    for (lo, hi), n in zip(bounds, bins):
        edges.append(np.linspace(lo, hi, n + 1))
        fine = np.linspace(lo, hi, n * subdivisions + 1)
        mids.append(0.5 * (fine[:-1] + fine[1:]))
    grid = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)
    u = target.energy(grid)
    dens = np.exp(-(u - np.min(u)))
    shape = []
    for n in bins:
        shape += [int(n), subdivisions]
    masses = dens.reshape(shape).sum(axis=tuple(range(1, 2 * target.dim, 2)))
    return masses / masses.sum(), edges

"""Test objectives with known optima (minimization convention).

Textbook forms, optionally shifted by a random offset and rotated by a random
orthogonal matrix: ``f(x) = f_base(R^T (x - shift))``.  These are not the
official BBOB instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def sphere(z: np.ndarray) -> float:
    return float(z @ z)


def rosenbrock(z: np.ndarray) -> float:
    return float(np.sum(100.0 * (z[1:] - z[:-1] ** 2) ** 2 + (1.0 - z[:-1]) ** 2))


def ellipsoid(z: np.ndarray) -> float:
    n = z.size
    expo = 6.0 * np.arange(n) / (n - 1) if n > 1 else np.zeros(1)
    return float(np.sum(10.0**expo * z * z))


def rastrigin(z: np.ndarray) -> float:
    return float(10.0 * z.size + np.sum(z * z - 10.0 * np.cos(2.0 * math.pi * z)))


def bent_cigar(z: np.ndarray) -> float:
    return float(z[0] ** 2 + 1e6 * np.sum(z[1:] ** 2))


@dataclass(frozen=True)
class _Base:
    func: Callable[[np.ndarray], float]
    optimum: Callable[[int], np.ndarray]
    box: tuple[float, float] = (-5.0, 5.0)


_zeros = np.zeros
_BASES: dict[str, _Base] = {
    "sphere": _Base(sphere, _zeros),
    "rosenbrock": _Base(rosenbrock, np.ones),
    "ellipsoid": _Base(ellipsoid, _zeros),
    "rastrigin": _Base(rastrigin, _zeros),
    "bent_cigar": _Base(bent_cigar, _zeros),
    # attractive sector is handled separately: it depends on the optimum location
    "attractive_sector": _Base(sphere, _zeros),
}


def available() -> list[str]:
    return sorted(_BASES)


def _random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


@dataclass(frozen=True)
class BenchmarkSpec:
    """A benchmark instance.

    ``shift_seed`` draws a shift uniformly from ``[-3, 3]^n`` (the optimum is
    moved accordingly); ``rotation_seed`` draws a random rotation.
    """

    name: str
    dim: int
    noise_std: float = 0.0
    shift_seed: int | None = None
    rotation_seed: int | None = None
    shift: np.ndarray = field(init=False, repr=False, compare=False)
    rotation: np.ndarray | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.name not in _BASES:
            raise KeyError(f"unknown benchmark {self.name!r}; choose from {available()}")
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        shift = (
            np.random.default_rng(self.shift_seed).uniform(-3.0, 3.0, self.dim)
            if self.shift_seed is not None
            else np.zeros(self.dim)
        )
        rot = (
            _random_rotation(self.dim, np.random.default_rng(self.rotation_seed))
            if self.rotation_seed is not None
            else None
        )
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "rotation", rot)

    @property
    def box(self) -> tuple[float, float]:
        return _BASES[self.name].box

    @property
    def f_opt(self) -> float:
        return 0.0

    @property
    def x_opt(self) -> np.ndarray:
        z_opt = _BASES[self.name].optimum(self.dim).astype(float)
        if self.rotation is not None:
            z_opt = self.rotation @ z_opt
        return z_opt + self.shift

    def _base_coords(self, x: np.ndarray) -> np.ndarray:
        z = x - self.shift
        return self.rotation.T @ z if self.rotation is not None else z

    def noiseless(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"{self.name} expects dimension {self.dim}, got {x.size}")
        z = self._base_coords(x)
        if self.name == "attractive_sector":
            # x_opt in base coordinates; the steep side of coordinate i is where
            # z_i has the sign of x_opt_i (symmetric when the optimum is at zero)
            ref = self.shift if self.rotation is None else self.rotation.T @ self.shift
            s = np.where(z * ref > 0.0, 100.0, 1.0)
            return float(np.sum((s * z) ** 2))
        return _BASES[self.name].func(z)


def evaluate(spec: BenchmarkSpec, x, rng: np.random.Generator | None = None) -> float:
    """Objective value at ``x``, plus ``noise_std`` Gaussian noise when configured."""
    value = spec.noiseless(x)
    if spec.noise_std > 0.0:
        if rng is None:
            raise ValueError("a noisy benchmark needs a random generator")
        value += spec.noise_std * float(rng.standard_normal())
    return value


def make(name: str, dim: int, **kwargs) -> BenchmarkSpec:
    """Registry lookup by name (``-`` and ``_`` are interchangeable)."""
    return BenchmarkSpec(name.replace("-", "_").lower(), dim, **kwargs)

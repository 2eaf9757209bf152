"""Smoothing kernels and their bandwidth-scaled forms.

Bivariate kernels are products of the univariate profile, so
``K_{h1,h2}(u, v) = K_{h1}(u) * K_{h2}(v)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

FAMILIES = ("gaussian", "epanechnikov")

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    dimensionality: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.dimensionality not in (1, 2):
            raise ContractError("kernel dimensionality must be 1 or 2")

    def profile(self, u):
        """Unscaled univariate kernel K(u), vectorised."""
        u = np.asarray(u, dtype=float)
        if self.family == "gaussian":
            return np.exp(-0.5 * u * u) / _SQRT_2PI
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)

    @property
    def support(self) -> float:
        """Half-width beyond which the profile is zero (inf for gaussian)."""
        return np.inf if self.family == "gaussian" else 1.0


def as_kernel(kernel) -> KernelSpec:
    if isinstance(kernel, KernelSpec):
        return kernel
    if kernel is None:
        return KernelSpec()
    return KernelSpec(str(kernel).lower())


def _check_bandwidth(*hs):
    for h in hs:
        if not np.all(np.asarray(h, dtype=float) > 0):
            raise ContractError(f"bandwidth must be positive, got {h!r}")


def eval_scaled_univariate(kernel, u, h):
    """``h^{-1} K(u / h)``; broadcasts over ``u``."""
    _check_bandwidth(h)
    k = as_kernel(kernel)
    return k.profile(np.asarray(u, dtype=float) / h) / h


def eval_scaled_bivariate(kernel, u, v, h1, h2):
    """``(h1 h2)^{-1} K(u / h1) K(v / h2)`` with a product kernel."""
    _check_bandwidth(h1, h2)
    k = as_kernel(kernel)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return k.profile(u / h1) * k.profile(v / h2) / (h1 * h2)

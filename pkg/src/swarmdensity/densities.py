"""Declarative density specifications evaluated pointwise on the unit square."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Uniform:
    kind = "uniform"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1])


@dataclass(frozen=True)
class GaussianMixture:
    """Sum of isotropic Gaussian bumps ``w_j exp(-|x-c_j|^2 / (2 s_j^2))``."""

    centers: tuple
    widths: tuple
    weights: tuple = field(default=())
    kind = "gaussian-mixture"

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 or len(c) == 0:
            raise ValueError("centers must be a non-empty list of 2D points")
        if len(self.widths) != len(c):
            raise ValueError("need one width per center")
        if any(s <= 0 for s in self.widths):
            raise ValueError("widths must be positive")
        if self.weights and len(self.weights) != len(c):
            raise ValueError("need one weight per center")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.centers, dtype=float)
        s = np.asarray(self.widths, dtype=float)
        w = np.asarray(self.weights, dtype=float) if self.weights else np.ones(len(c))
        d2 = np.sum((x[..., None, :] - c) ** 2, axis=-1)
        return np.sum(w * np.exp(-d2 / (2.0 * s**2)), axis=-1)


@dataclass(frozen=True)
class AnnulusSector:
    """Smoothed indicator of ``r0 < |x-c| < r1`` and ``a0 < angle < a1`` (radians).

    Edges are blurred with logistic ramps of length ``smoothing``; the result
    is a horseshoe when the angular range leaves a gap.
    """

    center: tuple = (0.5, 0.5)
    radii: tuple = (0.2, 0.35)
    angles: tuple = (0.25 * np.pi, 1.75 * np.pi)
    smoothing: float = 0.03
    kind = "annulus-sector"

    def __post_init__(self):
        r0, r1 = self.radii
        if not 0 <= r0 < r1:
            raise ValueError("radii must satisfy 0 <= inner < outer")
        a0, a1 = self.angles
        if not a0 < a1 <= a0 + 2 * np.pi:
            raise ValueError("angles must satisfy start < end <= start + 2 pi")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center, dtype=float)
        r = np.hypot(d[..., 0], d[..., 1])
        a0, a1 = self.angles
        th = np.mod(np.arctan2(d[..., 1], d[..., 0]) - a0, 2 * np.pi)
        span = a1 - a0
        # angular distance measured as arc length at the mid radius
        rm = 0.5 * sum(self.radii)
        ang_in = np.minimum(th, span - th) * rm
        ang_in = np.where(th <= span, ang_in, -np.minimum(th - span, 2 * np.pi - th) * rm)
        eps = self.smoothing
        sig = lambda z: 0.5 * (1.0 + np.tanh(z / (2.0 * eps)))
        radial = sig(r - self.radii[0]) * sig(self.radii[1] - r)
        if span >= 2 * np.pi:
            return radial
        return radial * sig(ang_in)


def from_spec(spec: dict):
    """Build a density from a flat mapping such as parsed config values."""
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return Uniform()
    if kind == "gaussian-mixture":
        return GaussianMixture(
            centers=tuple(tuple(c) for c in spec["centers"]),
            widths=tuple(spec["widths"]),
            weights=tuple(spec.get("weights", ())),
        )
    if kind == "annulus-sector":
        kw = {k: tuple(spec[k]) if k != "smoothing" else spec[k] for k in ("center", "radii", "angles", "smoothing") if k in spec}
        return AnnulusSector(**kw)
    raise ValueError(f"unknown density kind {kind!r}")


def three_bumps(width: float = 0.1) -> GaussianMixture:
    """Three equally weighted disjoint bumps, the default optimization target."""
    return GaussianMixture(centers=((0.25, 0.3), (0.72, 0.3), (0.5, 0.75)), widths=(width,) * 3)

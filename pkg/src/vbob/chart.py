"""Coordinate boxes and reproducible low-discrepancy sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc


class DomainError(ValueError):
    """A point lies outside the chart (box minus excluded ball)."""


@dataclass(frozen=True)
class ChartDomain:
    """A coordinate box, optionally with a ball around the origin removed.

    ``bounds`` is a sequence of ``(lo, hi)`` pairs, one per coordinate.
    """

    bounds: tuple[tuple[float, float], ...]
    names: tuple[str, ...] = ()
    excluded_radius: float | None = None
    sample_count: int = 100
    ball_dims: int | None = None

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if not bounds:
            raise ValueError("chart needs at least one coordinate")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{k + 1}" for k in range(len(bounds))))
        if len(self.names) != len(bounds):
            raise ValueError("one name per coordinate")
        if self.excluded_radius is not None:
            if self.excluded_radius < 0:
                raise ValueError("excluded_radius must be nonnegative")
            k = self.ball_dims or len(bounds)
            far = np.sqrt(sum(max(lo * lo, hi * hi) for lo, hi in bounds[:k]))
            if not self.excluded_radius < far:
                raise ValueError("excluded ball swallows the whole box")
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def contains(self, points, atol: float = 1e-12) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        inside = np.all((points >= self.lower - atol) & (points <= self.upper + atol), axis=-1)
        if self.excluded_radius:
            k = self.ball_dims or self.dim
            inside &= np.linalg.norm(points[..., :k], axis=-1) > self.excluded_radius
        return inside

    def require(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.dim:
            raise DomainError(f"expected points with {self.dim} coordinates, got shape {points.shape}")
        ok = self.contains(points)
        if not np.all(ok):
            bad = points[~ok] if points.ndim > 1 else points
            raise DomainError(f"point {np.atleast_2d(bad)[0].tolist()} outside chart")
        return points

    def sample(self, n: int | None = None, seed: int = 0) -> np.ndarray:
        """``n`` scrambled-Halton points inside the box and outside the excluded ball."""
        n = self.sample_count if n is None else int(n)
        if n < 1:
            raise ValueError("n must be positive")
        engine = qmc.Halton(d=self.dim, scramble=True, seed=seed)
        out = np.empty((0, self.dim))
        while len(out) < n:
            raw = engine.random(max(2 * (n - len(out)), 16))
            pts = qmc.scale(raw, self.lower, self.upper)
            pts = pts[self.contains(pts)]
            out = np.vstack([out, pts])
        return out[:n]

    def product(self, other: "ChartDomain") -> "ChartDomain":
        """The chart of ``self`` times ``other``; the excluded ball stays on ``self``'s coordinates."""
        return ChartDomain(self.bounds + other.bounds, self.names + other.names,
                           self.excluded_radius, self.sample_count,
                           ball_dims=self.ball_dims or self.dim)

"""Poisson bivectors, their cotangent algebroids, and symplectic areas of leaf spheres."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .algebroid import FrameAlgebroid, StructuralError
from .chart import ChartDomain
from .fields import DerivativeField, Field, empty
from .holonomy import _mesh, _simpson_weights, grid
from .split import antisymmetric_pairs

TIKHONOV = 1e-12
LEAF_TOL = 1e-6
AREA_SIGN = -1


class NotLeafTangent(ValueError):
    """A sphere velocity is not in the image of the Poisson anchor."""


@dataclass(frozen=True)
class PoissonBivector:
    """``pi^{ij}`` on a chart, stored on ``i < j``."""

    domain: ChartDomain
    matrix: Field
    name: str = ""

    def __post_init__(self):
        m = self.domain.dim
        if self.matrix.shape != (m, m) or self.matrix.dim != m:
            raise StructuralError(f"bivector must be an {m}x{m} field")

    @classmethod
    def from_pairs(cls, domain: ChartDomain, pairs: Mapping[tuple[int, int], Field], name: str = ""):
        m = domain.dim
        mat = antisymmetric_pairs(m, m, (), pairs, label="pi")
        return cls(domain, mat, name)

    def scaled(self, factor: float) -> "PoissonBivector":
        return PoissonBivector(self.domain, self.matrix.scaled(factor), f"{factor}*{self.name}")

    def sharp(self, x) -> np.ndarray:
        """Matrix of ``alpha -> pi(alpha, .)`` at ``x``: ``(pi^# alpha)^j = pi^{ij} alpha_i``."""
        return np.swapaxes(self.matrix.evaluate(x), -1, -2)


def cotangent_algebroid(P: PoissonBivector, name: str = "") -> FrameAlgebroid:
    """``T*M`` in the frame ``dx^i``: ``rho(dx^i) = pi^{ij} d_j``, ``[dx^i, dx^j] = d pi^{ij}``."""
    m = P.domain.dim
    dpi = [DerivativeField(P.matrix, k) for k in range(m)]

    def anchor(X):
        return P.matrix.apply(X).T

    def structure(X):
        out = empty((m, m, m))
        for k in range(m):
            out[k] = dpi[k].apply(X)
        return out

    frame = tuple(f"d{n}" for n in P.domain.names)
    return FrameAlgebroid(P.domain, m, Field(m, (m, m), anchor, label="pi^#"),
                          Field(m, (m, m, m), structure, label="d pi"), frame=frame,
                          name=name or f"T*({P.name})")


@dataclass(frozen=True)
class AreaResult:
    area: float
    error_estimate: float
    max_tangency_residual: float
    N: int


def leaf_symplectic_area(P: PoissonBivector, gamma: Field, N: int = 201, sign: int = AREA_SIGN,
                         tol: float = LEAF_TOL, detail: bool = False):
    """Symplectic area of the sphere ``gamma`` (a field on the unit square) in its leaf.

    At each node the least-squares solution of ``pi^# alpha = gamma_t`` (normal
    equations with a ``1e-12`` Tikhonov floor) gives ``omega_L(gamma_t, gamma_s) =
    sign * <alpha, gamma_s>``, integrated by Simpson's rule.  With the default
    sign an outward-oriented sphere around a positive Casimir level has positive
    area.
    """
    if N < 3 or N % 2 == 0:
        raise ValueError("N must be odd and >= 3")
    pts = _mesh(grid(N), grid(N))
    g, dg = gamma.jet(pts)
    gt, gs = dg[..., 0], dg[..., 1]
    S = P.sharp(g)
    StS = np.swapaxes(S, -1, -2) @ S
    m = S.shape[-1]
    rhs = np.einsum("...ji,...j->...i", S, gt)
    alpha = np.linalg.solve(StS + TIKHONOV * np.eye(m), rhs[..., None])[..., 0]
    resid = float(np.max(np.abs(np.einsum("...ij,...j->...i", S, alpha) - gt)))
    if not np.isfinite(resid) or resid > tol:
        raise NotLeafTangent(f"sphere is not leaf-tangent: residual {resid:.3e} > {tol:.1e}")
    dens = sign * np.einsum("...i,...i->...", alpha, gs)
    w = _simpson_weights(N, 1.0 / (N - 1))
    area = float(w @ dens @ w)
    if not detail:
        return area
    Nc = (N - 1) // 2 + 1
    if (N - 1) % 4 == 0:
        wc = _simpson_weights(Nc, 2.0 / (N - 1))
        coarse = float(wc @ dens[::2, ::2] @ wc)
        err = abs(area - coarse)
    else:
        err = float("nan")
    return AreaResult(area, err, resid, N)


def mon_variation(area: Callable[[float, float], float], point, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient ``(dA/dr, dA/de)`` of an area function at ``point``."""
    r, e = map(float, point)
    if not h > 0:
        raise ValueError("h must be positive")
    dr = (area(r + h, e) - area(r - h, e)) / (2 * h)
    de = (area(r, e + h) - area(r, e - h)) / (2 * h)
    return np.array([dr, de])


@dataclass(frozen=True)
class ScanRow:
    r: float
    e: float
    area: float
    error_estimate: float
    dA_dr: float
    dA_de: float

    def as_dict(self) -> dict:
        return {"r": self.r, "e": self.e, "area": self.area, "error_estimate": self.error_estimate,
                "dA_dr": self.dA_dr, "dA_de": self.dA_de}


def area_scan(P: PoissonBivector, family: Callable[[float, float], object], rs, es, N: int = 201,
              grad_N: int = 101, h: float = 1e-4, sign: int = AREA_SIGN, workers: int | None = None) -> list:
    """Areas and central-difference gradients over the grid ``rs x es``, in row-major order.

    Gradients use areas on ``grad_N`` nodes: the quadrature error is smooth in
    the parameters and cancels in the difference quotient.
    """
    from concurrent.futures import ThreadPoolExecutor
    import os

    def one(pt):
        r, e = pt
        res = leaf_symplectic_area(P, family(r, e), N, sign, detail=True)
        g = mon_variation(lambda a, b: leaf_symplectic_area(P, family(a, b), grad_N, sign), (r, e), h)
        return ScanRow(float(r), float(e), res.area, res.error_estimate, float(g[0]), float(g[1]))

    pts = [(float(r), float(e)) for r in rs for e in es]
    n = workers or min(4, os.cpu_count() or 1)
    if n <= 1:
        return [one(p) for p in pts]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(one, pts))

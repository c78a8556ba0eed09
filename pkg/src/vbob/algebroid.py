"""Lie algebroids over a chart, presented by a global frame.

Sections are coefficient vectors in the frame ``e_1..e_r``.  The algebroid is
the anchor matrix field ``rho`` (``m x r``, column ``i`` is ``rho(e_i)``) and
structure functions ``c[k, i, j]`` with ``[e_i, e_j] = c^k_ij e_k``.  For
coefficient fields ``u, v``::

    [u, v]^k = c^k_ij u^i v^j + rho(u)(v^k) - rho(v)(u^k)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .chart import ChartDomain
from .fields import Field, empty


class StructuralError(ValueError):
    """Shapes, ranks or charts of the inputs do not fit together."""


def antisymmetric_structure(dim: int, rank: int, pairs: Mapping[tuple[int, int], Field]) -> Field:
    """Structure field ``c[k, i, j]`` from brackets given on pairs ``i < j`` only.

    Missing pairs bracket to zero; the lower triangle is filled by negation so
    antisymmetry holds exactly.
    """
    for (i, j), f in pairs.items():
        if not 0 <= i < j < rank:
            raise StructuralError(f"bracket pair {(i, j)} must satisfy 0 <= i < j < {rank}")
        if f.shape != (rank,):
            raise StructuralError(f"bracket {(i, j)} must have {rank} coefficients")
    items = dict(pairs)

    def fn(X):
        out = empty((rank, rank, rank))
        out.fill(0.0)
        for (i, j), f in items.items():
            coeffs = f.apply(X)
            for k in range(rank):
                out[k, i, j] = coeffs[k]
                out[k, j, i] = -coeffs[k]
        return out

    return Field(dim, (rank, rank, rank), fn, label="structure")


@dataclass(frozen=True)
class FrameAlgebroid:
    """A Lie algebroid of rank ``rank`` over ``domain`` in a global frame.

    ``linear_rank``/``base_dim`` are set on total algebroids of split
    VB-algebroids: the first ``linear_rank`` frame sections are linear, the
    rest core, and the first ``base_dim`` chart coordinates are base
    coordinates, the rest fibre coordinates.
    """

    domain: ChartDomain
    rank: int
    anchor: Field
    structure: Field
    frame: tuple[str, ...] = ()
    name: str = ""
    linear_rank: int | None = None
    base_dim: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = self.domain.dim
        if self.anchor.shape != (m, self.rank) or self.anchor.dim != m:
            raise StructuralError(f"anchor must be a {m}x{self.rank} field over {m} coordinates")
        if self.structure.shape != (self.rank,) * 3 or self.structure.dim != m:
            raise StructuralError("structure must have shape (rank, rank, rank)")
        if not self.frame:
            object.__setattr__(self, "frame", tuple(f"e{k + 1}" for k in range(self.rank)))
        if len(self.frame) != self.rank:
            raise StructuralError("one frame name per section")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @classmethod
    def from_pairs(cls, domain: ChartDomain, anchor: Field, pairs: Mapping[tuple[int, int], Field], **kw):
        rank = anchor.shape[1]
        return cls(domain, rank, anchor, antisymmetric_structure(domain.dim, rank, pairs), **kw)


def tangent_algebroid(domain: ChartDomain, name: str = "tangent") -> FrameAlgebroid:
    """``TM`` over a chart with the coordinate frame."""
    m = domain.dim
    return FrameAlgebroid(domain, m, Field.constant(np.eye(m), m, label="identity"),
                          Field.zeros(m, (m, m, m)), frame=tuple(f"d{n}" for n in domain.names),
                          name=name)


def abelian_algebroid(domain: ChartDomain, rank: int, name: str = "abelian") -> FrameAlgebroid:
    m = domain.dim
    return FrameAlgebroid(domain, rank, Field.zeros(m, (m, rank)), Field.zeros(m, (rank,) * 3), name=name)


def bracket_sections(A: FrameAlgebroid, u: Field, v: Field, x) -> np.ndarray:
    """Frame coefficients of ``[u, v]`` at ``x`` (shape ``batch + (m,)``)."""
    x = A.domain.require(x)
    if u.shape != (A.rank,) or v.shape != (A.rank,):
        raise StructuralError(f"sections must have {A.rank} coefficients")
    uv, ug = u.jet(x)
    vv, vg = v.jet(x)
    c = A.structure.evaluate(x)
    rho = A.anchor.evaluate(x)
    out = np.einsum("...kij,...i,...j->...k", c, uv, vv)
    out += np.einsum("...ka,...a->...k", vg, np.einsum("...ai,...i->...a", rho, uv))
    out -= np.einsum("...ka,...a->...k", ug, np.einsum("...ai,...i->...a", rho, vv))
    return out


@dataclass(frozen=True)
class AxiomReport:
    anchor_residual: float
    jacobi_residual: float
    anchor_per_point: np.ndarray = field(repr=False)
    jacobi_per_point: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def worst_anchor_point(self) -> list[float]:
        return self.points[int(np.argmax(self.anchor_per_point))].tolist()

    @property
    def worst_jacobi_point(self) -> list[float]:
        return self.points[int(np.argmax(self.jacobi_per_point))].tolist()

    def passes(self, tol: float = 1e-6) -> bool:
        return self.anchor_residual <= tol and self.jacobi_residual <= tol

    def as_dict(self) -> dict:
        return {
            "anchor_residual": self.anchor_residual,
            "jacobi_residual": self.jacobi_residual,
            "worst_anchor_point": self.worst_anchor_point,
            "worst_jacobi_point": self.worst_jacobi_point,
            "n_points": self.n_points,
            "seed": self.seed,
        }


def _max_per_point(arr: np.ndarray) -> np.ndarray:
    return np.max(np.abs(arr.reshape(arr.shape[0], -1)), axis=1) if arr.size else np.zeros(arr.shape[0])


def axiom_residuals_at(A: FrameAlgebroid, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point anchor-compatibility and Jacobi residuals at the points ``x``."""
    rho, drho = A.anchor.jet(x)
    c, dc = A.structure.jet(x)
    # rho([e_i, e_j]) - [rho e_i, rho e_j]
    lhs = np.einsum("nak,nkij->naij", rho, c)
    lie = np.einsum("nbi,najb->naij", rho, drho)
    anchor = lhs - (lie - np.einsum("naij->naji", lie))
    # cyclic sum of [[e_i, e_j], e_k] = c^l_ij c^m_lk - rho(e_k)(c^m_ij)
    T = np.einsum("nlij,nmlk->nmijk", c, c) - np.einsum("nbk,nmijb->nmijk", rho, dc)
    jac = T + np.einsum("nmjki->nmijk", T) + np.einsum("nmkij->nmijk", T)
    return _max_per_point(anchor), _max_per_point(jac)


def check_axioms(A: FrameAlgebroid, n_points: int = 100, seed: int = 0) -> AxiomReport:
    """Sampled anchor-compatibility and Jacobi residuals of ``A``."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    x = A.domain.sample(n_points, seed)
    a, j = axiom_residuals_at(A, x)
    return AxiomReport(float(a.max()), float(j.max()), a, j, x, seed)


@dataclass(frozen=True)
class AlgebroidMorphism:
    """A morphism covering the identity, ``matrix[k, i]`` = coefficient of ``target.e_k`` in ``phi(source.e_i)``."""

    source: FrameAlgebroid
    target: FrameAlgebroid
    matrix: Field
    name: str = ""

    def __post_init__(self):
        s, t = self.source.domain, self.target.domain
        if s.dim != t.dim or s.names != t.names:
            raise StructuralError("source and target must live over the same chart")
        if self.matrix.shape != (self.target.rank, self.source.rank) or self.matrix.dim != s.dim:
            raise StructuralError(
                f"morphism matrix must be {self.target.rank}x{self.source.rank} over {s.dim} coordinates")


@dataclass(frozen=True)
class MorphismReport:
    anchor_residual: float
    bracket_residual: float
    points: np.ndarray = field(repr=False)
    seed: int = 0

    def as_dict(self) -> dict:
        return {"anchor_residual": self.anchor_residual, "bracket_residual": self.bracket_residual,
                "n_points": len(self.points), "seed": self.seed}


def morphism_residual(phi: AlgebroidMorphism, n_points: int = 100, seed: int = 0, points=None) -> MorphismReport:
    """Anchor and bracket defects of ``phi`` at sampled points of the source chart."""
    A1, A2 = phi.source, phi.target
    x = A1.domain.sample(n_points, seed) if points is None else A1.domain.require(points)
    P, dP = phi.matrix.jet(x)
    rho1 = A1.anchor.evaluate(x)
    rho2 = A2.anchor.evaluate(x)
    c1 = A1.structure.evaluate(x)
    c2 = A2.structure.evaluate(x)
    anchor = np.einsum("nak,nki->nai", rho2, P) - rho1
    lhs = np.einsum("nkl,nlij->nkij", P, c1)
    R = np.einsum("nba,nai->nbi", rho2, P)  # anchor of phi(e_i)
    der = np.einsum("nbi,nkjb->nkij", R, dP)  # rho2(phi e_i)(phi^k_j)
    rhs = np.einsum("nkab,nai,nbj->nkij", c2, P, P) + der - np.einsum("nkij->nkji", der)
    return MorphismReport(float(np.max(np.abs(anchor))), float(np.max(np.abs(lhs - rhs))), x, seed)

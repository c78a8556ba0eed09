"""Two-term representations up to homotopy on pair groupoids.

Groupoid elements of the pair groupoid ``M x M`` are stored as ``(target, source)``
concatenated into one array of ``2m`` coordinates.  For a composable pair
``g1 = (x2, x1)``, ``g2 = (x1, x0)`` the cocycle ``Omega_{g1,g2}`` is a field over
the ``3m`` coordinates ``(x2, x1, x0)``.

The axioms checked in the default (composition-corrected) convention::

    d Delta^C_g - Delta^E_g d                               = 0
    Delta^C_{g1} Delta^C_{g2} - Delta^C_{g1 g2} + Omega_{g1,g2} d = 0
    Delta^E_{g1} Delta^E_{g2} - Delta^E_{g1 g2} + d Omega_{g1,g2} = 0
    Delta^C_{g1} Omega_{g2,g3} - Omega_{g1g2,g3} + Omega_{g1,g2g3} - Omega_{g1,g2} Delta^E_{g3} = 0

The literal variant replaces ``Delta_{g1 g2}`` by ``Delta_{g2} Delta_{g1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebroid import StructuralError
from .chart import ChartDomain
from .fields import Field
from .holonomy import transport_halfgrid
from .split import SplitVBA

CORRECTED = "corrected"
LITERAL = "literal"
DIFF_STEP = 1e-4


@dataclass(frozen=True)
class PairGroupoid:
    """The pair groupoid of a coordinate chart, with straight-line source-fibre curves."""

    domain: ChartDomain

    @property
    def dim(self) -> int:
        return self.domain.dim

    def target(self, g):
        return np.asarray(g)[..., : self.dim]

    def source(self, g):
        return np.asarray(g)[..., self.dim:]

    def element(self, y, x):
        return np.concatenate(np.broadcast_arrays(np.asarray(y, float), np.asarray(x, float)), axis=-1)

    def unit(self, x):
        return self.element(x, x)

    def inverse(self, g):
        return self.element(self.source(g), self.target(g))

    def mul(self, g, h):
        return self.element(self.target(g), self.source(h))

    def curve(self, x, a, r):
        """``g(r) = (x + r a, x)``: starts at the unit, velocity ``a``, inside ``s^{-1}(x)``."""
        x = np.asarray(x, float)
        return self.element(x + np.multiply.outer(r, a) if np.ndim(r) else x + r * np.asarray(a), x)

    def sample_points(self, n: int, seed: int = 0, k: int = 1) -> list[np.ndarray]:
        pts = self.domain.sample(n * k, seed)
        return [pts[i * n:(i + 1) * n] for i in range(k)]

    def sample_pairs(self, n: int, seed: int = 0):
        x0, x1, x2 = self.sample_points(n, seed, 3)
        return self.element(x2, x1), self.element(x1, x0)

    def sample_triples(self, n: int, seed: int = 0):
        x0, x1, x2, x3 = self.sample_points(n, seed, 4)
        return self.element(x3, x2), self.element(x2, x1), self.element(x1, x0)

    def structure_residual(self, n: int = 50, seed: int = 0) -> float:
        x = self.domain.sample(n, seed)
        u = self.unit(x)
        g, h = self.sample_pairs(n, seed + 1)
        res = [self.source(u) - x, self.target(u) - x, self.source(self.mul(g, h)) - self.source(h),
               self.target(self.mul(g, h)) - self.target(g)]
        return float(max(np.max(np.abs(r)) for r in res))


@dataclass(frozen=True)
class RepUTHGroupoid:
    """``(d, Delta^C, Delta^E, Omega)`` on the pair groupoid of ``domain``.

    ``delta_c`` and ``delta_e`` are fields over ``(target, source)`` coordinates;
    ``omega`` is a field over ``(x2, x1, x0)``; ``core_anchor`` is a field on the chart.
    """

    domain: ChartDomain
    rank_e: int
    rank_c: int
    core_anchor: Field
    delta_c: Field
    delta_e: Field
    omega: Field
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m, e, c = self.domain.dim, self.rank_e, self.rank_c
        for key, f, dim, shape in (("core_anchor", self.core_anchor, m, (e, c)),
                                   ("delta_c", self.delta_c, 2 * m, (c, c)),
                                   ("delta_e", self.delta_e, 2 * m, (e, e)),
                                   ("omega", self.omega, 3 * m, (c, e))):
            if f.dim != dim or f.shape != shape:
                raise StructuralError(f"{key} must be a {shape} field over {dim} coordinates")

    @property
    def groupoid(self) -> PairGroupoid:
        return PairGroupoid(self.domain)

    def Dc(self, g):
        return self.delta_c.evaluate(g)

    def De(self, g):
        return self.delta_e.evaluate(g)

    def Om(self, g1, g2):
        m = self.domain.dim
        return self.omega.evaluate(np.concatenate([g1, g2[..., m:]], axis=-1))

    def d(self, x):
        return self.core_anchor.evaluate(x)


def flat_trivial_ruth(domain: ChartDomain, rank_e: int, rank_c: int, name: str = "flat") -> RepUTHGroupoid:
    m = domain.dim
    return RepUTHGroupoid(domain, rank_e, rank_c, Field.zeros(m, (rank_e, rank_c)),
                          Field.constant(np.eye(rank_c), 2 * m), Field.constant(np.eye(rank_e), 2 * m),
                          Field.zeros(3 * m, (rank_c, rank_e)), name)


def _amax(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


@dataclass(frozen=True)
class RuthReport:
    corrected: dict
    literal: dict
    unitality: float
    normalization: float
    n_samples: int

    def max_residual(self, convention: str = CORRECTED) -> float:
        vals = self.corrected if convention == CORRECTED else self.literal
        return max(list(vals.values()) + [self.unitality, self.normalization])

    def passes(self, tol: float = 1e-6, convention: str = CORRECTED) -> bool:
        return self.max_residual(convention) <= tol

    def as_dict(self) -> dict:
        return {"corrected": dict(self.corrected), "literal": dict(self.literal), "unitality_residual": self.unitality,
                "normalization_residual": self.normalization, "n_samples": self.n_samples}


def ruth_axiom_residuals(R: RepUTHGroupoid, n_samples: int = 200, seed: int = 0) -> RuthReport:
    """The four axioms in both conventions, plus unitality and normalization, on sampled triples."""
    G = R.groupoid
    g1, g2, g3 = G.sample_triples(n_samples, seed)
    g12, g23 = G.mul(g1, g2), G.mul(g2, g3)
    d_t, d_s = R.d(G.target(g1)), R.d(G.source(g1))
    d0 = R.d(G.source(g2))
    C1, C2, C12 = R.Dc(g1), R.Dc(g2), R.Dc(g12)
    E1, E2, E12, E3 = R.De(g1), R.De(g2), R.De(g12), R.De(g3)
    O12 = R.Om(g1, g2)
    anchor = _amax(d_t @ C1 - E1 @ d_s)
    cocycle = _amax(C1 @ R.Om(g2, g3) - R.Om(g12, g3) + R.Om(g1, g23) - O12 @ E3)
    corrected = {"anchor_compat": anchor, "quasi_action_C": _amax(C1 @ C2 - C12 + O12 @ d0),
                 "quasi_action_E": _amax(E1 @ E2 - E12 + d_t @ O12), "cocycle": cocycle}
    literal = {"anchor_compat": anchor, "quasi_action_C": _amax(C1 @ C2 - C2 @ C1 + O12 @ d0),
               "quasi_action_E": _amax(E1 @ E2 - E2 @ E1 + d_t @ O12), "cocycle": cocycle}
    x = G.domain.sample(n_samples, seed + 7)
    u = G.unit(x)
    unit = max(_amax(R.Dc(u) - np.eye(R.rank_c)), _amax(R.De(u) - np.eye(R.rank_e)))
    norm = max(_amax(R.Om(G.unit(G.target(g1)), g1)), _amax(R.Om(g1, G.unit(G.source(g1)))))
    return RuthReport(corrected, literal, unit, norm, n_samples)


# -- the VB-groupoid of a representation ----------------------------------------------

class RuthAxiomError(ValueError):
    """The representation fails its axioms; the VB-groupoid would not be a groupoid."""


@dataclass(frozen=True)
class VBGroupoid:
    """Structure maps on triples ``(c, g, e)`` with ``e`` in ``E_{s(g)}`` and ``c`` in ``C_{t(g)}``."""

    rep: RepUTHGroupoid

    def source(self, c, g, e):
        return e

    def target(self, c, g, e):
        R = self.rep
        return (R.d(R.groupoid.target(g)) @ c[..., None])[..., 0] + (R.De(g) @ e[..., None])[..., 0]

    def unit(self, e, x):
        return np.zeros(np.shape(x)[:-1] + (self.rep.rank_c,)), self.rep.groupoid.unit(x), e

    def mul(self, p, q):
        (c1, g1, _), (c2, g2, e2) = p, q
        R = self.rep
        c = c1 + (R.Dc(g1) @ c2[..., None])[..., 0] - (R.Om(g1, g2) @ e2[..., None])[..., 0]
        return c, R.groupoid.mul(g1, g2), e2


@dataclass(frozen=True)
class VBGroupoidReport:
    associativity: float
    source_residual: float
    target_residual: float
    n_samples: int

    def as_dict(self) -> dict:
        return {"associativity_residual": self.associativity, "source_residual": self.source_residual,
                "target_residual": self.target_residual, "n_samples": self.n_samples}


def vb_groupoid_from_ruth(R: RepUTHGroupoid, n_samples: int = 500, seed: int = 0, check: bool = True,
                          convention: str = CORRECTED, tol: float = 1e-6):
    """The VB-groupoid ``C x G x E`` of ``R`` with a residual report on sampled triples.

    With ``check`` the axioms must hold at ``tol`` in ``convention`` first.
    """
    if check:
        rep = ruth_axiom_residuals(R, min(n_samples, 200), seed)
        if not rep.passes(tol, convention):
            raise RuthAxiomError(f"axiom residual {rep.max_residual(convention):.3e} exceeds {tol:.1e} "
                                 f"({convention} convention)")
    V = VBGroupoid(R)
    G = R.groupoid
    g1, g2, g3 = G.sample_triples(n_samples, seed)
    rng = np.random.default_rng(seed)
    e3 = rng.standard_normal((n_samples, R.rank_e))
    c1, c2, c3 = (rng.standard_normal((n_samples, R.rank_c)) for _ in range(3))
    e2 = V.target(c3, g3, e3)
    e1 = V.target(c2, g2, e2)
    p, q, r = (c1, g1, e1), (c2, g2, e2), (c3, g3, e3)
    left = V.mul(V.mul(p, q), r)
    right = V.mul(p, V.mul(q, r))
    assoc = max(_amax(left[0] - right[0]), _amax(left[1] - right[1]), _amax(left[2] - right[2]))
    pq = V.mul(p, q)
    src = _amax(V.source(*pq) - V.source(*q))
    tgt = _amax(V.target(*pq) - V.target(*p))
    return V, VBGroupoidReport(assoc, src, tgt, n_samples)


# -- differentiation ------------------------------------------------------------------

@dataclass(frozen=True)
class DifferentiatedRuth:
    """Algebroid-side data read off a groupoid representation at sample points.

    ``conn_c[n, i]`` is the coefficient matrix of ``nabla^C`` along the
    coordinate direction ``i`` at ``points[n]``; it equals ``-d/dr Delta^C_{g(r)}``
    at ``r = 0`` (``rate_c`` holds ``+d/dr``), matching the transport convention
    ``dtau/dt = -Theta tau``.  ``omega[n, i, j]`` is the antisymmetrized mixed
    second difference of ``Omega`` along the curve families of ``e_i`` and ``e_j``.
    """

    points: np.ndarray
    core_anchor: np.ndarray
    conn_c: np.ndarray
    conn_e: np.ndarray
    rate_c: np.ndarray
    rate_e: np.ndarray
    omega: np.ndarray
    step: float
    omega_convention: str = "omega(a,b) = D(b,a) - D(a,b), D(a,b) = d_r d_u Omega((x+ub+ra, x+ub), (x+ub, x))"


def differentiate_ruth(R: RepUTHGroupoid, points, step: float = DIFF_STEP) -> DifferentiatedRuth:
    """Connection coefficients and ``omega`` by central differences along ``g(r) = (x + r a, x)``."""
    if not step > 0:
        raise ValueError("step must be positive")
    G = R.groupoid
    x = np.atleast_2d(np.asarray(points, dtype=float))
    m = G.dim
    h = step
    I = np.eye(m)
    rc, re_ = [], []
    for i in range(m):
        gp, gm = G.element(x + h * I[i], x), G.element(x - h * I[i], x)
        rc.append((R.Dc(gp) - R.Dc(gm)) / (2 * h))
        re_.append((R.De(gp) - R.De(gm)) / (2 * h))
    rate_c = np.stack(rc, axis=1)
    rate_e = np.stack(re_, axis=1)

    def D(a, b):
        acc = 0.0
        for sr, su, w in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
            x1 = x + su * h * b
            x2 = x1 + sr * h * a
            acc = acc + w * R.omega.evaluate(np.concatenate([x2, x1, x], axis=-1))
        return acc / (4 * h * h)

    om = np.zeros((len(x), m, m, R.rank_c, R.rank_e))
    for i in range(m):
        for j in range(i + 1, m):
            w = D(I[j], I[i]) - D(I[i], I[j])
            om[:, i, j] = w
            om[:, j, i] = -w
    return DifferentiatedRuth(x, R.d(x), -rate_c, -rate_e, rate_c, rate_e, om, h)


# -- integration of flat split data ---------------------------------------------------

def integrate_flat_split(V: SplitVBA, steps: int = 64, name: str = "") -> RepUTHGroupoid:
    """Groupoid representation of flat split data over a tangent algebroid.

    ``Delta_{(y, x)}`` is the parallel transport along the segment from ``x`` to
    ``y``; ``Omega = 0``.  Requires the base anchor to be the identity frame and
    ``omega = 0`` (not checked beyond shapes; see :func:`vbob.split.compat_residuals`).
    """
    A = V.base
    m, r = A.dim, A.rank
    if r != m:
        raise StructuralError("flat integration needs a tangent base algebroid")

    def delta(conn: Field, k: int) -> Field:
        def fn(X):
            y = np.stack([np.asarray(v, float) for v in np.broadcast_arrays(*X[:m])], -1)
            x = np.stack([np.asarray(v, float) for v in np.broadcast_arrays(*X[m:])], -1)
            y, x = np.broadcast_arrays(y, x)
            tt = np.linspace(0.0, 1.0, 2 * steps + 1)
            pts = x[..., None, :] + tt[:, None] * (y - x)[..., None, :]
            G = conn.evaluate(pts)  # batch, T, r, k, k
            th = np.einsum("...i,...tiab->...tab", y - x, G)
            H = transport_halfgrid(th, 1.0 / steps)[..., -1, :, :]
            out = np.empty((k, k), dtype=object)
            for idx in np.ndindex(k, k):
                out[idx] = H[(Ellipsis,) + idx]
            return out
        return Field(2 * m, (k, k), fn, ad=False, label="segment transport")

    return RepUTHGroupoid(A.domain, V.rank_e, V.rank_c, V.core_anchor, delta(V.conn_c, V.rank_c),
                          delta(V.conn_e, V.rank_e), Field.zeros(3 * m, (V.rank_c, V.rank_e)),
                          name or f"integrated({V.name})")

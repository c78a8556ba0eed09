"""Split VB-algebroids: connection data, compatibility residuals, total algebroid.

Conventions (frame ``e_i`` of A, ``eps_a`` of E, ``c_k`` of C):

* ``connE[i]`` is the matrix of ``nabla^E_{e_i}``: ``nabla_{e_i} eps_b = connE[i][a, b] eps_a``;
  likewise ``connC``.  Parallel transport along ``a(t)`` solves
  ``dtau/dt = -(a^i connE[i]) tau``.
* ``omega[i, j]`` is the ``c x e`` matrix of ``omega(e_i, e_j)``.
* ``sign`` is the single global convention constant: the total algebroid has
  ``[h e_i, h e_j] = h[e_i, e_j] + sign * omega_ij`` and the curvature relations
  read ``R_E + sign * d o omega = 0``, ``R_C + sign * omega o d = 0``.  ``+1``
  reproduces the bracket table ``[u, v] = w + z e c`` of the su(2)* model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .algebroid import FrameAlgebroid, StructuralError
from .chart import ChartDomain
from .fields import Field, DerivativeField, empty, matmul, smul

DEFAULT_SIGN = 1


def antisymmetric_pairs(dim: int, rank: int, shape: tuple, pairs: Mapping[tuple[int, int], Field],
                        label: str = "") -> Field:
    """Field of shape ``(rank, rank) + shape`` from entries on ``i < j``."""
    for (i, j), f in pairs.items():
        if not 0 <= i < j < rank:
            raise StructuralError(f"pair {(i, j)} must satisfy 0 <= i < j < {rank}")
        if f.shape != shape:
            raise StructuralError(f"pair {(i, j)} must have shape {shape}")
    items = dict(pairs)

    def fn(X):
        out = empty((rank, rank) + shape)
        out.fill(0.0)
        for (i, j), f in items.items():
            vals = f.apply(X)
            for idx in np.ndindex(*shape):
                out[(i, j) + idx] = vals[idx]
                out[(j, i) + idx] = -vals[idx]
        return out

    return Field(dim, (rank, rank) + shape, fn, label=label)


def stacked(dim: int, rank: int, shape: tuple, items: Mapping[int, Field] | None, label: str = "") -> Field:
    """Field of shape ``(rank,) + shape`` from per-frame-index fields (missing -> 0)."""
    items = dict(items or {})
    for i, f in items.items():
        if not 0 <= i < rank or f.shape != shape:
            raise StructuralError(f"entry {i} must be a field of shape {shape}")
    if not items:
        return Field.zeros(dim, (rank,) + shape)

    def fn(X):
        out = empty((rank,) + shape)
        out.fill(0.0)
        for i, f in items.items():
            out[i] = f.apply(X)
        return out

    return Field(dim, (rank,) + shape, fn, label=label)


@dataclass(frozen=True)
class SplitVBA:
    """Split VB-algebroid data ``(d, nabla^E, nabla^C, omega)`` over a frame algebroid."""

    base: FrameAlgebroid
    rank_e: int
    rank_c: int
    core_anchor: Field
    conn_e: Field
    conn_c: Field
    omega: Field
    fiber_names: tuple[str, ...] = ()
    fiber_bounds: tuple[tuple[float, float], ...] = ()
    core_names: tuple[str, ...] = ()
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m, r, e, c = self.base.dim, self.base.rank, self.rank_e, self.rank_c
        expect = {
            "core_anchor": (self.core_anchor, (e, c)),
            "conn_e": (self.conn_e, (r, e, e)),
            "conn_c": (self.conn_c, (r, c, c)),
            "omega": (self.omega, (r, r, c, e)),
        }
        for key, (f, shape) in expect.items():
            if f.shape != shape or f.dim != m:
                raise StructuralError(f"{key} must have shape {shape} over {m} coordinates, got {f.shape}")
        if not self.fiber_names:
            object.__setattr__(self, "fiber_names", tuple(f"y{k + 1}" for k in range(e)))
        if not self.fiber_bounds:
            object.__setattr__(self, "fiber_bounds", tuple((-1.0, 1.0) for _ in range(e)))
        if not self.core_names:
            object.__setattr__(self, "core_names", tuple(f"c{k + 1}" for k in range(c)))

    @classmethod
    def build(cls, base: FrameAlgebroid, rank_e: int, rank_c: int, core_anchor: Field | None = None,
              conn_e: Mapping[int, Field] | None = None, conn_c: Mapping[int, Field] | None = None,
              omega: Mapping[tuple[int, int], Field] | None = None, **kw) -> "SplitVBA":
        m, r = base.dim, base.rank
        return cls(
            base, rank_e, rank_c,
            core_anchor if core_anchor is not None else Field.zeros(m, (rank_e, rank_c)),
            stacked(m, r, (rank_e, rank_e), conn_e, "connE"),
            stacked(m, r, (rank_c, rank_c), conn_c, "connC"),
            antisymmetric_pairs(m, r, (rank_c, rank_e), omega or {}, "omega"),
            **kw,
        )

    @property
    def total_domain(self) -> ChartDomain:
        fiber = ChartDomain(self.fiber_bounds, self.fiber_names) if self.rank_e else None
        return self.base.domain.product(fiber) if fiber else self.base.domain

    def with_omega(self, omega: Field, name: str | None = None) -> "SplitVBA":
        return SplitVBA(self.base, self.rank_e, self.rank_c, self.core_anchor, self.conn_e, self.conn_c,
                        omega, self.fiber_names, self.fiber_bounds, self.core_names,
                        name if name is not None else self.name, dict(self.meta))


# -- pointwise evaluation helpers -------------------------------------------------

def _directional(rho, dF):
    """``rho(e_i)`` applied to a field with gradient ``dF`` (``n ... m``) -> ``n i ...``."""
    return np.einsum("nai,n...a->ni...", rho, dF)


def _curvature_from(rho, c, G, dG):
    """``R_ij = rho_i(G_j) - rho_j(G_i) + [G_i, G_j] - c^k_ij G_k``."""
    D = np.einsum("nai,nj...a->nij...", rho, dG)
    comm = np.einsum("niab,njbc->nijac", G, G)
    R = D - np.einsum("nij...->nji...", D) + comm - np.einsum("nij...->nji...", comm)
    R -= np.einsum("nkij,nkab->nijab", c, G)
    return R


@dataclass(frozen=True)
class CurvatureField:
    """Curvature ``R[i, j]`` of one of the connections of a split VB-algebroid."""

    vba: SplitVBA
    bundle: str

    def evaluate(self, x) -> np.ndarray:
        V = self.vba
        x = V.base.domain.require(x)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        conn = V.conn_e if self.bundle == "E" else V.conn_c
        G, dG = conn.jet(x)
        R = _curvature_from(V.base.anchor.evaluate(x), V.base.structure.evaluate(x), G, dG)
        # exact antisymmetry: keep the upper triangle and mirror it
        r = V.base.rank
        iu = np.triu_indices(r, 1)
        out = np.zeros_like(R)
        out[:, iu[0], iu[1]] = R[:, iu[0], iu[1]]
        out[:, iu[1], iu[0]] = -R[:, iu[0], iu[1]]
        return out[0] if single else out


def curvature(V: SplitVBA, bundle: str = "E") -> CurvatureField:
    if bundle not in ("E", "C"):
        raise ValueError("bundle must be 'E' or 'C'")
    return CurvatureField(V, bundle)


@dataclass(frozen=True)
class CompatReport:
    """Max-norm residuals of the four connection-data relations.

    ``core_anchor``: d o nabla^C - nabla^E o d.
    ``curvature_e``: R_E + sign * d o omega.
    ``curvature_c``: R_C + sign * omega o d.
    ``omega_closed``: the Koszul exterior covariant derivative d_nabla omega on frame triples.
    ``omega_parallel``: slotwise nabla^Hom omega in the frame-trivial A-connection (reported only).
    """

    core_anchor: float
    curvature_e: float
    curvature_c: float
    omega_closed: float
    omega_parallel: float
    sign: int
    n_points: int
    seed: int

    @property
    def max_residual(self) -> float:
        return max(self.core_anchor, self.curvature_e, self.curvature_c, self.omega_closed)

    def passes(self, tol: float = 1e-6) -> bool:
        return self.max_residual <= tol

    def as_dict(self) -> dict:
        return {
            "core_anchor_residual": self.core_anchor,
            "curvature_E_residual": self.curvature_e,
            "curvature_C_residual": self.curvature_c,
            "d_nabla_omega_residual": self.omega_closed,
            "omega_parallel_residual": self.omega_parallel,
            "convention_sign": self.sign,
            "n_points": self.n_points,
            "seed": self.seed,
        }


def _amax(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def compat_residuals(V: SplitVBA, n_points: int = 200, seed: int = 0, sign: int = DEFAULT_SIGN,
                     points=None) -> CompatReport:
    """Residuals of the connection-data relations at sampled chart points."""
    A = V.base
    x = A.domain.sample(n_points, seed) if points is None else A.domain.require(points)
    rho = A.anchor.evaluate(x)
    c = A.structure.evaluate(x)
    d, dd = V.core_anchor.jet(x)
    GE, dGE = V.conn_e.jet(x)
    GC, dGC = V.conn_c.jet(x)
    w, dw = V.omega.jet(x)

    res1 = np.einsum("nab,nibc->niac", d, GC) - _directional(rho, dd) - np.einsum("niab,nbc->niac", GE, d)
    RE = _curvature_from(rho, c, GE, dGE)
    RC = _curvature_from(rho, c, GC, dGC)
    res2 = RE + sign * np.einsum("nab,nijbc->nijac", d, w)
    res3 = RC + sign * np.einsum("nijab,nbc->nijac", w, d)
    # nabla^Hom_{e_i} omega_jk
    Dw = _directional(rho, dw)  # n i j k c e
    nab = Dw + np.einsum("niab,njkbc->nijkac", GC, w) - np.einsum("njkab,nibc->nijkac", w, GE)
    brk = np.einsum("nlij,nlkab->nijkab", c, w)
    T = nab[..., :, :] - brk  # T[i,j,k] = nabla_i omega_jk - omega([e_i,e_j], e_k)
    cyc = T + np.einsum("njkiab->nijkab", T) + np.einsum("nkijab->nijkab", T)
    return CompatReport(_amax(res1), _amax(res2), _amax(res3), _amax(cyc), _amax(nab), int(sign),
                        len(x), seed)


def _column(items) -> np.ndarray:
    out = empty((len(items),))
    for k, v in enumerate(items):
        out[k] = v
    return out


def build_total_algebroid(V: SplitVBA, sign: int = DEFAULT_SIGN, name: str | None = None) -> FrameAlgebroid:
    """The Lie algebroid ``D -> E`` with frame ``(h e_1..h e_r, c_1..c_c)``.

    Chart coordinates are the base coordinates followed by the fibre
    coordinates ``y`` of E.  ``rho(h e_i) = (rho_A(e_i), -connE[i] y)``,
    ``rho(c_k) = (0, d[:, k])``, ``[h e_i, h e_j] = h[e_i, e_j] + sign * omega_ij y``,
    ``[h e_i, c_k] = connC[i][:, k]``, ``[c, c] = 0``.
    """
    A = V.base
    m, r, e, c = A.dim, A.rank, V.rank_e, V.rank_c
    R = r + c
    dom = V.total_domain

    def anchor_fn(X):
        Xb, Y = X[:m], _column(X[m:])
        rho = A.anchor.apply(Xb)
        GE = V.conn_e.apply(Xb)
        d = V.core_anchor.apply(Xb)
        out = empty((m + e, R))
        out.fill(0.0)
        for i in range(r):
            out[:m, i] = rho[:, i]
            if e:
                out[m:, i] = smul(-1.0, matmul(GE[i], Y))
        for k in range(c):
            out[m:, r + k] = d[:, k]
        return out

    def structure_fn(X):
        Xb, Y = X[:m], _column(X[m:])
        cA = A.structure.apply(Xb)
        GC = V.conn_c.apply(Xb)
        w = V.omega.apply(Xb)
        out = empty((R, R, R))
        out.fill(0.0)
        out[:r, :r, :r] = cA
        for i in range(r):
            for j in range(i + 1, r):
                if e:
                    coeff = smul(sign, matmul(w[i, j], Y))
                    out[r:, i, j] = coeff
                    out[r:, j, i] = smul(-1.0, coeff)
            for k in range(c):
                out[r:, i, r + k] = GC[i][:, k]
                out[r:, r + k, i] = smul(-1.0, GC[i][:, k])
        return out

    frame = tuple(f"h{n}" for n in A.frame) + V.core_names
    return FrameAlgebroid(dom, R, Field(m + e, (m + e, R), anchor_fn, label="total anchor"),
                          Field(m + e, (R, R, R), structure_fn, label="total structure"),
                          frame=frame, name=name or f"total({V.name})", linear_rank=r, base_dim=m,
                          meta={"convention_sign": int(sign)})


@dataclass(frozen=True)
class DegreeReport:
    linear_linear: float
    linear_core: float
    core_core: float
    anchor: float
    n_points: int

    @property
    def max_violation(self) -> float:
        return max(self.linear_linear, self.linear_core, self.core_core, self.anchor)

    def as_dict(self) -> dict:
        return {"linear_linear_violation": self.linear_linear, "linear_core_violation": self.linear_core,
                "core_core_violation": self.core_core, "anchor_violation": self.anchor,
                "max_violation": self.max_violation, "n_points": self.n_points}


def structural_degree_check(D: FrameAlgebroid, n_points: int = 50, seed: int = 0) -> DegreeReport:
    """Fibre-degree conditions on a total algebroid with a linear/core frame split.

    Along every fibre axis the check evaluates at ``mid - h, mid, mid + h``
    (``h`` = half the fibre interval, capped at 1) and measures:
    linear-linear brackets of degree <= 1 with fibre-constant linear part;
    linear-core brackets fibre-constant; core-core brackets zero; anchors of
    linear sections affine in the fibre with constant horizontal part; anchors
    of core sections vertical and constant.
    """
    if D.linear_rank is None or D.base_dim is None:
        raise StructuralError("algebroid carries no linear/core frame split")
    r, m, R = D.linear_rank, D.base_dim, D.rank
    x = D.domain.sample(n_points, seed)
    ll = lc = cc = an = 0.0
    lo, hi = D.domain.lower, D.domain.upper
    for k in range(m, D.dim):
        mid = 0.5 * (lo[k] + hi[k])
        h = min(1.0, 0.5 * (hi[k] - lo[k]))
        pts = []
        for t in (-h, 0.0, h):
            p = x.copy()
            p[:, k] = mid + t
            pts.append(p)
        cs = [D.structure.evaluate(p) for p in pts]
        rs = [D.anchor.evaluate(p) for p in pts]
        first = cs[2] - cs[1]
        second = cs[2] - 2 * cs[1] + cs[0]
        ll = max(ll, _amax(first[:, :r, :r, :r]), _amax(second[:, :, :r, :r]))
        lc = max(lc, _amax(first[:, :, :r, r:]), _amax(first[:, :, r:, :r]))
        cc = max(cc, *(_amax(ci[:, :, r:, r:]) for ci in cs))
        rfirst = rs[2] - rs[1]
        rsecond = rs[2] - 2 * rs[1] + rs[0]
        an = max(an, _amax(rfirst[:, :m, :r]), _amax(rsecond[:, :, :r]),
                 _amax(rfirst[:, :, r:]), *(_amax(ri[:, :m, r:]) for ri in rs))
    if D.dim == m:
        cs = D.structure.evaluate(x)
        cc = _amax(cs[:, :, r:, r:])
    return DegreeReport(ll, lc, cc, an, len(x))


@dataclass(frozen=True)
class RegularDecomposition:
    point: np.ndarray
    rank: int
    kernel: np.ndarray
    image: np.ndarray
    cokernel: np.ndarray
    preimage: np.ndarray
    singular_values: np.ndarray
    label: str

    def as_dict(self) -> dict:
        return {"point": self.point.tolist(), "rank": self.rank, "label": self.label,
                "singular_values": self.singular_values.tolist(),
                "kernel_dim": self.kernel.shape[1], "cokernel_dim": self.cokernel.shape[1]}


def _rank(S: np.ndarray, tol: float) -> int:
    if S.size == 0 or S[0] == 0.0:
        return 0
    return int(np.sum(S > tol * S[0]))


def decompose_matrix(d: np.ndarray, rank_tol: float = 1e-9, point=None) -> RegularDecomposition:
    d = np.atleast_2d(np.asarray(d, dtype=float))
    e, c = d.shape
    U, S, Vt = np.linalg.svd(d)
    k = _rank(S, rank_tol)
    unstable = _rank(S, rank_tol / 10) != _rank(S, rank_tol * 10)
    if unstable:
        label = "nonregular-at-tolerance"
    elif k == 0:
        label = "type0"
    elif k == e == c:
        label = "type1"
    else:
        label = "mixed"
    pre = Vt[:k].T / S[:k] if k else np.zeros((c, 0))
    return RegularDecomposition(np.asarray(point if point is not None else [], float), k,
                                Vt[k:].T, U[:, :k], U[:, k:], pre, S, label)


def decompose_regular(V: SplitVBA, x, rank_tol: float = 1e-9) -> RegularDecomposition:
    """Rank-revealing split of the core anchor at ``x`` into kernel/image/cokernel."""
    x = V.base.domain.require(np.asarray(x, dtype=float))
    return decompose_matrix(V.core_anchor.evaluate(x), rank_tol, point=x)


def decompose_path(V: SplitVBA, points, rank_tol: float = 1e-9) -> tuple[list[RegularDecomposition], bool]:
    """Decompose along a path; the flag is False when the rank jumps or is unstable."""
    decs = [decompose_regular(V, p, rank_tol) for p in np.asarray(points, dtype=float)]
    ranks = {d.rank for d in decs}
    regular = len(ranks) <= 1 and all(d.label != "nonregular-at-tolerance" for d in decs)
    return decs, regular


def core_anchor_injective(V: SplitVBA, n_points: int = 100, seed: int = 0, rank_tol: float = 1e-9) -> bool:
    """True when the core anchor has full column rank at every sampled point."""
    x = V.base.domain.sample(n_points, seed)
    d = V.core_anchor.evaluate(x)
    if V.rank_c == 0:
        return True
    S = np.linalg.svd(d, compute_uv=False)
    return bool(np.all(S[:, V.rank_c - 1] > rank_tol * np.maximum(S[:, 0], 1e-300))) and V.rank_c <= V.rank_e


def shift_splitting(V: SplitVBA, phi: Field, n_check: int = 20, seed: int = 0) -> SplitVBA:
    """Type-0 change of splitting ``omega -> omega + d_nabla phi`` (connections fixed).

    ``phi`` is a field of shape ``(r, c, e)``: ``phi[i]`` is ``phi(e_i)`` in ``Hom(E, C)``.
    """
    A = V.base
    m, r = A.dim, A.rank
    if phi.shape != (r, V.rank_c, V.rank_e) or phi.dim != m:
        raise StructuralError(f"phi must have shape {(r, V.rank_c, V.rank_e)}")
    x = A.domain.sample(n_check, seed)
    if _amax(V.core_anchor.evaluate(x)) > 0.0:
        raise StructuralError("splitting shift is implemented for type-0 data (zero core anchor) only")
    dphi = [DerivativeField(phi, a) for a in range(m)]

    def fn(X):
        rho = A.anchor.apply(X)
        cA = A.structure.apply(X)
        GE = V.conn_e.apply(X)
        GC = V.conn_c.apply(X)
        P = phi.apply(X)
        dP = [f.apply(X) for f in dphi]
        w = V.omega.apply(X)
        out = empty(w.shape)
        out.fill(0.0)
        for i in range(r):
            for j in range(i + 1, r):
                t = w[i, j].copy()
                for a in range(m):
                    t = t + smul(rho[a, i], dP[a][j]) - smul(rho[a, j], dP[a][i])
                t = t + matmul(GC[i], P[j]) - matmul(P[j], GE[i]) - matmul(GC[j], P[i]) + matmul(P[i], GE[j])
                for k in range(r):
                    t = t - smul(cA[k, i, j], P[k])
                out[i, j] = t
                out[j, i] = smul(-1.0, t)
        return out

    return V.with_omega(Field(m, V.omega.shape, fn, label="omega + d_nabla phi"), name=f"{V.name}+dphi")

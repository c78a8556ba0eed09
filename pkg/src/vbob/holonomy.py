"""A-spheres, pullback connection data on the unit square, and parallel transport.

Transport convention (tag ``"dtau=-theta*tau"``): parallel frames along a
t-slice solve ``dtau/dt = -Theta(t, s) tau`` with ``tau(t0) = I`` and
``hol_{t1,t0} = tau(t1)``.

The frame form of the sphere condition used here, for ``sigma = a dt + b ds``
over ``gamma``, is ``rho(a) = gamma_t``, ``rho(b) = gamma_s`` and
``d_t b^k - d_s a^k + c^k_ij(gamma) a^i b^j = 0``; with ``[e_i, e_j] = c^k_ij e_k``
this is what the coordinate tangent lift of any map satisfies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual
from .algebroid import FrameAlgebroid, StructuralError
from .fields import DerivativeField, Field, empty, entries, matmul, smul
from .split import SplitVBA

CONVENTION = "dtau=-theta*tau"
KAPPA = 1.0 / 32.0


class NumericError(ArithmeticError):
    """Non-finite values or failed numerical preconditions."""


# -- the built-in degree-1 sphere --------------------------------------------------

def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


def unit_sphere_map(kappa: float = KAPPA) -> Field:
    """Degree-1 map of the unit square onto the unit sphere, collapsing the boundary.

    Both coordinates are warped by ``p = 3t^2 - 2t^3`` and sent to the plane by
    ``X = kappa (p - 1/2) / (p (1 - p))^3``, then mapped to the sphere by
    inverse stereographic projection from the south pole.  All derivatives
    vanish on the boundary, which goes to ``(0, 0, -1)``.  The orientation
    ``gamma . (gamma_t x gamma_s)`` is positive.
    """

    def fn(X):
        t, s = X
        tv, sv = dual.value(t), dual.value(s)
        inside = (tv > 0) & (tv < 1) & (sv > 0) & (sv < 1)
        t = dual.where(inside, t, 0.5)
        s = dual.where(inside, s, 0.5)
        p, q = _smoothstep(t), _smoothstep(s)
        u = kappa * (p - 0.5) / (p * (1.0 - p)) ** 3
        v = kappa * (q - 0.5) / (q * (1.0 - q)) ** 3
        den = 1.0 + u * u + v * v
        g = [2.0 * u / den, 2.0 * v / den, (1.0 - u * u - v * v) / den]
        pole = (0.0, 0.0, -1.0)
        return [dual.where(inside, gk, pk) for gk, pk in zip(g, pole)]

    return Field(2, (3,), fn, label="unit sphere (degree 1)")


def square_map(t_expr, s_expr) -> Field:
    """A map of the square to itself given by two Dual-generic callables of ``(t, s)``."""
    return Field(2, (2,), lambda X: [t_expr(*X), s_expr(*X)], label="square map")


def default_reparameterization(at: float = 0.3, as_: float = 0.2) -> Field:
    """Orientation-preserving, boundary-fixing diffeomorphism of the square."""
    w = 2.0 * np.pi
    return square_map(lambda t, s: t + at / w * dual.sin(w * t) * (1.0 + s) * 0.5,
                      lambda t, s: s + as_ / w * dual.sin(w * s))


def compose(f: Field, phi: Field) -> Field:
    """``f o phi`` for fields over the square."""
    if phi.shape != (f.dim,):
        raise StructuralError("inner map must land in the outer field's coordinates")
    return Field(phi.dim, f.shape, lambda X: f.apply(list(phi.apply(X))),
                 label=f"{f.label} o {phi.label}")


def scaled_map(f: Field, factor: float) -> Field:
    return Field(f.dim, f.shape, lambda X: f.apply(X) * factor, label=f"{factor}*{f.label}")


def sphere_jets(gamma: Field):
    """Field of shape ``(3, m)`` stacking ``gamma``, ``gamma_t``, ``gamma_s``."""
    gt, gs = DerivativeField(gamma, 0), DerivativeField(gamma, 1)
    m = gamma.shape[0]

    def fn(X):
        out = empty((3, m))
        out[0] = gamma.apply(X)
        out[1] = gt.apply(X)
        out[2] = gs.apply(X)
        return out

    return Field(2, (3, m), fn, label=f"jets({gamma.label})")


# -- frame spheres ----------------------------------------------------------------

@dataclass(frozen=True)
class ASphereFrame:
    """``sigma = a dt + b ds`` over ``gamma`` on the unit square."""

    base: FrameAlgebroid
    gamma: Field
    a: Field
    b: Field
    name: str = ""

    def __post_init__(self):
        m, r = self.base.dim, self.base.rank
        if self.gamma.dim != 2 or self.gamma.shape != (m,):
            raise StructuralError(f"gamma must map the square into {m} coordinates")
        for key in ("a", "b"):
            f = getattr(self, key)
            if f.dim != 2 or f.shape != (r,):
                raise StructuralError(f"{key} must be a field of {r} frame coefficients on the square")


def tangent_lift(base: FrameAlgebroid, gamma: Field, name: str = "") -> ASphereFrame:
    """``a = gamma_t``, ``b = gamma_s`` for an algebroid whose anchor is the identity frame."""
    return ASphereFrame(base, gamma, DerivativeField(gamma, 0), DerivativeField(gamma, 1), name)


def grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _mesh(tn, sn):
    T, S = np.meshgrid(tn, sn, indexing="xy")  # rows = s, columns = t
    return np.stack([T, S], axis=-1)


@dataclass(frozen=True)
class SphereReport:
    interior_residual: float
    anchor_residual: float
    pde_residual: float
    boundary_residual: float
    edges: dict
    in_chart: bool
    n_grid: int

    def passes(self, tol: float = 1e-6) -> bool:
        return self.interior_residual <= tol and self.boundary_residual <= tol and self.in_chart

    def as_dict(self) -> dict:
        return {"interior_residual": self.interior_residual, "anchor_residual": self.anchor_residual,
                "pde_residual": self.pde_residual, "boundary_residual": self.boundary_residual,
                "edge_residuals": dict(self.edges), "in_chart": self.in_chart, "n_grid": self.n_grid}


def sphere_morphism_residual(sigma: ASphereFrame, n_grid: int = 41) -> SphereReport:
    """Interior morphism defects and boundary collapse defects on a uniform grid."""
    if n_grid < 3:
        raise ValueError("n_grid must be >= 3")
    A = sigma.base
    pts = _mesh(grid(n_grid), grid(n_grid)).reshape(-1, 2)
    g, dg = sigma.gamma.jet(pts)
    a, da = sigma.a.jet(pts)
    b, db = sigma.b.jet(pts)
    rho = A.anchor.evaluate(g)
    c = A.structure.evaluate(g)
    anc = max(np.max(np.abs(np.einsum("nai,ni->na", rho, a) - dg[..., 0])),
              np.max(np.abs(np.einsum("nai,ni->na", rho, b) - dg[..., 1])))
    pde = db[..., 0] - da[..., 1] + np.einsum("nkij,ni,nj->nk", c, a, b)
    pde = float(np.max(np.abs(pde)))
    u = grid(n_grid)
    zeros, ones = np.zeros_like(u), np.ones_like(u)
    g0 = sigma.gamma.evaluate(np.array([0.0, 0.0]))
    edges = {}
    for label, pts_e, f in (("s=0", np.stack([u, zeros], -1), sigma.a), ("s=1", np.stack([u, ones], -1), sigma.a),
                            ("t=0", np.stack([zeros, u], -1), sigma.b), ("t=1", np.stack([ones, u], -1), sigma.b)):
        coeff = float(np.max(np.abs(f.evaluate(pts_e))))
        collapse = float(np.max(np.abs(sigma.gamma.evaluate(pts_e) - g0)))
        edges[label] = {"coefficient": coeff, "collapse": collapse}
    bnd = max(max(e["coefficient"], e["collapse"]) for e in edges.values())
    in_chart = bool(np.all(A.domain.contains(g)))
    return SphereReport(float(max(anc, pde)), float(anc), pde, float(bnd), edges, in_chart, n_grid)


# -- pullback form ----------------------------------------------------------------

@dataclass(frozen=True)
class ASpherePullback:
    """Connection forms ``Theta`` and integrand ``W`` of a split VB-algebroid on the square.

    ``theta_e_t`` and ``theta_e_s`` are ``e x e``, ``theta_c_t`` and ``theta_c_s``
    are ``c x c``, ``W`` is ``c x e``; all are fields over ``(t, s)``.
    """

    rank_e: int
    rank_c: int
    theta_e_t: Field
    theta_e_s: Field
    theta_c_t: Field
    theta_c_s: Field
    W: Field
    name: str = ""
    fiber_labels: tuple[str, ...] = ()
    core_labels: tuple[str, ...] = ()
    flat_e: bool = False
    flat_c: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        e, c = self.rank_e, self.rank_c
        for key, shape in (("theta_e_t", (e, e)), ("theta_e_s", (e, e)), ("theta_c_t", (c, c)),
                           ("theta_c_s", (c, c)), ("W", (c, e))):
            f = getattr(self, key)
            if f.dim != 2 or f.shape != shape:
                raise StructuralError(f"{key} must be a {shape} field on the square")

    @classmethod
    def trivial(cls, W: Field, name: str = "", **kw) -> "ASpherePullback":
        """Trivial connections, integrand ``W``."""
        c, e = W.shape
        return cls(e, c, Field.zeros(2, (e, e)), Field.zeros(2, (e, e)), Field.zeros(2, (c, c)),
                   Field.zeros(2, (c, c)), W, name, flat_e=True, flat_c=True, **kw)

    def with_W(self, W: Field, name: str | None = None) -> "ASpherePullback":
        return ASpherePullback(self.rank_e, self.rank_c, self.theta_e_t, self.theta_e_s, self.theta_c_t,
                               self.theta_c_s, W, self.name if name is None else name, self.fiber_labels,
                               self.core_labels, self.flat_e, self.flat_c, dict(self.meta))

    def reparameterized(self, phi: Field, name: str | None = None) -> "ASpherePullback":
        """Pull back along a diffeomorphism ``phi`` of the square (forms transform with its Jacobian)."""
        J = DerivativeField(phi, 0), DerivativeField(phi, 1)

        def form(fT: Field, fS: Field, which: int) -> Field:
            def fn(X):
                P = list(phi.apply(X))
                d = J[which].apply(X)  # d phi / d(t or s)
                return smul(d[0], fT.apply(P)) + smul(d[1], fS.apply(P))
            return Field(2, fT.shape, fn, label="reparameterized form")

        def wfn(X):
            P = list(phi.apply(X))
            dt, ds = J[0].apply(X), J[1].apply(X)
            return smul(dt[0] * ds[1] - dt[1] * ds[0], self.W.apply(P))

        return ASpherePullback(self.rank_e, self.rank_c, form(self.theta_e_t, self.theta_e_s, 0),
                               form(self.theta_e_t, self.theta_e_s, 1), form(self.theta_c_t, self.theta_c_s, 0),
                               form(self.theta_c_t, self.theta_c_s, 1), Field(2, self.W.shape, wfn, label="W'"),
                               self.name if name is None else name, self.fiber_labels, self.core_labels,
                               self.flat_e, self.flat_c, dict(self.meta))

    def shifted(self, phi_t: Field, phi_s: Field, name: str | None = None) -> "ASpherePullback":
        """Type-0 splitting shift in pullback form: ``W + d phi + Theta^C phi - phi Theta^E`` terms.

        ``phi_t``, ``phi_s`` are ``c x e`` fields, the pullbacks of a
        ``Hom(E, C)``-valued 1-form; they should vanish on the edges where the
        sphere's coefficients vanish.
        """
        dpt_s = DerivativeField(phi_t, 1)
        dps_t = DerivativeField(phi_s, 0)
        P = self

        def fn(X):
            pt, ps = phi_t.apply(X), phi_s.apply(X)
            out = P.W.apply(X) + dps_t.apply(X) - dpt_s.apply(X)
            out = out + matmul(P.theta_c_t.apply(X), ps) - matmul(ps, P.theta_e_t.apply(X))
            out = out - matmul(P.theta_c_s.apply(X), pt) + matmul(pt, P.theta_e_s.apply(X))
            return out

        return self.with_W(Field(2, self.W.shape, fn, label="W + d_nabla phi"),
                           name=f"{self.name}+dphi" if name is None else name)


def pullback_sphere(sigma: ASphereFrame, V: SplitVBA, name: str | None = None) -> ASpherePullback:
    """``Theta_T = a^i Gamma_i(gamma)``, ``Theta_S = b^i Gamma_i(gamma)``, ``W = omega(a, b)(gamma)``."""
    if sigma.base.rank != V.base.rank or sigma.base.dim != V.base.dim:
        raise StructuralError("sphere and split data live over different algebroids")
    r = V.base.rank

    def theta(conn, coeff):
        def fn(X):
            g = list(sigma.gamma.apply(X))
            G = conn.apply(g)
            k = coeff.apply(X)
            out = smul(k[0], G[0])
            for i in range(1, r):
                out = out + smul(k[i], G[i])
            return out
        return Field(2, conn.shape[1:], fn, label="Theta")

    def wfn(X):
        g = list(sigma.gamma.apply(X))
        w = V.omega.apply(g)
        a, b = sigma.a.apply(X), sigma.b.apply(X)
        out = None
        for i in range(r):
            for j in range(i + 1, r):
                term = smul(a[i] * b[j] - a[j] * b[i], w[i, j])
                out = term if out is None else out + term
        if out is None:
            out = np.zeros((V.rank_c, V.rank_e))
        return out

    return ASpherePullback(V.rank_e, V.rank_c, theta(V.conn_e, sigma.a), theta(V.conn_e, sigma.b),
                           theta(V.conn_c, sigma.a), theta(V.conn_c, sigma.b),
                           Field(2, (V.rank_c, V.rank_e), wfn, label="omega(a, b)"),
                           name if name is not None else sigma.name, V.fiber_names, V.core_names)


# -- transport --------------------------------------------------------------------

@dataclass(frozen=True)
class TransportResult:
    holonomy: np.ndarray
    s: float
    t0: float
    t1: float
    steps: int
    convention: str = CONVENTION


def _rk4_step(tau, th0, thm, th1, h):
    k1 = -th0 @ tau
    k2 = -thm @ (tau + 0.5 * h * k1)
    k3 = -thm @ (tau + 0.5 * h * k2)
    k4 = -th1 @ (tau + h * k3)
    return tau + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def transport_halfgrid(theta_half: np.ndarray, h: float) -> np.ndarray:
    """RK4 transport through ``theta_half`` sampled at every half step.

    ``theta_half`` has shape ``batch + (2N + 1, k, k)``; returns the frames at the
    ``N + 1`` full nodes, shape ``batch + (N + 1, k, k)``.
    """
    n_half = theta_half.shape[-3]
    if n_half % 2 != 1 or n_half < 3:
        raise ValueError("need an odd number (>= 3) of half-grid samples")
    N = (n_half - 1) // 2
    k = theta_half.shape[-1]
    batch = theta_half.shape[:-3]
    out = np.empty(batch + (N + 1, k, k))
    tau = np.broadcast_to(np.eye(k), batch + (k, k)).copy()
    out[..., 0, :, :] = tau
    for n in range(N):
        tau = _rk4_step(tau, theta_half[..., 2 * n, :, :], theta_half[..., 2 * n + 1, :, :],
                        theta_half[..., 2 * n + 2, :, :], h)
        out[..., n + 1, :, :] = tau
    return out


def transport(theta, s: float, t0: float = 0.0, t1: float = 1.0, N: int = 200) -> TransportResult:
    """Parallel transport along the t-slice at ``s`` with ``N`` uniform RK4 steps.

    ``theta`` is a square-matrix field on the square or a callable ``(t, s) -> matrix``
    accepting arrays of ``t``.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if not 0.0 <= t0 <= t1 <= 1.0:
        raise ValueError("need 0 <= t0 <= t1 <= 1")
    th = _sample_theta(theta, np.linspace(t0, t1, 2 * N + 1), float(s))
    H = transport_halfgrid(th, (t1 - t0) / N)
    return TransportResult(H[-1], float(s), float(t0), float(t1), N)


def _sample_theta(theta, t: np.ndarray, s: float) -> np.ndarray:
    if isinstance(theta, Field):
        return theta.evaluate(np.stack([t, np.full_like(t, s)], -1))
    vals = np.asarray(theta(t, s), dtype=float)
    if vals.ndim == 2:
        vals = np.broadcast_to(vals, t.shape + vals.shape)
    return vals


def slice_holonomies(theta: Field, tn: np.ndarray, sn: np.ndarray) -> np.ndarray:
    """Frames ``H(t_k, s_j)`` at nodes, shape ``(len(sn), len(tn), k, k)``."""
    N = len(tn) - 1
    th = np.linspace(tn[0], tn[-1], 2 * N + 1)
    vals = theta.evaluate(_mesh(th, sn))
    return transport_halfgrid(vals, (tn[-1] - tn[0]) / N)


def pullback_curvature(P: ASpherePullback, bundle: str, pts: np.ndarray) -> np.ndarray:
    """``Omega = d_t Theta_S - d_s Theta_T + [Theta_T, Theta_S]`` at ``pts``."""
    fT, fS = (P.theta_e_t, P.theta_e_s) if bundle == "E" else (P.theta_c_t, P.theta_c_s)
    T, dT = fT.jet(pts)
    S, dS = fS.jet(pts)
    return dS[..., 0] - dT[..., 1] + T @ S - S @ T


def _simpson_weights(n: int, h: float) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson needs an odd number (>= 3) of nodes")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def holonomy_curvature_residual(P: ASpherePullback, bundle: str = "E", N: int = 200) -> float:
    """Max over interior s-nodes of ``|FD_s hol_{1,0} - (curvature integral + boundary terms)|``.

    The identity checked, for this transport convention, is::

        d/ds hol_{1,0} = int_0^1 hol_{1,t} Omega hol_{t,0} dt
                         - Theta_S(1, s) hol_{1,0} + hol_{1,0} Theta_S(0, s)

    The boundary terms vanish for genuine spheres, where ``b = 0`` on ``t = 0, 1``.
    """
    if N < 16:
        raise ValueError("N must be >= 16")
    if bundle not in ("E", "C"):
        raise ValueError("bundle must be 'E' or 'C'")
    fT, fS = (P.theta_e_t, P.theta_e_s) if bundle == "E" else (P.theta_c_t, P.theta_c_s)
    Nt = N if N % 2 == 0 else N + 1
    tn = grid(Nt + 1)
    sn = grid(N + 1)
    H = slice_holonomies(fT, tn, sn)  # (s, t, k, k)
    h = 1.0 / N
    fd = (H[2:, -1] - H[:-2, -1]) / (2 * h)
    si = sn[1:-1]
    pts = _mesh(tn, si)
    Om = pullback_curvature(P, bundle, pts)  # (s, t, k, k)
    Hi = H[1:-1]
    H1 = Hi[:, -1][:, None]
    integrand = H1 @ np.linalg.solve(Hi, Om @ Hi)
    w = _simpson_weights(len(tn), 1.0 / Nt)
    integral = np.einsum("t,stab->sab", w, integrand)
    S0 = fS.evaluate(np.stack([np.zeros_like(si), si], -1))
    S1 = fS.evaluate(np.stack([np.ones_like(si), si], -1))
    Hend = Hi[:, -1]
    rhs = integral - S1 @ Hend + Hend @ S0
    return float(np.max(np.abs(fd - rhs)))


# -- synthetic families -----------------------------------------------------------

def linear_family(K1, K2) -> ASpherePullback:
    """``Theta_T = t K1``, ``Theta_S = s K2`` on both bundles, ``W = 0``."""
    K1 = np.asarray(K1, float)
    K2 = np.asarray(K2, float)
    k = K1.shape[0]
    E1, E2 = entries(K1), entries(K2)
    tT = Field(2, (k, k), lambda X: smul(X[0], E1), label="t K1")
    tS = Field(2, (k, k), lambda X: smul(X[1], E2), label="s K2")
    return ASpherePullback(k, k, tT, tS, tT, tS, Field.zeros(2, (k, k)), name="linear-family")


SYNTH_KE = (np.array([[0.3, 1.1], [-0.7, 0.2]]), np.array([[0.5, -0.4], [0.9, -0.1]]))
SYNTH_KC = (np.array([[-0.2, 0.6], [0.8, 0.4]]), np.array([[0.1, 0.7], [-0.5, 0.3]]))
SYNTH_M = np.array([[1.0, -0.5], [0.25, 2.0]])


def synthetic_theta(t, s):
    """Scalar profiles of the synthetic connection forms (numpy or Dual arguments)."""
    pt = dual.sin(np.pi * t) * (1.0 + s)
    ps = dual.sin(np.pi * s) * dual.cos(t)
    return pt, ps


def synthetic_pullback(scale: float = 1.0) -> ASpherePullback:
    """Non-flat 2x2 / 2x2 pullback family used for oracle comparisons.

    ``Theta_T = sin(pi t)(1 + s) K1``, ``Theta_S = sin(pi s) cos(t) K2`` (per
    bundle) and ``W = scale * sin^2(pi t) sin^2(pi s) (1 + t s) M``.
    """

    def form(K, which):
        Ke = entries(K[which])

        def fn(X):
            pt, ps = synthetic_theta(X[0], X[1])
            return smul(pt if which == 0 else ps, Ke)
        return Field(2, (2, 2), fn, label="synthetic theta")

    Me = entries(SYNTH_M)

    def wfn(X):
        t, s = X
        f = dual.sin(np.pi * t) ** 2 * dual.sin(np.pi * s) ** 2 * (1.0 + t * s) * scale
        return smul(f, Me)

    return ASpherePullback(2, 2, form(SYNTH_KE, 0), form(SYNTH_KE, 1), form(SYNTH_KC, 0), form(SYNTH_KC, 1),
                           Field(2, (2, 2), wfn, label="synthetic W"), name="synthetic")

"""Spherical periods, monodromy evidence, the kernel lattice check, and verdicts."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .holonomy import CONVENTION, ASpherePullback, NumericError, _mesh, _simpson_weights, grid, transport_halfgrid

DEFAULT_TOL = 1e-4
DEFAULT_N = 201
NUMERIC_FLOOR = 1e-12


class UsageError(ValueError):
    """Invalid request (bad tolerance, grid size, or missing input)."""


@dataclass(frozen=True)
class PeriodResult:
    """Period matrix ``P`` (``c x e``) of a sphere with a Richardson-type error estimate."""

    matrix: np.ndarray
    N: int
    error_estimate: float
    sphere: str = ""
    convention: str = CONVENTION

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.matrix))) if self.matrix.size else 0.0

    def as_dict(self) -> dict:
        return {"period_matrix": self.matrix.tolist(), "grid": self.N, "error_estimate": self.error_estimate,
                "sphere": self.sphere, "convention": self.convention}


@dataclass(frozen=True)
class PeriodFailure:
    sphere: str
    error: Exception


def _holonomies(P: ASpherePullback, which: str, th: np.ndarray, sn: np.ndarray, h: float, k: int):
    flat = P.flat_e if which == "E" else P.flat_c
    if flat or k == 0:
        return None
    f = P.theta_e_t if which == "E" else P.theta_c_t
    vals = f.evaluate(_mesh(th, sn))
    return transport_halfgrid(vals, h)


def _integrand(P: ASpherePullback, tn: np.ndarray, sn: np.ndarray, HE, HC) -> np.ndarray:
    W = P.W.evaluate(_mesh(tn, sn))  # (s, t, c, e)
    F = W
    if HE is not None:
        F = F @ HE
    if HC is not None:
        F = HC[:, -1][:, None] @ np.linalg.solve(HC, F)
    return F


def _simpson2(F: np.ndarray, h: float) -> np.ndarray:
    w = _simpson_weights(F.shape[0], h)
    return np.einsum("s,t,st...->...", w, w, F)


def period(P: ASpherePullback, N: int = DEFAULT_N) -> PeriodResult:
    """``int int hol^C_{1,t} W(t,s) hol^E_{t,0} dt ds`` by iterated Simpson on ``N`` nodes.

    The slice transports use RK4 with connection forms sampled at half steps.
    The error estimate is ``max |P_N - P_coarse|`` where the coarse grid has
    about half the nodes (every other node when ``(N - 1) % 4 == 0``).
    """
    if N < 17 or N % 2 == 0:
        raise UsageError("N must be odd and >= 17")
    e, c = P.rank_e, P.rank_c
    if e == 0 or c == 0:
        return PeriodResult(np.zeros((c, e)), N, 0.0, P.name)
    if (N - 1) % 4 == 0:
        val, F = _period_on(P, N)
        coarse = _simpson2(F[::2, ::2], 2.0 / (N - 1))
    else:
        val, F = _period_on(P, N)
        coarse, _ = _period_on(P, ((N - 1) // 4) * 2 + 1)
    err = float(np.max(np.abs(val - coarse)))
    return PeriodResult(val, N, err, P.name)


def _period_on(P: ASpherePullback, N: int):
    tn = grid(N)
    th = grid(2 * N - 1)
    h = 1.0 / (N - 1)
    HE = _holonomies(P, "E", th, tn, h, P.rank_e)
    HC = _holonomies(P, "C", th, tn, h, P.rank_c)
    F = _integrand(P, tn, tn, HE, HC)
    bad = ~np.isfinite(F)
    if bad.any():
        j, i = np.argwhere(bad.reshape(F.shape[0], F.shape[1], -1).any(-1))[0]
        raise NumericError(f"non-finite integrand at (t, s) = ({tn[i]:.6g}, {tn[j]:.6g})")
    return _simpson2(F, h), F


def period_batch(spheres: Sequence[ASpherePullback], N: int = DEFAULT_N) -> list:
    """Periods of several spheres in order; failures are returned as :class:`PeriodFailure`."""
    out = []
    for P in spheres:
        try:
            out.append(period(P, N))
        except (NumericError, UsageError, FloatingPointError, np.linalg.LinAlgError) as exc:
            out.append(PeriodFailure(P.name, exc))
    return out


# -- monodromy evidence and the lattice check ----------------------------------------

@dataclass(frozen=True)
class Generator:
    """A monodromy generator ``v = (v_A, v_C)`` in the fibre of D over a base point."""

    v_a: np.ndarray
    v_c: np.ndarray
    provenance: str = "period"
    citation: str = ""
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "v_a", np.atleast_1d(np.asarray(self.v_a, dtype=float)))
        object.__setattr__(self, "v_c", np.atleast_1d(np.asarray(self.v_c, dtype=float)))
        if self.provenance not in ("period", "asserted"):
            raise ValueError("provenance must be 'period' or 'asserted'")

    def as_dict(self) -> dict:
        return {"v_A": self.v_a.tolist(), "v_C": self.v_c.tolist(), "provenance": self.provenance,
                "citation": self.citation, "label": self.label}


@dataclass(frozen=True)
class MonodromyEvidence:
    generators: tuple[Generator, ...] = ()

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        if gens:
            ra, rc = gens[0].v_a.shape, gens[0].v_c.shape
            for g in gens:
                if g.v_a.shape != ra or g.v_c.shape != rc:
                    raise ValueError("generators must share the shapes of their A and C parts")

    @classmethod
    def from_period(cls, P: PeriodResult, fiber_vector, rank_a: int, label: str = "") -> "MonodromyEvidence":
        """Evidence ``(0, P e)`` from a computed period at fibre vector ``e``."""
        vc = P.matrix @ np.atleast_1d(np.asarray(fiber_vector, dtype=float))
        return cls((Generator(np.zeros(rank_a), vc, "period", label=label or P.sphere),))

    def __add__(self, other: "MonodromyEvidence") -> "MonodromyEvidence":
        return MonodromyEvidence(self.generators + other.generators)


@dataclass(frozen=True)
class KernelCheck:
    status: str  # trivial | nontrivial | inconclusive
    witness: tuple[int, ...] | None = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {"status": self.status, "witness": None if self.witness is None else list(self.witness),
                "detail": self.detail}


def kernel_intersection_check(ev: MonodromyEvidence, tol: float = DEFAULT_TOL, coeff_bound: int = 10) -> KernelCheck:
    """Search integer combinations of generators lying in ``ker p`` with nonzero core part."""
    if coeff_bound < 1:
        raise UsageError("coeff_bound must be >= 1")
    gens = ev.generators
    if not gens:
        return KernelCheck("trivial", detail="no generators")
    VA = np.array([g.v_a for g in gens])
    VC = np.array([g.v_c for g in gens])
    k = len(gens)
    if np.all(np.max(np.abs(VA), axis=1, initial=0.0) <= tol):
        for i in range(k):
            if np.max(np.abs(VC[i])) > tol:
                w = [0] * k
                w[i] = 1
                return KernelCheck("nontrivial", tuple(w), "generator with vanishing A-part and nonzero core part")
    annihilating = False
    rng = range(-coeff_bound, coeff_bound + 1)
    for n in itertools.product(rng, repeat=k):
        if not any(n):
            continue
        nv = np.array(n, dtype=float)
        if np.max(np.abs(nv @ VA), initial=0.0) <= tol:
            annihilating = True
            if np.max(np.abs(nv @ VC)) > tol:
                return KernelCheck("nontrivial", tuple(int(x) for x in n),
                                   "integer combination with vanishing A-part and nonzero core part")
    if not annihilating:
        return KernelCheck("trivial", detail=f"no nonzero combination with |n| <= {coeff_bound} lies in ker p")
    return KernelCheck("inconclusive", detail="combinations in ker p found, all with vanishing core part")


# -- verdicts ------------------------------------------------------------------------

@dataclass(frozen=True)
class Assertion:
    value: bool
    citation: str = ""

    def as_dict(self) -> dict:
        return {"value": self.value, "citation": self.citation}


NON_INTEGRABLE = "NonIntegrable"
INTEGRABLE = "Integrable-conditional"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Verdict:
    decision: str
    premises: dict
    evidence: dict = field(default_factory=dict)
    reason: str = ""

    def as_dict(self) -> dict:
        return {"decision": self.decision, "reason": self.reason, "premises": self.premises,
                "evidence": self.evidence}


def verdict(periods: Sequence[PeriodResult], a_integrable: Assertion | None = None,
            generators_complete: Assertion | None = None, tol: float = DEFAULT_TOL,
            evidence: MonodromyEvidence | None = None, core_anchor_injective: bool = False,
            coeff_bound: int = 10) -> Verdict:
    """Decide integrability from periods, asserted premises and monodromy evidence.

    Order of rules: A asserted non-integrable; injective core anchor with A
    integrable; a period exceeding ``tol`` plus its error; a nontrivial kernel
    check; all periods small with both premises asserted; otherwise inconclusive.
    """
    periods = list(periods)
    floor = max([NUMERIC_FLOOR] + [p.error_estimate for p in periods])
    if not np.isfinite(tol) or tol <= floor:
        raise UsageError(f"tol {tol:g} is below the numeric floor {floor:.3g}")
    premises = {
        "A_integrable": a_integrable.as_dict() if a_integrable else None,
        "generators_complete": generators_complete.as_dict() if generators_complete else None,
    }
    trail = {"periods": [p.as_dict() for p in periods], "shortcuts": [], "tol": tol}
    if a_integrable is not None and not a_integrable.value:
        return Verdict(NON_INTEGRABLE, premises, trail, "base algebroid asserted non-integrable")
    a_ok = a_integrable is not None and a_integrable.value
    if core_anchor_injective and a_ok:
        trail["shortcuts"].append("injective core anchor")
        return Verdict(INTEGRABLE, premises, trail, "injective core anchor over an integrable base")
    ev = evidence or MonodromyEvidence()
    check = kernel_intersection_check(ev, tol, coeff_bound)
    trail["kernel_check"] = check.as_dict()
    trail["generators"] = [g.as_dict() for g in ev.generators]
    for p in periods:
        if p.max_abs > tol + p.error_estimate:
            trail["witness"] = {
                "sphere": p.sphere,
                "period_norm": p.max_abs,
                "accumulation": "rescaling the fibre by lambda -> 0 gives monodromy elements "
                                "lambda * P e accumulating at zero in ker p",
            }
            return Verdict(NON_INTEGRABLE, premises, trail, f"nonvanishing period on sphere {p.sphere!r}")
    if check.status == "nontrivial":
        return Verdict(NON_INTEGRABLE, premises, trail, "monodromy meets ker p nontrivially")
    complete = generators_complete is not None and generators_complete.value
    if a_ok and complete and check.status == "trivial":
        return Verdict(INTEGRABLE, premises, trail, "all periods vanish within tolerance and Mon(D) meets ker p trivially")
    missing = []
    if not a_ok:
        missing.append("A-integrability assertion")
    if not complete:
        missing.append("generator completeness assertion")
    if check.status == "inconclusive":
        missing.append("conclusive kernel check")
    return Verdict(INCONCLUSIVE, premises, trail, "missing premise: " + ", ".join(missing))

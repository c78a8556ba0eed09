"""The model file format.

A model file is UTF-8 text made of ``key = value`` lines grouped under
``[section]`` or ``[section:id]`` headers; ``#`` starts a comment.  Values are
expressions in the language of :mod:`vbob.expr`; lists are separated by ``,``
and matrix rows by ``;``.  Intervals are written ``lo:hi``.

Sections and keys::

    name, provenance, description          (before the first header)
    [chart(:id)]       coordinates bounds excluded_radius ball_dims sample_count
    [poisson(:id)]     chart  pi(a,b)
    [algebroid(:id)]   chart kind(frame|tangent|cotangent) poisson frame anchor
                       bracket(i,j) linear_rank base_dim
    [splitvba]         base fiber fiber_bounds core core_anchor connE(i) connC(i) omega(i,j)
    [morphism:id]      source target matrix
    [sphere:id]        kind(frame|pullback) generator kappa base gamma a b lift W
                       thetaE_t thetaE_s thetaC_t thetaC_s fiber_vector expect note
    [generator:id]     v_A v_C citation at
    [ruth]             chart rank_e rank_c core_anchor delta_c delta_e gauge_c gauge_e omega
    [leaf]             poisson gamma params

Anchor matrices have one row per coordinate and one column per frame section;
``bracket(i,j)`` lists frame coefficients; ``connE(i)`` is ``e x e``;
``omega(i,j)`` and ruth ``omega`` are ``c x e``; ``core_anchor`` is ``e x c``; a
morphism ``matrix`` has one column per source frame section.  Sphere
expressions may use ``t, s`` and the built-in generator ``g1 g2 g3`` with its
partials ``gt1.. gs1..``.  Ruth ``delta_*`` use ``<coord>_t, <coord>_s``
(target, source) and ruth ``omega`` uses ``<coord>_2, <coord>_1, <coord>_0``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebroid import AlgebroidMorphism, FrameAlgebroid, antisymmetric_structure, tangent_algebroid
from .chart import ChartDomain
from .expr import ParseError, compile_expression
from .dual import Dual
from .fields import DerivativeField, Field, empty
from .holonomy import ASphereFrame, ASpherePullback, tangent_lift, unit_sphere_map, KAPPA
from .obstruction import Generator
from .poisson import PoissonBivector, cotangent_algebroid
from .ruth import RepUTHGroupoid
from .split import SplitVBA, antisymmetric_pairs, stacked


class ModelError(ValueError):
    """Malformed model file, with 1-based line and column."""

    def __init__(self, message: str, line: int = 0, column: int = 0, source: str = ""):
        where = f"{source}:" if source else ""
        super().__init__(f"{where}{line}:{column}: {message}" if line else f"{where}{message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Entry:
    key: str
    value: str
    line: int
    column: int  # column of the value's first character


@dataclass
class Section:
    kind: str
    ident: str
    line: int
    entries: dict = field(default_factory=dict)


_HEADER = re.compile(r"^\[\s*([A-Za-z_]+)\s*(?::\s*([A-Za-z0-9_\-*]+)\s*)?\]$")
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\([A-Za-z0-9_ ,]*\))?$")

SECTION_KEYS = {
    "chart": {"coordinates", "bounds", "excluded_radius", "ball_dims", "sample_count"},
    "poisson": {"chart", "pi()"},
    "algebroid": {"chart", "kind", "poisson", "frame", "anchor", "bracket()", "linear_rank", "base_dim"},
    "splitvba": {"base", "fiber", "fiber_bounds", "core", "core_anchor", "connE()", "connC()", "omega()"},
    "morphism": {"source", "target", "matrix"},
    "sphere": {"kind", "generator", "kappa", "base", "gamma", "a", "b", "lift", "W", "thetaE_t", "thetaE_s",
               "thetaC_t", "thetaC_s", "fiber_vector", "expect", "note"},
    "generator": {"v_A", "v_C", "citation", "at"},
    "ruth": {"chart", "rank_e", "rank_c", "core_anchor", "delta_c", "delta_e", "gauge_c", "gauge_e", "omega"},
    "leaf": {"poisson", "gamma", "params"},
}
TOP_KEYS = {"name", "provenance", "description"}
NEEDS_ID = {"morphism", "sphere", "generator"}


def parse_text(text: str, source: str = "") -> tuple[dict, list[Section]]:
    """Split a model file into top-level entries and sections (no semantic checks beyond keys)."""
    top: dict[str, Entry] = {}
    sections: list[Section] = []
    current: Section | None = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        col0 = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("["):
            m = _HEADER.match(stripped)
            if not m:
                raise ModelError("malformed section header", lineno, col0, source)
            kind, ident = m.group(1), m.group(2)
            if kind not in SECTION_KEYS:
                raise ModelError(f"unknown section [{kind}]", lineno, col0 + 1, source)
            if ident is None:
                if kind in NEEDS_ID:
                    raise ModelError(f"section [{kind}] needs an id, as in [{kind}:name]", lineno, col0, source)
                ident = "main"
            if (kind, ident) in seen:
                raise ModelError(f"duplicate section [{kind}:{ident}]", lineno, col0, source)
            seen.add((kind, ident))
            current = Section(kind, ident, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ModelError("expected 'key = value'", lineno, col0, source)
        k, v = line.split("=", 1)
        key = re.sub(r"\s+", "", k)
        vcol = len(k) + 2 + (len(v) - len(v.lstrip()))
        value = v.strip()
        if not _KEY.match(key):
            raise ModelError(f"malformed key {k.strip()!r}", lineno, col0, source)
        allowed = TOP_KEYS if current is None else SECTION_KEYS[current.kind]
        generic = re.sub(r"\(.*\)$", "()", key)
        if generic not in allowed:
            where = "top level" if current is None else f"section [{current.kind}]"
            raise ModelError(f"unknown key {key!r} in {where}", lineno, col0, source)
        target = top if current is None else current.entries
        if key in target:
            raise ModelError(f"duplicate key {key!r}", lineno, col0, source)
        if not value:
            raise ModelError(f"empty value for {key!r}", lineno, vcol, source)
        target[key] = Entry(key, value, lineno, vcol)
    return top, sections


# -- value helpers ------------------------------------------------------------------

def _split_with_cols(text: str, sep: str, col: int):
    parts, start = [], 0
    for i, ch in enumerate(text):
        if ch == sep:
            parts.append((text[start:i], col + start))
            start = i + 1
    parts.append((text[start:], col + start))
    out = []
    for p, c in parts:
        lead = len(p) - len(p.lstrip())
        out.append((p.strip(), c + lead))
    return out


class _Ctx:
    def __init__(self, source: str):
        self.source = source

    def err(self, msg, e: Entry | None = None, col=None):
        return ModelError(msg, e.line if e else 0, col if col is not None else (e.column if e else 0), self.source)

    def names(self, e: Entry) -> tuple[str, ...]:
        out = []
        for p, c in _split_with_cols(e.value, ",", e.column):
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", p):
                raise self.err(f"bad name {p!r}", e, c)
            out.append(p)
        return tuple(out)

    def intervals(self, e: Entry):
        out = []
        for p, c in _split_with_cols(e.value, ",", e.column):
            bits = p.split(":")
            if len(bits) != 2:
                raise self.err("interval must be written lo:hi", e, c)
            out.append((self.number_text(bits[0], e, c), self.number_text(bits[1], e, c)))
        return tuple(out)

    def number_text(self, text, e, col):
        try:
            ex = compile_expression(text, (), e.line, col)
        except ParseError as exc:
            raise self.err(str(exc).split(": ", 1)[-1], e, exc.column) from None
        return float(ex(()))

    def number(self, e: Entry) -> float:
        return self.number_text(e.value, e, e.column)

    def integer(self, e: Entry) -> int:
        v = self.number(e)
        if v != int(v):
            raise self.err("expected an integer", e)
        return int(v)

    def expr(self, text, variables, e: Entry, col):
        try:
            return compile_expression(text, variables, e.line, col)
        except ParseError as exc:
            raise self.err(str(exc).split(": ", 1)[-1], e, exc.column) from None

    def matrix_exprs(self, e: Entry, variables, shape=None):
        rows = []
        for rtext, rc in _split_with_cols(e.value, ";", e.column):
            row = []
            for p, c in _split_with_cols(rtext, ",", rc):
                if not p:
                    raise self.err("empty matrix entry", e, c)
                row.append(self.expr(p, variables, e, c))
            rows.append(row)
        if len({len(r) for r in rows}) != 1:
            raise self.err("matrix rows have different lengths", e)
        if shape is not None and (len(rows), len(rows[0])) != tuple(shape):
            raise self.err(f"expected a {shape[0]}x{shape[1]} matrix, got {len(rows)}x{len(rows[0])}", e)
        return rows

    def vector_exprs(self, e: Entry, variables, n=None):
        out = [self.expr(p, variables, e, c) for p, c in _split_with_cols(e.value, ",", e.column)]
        if n is not None and len(out) != n:
            raise self.err(f"expected {n} entries, got {len(out)}", e)
        return out


def _field(exprs, variables, label="") -> Field:
    return Field.from_expressions(np.array(exprs, dtype=object), variables, label=label)


# -- the model ------------------------------------------------------------------------

@dataclass
class Model:
    """A parsed and built model: named charts, algebroids, split data, spheres and more."""

    name: str
    provenance: str = ""
    description: str = ""
    charts: dict = field(default_factory=dict)
    poissons: dict = field(default_factory=dict)
    algebroids: dict = field(default_factory=dict)
    split: SplitVBA | None = None
    morphisms: dict = field(default_factory=dict)
    spheres: dict = field(default_factory=dict)
    sphere_meta: dict = field(default_factory=dict)
    generators: dict = field(default_factory=dict)
    ruth: RepUTHGroupoid | None = None
    leaf: dict | None = None
    source: str = ""

    @property
    def base(self) -> FrameAlgebroid | None:
        if self.split is not None:
            return self.split.base
        return self.algebroids.get("main")

    def pullbacks(self) -> dict:
        """Every sphere in pullback form (frame spheres are pulled back through the split data)."""
        from .holonomy import pullback_sphere
        out = {}
        for k, sp in self.spheres.items():
            if isinstance(sp, ASpherePullback):
                out[k] = sp
            elif self.split is not None:
                out[k] = pullback_sphere(sp, self.split, name=k)
        return out


SPHERE_VARS = ("t", "s", "g1", "g2", "g3", "gt1", "gt2", "gt3", "gs1", "gs2", "gs3")


def _sphere_env(kappa: float, needed: set[str]) -> Field:
    """Field over the square producing the sphere-expression variables in ``SPHERE_VARS`` order."""
    gen = unit_sphere_map(kappa)
    need_t = any(n.startswith("gt") for n in needed)
    need_s = any(n.startswith("gs") for n in needed)
    gt = DerivativeField(gen, 0) if need_t else None
    gs = DerivativeField(gen, 1) if need_s else None

    def fn(X):
        out = empty((len(SPHERE_VARS),))
        out.fill(0.0)
        out[0], out[1] = X[0], X[1]
        out[2:5] = gen.apply(X)
        if gt is not None:
            out[5:8] = gt.apply(X)
        if gs is not None:
            out[8:11] = gs.apply(X)
        return out

    return Field(2, (len(SPHERE_VARS),), fn, label="sphere variables")


def _sphere_field(rows, env: Field, shape, label) -> Field:
    flat = [x for r in rows for x in r] if rows and isinstance(rows[0], list) else list(rows)

    def fn(X):
        V = list(env.apply(X))
        out = empty(shape)
        for idx, ex in zip(np.ndindex(*shape), flat):
            out[idx] = ex(V)
        return out

    return Field(2, shape, fn, label=label)


def _free(exprs) -> set[str]:
    from .expr import free_names
    names = set()
    for e in exprs:
        names |= free_names(e.ast)
    return names


def build(top: dict, sections: list[Section], source: str = "") -> Model:
    ctx = _Ctx(source)
    if "name" not in top:
        raise ModelError("model needs a top-level 'name'", 1, 1, source)
    model = Model(top["name"].value, top.get("provenance", Entry("", "", 0, 0)).value,
                  top.get("description", Entry("", "", 0, 0)).value, source=source)
    by_kind: dict[str, list[Section]] = {}
    for sec in sections:
        by_kind.setdefault(sec.kind, []).append(sec)

    def need(sec: Section, key: str) -> Entry:
        if key not in sec.entries:
            raise ModelError(f"section [{sec.kind}:{sec.ident}] needs '{key}'", sec.line, 1, source)
        return sec.entries[key]

    def ref(table: dict, sec: Section, key: str, what: str):
        e = sec.entries.get(key)
        ident = e.value if e else "main"
        if ident not in table:
            raise ModelError(f"unknown {what} {ident!r}", e.line if e else sec.line, e.column if e else 1, source)
        return table[ident]

    for sec in by_kind.get("chart", []):
        E = sec.entries
        names = ctx.names(need(sec, "coordinates"))
        bounds = ctx.intervals(need(sec, "bounds"))
        if len(bounds) != len(names):
            raise ctx.err("one interval per coordinate", E["bounds"])
        try:
            dom = ChartDomain(bounds, names,
                              ctx.number(E["excluded_radius"]) if "excluded_radius" in E else None,
                              ctx.integer(E["sample_count"]) if "sample_count" in E else 100,
                              ctx.integer(E["ball_dims"]) if "ball_dims" in E else None)
        except ValueError as exc:
            raise ModelError(str(exc), sec.line, 1, source) from None
        model.charts[sec.ident] = dom

    for sec in by_kind.get("poisson", []):
        dom = ref(model.charts, sec, "chart", "chart")
        pairs = {}
        for key, e in sec.entries.items():
            if not key.startswith("pi("):
                continue
            i, j = _pair(ctx, e, dom.names, key)
            f = _field(ctx.expr(e.value, dom.names, e, e.column), dom.names, key)
            if i < j:
                pairs[(i, j)] = f
            else:
                pairs[(j, i)] = f.scaled(-1.0)
        model.poissons[sec.ident] = PoissonBivector.from_pairs(dom, pairs, sec.ident)

    for sec in by_kind.get("algebroid", []):
        model.algebroids[sec.ident] = _build_algebroid(ctx, sec, model, need, ref)

    for sec in by_kind.get("splitvba", []):
        model.split = _build_split(ctx, sec, model, ref)

    for sec in by_kind.get("morphism", []):
        src = ref(model.algebroids, sec, "source", "algebroid")
        tgt = ref(model.algebroids, sec, "target", "algebroid")
        e = need(sec, "matrix")
        rows = ctx.matrix_exprs(e, src.domain.names, (tgt.rank, src.rank))
        try:
            model.morphisms[sec.ident] = AlgebroidMorphism(src, tgt, _field(rows, src.domain.names), sec.ident)
        except ValueError as exc:
            raise ctx.err(str(exc), e) from None

    for sec in by_kind.get("sphere", []):
        _build_sphere(ctx, sec, model, need, ref)

    for sec in by_kind.get("generator", []):
        E = sec.entries
        at = {}
        if "at" in E:
            for p, c in _split_with_cols(E["at"].value, ",", E["at"].column):
                if "=" not in p:
                    raise ctx.err("'at' lists name=value pairs", E["at"], c)
                k, v = p.split("=", 1)
                at[k.strip()] = ctx.number_text(v.strip(), E["at"], c)
        names = tuple(at)
        vals = tuple(at.values())
        va = [float(x(vals)) for x in ctx.vector_exprs(need(sec, "v_A"), names)]
        vc = [float(x(vals)) for x in ctx.vector_exprs(need(sec, "v_C"), names)]
        model.generators[sec.ident] = Generator(va, vc, "asserted", E["citation"].value if "citation" in E else "",
                                                sec.ident)

    for sec in by_kind.get("ruth", []):
        model.ruth = _build_ruth(ctx, sec, model, need, ref)

    for sec in by_kind.get("leaf", []):
        P = ref(model.poissons, sec, "poisson", "poisson bivector")
        params = ctx.names(sec.entries["params"]) if "params" in sec.entries else ("r", "e")
        e = need(sec, "gamma")
        variables = SPHERE_VARS + params
        exprs = ctx.vector_exprs(e, variables, P.domain.dim)
        model.leaf = {"poisson": P, "params": params, "exprs": exprs, "family": LeafFamily(exprs, params)}
    return model


def _pair(ctx, e: Entry, names, key) -> tuple[int, ...]:
    inner = key[key.index("(") + 1:-1]
    parts = [p.strip() for p in inner.split(",")]
    idx = []
    for p in parts:
        if p not in names:
            raise ctx.err(f"unknown name {p!r} in {key!r}", e, 1)
        idx.append(names.index(p))
    if len(idx) == 2 and idx[0] == idx[1]:
        raise ctx.err(f"{key!r} pairs a name with itself", e, 1)
    return tuple(idx)


def _build_algebroid(ctx, sec, model, need, ref) -> FrameAlgebroid:
    E = sec.entries
    kind = E["kind"].value if "kind" in E else "frame"
    if kind == "cotangent":
        return cotangent_algebroid(ref(model.poissons, sec, "poisson", "poisson bivector"), name=sec.ident)
    dom = ref(model.charts, sec, "chart", "chart")
    if kind == "tangent":
        return tangent_algebroid(dom, name=sec.ident)
    if kind != "frame":
        raise ctx.err(f"unknown algebroid kind {kind!r}", E["kind"])
    frame = ctx.names(need(sec, "frame"))
    r, m = len(frame), dom.dim
    rows = ctx.matrix_exprs(need(sec, "anchor"), dom.names, (m, r))
    pairs = {}
    for key, e in E.items():
        if not key.startswith("bracket("):
            continue
        i, j = _pair(ctx, e, frame, key)
        f = _field(ctx.vector_exprs(e, dom.names, r), dom.names, key)
        if i < j:
            pairs[(i, j)] = f
        else:
            pairs[(j, i)] = f.scaled(-1.0)
    lin = ctx.integer(E["linear_rank"]) if "linear_rank" in E else None
    bd = ctx.integer(E["base_dim"]) if "base_dim" in E else None
    return FrameAlgebroid(dom, r, _field(rows, dom.names, "anchor"), antisymmetric_structure(m, r, pairs),
                          frame=frame, name=sec.ident, linear_rank=lin, base_dim=bd)


def _build_split(ctx, sec, model, ref) -> SplitVBA:
    E = sec.entries
    A = ref(model.algebroids, sec, "base", "algebroid")
    names = A.domain.names
    fiber = ctx.names(E["fiber"]) if "fiber" in E else ("y1",)
    core = ctx.names(E["core"]) if "core" in E else ("c1",)
    e, c = len(fiber), len(core)
    fb = ctx.intervals(E["fiber_bounds"]) if "fiber_bounds" in E else tuple((-1.0, 1.0) for _ in fiber)
    if len(fb) != e:
        raise ctx.err("one interval per fibre coordinate", E["fiber_bounds"])
    d = _field(ctx.matrix_exprs(E["core_anchor"], names, (e, c)), names) if "core_anchor" in E else None
    conn_e, conn_c, omega = {}, {}, {}
    for key, ent in E.items():
        if key.startswith("connE(") or key.startswith("connC("):
            (i,) = _pair(ctx, ent, A.frame, key)
            k = e if key.startswith("connE") else c
            f = _field(ctx.matrix_exprs(ent, names, (k, k)), names, key)
            (conn_e if key.startswith("connE") else conn_c)[i] = f
        elif key.startswith("omega("):
            i, j = _pair(ctx, ent, A.frame, key)
            f = _field(ctx.matrix_exprs(ent, names, (c, e)), names, key)
            if i < j:
                omega[(i, j)] = f
            else:
                omega[(j, i)] = f.scaled(-1.0)
    return SplitVBA.build(A, e, c, d, conn_e, conn_c, omega, fiber_names=fiber, fiber_bounds=fb,
                          core_names=core, name=model.name)


def _build_sphere(ctx, sec, model, need, ref):
    E = sec.entries
    kind = E["kind"].value if "kind" in E else "frame"
    gen = E["generator"].value if "generator" in E else "unit"
    if gen != "unit":
        raise ctx.err(f"unknown sphere generator {gen!r}", E["generator"])
    kappa = ctx.number(E["kappa"]) if "kappa" in E else KAPPA
    meta = {"expect": E["expect"].value if "expect" in E else "valid",
            "note": E["note"].value if "note" in E else ""}
    if "fiber_vector" in E:
        meta["fiber_vector"] = [float(x(())) for x in ctx.vector_exprs(E["fiber_vector"], ())]
    if meta["expect"] not in ("valid", "invalid"):
        raise ctx.err("expect must be 'valid' or 'invalid'", E["expect"])
    if kind == "pullback":
        V = model.split
        e_rank = V.rank_e if V else None
        c_rank = V.rank_c if V else None
        W_rows = ctx.matrix_exprs(need(sec, "W"), SPHERE_VARS)
        c_rank = c_rank or len(W_rows)
        e_rank = e_rank or len(W_rows[0])
        if (len(W_rows), len(W_rows[0])) != (c_rank, e_rank):
            raise ctx.err(f"W must be {c_rank}x{e_rank}", E["W"])
        exprs = [x for r in W_rows for x in r]
        thetas = {}
        for key, k in (("thetaE_t", e_rank), ("thetaE_s", e_rank), ("thetaC_t", c_rank), ("thetaC_s", c_rank)):
            if key in E:
                thetas[key] = ctx.matrix_exprs(E[key], SPHERE_VARS, (k, k))
                exprs += [x for r in thetas[key] for x in r]
        env = _sphere_env(kappa, _free(exprs))
        W = _sphere_field(W_rows, env, (c_rank, e_rank), "W")

        def theta(key, k):
            if key in thetas:
                return _sphere_field(thetas[key], env, (k, k), key)
            return Field.zeros(2, (k, k))

        P = ASpherePullback(e_rank, c_rank, theta("thetaE_t", e_rank), theta("thetaE_s", e_rank),
                            theta("thetaC_t", c_rank), theta("thetaC_s", c_rank), W, sec.ident,
                            V.fiber_names if V else (), V.core_names if V else (),
                            flat_e="thetaE_t" not in thetas, flat_c="thetaC_t" not in thetas)
        model.spheres[sec.ident] = P
    elif kind == "frame":
        A = ref(model.algebroids, sec, "base", "algebroid") if "base" in E else model.base
        if A is None:
            raise ModelError("frame sphere needs a base algebroid", sec.line, 1, ctx.source)
        g_exprs = ctx.vector_exprs(need(sec, "gamma"), SPHERE_VARS, A.dim)
        lift = E["lift"].value if "lift" in E else "explicit"
        ab = []
        if lift == "explicit":
            ab = [ctx.vector_exprs(need(sec, k), SPHERE_VARS, A.rank) for k in ("a", "b")]
        elif lift != "tangent":
            raise ctx.err("lift must be 'explicit' or 'tangent'", E["lift"])
        env = _sphere_env(kappa, _free(g_exprs + [x for v in ab for x in v]))
        gamma = _sphere_field(g_exprs, env, (A.dim,), "gamma")
        if lift == "tangent":
            sigma = tangent_lift(A, gamma, sec.ident)
        else:
            sigma = ASphereFrame(A, gamma, _sphere_field(ab[0], env, (A.rank,), "a"),
                                 _sphere_field(ab[1], env, (A.rank,), "b"), sec.ident)
        model.spheres[sec.ident] = sigma
    else:
        raise ctx.err(f"unknown sphere kind {kind!r}", E["kind"])
    model.sphere_meta[sec.ident] = meta


def _build_ruth(ctx, sec, model, need, ref) -> RepUTHGroupoid:
    E = sec.entries
    dom = ref(model.charts, sec, "chart", "chart")
    n = dom.names
    m = dom.dim
    e = ctx.integer(need(sec, "rank_e"))
    c = ctx.integer(need(sec, "rank_c"))
    tvars = tuple(f"{x}_t" for x in n) + tuple(f"{x}_s" for x in n)
    ovars = tuple(f"{x}_2" for x in n) + tuple(f"{x}_1" for x in n) + tuple(f"{x}_0" for x in n)

    def delta(key, gkey, k):
        if key in E and gkey in E:
            raise ctx.err(f"give either {key} or {gkey}", E[gkey])
        if key in E:
            return _field(ctx.matrix_exprs(E[key], tvars, (k, k)), tvars, key)
        if gkey in E:
            G = _field(ctx.matrix_exprs(E[gkey], n, (k, k)), n, gkey)
            return _gauge_delta(G, m, k)
        return Field.constant(np.eye(k), 2 * m)

    d = _field(ctx.matrix_exprs(E["core_anchor"], n, (e, c)), n) if "core_anchor" in E else Field.zeros(m, (e, c))
    om = _field(ctx.matrix_exprs(E["omega"], ovars, (c, e)), ovars) if "omega" in E else Field.zeros(3 * m, (c, e))
    return RepUTHGroupoid(dom, e, c, d, delta("delta_c", "gauge_c", c), delta("delta_e", "gauge_e", e), om,
                          model.name)


def _gauge_delta(G: Field, m: int, k: int) -> Field:
    """``Delta_{(y, x)} = G(y)^{-1} G(x)``."""

    def fn(X):
        y = np.stack(np.broadcast_arrays(*[np.asarray(v, float) for v in X[:m]]), -1)
        x = np.stack(np.broadcast_arrays(*[np.asarray(v, float) for v in X[m:]]), -1)
        y, x = np.broadcast_arrays(y, x)
        H = np.linalg.solve(G.evaluate(y), G.evaluate(x))
        out = empty((k, k))
        for idx in np.ndindex(k, k):
            out[idx] = H[(Ellipsis,) + idx]
        return out

    return Field(2 * m, (k, k), fn, ad=False, label="gauge quasi-action")


class _LeafSphere(Field):
    """A leaf sphere at fixed parameters; first jets reuse the shared sphere-variable jets."""

    def __init__(self, family: "LeafFamily", params):
        super().__init__(2, (len(family.exprs),), self._fn, label=f"leaf{tuple(params)}")
        self.family = family
        self.params = list(params)

    def _fn(self, X):
        V = list(self.family.env.apply(X)) + self.params
        return [ex(V) for ex in self.family.exprs]

    def jet(self, points, order: int = 1):
        if order != 1:
            return super().jet(points, order)
        val, grad = self.family.env_jet(points)
        V = [Dual(val[..., k], grad[..., k, :]) for k in range(val.shape[-1])] + self.params
        outs = [ex(V) for ex in self.family.exprs]
        batch = val.shape[:-1]
        g = np.empty(batch + (len(outs),))
        dg = np.zeros(batch + (len(outs), 2))
        for k, o in enumerate(outs):
            if isinstance(o, Dual):
                g[..., k] = o.val
                dg[..., k, :] = o.grad
            else:
                g[..., k] = o
        return g, dg


class LeafFamily:
    """The ``[leaf]`` family ``gamma_{r, e}`` of a model."""

    def __init__(self, exprs, params):
        self.exprs = exprs
        self.params = tuple(params)
        self.env = _sphere_env(KAPPA, _free(exprs))
        self._cache: dict = {}

    def env_jet(self, points):
        points = np.asarray(points, dtype=float)
        key = (points.shape, hash(points.tobytes()))
        if key not in self._cache:
            if len(self._cache) >= 4:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = self.env.jet(points)
        return self._cache[key]

    def sphere(self, *params) -> Field:
        if len(params) != len(self.params):
            raise ValueError(f"leaf family takes parameters {self.params}")
        return _LeafSphere(self, [float(p) for p in params])


def leaf_sphere(model: Model, r: float, e: float) -> Field:
    """The leaf sphere of ``model`` at parameters ``(r, e)`` as a field on the square."""
    if model.leaf is None:
        raise ModelError(f"model {model.name!r} has no [leaf] section")
    return model.leaf["family"].sphere(r, e)


def load_text(text: str, source: str = "") -> Model:
    top, sections = parse_text(text, source)
    return build(top, sections, source)


def load_file(path) -> Model:
    path = Path(path)
    return load_text(path.read_text(encoding="utf-8"), str(path))

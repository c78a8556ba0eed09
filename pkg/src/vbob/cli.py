"""Command-line interface: ``vbob <command> <model> [options]``.

Exit codes: 0 success (or verdict emitted), 1 residual check failed,
2 usage error, 3 numeric failure.  ``VBOB_SEED`` overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import obstruction as ob
from .algebroid import check_axioms, morphism_residual
from .chart import DomainError
from .holonomy import (ASphereFrame, NumericError, holonomy_curvature_residual, linear_family,
                       sphere_morphism_residual, synthetic_pullback)
from .modelfile import ModelError, leaf_sphere
from .models import UnknownModel, builtin_names, load_builtin, load_model
from .poisson import NotLeafTangent, area_scan
from .ruth import CORRECTED, LITERAL, differentiate_ruth, ruth_axiom_residuals, vb_groupoid_from_ruth
from .split import (build_total_algebroid, compat_residuals, core_anchor_injective, decompose_regular,
                    structural_degree_check)

SCHEMA_VERSION = "1"
OK, FAILED, USAGE, NUMERIC = 0, 1, 2, 3


class Usage(Exception):
    pass


# -- output -------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _flatten(prefix, obj, out):
    if isinstance(obj, dict) and obj:
        for k in sorted(obj):
            _flatten(f"{prefix}.{k}" if prefix else k, obj[k], out)
    else:
        out.append(f"{prefix}: {json.dumps(obj, sort_keys=True)}")


def emit(record: dict, args, stream=None):
    stream = stream or sys.stdout
    record = _clean({"schema_version": SCHEMA_VERSION, **record})
    if args.format == "json":
        stream.write(json.dumps(record, sort_keys=True, indent=2) + "\n")
    else:
        lines = []
        _flatten("", record, lines)
        stream.write("\n".join(lines) + "\n")


# -- helpers ------------------------------------------------------------------------

def _model(args):
    return load_model(args.model)


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise Usage(f"{what} must be a comma-separated list of numbers") from None


def _range(text: str, what: str) -> np.ndarray:
    parts = text.split(":")
    try:
        vals = [float(v) for v in parts]
    except ValueError:
        vals = []
    if len(vals) == 1:
        return np.array(vals)
    if len(vals) != 3 or vals[2] <= 0 or vals[1] < vals[0]:
        raise Usage(f"{what} must be A:B:STEP with STEP > 0 and A <= B")
    a, b, step = vals
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return np.round(a + step * np.arange(n), 12)


def _spheres(model, wanted: str | None):
    if wanted is None:
        return list(model.spheres)
    if wanted not in model.spheres:
        raise Usage(f"model {model.name!r} has no sphere {wanted!r}; spheres: {', '.join(model.spheres) or 'none'}")
    return [wanted]


def _positive_tol(t: float) -> float:
    if not (math.isfinite(t) and t > 0):
        raise Usage("--tol must be a positive number")
    return t


# -- commands -----------------------------------------------------------------------

def cmd_list(args):
    rows = []
    for name in builtin_names():
        m = load_builtin(name)
        parts = [k for k, v in (("algebroid", m.algebroids), ("splitvba", m.split), ("sphere", m.spheres),
                                ("ruth", m.ruth), ("leaf", m.leaf)) if v]
        rows.append({"name": name, "description": m.description, "sections": parts})
    emit({"command": "list-models", "models": rows}, args)
    return OK


def cmd_axioms(args):
    m = _model(args)
    tol = _positive_tol(args.tol)
    out, ok = {}, True
    algs = dict(m.algebroids)
    if m.split is not None:
        algs["total(splitvba)"] = build_total_algebroid(m.split, args.convention_sign)
    for k, A in algs.items():
        rep = check_axioms(A, args.samples, args.seed)
        out[k] = {**rep.as_dict(), "passes": rep.passes(tol)}
        ok &= rep.passes(tol)
    morph = {}
    for k, phi in m.morphisms.items():
        rep = morphism_residual(phi, args.samples, args.seed)
        good = max(rep.anchor_residual, rep.bracket_residual) <= tol
        morph[k] = {**rep.as_dict(), "passes": good}
        ok &= good
    rec = {"command": "axioms", "model": m.name, "tol": tol, "algebroids": out, "morphisms": morph}
    if m.ruth is not None:
        rr = ruth_axiom_residuals(m.ruth, args.samples, args.seed)
        rec["ruth"] = {**rr.as_dict(), "passes": rr.passes(tol)}
        ok &= rr.passes(tol)
    rec["passes"] = ok
    emit(rec, args)
    return OK if ok else FAILED


def cmd_compat(args):
    m = _model(args)
    tol = _positive_tol(args.tol)
    if m.split is None:
        emit({"command": "compat", "model": m.name, "status": "not-applicable",
              "reason": "model has no [splitvba] section"}, args)
        return OK
    V = m.split
    rep = compat_residuals(V, args.samples, args.seed, args.convention_sign)
    rec = {"command": "compat", "model": m.name, "tol": tol, "residuals": rep.as_dict()}
    ok = rep.passes(tol)
    D = build_total_algebroid(V, args.convention_sign)
    deg = structural_degree_check(D, min(args.samples, 50), args.seed)
    rec["degree_check"] = deg.as_dict()
    ok &= deg.max_violation <= tol
    cross = {}
    for k, A in m.algebroids.items():
        if A.linear_rank is None or A.domain.names != D.domain.names or A.rank != D.rank:
            continue
        x = A.domain.sample(args.samples, args.seed)
        an = float(np.max(np.abs(A.anchor.evaluate(x) - D.anchor.evaluate(x))))
        st = float(np.max(np.abs(A.structure.evaluate(x) - D.structure.evaluate(x))))
        good = max(an, st) <= 1e-9
        cross[k] = {"anchor_residual": an, "bracket_residual": st, "passes": good, "tol": 1e-9}
        ok &= good
    rec["total_algebroid_crosscheck"] = cross
    rec["passes"] = ok
    emit(rec, args)
    return OK if ok else FAILED


def cmd_decompose(args):
    m = _model(args)
    if m.split is None:
        raise Usage(f"model {m.name!r} has no [splitvba] section")
    x = _floats(args.point, "--point")
    if len(x) != m.split.base.dim:
        raise Usage(f"--point needs {m.split.base.dim} coordinates")
    dec = decompose_regular(m.split, np.array(x), args.rank_tol)
    emit({"command": "decompose", "model": m.name, "decomposition": dec.as_dict(),
          "core_anchor_injective": core_anchor_injective(m.split, args.samples, args.seed, args.rank_tol)}, args)
    return OK


def cmd_sphere_check(args):
    m = _model(args)
    tol = _positive_tol(args.tol)
    out, ok = {}, True
    for k in _spheres(m, args.sphere):
        sp, meta = m.spheres[k], m.sphere_meta[k]
        if not isinstance(sp, ASphereFrame):
            out[k] = {"kind": "pullback", "checked": False, "expect": meta["expect"]}
            continue
        rep = sphere_morphism_residual(sp, args.grid)
        valid = rep.passes(tol)
        as_expected = valid == (meta["expect"] == "valid")
        out[k] = {"kind": "frame", "checked": True, **rep.as_dict(), "valid": valid, "expect": meta["expect"],
                  "as_expected": as_expected}
        ok &= as_expected
    emit({"command": "sphere-check", "model": m.name, "tol": tol, "spheres": out, "passes": ok}, args)
    return OK if ok else FAILED


def _holcheck_one(P, N):
    res = {}
    for bundle in ("E", "C"):
        r1 = holonomy_curvature_residual(P, bundle, N)
        r2 = holonomy_curvature_residual(P, bundle, 2 * N)
        order = math.log2(r1 / r2) if r2 > 1e-14 and r1 > 1e-14 else None
        res[bundle] = {"residual": r1, "residual_2N": r2, "observed_order": order}
    return res


def cmd_holcheck(args):
    tol = _positive_tol(args.tol)
    if args.family:
        if args.model:
            raise Usage("give a model or --family, not both")
        fam = {"synthetic": synthetic_pullback(),
               "linear": linear_family([[0.0, 1.0], [-1.0, 0.0]], [[0.5, 0.0], [0.0, -0.5]])}[args.family]
        spheres, name = {args.family: fam}, args.family
    else:
        if not args.model:
            raise Usage("holcheck needs a model or --family")
        m = _model(args)
        spheres, name = m.pullbacks(), m.name
        if args.sphere:
            spheres = {k: spheres[k] for k in _spheres(m, args.sphere)}
    out, ok = {}, True
    for k, P in spheres.items():
        res = _holcheck_one(P, args.grid)
        good = all(v["residual"] <= tol for v in res.values())
        out[k] = {**res, "passes": good}
        ok &= good
    emit({"command": "holcheck", "model": name, "grid": args.grid, "tol": tol, "spheres": out, "passes": ok}, args)
    return OK if ok else FAILED


def cmd_period(args):
    m = _model(args)
    pulls = m.pullbacks()
    out = {}
    for k in _spheres(m, args.sphere):
        res = ob.period(pulls[k], args.grid)
        out[k] = {**res.as_dict(), "expect": m.sphere_meta[k]["expect"]}
    emit({"command": "period", "model": m.name, "periods": out}, args)
    return OK


def _valid_spheres(m, tol_check=1e-6):
    keep = []
    for k, sp in m.spheres.items():
        if m.sphere_meta[k]["expect"] != "valid":
            continue
        if isinstance(sp, ASphereFrame) and not sphere_morphism_residual(sp).passes(tol_check):
            continue
        keep.append(k)
    return keep


def cmd_verdict(args):
    m = _model(args)
    tol = _positive_tol(args.tol)
    if args.assert_A_integrable is not None and args.assert_A_nonintegrable is not None:
        raise Usage("A cannot be asserted both integrable and non-integrable")
    a_int = None
    if args.assert_A_integrable is not None:
        a_int = ob.Assertion(True, args.assert_A_integrable)
    elif args.assert_A_nonintegrable is not None:
        a_int = ob.Assertion(False, args.assert_A_nonintegrable)
    complete = ob.Assertion(True, args.assert_generators_complete) \
        if args.assert_generators_complete is not None else None
    pulls = m.pullbacks()
    periods = [ob.period(pulls[k], args.grid) for k in _valid_spheres(m)]
    rank_a = m.base.rank if m.base is not None else 0
    ev = ob.MonodromyEvidence(tuple(m.generators.values()))
    for p in periods:
        fv = m.sphere_meta[p.sphere].get("fiber_vector")
        if fv is not None and p.max_abs > tol:
            ev = ev + ob.MonodromyEvidence.from_period(p, fv, rank_a)
    inj = core_anchor_injective(m.split, seed=args.seed) if m.split is not None else False
    v = ob.verdict(periods, a_int, complete, tol, ev, inj, args.coeff_bound)
    emit({"command": "verdict", "model": m.name, "core_anchor_injective": inj, **v.as_dict()}, args)
    return OK


def cmd_area_scan(args):
    m = _model(args)
    if m.leaf is None:
        raise Usage(f"model {m.name!r} has no [leaf] section")
    rs, es = _range(args.r, "--r"), _range(args.e, "--e")
    P = m.leaf["poisson"]
    rows = area_scan(P, lambda r, e: leaf_sphere(m, r, e), rs, es, args.grid, h=args.h)
    if args.format == "json":
        emit({"command": "area-scan", "model": m.name, "grid": args.grid, "h": args.h,
              "rows": [r.as_dict() for r in rows]}, args)
        return OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "e", "area", "error_estimate", "dA_dr", "dA_de"])
    for r in rows:
        w.writerow([repr(r.r), repr(r.e), repr(r.area), repr(r.error_estimate), repr(r.dA_dr), repr(r.dA_de)])
    sys.stdout.write(buf.getvalue())
    return OK


def cmd_ruth_check(args):
    m = _model(args)
    tol = _positive_tol(args.tol)
    if m.ruth is None:
        emit({"command": "ruth-check", "model": m.name, "status": "not-applicable",
              "reason": "model has no [ruth] section"}, args)
        return OK
    rep = ruth_axiom_residuals(m.ruth, args.samples, args.seed)
    _, vb = vb_groupoid_from_ruth(m.ruth, args.samples, args.seed, check=False)
    ok = rep.passes(tol, args.convention) and max(vb.associativity, vb.source_residual, vb.target_residual) <= tol
    emit({"command": "ruth-check", "model": m.name, "tol": tol, "convention": args.convention,
          "axioms": rep.as_dict(), "vb_groupoid": vb.as_dict(), "passes": ok}, args)
    return OK if ok else FAILED


def cmd_diff_ruth(args):
    m = _model(args)
    if m.ruth is None:
        raise Usage(f"model {m.name!r} has no [ruth] section")
    R = m.ruth
    x = R.domain.sample(args.samples, args.seed)
    d = differentiate_ruth(R, x, args.step)
    rec = {"command": "diff-ruth", "model": m.name, "step": args.step, "points": x,
           "core_anchor": d.core_anchor, "conn_C": d.conn_c, "conn_E": d.conn_e, "omega": d.omega,
           "omega_convention": d.omega_convention}
    ok = True
    V = m.split
    if V is not None and V.base.domain.names == R.domain.names:
        err = {
            "core_anchor": float(np.max(np.abs(d.core_anchor - V.core_anchor.evaluate(x)))),
            "conn_C": float(np.max(np.abs(d.conn_c - V.conn_c.evaluate(x)))),
            "conn_E": float(np.max(np.abs(d.conn_e - V.conn_e.evaluate(x)))),
            "omega": float(np.max(np.abs(d.omega - V.omega.evaluate(x)))),
        }
        ok = max(err.values()) <= args.tol
        rec["split_comparison"] = {"max_abs_error": err, "tol": args.tol, "passes": ok}
    emit(rec, args)
    return OK if ok else FAILED


# -- parser -------------------------------------------------------------------------

def _sign(text: str) -> int:
    if text in ("+1", "1"):
        return 1
    if text == "-1":
        return -1
    raise argparse.ArgumentTypeError("must be +1 or -1")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="sampling seed (VBOB_SEED overrides)")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--csv", dest="format", action="store_const", const="csv")
    common.add_argument("--convention-sign", type=_sign, default=1, help="sign of omega in the total bracket")

    p = argparse.ArgumentParser(prog="vbob", description="Integrability checks for VB-algebroids.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, model=True, tol=1e-6, samples=100, help_=""):
        sp = sub.add_parser(name, parents=[common], help=help_)
        if model:
            sp.add_argument("model", nargs="?" if model == "optional" else None,
                            help="built-in model name or path to a .vbm file")
        if tol is not None:
            sp.add_argument("--tol", type=float, default=tol)
        if samples is not None:
            sp.add_argument("--samples", type=int, default=samples)
        sp.set_defaults(fn=fn)
        return sp

    add("list-models", cmd_list, model=False, tol=None, samples=None, help_="list built-in models")
    add("axioms", cmd_axioms, help_="anchor and Jacobi residuals, morphisms, ruth axioms")
    add("compat", cmd_compat, samples=200, help_="connection-data compatibility residuals")
    sp = add("decompose", cmd_decompose, tol=None, help_="regular decomposition of the core anchor")
    sp.add_argument("--point", required=True)
    sp.add_argument("--rank-tol", type=float, default=1e-9)
    sp = add("sphere-check", cmd_sphere_check, samples=None, help_="A-sphere morphism residuals")
    sp.add_argument("--sphere")
    sp.add_argument("--grid", type=int, default=41)
    sp = add("holcheck", cmd_holcheck, model="optional", tol=1e-4, samples=None,
             help_="holonomy/curvature identity")
    sp.add_argument("--family", choices=("synthetic", "linear"))
    sp.add_argument("--sphere")
    sp.add_argument("--grid", type=int, default=200)
    sp = add("period", cmd_period, tol=None, samples=None, help_="spherical periods")
    sp.add_argument("--sphere")
    sp.add_argument("--grid", type=int, default=ob.DEFAULT_N)
    sp = add("verdict", cmd_verdict, tol=ob.DEFAULT_TOL, samples=None, help_="integrability verdict")
    sp.add_argument("--assert-A-integrable", metavar="CITE")
    sp.add_argument("--assert-A-nonintegrable", metavar="CITE")
    sp.add_argument("--assert-generators-complete", metavar="CITE")
    sp.add_argument("--grid", type=int, default=ob.DEFAULT_N)
    sp.add_argument("--coeff-bound", type=int, default=10)
    sp = add("area-scan", cmd_area_scan, tol=None, samples=None, help_="leaf areas and gradients (CSV)")
    sp.add_argument("--r", required=True, metavar="A:B:STEP")
    sp.add_argument("--e", required=True, metavar="A:B:STEP")
    sp.add_argument("--grid", type=int, default=201)
    sp.add_argument("--h", type=float, default=1e-4)
    sp = add("ruth-check", cmd_ruth_check, samples=200, help_="ruth axioms and VB-groupoid laws")
    sp.add_argument("--convention", choices=(CORRECTED, LITERAL), default=CORRECTED)
    sp = add("diff-ruth", cmd_diff_ruth, tol=1e-5, samples=5, help_="differentiate a ruth")
    sp.add_argument("--step", type=float, default=1e-4)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else USAGE
    env_seed = os.environ.get("VBOB_SEED")
    if env_seed is not None:
        try:
            args.seed = int(env_seed)
        except ValueError:
            print(f"vbob: VBOB_SEED must be an integer, got {env_seed!r}", file=sys.stderr)
            return USAGE
    if args.format is None:
        args.format = "csv" if args.command == "area-scan" else "text"
    if args.format == "csv" and args.command != "area-scan":
        print("vbob: --csv is only available for area-scan", file=sys.stderr)
        return USAGE
    try:
        return args.fn(args)
    except (Usage, UnknownModel, ModelError, ob.UsageError, DomainError, FileNotFoundError) as exc:
        msg = str(exc) if not isinstance(exc, UnknownModel) else UnknownModel.__str__(exc)
        print(f"vbob: {msg}", file=sys.stderr)
        return USAGE
    except (NumericError, NotLeafTangent, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"vbob: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC


if __name__ == "__main__":
    sys.exit(main())

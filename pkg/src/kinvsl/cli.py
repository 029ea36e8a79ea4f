"""kinvsl command line.

    kinvsl verify|classify|spectrum|schroeder|transform|abstract-lab SPEC [flags]
    kinvsl gallery list
    kinvsl gallery run ID [--name value ...]

SPEC is a JSON problem file or a gallery id.  Exit codes: 0 all checks
passed, 1 a check failed, 2 bad input.  KINVSL_THREADS caps the number of
worker threads (and of BLAS threads, when set before startup).
"""
from __future__ import annotations

import os

_threads = os.environ.get("KINVSL_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from typing import Dict, List, Optional  # noqa: E402

import numpy as np  # noqa: E402

from . import gallery  # noqa: E402
from .funcalg import ParseError, UnknownIdentifier  # noqa: E402

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    pass


# --------------------------------------------------------------------------
# deterministic JSON
# --------------------------------------------------------------------------

def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return "%.12e" % v


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with insertion-ordered keys and floats as %.12e."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps({"re": float(obj.real), "im": float(obj.imag)}, indent, _level)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _emit(report, out: Optional[str]):
    text = dumps(report) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# spec loading
# --------------------------------------------------------------------------

def _endpoint(v) -> float:
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "-inf"):
        return float(v)
    raise InputError(f"bad interval endpoint {v!r}")


def _parse_overrides(pairs: List[str]) -> Dict[str, float]:
    out = {}
    for p in pairs or []:
        k, sep, v = p.partition("=")
        if not sep:
            raise InputError(f"parameter override {p!r} must look like name=value")
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise InputError(f"parameter {k!r} needs a number") from None
    return out


def load_spec(spec: str, overrides: Optional[Dict[str, float]] = None,
              L: Optional[float] = None) -> gallery.Built:
    """A gallery id, or a JSON file with interval, p, q, r, params, K and
    optionally gallery_id, singular and truncation."""
    overrides = dict(overrides or {})
    if spec in gallery.GALLERY:
        return _from_gallery(spec, overrides, L)
    try:
        with open(spec, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"no such spec file or gallery id: {spec}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"spec is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("spec must be a JSON object")
    if "gallery_id" in data and not {"p", "q", "r"} & set(data):
        params = dict(data.get("params", {}))
        params.update(overrides)
        return _from_gallery(data["gallery_id"], params, L)
    missing = [k for k in ("interval", "p", "q", "r", "K") if k not in data]
    if missing:
        raise InputError(f"spec lacks {', '.join(missing)}")
    iv = data["interval"]
    if not (isinstance(iv, list) and len(iv) == 2):
        raise InputError("interval must be a two-element list")
    a, b = _endpoint(iv[0]), _endpoint(iv[1])
    params = {k: float(v) for k, v in data.get("params", {}).items()}
    params.update(overrides)
    Ksp = data["K"]
    if not isinstance(Ksp, dict) or "A" not in Ksp or "phi" not in Ksp:
        raise InputError("K needs A and phi")
    trunc = L if L is not None else data.get("truncation")
    if (math.isinf(a) or math.isinf(b)) and trunc is None:
        raise InputError("infinite endpoints need --L or a 'truncation' entry in the JSON file")
    singular = tuple(float(s) for s in data.get("singular", ()))
    try:
        built = gallery._make(str(data["p"]), str(data["q"]), str(data["r"]), a, b, str(Ksp["A"]),
                              str(Ksp["phi"]), Ksp.get("phi_inv"), float(Ksp.get("C", 1.0)),
                              params, singular=singular, name=str(data.get("name", "")),
                              grid_length=float(trunc) if trunc is not None else None)
    except (ParseError, UnknownIdentifier):
        raise
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid spec: {exc}") from None
    return built


def _from_gallery(gid: str, params: Dict[str, float], L: Optional[float]) -> gallery.Built:
    if gid not in gallery.GALLERY:
        raise InputError(f"unknown gallery id {gid!r}")
    try:
        built = gallery.get(gid, **params)
    except KeyError as exc:
        raise InputError(str(exc)) from None
    if L is not None:
        built.problem.truncation = float(L)
    return built


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _verify_report(built: gallery.Built, N: int, tol: float) -> Dict:
    from .ktransform import graded_grid, residual_coefficient_eqs
    grid = graded_grid(built.problem, N)
    res = residual_coefficient_eqs(built.problem, built.K, grid=grid)
    failed = [k for k, v in res.items() if not v <= tol]
    return {"problem": built.problem.name, "grid_points": int(grid.size), "tolerance": tol,
            "residuals": res, "failed": failed, "passed": not failed}


def cmd_verify(args) -> int:
    built = load_spec(args.spec, _parse_overrides(args.param), args.L)
    rep = _verify_report(built, args.grid, args.tol_residual)
    _emit(rep, args.out)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def _tag(angle: float) -> str:
    from .extensions import canonical_angle, same_angle
    a = canonical_angle(angle)
    if a == 0.0:
        return "Dirichlet"
    if same_angle(a, math.pi / 2):
        return "Neumann"
    return "Robin"


def _classify_report(built: gallery.Built) -> Dict:
    from .extensions import classify_invariant_extensions
    raw = classify_invariant_extensions(built.problem, built.K)
    ends = {}
    for side, e in raw["endpoints"].items():
        entry = {"endpoint": e["endpoint"], "class": e["class"]}
        if "angles" in e:
            entry["invariant_set"] = e["invariant_set"]
            entry["invariant"] = [_tag(a) for a in e["angles"]] if e["invariant_set"] != "all" else "all"
            entry["angles"] = e["angles"]
            entry["robin_mu"] = e["robin_mu"]
            entry["M"] = e["M"]
        else:
            entry["conditions"] = e["conditions"]
        ends[side] = entry
    krein = {s: {"tag": _tag(k["angle"]), "angle": k["angle"], "robin_mu": k["robin_mu"],
                 "source": k["source"]} for s, k in raw["krein"].items()}
    friedrichs = {s: "Dirichlet" for s in raw["friedrichs"]}
    return {"problem": built.problem.name, "endpoints": ends, "friedrichs": friedrichs,
            "krein": krein, "coupled": raw["coupled"]}


def cmd_classify(args) -> int:
    built = load_spec(args.spec, _parse_overrides(args.param), args.L)
    _emit(_classify_report(built), args.out)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    from .spectral import eigen_table, parse_bc, write_csv
    built = load_spec(args.spec, _parse_overrides(args.param), args.L)
    try:
        bcs = [parse_bc(t) for t in args.bc]
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rows = eigen_table(built.problem, bcs, args.N, args.L, args.count)
    buf = io.StringIO()
    write_csv(rows, buf)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_schroeder(args) -> int:
    from .ktransform import graded_grid
    from .schroeder import KoenigsFn, verify_schroeder
    built = load_spec(args.spec, _parse_overrides(args.param), args.L)
    K, problem = built.K, built.problem
    ends = [d for d in (problem.a, problem.b) if math.isfinite(d)]
    if args.fixed_point is not None:
        ends = [args.fixed_point]
    report = {"problem": problem.name, "fixed_points": []}
    ok = True
    grid = graded_grid(problem, args.grid, levels=8)
    for d in ends:
        slope = float(K.phi.d1(np.array([d]))[0])
        if not math.isfinite(slope) or abs(slope) >= 1.0:
            report["fixed_points"].append({"d": d, "phi_prime": slope, "attracting": False})
            continue
        sigma = KoenigsFn(K.phi, d)
        res = verify_schroeder(sigma, K.inverse_phi, 1.0 / slope, grid)
        report["fixed_points"].append({"d": d, "phi_prime": slope, "attracting": True,
                                       "eigenvalue": 1.0 / slope, "residual": res})
        ok &= res <= args.tol_residual
    if "P" in built.facts or "Q" in built.facts:
        from .schroeder import integrated_orientations
        integrated = {}
        for which in ("P", "Q"):
            if which in built.facts:
                integrated[which] = integrated_orientations(
                    problem, K, which, built.facts[f"{which}_anchor"],
                    sign=built.facts.get(f"{which}_sign", 1.0))
        report["integrated"] = integrated
    report["passed"] = bool(ok)
    _emit(report, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_transform(args) -> int:
    from .lgtransform import LGValidationError, lg_build, lg_grid, lg_potential, lg_transform_K
    from .ktransform import residual_coefficient_eqs, schrodinger_residual
    from .lgtransform import lg_problem
    built = load_spec(args.spec, _parse_overrides(args.param), args.L)
    anchor = args.anchor
    orientation = args.orientation
    lg = built.facts.get("lg")
    if anchor is None and lg:
        anchor, orientation = lg["anchor"], lg["orientation"]
    m = lg_build(built.problem, anchor, orientation)
    grid = lg_grid(built.problem, m, args.points)
    V = lg_potential(built.problem, m)
    report = {"problem": built.problem.name, "anchor": m.anchor, "orientation": m.orientation,
              "cal_A": m.cal_A, "cal_B": m.cal_B}
    ok = True
    try:
        Kt = lg_transform_K(built.problem, built.K, m, validate=False)
        target = lg_problem(built.problem, m)
        res = residual_coefficient_eqs(target, Kt, grid=grid)
        report["transformed_residuals"] = res
        report["schroedinger_identity"] = schrodinger_residual(Kt, grid)
        ok = all(v <= args.tol_residual for v in res.values())
    except LGValidationError as exc:
        report["error"] = str(exc)
        ok = False
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("xi,x,V,A_tilde,phi_tilde\n")
            xs = m.inverse(grid)
            cols = [grid, xs, V(grid), Kt.A(grid), Kt.phi(grid)]
            for row in zip(*cols):
                fh.write(",".join("%.12e" % v for v in row) + "\n")
    report["passed"] = bool(ok)
    _emit(report, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def _block_json(c: float, d: float, mu: float) -> Dict:
    from .bkvglab import block_report, build_block_model
    rep = block_report(build_block_model(c, d, mu=mu))
    exts = [{"name": e["name"], "dimension": e["dimension"], "verified": e["verified"],
             "invariant": e["invariant"], "row_mismatch": e["row_mismatch"],
             "rows": e["rows"]} for e in rep["extensions"]]
    return {"K_tilde": rep["K_tilde"], "eigenvalues": rep["eigenvalues"],
            "expected_eigenvalues": rep["expected_eigenvalues"],
            "eigenvector_error": rep["eigenvector_error"], "count": rep["count"],
            "extensions": exts, "off_span": rep["off_span"]}


def _enum_json(enum: Dict) -> Dict:
    return {"kernel_dimension": enum["kernel_dimension"],
            "eigenvalues": [c.value for c in enum["clusters"]],
            "count": enum["count"], "parameterized": enum["parameterized"],
            "extensions": [{"label": e["label"], "dimension": e["dimension"], "B": e["B"],
                            "verified": e["verified"]} for e in enum["extensions"]],
            "families": [{"label": e["label"], "dimension": e["dimension"], "B": e["B"],
                          "verified": e["verified"]} for e in enum["families"]]}


def cmd_abstract_lab(args) -> int:
    from .bkvglab import (build_scalar_model, defect_one_admissible, enumerate_invariant_extensions,
                          synthetic_model)
    overrides = _parse_overrides(args.param)
    if args.zeta is not None:
        z = complex(args.zeta.replace(" ", ""))
        cand = [0, 0.5, 1, 1j, 1 + 1j]
        rep = {"K_tilde": z, "admissible_b": defect_one_admissible(z, cand), "candidates": cand,
               "enumeration": _enum_json(enumerate_invariant_extensions(synthetic_model([[z]])))}
        _emit(rep, args.out)
        return EXIT_OK
    if args.spec is None:
        raise InputError("abstract-lab needs SPEC or --zeta")
    if args.spec == "example_3_14":
        params = dict(gallery.GALLERY["example_3_14"].defaults)
        params.update(overrides)
        rep = _block_json(params["c"], params["d"], params["mu"])
        ok = rep["count"] == 4 and all(e["verified"] and e["invariant"] for e in rep["extensions"])
        _emit(rep, args.out)
        return EXIT_OK if ok else EXIT_FAIL
    built = load_spec(args.spec, overrides, args.L)
    model = build_scalar_model(built.problem, built.K, args.N)
    rep = {"problem": built.problem.name, "K_tilde": model.K_tilde, "off_span": model.off_span,
           "enumeration": _enum_json(enumerate_invariant_extensions(model))}
    ok = model.off_span <= 1e-6
    rep["passed"] = bool(ok)
    _emit(rep, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_gallery(args, extra: List[str]) -> int:
    if args.action == "list":
        rows = [{"id": e.id, "summary": e.summary, "defaults": e.defaults}
                for e in gallery.GALLERY.values()]
        _emit(rows, args.out)
        return EXIT_OK
    if not args.id:
        raise InputError("gallery run needs an id")
    if args.id not in gallery.GALLERY:
        raise InputError(f"unknown gallery id {args.id!r}")
    params = _parse_overrides(args.param)
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise InputError(f"unexpected argument {tok!r}")
        name = tok[2:]
        if "=" in name:
            name, val = name.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise InputError(f"--{name} needs a value")
        try:
            params[name] = float(val)
        except ValueError:
            raise InputError(f"--{name} needs a number") from None
    entry = gallery.GALLERY[args.id]
    unknown = set(params) - set(entry.defaults)
    if unknown:
        raise InputError(f"unknown parameter(s) for {args.id}: {sorted(unknown)}")
    if not entry.scalar:
        p = dict(entry.defaults)
        p.update(params)
        rep = {"id": args.id, "params": p, "block": _block_json(p["c"], p["d"], p["mu"])}
        ok = rep["block"]["count"] == 4
        _emit(rep, args.out)
        return EXIT_OK if ok else EXIT_FAIL
    built = _from_gallery(args.id, params, None)
    rep = {"id": args.id, "params": built.source["params"],
           "verify": _verify_report(built, 1000, 1e-10)}
    try:
        rep["classify"] = _classify_report(built)
    except Exception as exc:  # classification failures are reported, not fatal
        rep["classify"] = {"error": str(exc)}
    try:
        from .slcore import k_eigenvalue_on_kernel
        z = k_eigenvalue_on_kernel(built.problem, built.K)
        rep["zeta"] = {"value": z.zeta, "spread": z.spread, "in_l2": z.in_l2,
                       "expected": built.facts.get("zeta")}
    except Exception as exc:
        rep["zeta"] = {"error": str(exc)}
    _emit(rep, args.out)
    return EXIT_OK if rep["verify"]["passed"] else EXIT_FAIL


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinvsl", description="K-invariance toolkit for Sturm-Liouville problems")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, spec_required=True):
        if spec_required:
            p.add_argument("spec", help="JSON spec file or gallery id")
        p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                       help="override a parameter")
        p.add_argument("--L", type=float, default=None, help="truncation length for infinite ends")
        p.add_argument("--out", default=None, help="write the report here instead of stdout")

    p = sub.add_parser("verify", help="coefficient functional equations")
    common(p)
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--tol-residual", type=float, default=1e-10)

    p = sub.add_parser("classify", help="endpoint classes and invariant boundary conditions")
    common(p)

    p = sub.add_parser("spectrum", help="smallest eigenvalues as CSV")
    common(p)
    p.add_argument("--bc", action="append", default=None,
                   help="dirichlet | neumann | robin:alpha,beta | coupled:R11,R12,R21,R22")
    p.add_argument("--N", type=int, action="append", default=None)
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--tol-eig", type=float, default=1e-10)

    p = sub.add_parser("schroeder", help="Koenigs functions and integrated equations")
    common(p)
    p.add_argument("--fixed-point", type=float, default=None)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--tol-residual", type=float, default=1e-9)

    p = sub.add_parser("transform", help="Liouville-Green transformation")
    common(p)
    p.add_argument("--anchor", type=float, default=None)
    p.add_argument("--orientation", type=float, default=1.0, choices=[1.0, -1.0])
    p.add_argument("--points", type=int, default=500)
    p.add_argument("--csv", default=None, help="write xi, x, V, A~, phi~ samples")
    p.add_argument("--tol-residual", type=float, default=1e-8)

    p = sub.add_parser("gallery", help="bundled examples")
    p.add_argument("action", choices=["list", "run"])
    p.add_argument("id", nargs="?")
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--out", default=None)

    p = sub.add_parser("abstract-lab", help="kernel-level invariance enumeration")
    p.add_argument("spec", nargs="?", default=None)
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--L", type=float, default=None)
    p.add_argument("--N", type=int, default=2000)
    p.add_argument("--zeta", default=None, help="synthetic defect-one model with K~ = zeta (Python complex syntax)")
    p.add_argument("--out", default=None)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args, extra = ap.parse_known_args(argv)
    if extra and args.command != "gallery":
        ap.error(f"unrecognized arguments: {' '.join(extra)}")
    if args.command == "spectrum":
        args.bc = args.bc or ["dirichlet"]
        args.N = args.N or [1000]
    handlers = {"verify": cmd_verify, "classify": cmd_classify, "spectrum": cmd_spectrum,
                "schroeder": cmd_schroeder, "transform": cmd_transform,
                "abstract-lab": cmd_abstract_lab}
    try:
        if args.command == "gallery":
            return cmd_gallery(args, extra)
        return handlers[args.command](args)
    except (InputError, ParseError, UnknownIdentifier) as exc:
        sys.stderr.write(f"kinvsl: input error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

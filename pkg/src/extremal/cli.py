"""Batch front end: ``extremal <command> --body B --queries Q --out DIR``.

Body and query files are JSON or YAML. Complex numbers may be written as
plain numbers, strings such as ``"0.3-0.2j"`` or ``[re, im]`` pairs; a
vector is a list of those.

Every flag can also be set through an environment variable named
``EXTREMAL_<FLAG>`` (``--tol-gap`` -> ``EXTREMAL_TOL_GAP``); flags win.

Exit status: 0 on success, 1 when some query failed (the report keeps the
rows that were computed), 2 on usage or parse errors (nothing is written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import gauge as G
from . import metrics as MT
from . import retraction as RT
from .disc_space import DiscPoly, Divisor, JetData
from .dual_certificate import (StationaryError, certificate_from_polish, certify,
                               polish_stationary, solve_dual)
from .primal_solver import solve_primal

log = logging.getLogger("extremal")

ENV_PREFIX = "EXTREMAL_"
COMMANDS = ("metric", "distance", "certify", "retract", "ck-check", "table", "diagnostics")
TABLE_TOL = 1e-5


class InputError(ValueError):
    """Malformed body or query file."""


@dataclass
class RunConfig:
    body: str | None = None
    queries: str | None = None
    degree: int = 32
    grid: int | None = None
    tol_primal: float = 1e-9
    tol_gap: float = 1e-3
    tol_flat: float | None = None
    tol_align: float = 1e-3
    tol_m: float = MT.TOL_M
    out: str = "."
    seed: int = 0

    def validate(self):
        for name in ("tol_primal", "tol_gap", "tol_align", "tol_m"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if self.tol_flat is not None and not self.tol_flat > 0:
            raise InputError("tol_flat must be positive")
        if self.degree < 1:
            raise InputError("degree must be at least 1")
        if self.grid is not None and self.grid < 8 * self.degree:
            raise InputError(f"grid {self.grid} is below 8 * degree = {8 * self.degree}")


# --------------------------------------------------------------------------
# parsing


def load_structured(path: str):
    """Parse a JSON or YAML file, reporting line and column on failure."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    if path.endswith(".json"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"{mark.line + 1}:{mark.column + 1}" if mark else "?:?"
        raise InputError(f"{path}:{where}: {exc.problem or exc.context}") from None
    except yaml.YAMLError as exc:
        raise InputError(f"{path}: {exc}") from None


def parse_complex(x) -> complex:
    if isinstance(x, bool):
        raise InputError(f"not a complex number: {x!r}")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", "").replace("i", "j"))
        except ValueError:
            raise InputError(f"not a complex number: {x!r}") from None
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(
            isinstance(t, (int, float)) and not isinstance(t, bool) for t in x):
        return complex(x[0], x[1])
    raise InputError(f"not a complex number: {x!r}")


def parse_vector(x, n: int | None = None, name: str = "vector") -> np.ndarray:
    if not isinstance(x, (list, tuple)):
        x = [x]
    v = np.array([parse_complex(t) for t in x], dtype=complex)
    if n is not None and v.size != n:
        raise InputError(f"{name} has {v.size} entries, body dimension is {n}")
    return v


def parse_body(spec) -> G.ConvexBody:
    if not isinstance(spec, dict):
        raise InputError("body spec must be a mapping")
    spec = dict(spec.get("body", spec))
    if spec.get("kind") == "disc":
        spec = {"kind": "ball", "dim": 1}
    try:
        return G.body_from_dict(spec)
    except (G.GaugeError, TypeError, ValueError) as exc:
        raise InputError(f"body spec: {exc}") from None


def parse_queries(data, n: int) -> list:
    if isinstance(data, dict):
        data = data.get("queries")
    if not isinstance(data, list) or not data:
        raise InputError("query file must hold a non-empty list of queries")
    out = []
    for k, q in enumerate(data):
        if not isinstance(q, dict):
            raise InputError(f"query {k}: expected a mapping")
        qid = str(q.get("id", f"q{k:03d}"))
        kind = q.get("type")
        if kind not in ("metric", "distance", "ck_check", "certify", "retract", "diagnostics"):
            raise InputError(f"query {qid}: unknown type {kind!r}")
        item = {"id": qid, "type": kind}
        try:
            for key in ("a", "v", "b"):
                if key in q:
                    item[key] = parse_vector(q[key], n, f"query {qid}: {key}")
            if "points" in q:
                item["points"] = [parse_vector(p, n, f"query {qid}: point") for p in q["points"]]
            if "t" in q:
                item["t"] = float(q["t"])
            if "tol" in q:
                item["tol"] = float(q["tol"])
            if "analytic" in q:
                item["analytic"] = float(q["analytic"])
            if "disc" in q:
                item["disc"] = DiscPoly(np.array([parse_vector(c, n, "disc coefficient") for c in q["disc"]]))
            if "divisor" in q:
                item["divisor"] = Divisor.from_dict(q["divisor"])
                item["jets"] = JetData(tuple(np.array([parse_vector(v, n) for v in node])
                                             for node in q["jets"]))
        except InputError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"query {qid}: {exc}") from None
        need = {"metric": ("a", "v"), "ck_check": ("a", "v"), "diagnostics": ("a", "v"),
                "retract": ("a", "v", "points"), "distance": ("a", "b")}.get(kind, ())
        missing = [key for key in need if key not in item]
        if missing:
            raise InputError(f"query {qid}: missing {', '.join(missing)}")
        if kind == "certify" and "divisor" not in item and not ("a" in item and ("v" in item or "b" in item)):
            raise InputError(f"query {qid}: certify needs a, v (or a, b, t) or divisor and jets")
        out.append(item)
    ids = [q["id"] for q in out]
    if len(set(ids)) != len(ids):
        raise InputError("query ids must be unique")
    return out


# --------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    if isinstance(x, (complex, np.complexfloating)):
        return f"{complex(x).real:.12g}{complex(x).imag:+.12g}j"
    return str(x)


def write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def write_json(path: Path, obj):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    os.replace(tmp, path)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(t) for t in x.tolist()] if x.dtype.kind == "c" else x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, list):
        return [_jsonable(t) for t in x]
    raise TypeError(f"cannot serialise {type(x).__name__}")


# --------------------------------------------------------------------------
# commands


def _select(queries, kind):
    sel = [q for q in queries if q["type"] == kind]
    if not sel:
        raise InputError(f"no {kind} queries in the query file")
    return sel


def _run(queries, fn):
    """Apply ``fn`` per query; failures become error rows, never abort the batch."""
    rows, details, timings, failed = [], [], [], 0
    for q in queries:
        t0 = time.perf_counter()
        try:
            row, det = fn(q)
        except Exception as exc:           # reported per query, batch continues
            log.error("query %s failed: %s", q["id"], exc)
            row, det = None, {"id": q["id"], "error": f"{type(exc).__name__}: {exc}"}
            failed += 1
        rows.append((q, row))
        details.append(det)
        timings.append((q["id"], time.perf_counter() - t0))
    return rows, details, timings, failed


def _finish(cfg, name, header, rows, details, timings, failed):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    body = []
    for q, row in rows:
        body.append([q["id"]] + (list(row) if row is not None else ["error"] + [""] * (len(header) - 2)))
    write_csv(out / f"{name}.csv", header, body)
    # wall times vary run to run, so they live apart from the deterministic reports
    write_json(out / f"{name}.json", [{k: v for k, v in d.items() if k != "wall_time"} for d in details])
    write_csv(out / f"{name}_timings.csv", ["query_id", "wall_time"], timings)
    return 1 if failed else 0


def _analytic(body, q, kind):
    """Known value for the query: given in the file, or closed form on the unit disc."""
    if "analytic" in q:
        return q["analytic"]
    if body.kind == "ball" and body.dim == 1:
        a = complex(q["a"][0])
        if kind == "metric":
            return abs(complex(q["v"][0])) / (1 - abs(a) ** 2)
        return MT.poincare_distance(a, complex(q["b"][0]))
    return None


def _bracket_row(body, q, kind, r, tol):
    """``lower, upper, gap, analytic, pass, iterations, flags``.

    ``pass`` means the bracket holds the analytic value (within ``TABLE_TOL``)
    when one is known, and ``gap <= tol`` otherwise.
    """
    exact = _analytic(body, q, kind)
    if exact is None:
        ok = r.gap <= tol
    else:
        ok = r.lower - TABLE_TOL <= exact <= r.upper + TABLE_TOL
    return (r.lower, r.upper, r.gap, "" if exact is None else exact, ok, r.iterations, ";".join(r.flags))


BRACKET_HEADER = ["query_id", "lower", "upper", "gap", "analytic", "pass", "iterations", "flags"]


def _bracket_code(code, res):
    if any(row is not None and not row[4] for _, row in res[0]):
        code = max(code, 1)
    return code


def cmd_metric(cfg: RunConfig, body, queries) -> int:
    def one(q):
        tol = q.get("tol", cfg.tol_m)
        r = MT.kobayashi_metric(body, q["a"], q["v"], tol=tol, N=cfg.degree,
                                tol_primal=cfg.tol_primal, M=cfg.grid)
        return _bracket_row(body, q, "metric", r, tol), dict(id=q["id"], **r.to_dict())
    res = _run(_select(queries, "metric"), one)
    return _bracket_code(_finish(cfg, "metric", BRACKET_HEADER, *res), res)


def cmd_distance(cfg: RunConfig, body, queries) -> int:
    def one(q):
        tol = q.get("tol", cfg.tol_m)
        r = MT.kobayashi_distance(body, q["a"], q["b"], tol=tol, N=cfg.degree,
                                  tol_primal=cfg.tol_primal, M=cfg.grid)
        return _bracket_row(body, q, "distance", r, tol), dict(id=q["id"], **r.to_dict())
    res = _run(_select(queries, "distance"), one)
    return _bracket_code(_finish(cfg, "distance", BRACKET_HEADER, *res), res)


def cmd_ck_check(cfg: RunConfig, body, queries) -> int:
    def one(q):
        r = MT.verify_ck_equality(body, q["a"], q["v"], tol=q.get("tol", 1e-3), N=cfg.degree,
                                  seed=cfg.seed, M=cfg.grid)
        return ((r.K_lower, r.K_upper, r.C_lower, r.weak, r.passed),
                dict(id=q["id"], **r.to_dict()))
    res = _run(_select(queries, "ck_check"), one)
    code = _finish(cfg, "ck_check", ["query_id", "K_lower", "K_upper", "C_lower", "weak", "pass"], *res)
    if any(row is not None and not row[-1] for _, row in res[0]):
        code = max(code, 1)
    return code


def _certify_problem(q):
    if "divisor" in q:
        return q["divisor"], q["jets"]
    if "v" in q:
        return Divisor.origin(2), JetData((np.array([q["a"], q["v"]]),))
    t = q.get("t", 0.5)
    return Divisor.pair(t), JetData((q["a"][None, :], q["b"][None, :]))


def cmd_certify(cfg: RunConfig, body, queries) -> int:
    def one(q):
        div, jets = _certify_problem(q)
        N = cfg.degree
        f = q.get("disc")
        if f is None:
            f = solve_primal(body, div, jets, N=N, M=cfg.grid, tol=cfg.tol_primal).f
        cert = None
        if body.is_smooth and div == Divisor.origin(2) and f.degree >= 2:
            try:
                pol = polish_stationary(body, div, jets, f)
                if pol.converged:
                    f, cert = pol.f, certificate_from_polish(body, pol)
            except StationaryError as exc:
                log.info("query %s: polishing skipped (%s)", q["id"], exc)
        if cert is None:
            cert = solve_dual(body, div, jets, K_dual=max(N, f.degree), tol=1e-10)
        rep = certify(body, f, cert, tol_gap=cfg.tol_gap, tol_flat=cfg.tol_flat, tol_align=cfg.tol_align)
        det = dict(id=q["id"], report=rep.to_dict(), disc=f.to_dict(), dual=cert.h.to_dict())
        return ((rep.primal_value, rep.dual_norm, rep.gap, rep.flatness, rep.alignment, rep.passed), det)
    res = _run(_select(queries, "certify"), one)
    code = _finish(cfg, "certify",
                   ["query_id", "primal_value", "dual_norm", "gap", "flatness", "alignment", "pass"], *res)
    if any(row is not None and not row[-1] for _, row in res[0]):
        code = max(code, 1)
    return code


def cmd_retract(cfg: RunConfig, body, queries) -> int:
    sel = _select(queries, "retract")
    rows, details, timings, failed = [], [], [], 0
    for q in sel:
        t0 = time.perf_counter()
        try:
            flat, lam, m = MT.extremal_retraction(body, q["a"], q["v"], N=cfg.degree)
            pts = []
            for k, z in enumerate(q["points"]):
                c = RT.caratheodory_candidate(flat, z)
                g = flat.f(c)
                rows.append([q["id"], k, c.real, c.imag, json.dumps(_jsonable(g.astype(complex)))])
                pts.append({"point": z, "c": c, "retract": g})
            details.append({"id": q["id"], "lambda": lam, "boundary_value": m,
                            "bezout_residual": None if flat.bezout is None else flat.bezout.residual,
                            "points": pts})
        except Exception as exc:
            log.error("query %s failed: %s", q["id"], exc)
            rows.append([q["id"], "", "error", "", ""])
            details.append({"id": q["id"], "error": f"{type(exc).__name__}: {exc}"})
            failed += 1
        timings.append((q["id"], time.perf_counter() - t0))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "retract.csv", ["query_id", "point", "c_re", "c_im", "retract"], rows)
    write_json(out / "retract.json", details)
    write_csv(out / "retract_timings.csv", ["query_id", "wall_time"], timings)
    return 1 if failed else 0


def cmd_diagnostics(cfg: RunConfig, body, queries) -> int:
    if not (body.kind == "ball" or (body.kind == "complex_ellipsoid" and np.all(body.exponents >= 1))):
        raise InputError("diagnostics need a ball or a complex ellipsoid with exponents >= 1")

    def one(q):
        if not np.any(q["v"]):
            prof = MT.boundary_profiles(body, DiscPoly(np.atleast_2d(q["a"])))
        else:
            r = MT.kobayashi_metric(body, q["a"], q["v"], N=cfg.degree, tol_primal=cfg.tol_primal, M=cfg.grid)
            prof = MT.boundary_profiles(body, r.extremal_disc)
        return ((prof["max_distance_ratio"], prof["max_derivative_ratio"]), dict(id=q["id"], **prof))
    res = _run(_select(queries, "diagnostics"), one)
    return _finish(cfg, "diagnostics", ["query_id", "max_distance_ratio", "max_derivative_ratio"], *res)


def table_suite(seed: int = 0, count: int = 3) -> list:
    """Closed-form comparison queries: ``(body name, body, kind, a, v or b, analytic)``."""
    rng = np.random.default_rng(seed)

    def cvec(n, scale=1.0):
        return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)

    def in_disc(r):
        return np.array([r * np.sqrt(rng.random()) * np.exp(2j * np.pi * rng.random())])

    out = []
    for _ in range(count):
        v = cvec(2)
        out.append(("ball2", G.ball(2), "metric", np.zeros(2, complex), v, float(np.linalg.norm(v))))
    for _ in range(count):
        v = cvec(2)
        out.append(("polydisc2", G.polydisc(2), "metric", np.zeros(2, complex), v, float(np.abs(v).max())))
    for _ in range(count):
        a = in_disc(0.5)
        v = cvec(1)
        out.append(("disc", G.ball(1), "metric", a, v, float(abs(v[0]) / (1 - abs(a[0]) ** 2))))
    for _ in range(count):
        a, b = in_disc(0.5), in_disc(0.5)
        out.append(("disc", G.ball(1), "distance", a, b, MT.poincare_distance(a[0], b[0])))
    r = 0.2 + 0.6 * rng.random()
    out.append(("ball2", G.ball(2), "distance", np.zeros(2, complex), np.array([r, 0], complex),
                float(np.arctanh(r))))
    return out


def _vec_str(x) -> str:
    return "(" + ",".join(_fmt(complex(t)) for t in x) + ")"


def cmd_table(cfg: RunConfig, body=None, queries=None) -> int:
    rows, details, failed = [], [], 0
    for name, bd, kind, a, w, exact in table_suite(cfg.seed):
        label = f"{kind} a={_vec_str(a)} {'v' if kind == 'metric' else 'b'}={_vec_str(w)}"
        try:
            if kind == "metric":
                r = MT.kobayashi_metric(bd, a, w, N=cfg.degree, tol_primal=cfg.tol_primal)
            else:
                r = MT.kobayashi_distance(bd, a, w, N=cfg.degree, tol_primal=cfg.tol_primal)
            ok = r.lower - TABLE_TOL <= exact <= r.upper + TABLE_TOL
            rows.append([name, label, exact, r.lower, r.upper, r.gap, ok])
            failed += not ok
        except Exception as exc:
            log.error("%s %s failed: %s", name, label, exc)
            rows.append([name, label, exact, "", "", "", "error"])
            failed += 1
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "table.csv",
              ["body", "query", "analytic", "computed_lower", "computed_upper", "gap", "pass"], rows)
    return 1 if failed else 0


HANDLERS = {"metric": cmd_metric, "distance": cmd_distance, "certify": cmd_certify,
            "retract": cmd_retract, "ck-check": cmd_ck_check, "table": cmd_table,
            "diagnostics": cmd_diagnostics}


# --------------------------------------------------------------------------
# entry point


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="extremal",
                                description="Extremal discs, Kobayashi metric brackets and retractions.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--body", default=_env("body"), help="body spec (JSON or YAML)")
    p.add_argument("--queries", default=_env("queries"), help="query file (JSON or YAML)")
    p.add_argument("--degree", type=int, default=_env("degree", "32"), help="disc degree N")
    p.add_argument("--grid", type=int, default=_env("grid"), help="boundary grid M (>= 8N)")
    p.add_argument("--tol-primal", type=float, default=_env("tol-primal", "1e-9"))
    p.add_argument("--tol-gap", type=float, default=_env("tol-gap", "1e-3"))
    p.add_argument("--tol-flat", type=float, default=_env("tol-flat"))
    p.add_argument("--tol-align", type=float, default=_env("tol-align", "1e-3"))
    p.add_argument("--tol-m", type=float, default=_env("tol-m", str(MT.TOL_M)))
    p.add_argument("--out", default=_env("out", "."), help="output directory")
    p.add_argument("--seed", type=int, default=_env("seed", "0"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = RunConfig(args.body, args.queries, args.degree, args.grid, args.tol_primal, args.tol_gap,
                    args.tol_flat, args.tol_align, args.tol_m, args.out, args.seed)
    try:
        cfg.validate()
        body, queries = None, None
        if args.command != "table":
            if not cfg.body or not cfg.queries:
                raise InputError(f"{args.command} needs --body and --queries")
            body = parse_body(load_structured(cfg.body))
            queries = parse_queries(load_structured(cfg.queries), body.dim)
        return HANDLERS[args.command](cfg, body, queries)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

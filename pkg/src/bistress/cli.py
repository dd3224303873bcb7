"""Command-line front end: list catalog maps, evaluate tensors, run suites.

Exit codes: 0 all checks pass, 1 some check fails, 2 usage or config error,
3 a residual fell in an inconclusive band.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from . import catalog as cat
from . import fields as fl
from .geometry import GeometryError
from .jets import JetError
from .verify import SUITES, TOLERANCES, ConfigError, RunReport, run

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3
WHAT = ("tau", "tau2", "S2", "divS2", "nablaS2")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ parsing
def parse_kv(items, what: str) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"{what} {item!r} is not of the form key=value")
        k, v = item.split("=", 1)
        k = k.strip()
        if not k:
            raise UsageError(f"{what} {item!r} has an empty key")
        out[k] = v.strip()
    return out


def _scalar(text: str):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if "," in text:
        return [_scalar(t) for t in text.split(",") if t.strip()]
    return text


ALIASES = {"mesh_resolution": "resolution", "output_format": "format"}


def read_config(path: str) -> dict:
    """JSON object, or flat ``key = value`` lines with ``#`` comments.

    Flat keys: suite, entry (repeatable), param.<k>, tol.<k>, resolution,
    seed, format, samples, omegas, workers.  ``mesh_resolution`` and
    ``output_format`` are accepted as long forms of resolution and format.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise UsageError(f"config {path}: top level must be an object")
        return _aliases(data)
    data, params, tols, entries = {}, {}, {}, []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path}, line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        if k.startswith("param."):
            params[k[6:]] = v
        elif k.startswith("tol."):
            tols[k[4:]] = v
        elif k == "entry":
            entries.append(v)
        else:
            data[k] = _scalar(v) if k not in ("suite", "format", "output_format") else v
    if entries:
        data["entries"] = entries
    if params:
        data["params"] = params
    if tols:
        data["tolerances"] = tols
    return _aliases(data)


def _aliases(data: dict) -> dict:
    for long, short in ALIASES.items():
        if long in data:
            if short in data:
                raise UsageError(f"config sets both {long} and {short}")
            data[short] = data.pop(long)
    return data


def build_config(args) -> dict:
    """Merge config file values with command-line flags (flags win)."""
    file_cfg = read_config(args.config) if args.config else {}
    cfg = dict(file_cfg)
    file_params = cfg.pop("params", {})
    if not isinstance(file_params, dict):
        raise UsageError("params must be a mapping")
    entries = cfg.get("entries", [])
    if isinstance(entries, str):
        entries = [entries]
    if args.entry:
        entries = list(args.entry)
    params = dict(file_params)
    params.update(parse_kv(args.param, "--param"))
    if params:
        if len(entries) != 1 or not isinstance(entries[0], str):
            raise UsageError("parameters need exactly one --entry")
        entries = [(entries[0], params)]
    cfg["entries"] = entries
    tols = dict(cfg.get("tolerances", {}))
    tols.update(parse_kv(args.tol, "--tol"))
    cfg["tolerances"] = tols
    for key in ("suite", "resolution", "seed", "format", "samples", "omegas", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


# --------------------------------------------------------------- commands
def cmd_list(args) -> int:
    rows = []
    for name in cat.names():
        e = cat.build(name)
        sch = cat.schema(name)
        rows.append({
            "name": name,
            "summary": e.notes,
            "parameters": {k: p.describe() for k, p in sch.items()},
            "expected": {t: e.citations[t] for t in sorted(e.expected)},
        })
    if args.format == "json":
        print(json.dumps({"engine_version": __version__, "entries": rows}, indent=2))
        return EXIT_OK
    for r in rows:
        print(r["name"])
        print(f"  {r['summary']}")
        for k, d in r["parameters"].items():
            print(f"  param {k}: {d}")
        tags = ", ".join(r["expected"]) or "(none)"
        print(f"  expected: {tags}")
        for t, c in r["expected"].items():
            print(f"    {t}: {c}")
    return EXIT_OK


def _parse_point(text: str, dim: int) -> np.ndarray:
    try:
        p = np.array([float(t) for t in text.replace(" ", "").split(",") if t], dtype=float)
    except ValueError:
        raise UsageError(f"point {text!r} is not a comma-separated list of numbers") from None
    if p.shape != (dim,):
        raise UsageError(f"point needs {dim} coordinates, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise UsageError("point coordinates must be finite")
    return p


def cmd_eval(args) -> int:
    if not args.entry or len(args.entry) != 1:
        raise UsageError("eval needs exactly one --entry")
    name = args.entry[0]
    entry = cat.build(name, **parse_kv(args.param, "--param"))
    M = entry.source
    p = _parse_point(args.point, M.dim)
    if not M.contains(p)[0]:
        raise UsageError(f"point {p.tolist()} lies outside the chart domain of {M.name}")
    ctx = fl.PullbackConnectionContext.at(entry.map, p[None, :], 4)
    if args.what == "tau":
        comp, norm = ctx.tau.value[0], fl.target_norm(ctx.tau.value, ctx.h0)[0]
    elif args.what == "tau2":
        comp, norm = ctx.tau2[0], fl.target_norm(ctx.tau2, ctx.h0)[0]
    elif args.what == "S2":
        comp = ctx.S2.value[0]
        norm = fl.form_norm(ctx.S2.value, ctx.ginv0)[0]
    elif args.what == "divS2":
        comp = ctx.div_S2.value[0]
        norm = fl.form_norm(ctx.div_S2.value, ctx.ginv0)[0]
    else:
        comp = ctx.nabla_S2.value[0]
        norm = fl.form_norm(ctx.nabla_S2.value, ctx.ginv0)[0]
    if args.format == "json":
        print(json.dumps({"entry": name, "parameters": _jsonable(entry.parameters), "point": p.tolist(),
                          "what": args.what, "components": np.asarray(comp).tolist(), "norm": float(norm)}))
    else:
        with np.printoptions(precision=12, suppress=False):
            print(f"{args.what} of {name} at {p.tolist()}")
            print(np.asarray(comp))
            print(f"norm {float(norm):.12g}")
    return EXIT_OK


def _jsonable(params):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


def format_text(report: RunReport) -> str:
    lines = []
    for r in report.records:
        lines.append(f"{r.verdict.upper():12s} {r.id}  residual={r.residual:.3e} tol={r.tolerance:.1e}")
    c = report.counts
    lines.append(
        f"{len(report.records)} checks: {c['pass']} pass, {c['fail']} fail, {c['inconclusive']} inconclusive "
        f"({report.wall_time:.1f}s, engine {report.engine_version})"
    )
    return "\n".join(lines)


def cmd_verify(args) -> int:
    cfg = build_config(args)
    report = run(cfg)
    if report.config["format"] == "json":
        text = json.dumps(report.to_dict(), indent=2)
    else:
        text = format_text(report)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return report.exit_code


# ------------------------------------------------------------------ parser
def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bistress", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("list", help="list catalog entries, parameter schemas and expected tags")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("eval", help="evaluate a tensor of a catalog map at a point")
    p.add_argument("--entry", action="append", help="catalog entry name")
    p.add_argument("--param", action="append", metavar="K=V", help="entry parameter (repeatable)")
    p.add_argument("--point", required=True, help="comma-separated chart coordinates")
    p.add_argument("--what", choices=WHAT, default="tau")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--suite", choices=SUITES + ("all",))
    p.add_argument("--entry", action="append", help="restrict to a catalog entry (repeatable)")
    p.add_argument("--param", action="append", metavar="K=V", help="parameter for a single --entry")
    p.add_argument("--resolution", type=int, help="quadrature nodes per axis (>= 8)")
    p.add_argument("--tol", action="append", metavar="K=V",
                   help=f"tolerance override; keys: {', '.join(sorted(TOLERANCES))}")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="random points per identity check")
    p.add_argument("--omegas", type=int, help="random metric variations per compact map")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--format", choices=("text", "json"))
    p.add_argument("--config", help="flat key=value or JSON config file")
    p.add_argument("--output", help="also write the report to this file")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return cmd_list(args)
        if args.command == "eval":
            return cmd_eval(args)
        return cmd_verify(args)
    except (UsageError, ConfigError, cat.CatalogError) as exc:
        print(f"bistress: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except cat.InconclusiveError as exc:
        print(f"bistress: inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (GeometryError, JetError) as exc:
        print(f"bistress: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

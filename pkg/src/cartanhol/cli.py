"""Command-line entry point.

Exit codes: 0 when everything passed, 1 on a numerical failure, 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import __version__
from .catalog import CATALOG, catalog_entry
from .cones import certify_cone
from .errors import ConfigInvalid, HolonomyError
from .harness import (
    RunConfig,
    catalog_configs,
    global_noncompactness_evidence,
    list_checks,
    run_suite,
)
from .affine import Compactness
from .holonomy import classify, sample_holonomy
from .serialization import dumps, write_atomic
from .transport import development_trace

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="override the protocol seed")
    parser.add_argument("--step", type=float, help="override the integration step")
    parser.add_argument("--tol-file", help="JSON file with tolerance overrides")
    parser.add_argument("--no-meta", action="store_true", help="omit timestamps and timings from reports")
    parser.add_argument("--out", help="output path (default: config outputs, else stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cartanhol", description="Affine holonomy lab for Riemannian charts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog", help="shipped test manifolds")
    cat.add_argument("action", choices=["list"])
    cat.add_argument("--json", action="store_true")

    for name, text in [("holonomy", "emit a holonomy sample"), ("classify", "emit a classification report"),
                       ("cone-check", "emit a cone certificate"), ("develop", "emit a development trace (CSV)"),
                       ("evidence", "emit the iterated-loop noncompactness evidence")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        _common(p)

    ver = sub.add_parser("verify", help="run the verification suite")
    ver.add_argument("config", nargs="?")
    ver.add_argument("--all", action="store_true", help="run on every catalog manifold")
    ver.add_argument("--list", action="store_true", help="print the check names and the claims they test")
    ver.add_argument("--check", action="append", help="run only the named check (repeatable)")
    _common(ver)
    return parser


def _meta(start: float, args) -> dict:
    if args.no_meta:
        return {}
    return {"meta": {"version": __version__, "elapsed_seconds": time.perf_counter() - start,
                     "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}}


def _emit(text: str, args, cfg: RunConfig | None = None, key: str = "report") -> None:
    path = args.out or (cfg.outputs.get(key) if cfg is not None else None)
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _load(args) -> RunConfig:
    return RunConfig.from_file(args.config, seed=args.seed, step=args.step, tol_file=args.tol_file)


def _failure(command: str, exc: Exception, cfg: RunConfig | None) -> dict:
    out = {"command": command, "status": "FAIL", "error": type(exc).__name__, "message": str(exc)}
    if cfg is not None:
        out["provenance"] = cfg.provenance()
    return out


def cmd_catalog(args) -> int:
    if args.json:
        sys.stdout.write(dumps({name: {"descriptor": d, "base": b, "description": text}
                                for name, (d, b, text) in CATALOG.items()}))
        return EXIT_OK
    for name, (_, base, text) in CATALOG.items():
        chart, _ = catalog_entry(name)
        print(f"{name:18s} dim={chart.dim}  base={base}  {text}")
    return EXIT_OK


def cmd_single(args) -> int:
    start = time.perf_counter()
    cfg = _load(args)
    try:
        if args.command == "develop":
            curve = cfg.curve or cfg.default_curve()
            trace = development_trace(cfg.chart, curve, step=cfg.protocol.step, tol=cfg.tolerances)
            _emit(trace.to_csv(), args, cfg, "trace")
            return EXIT_OK
        if args.command == "holonomy":
            sample = sample_holonomy(cfg.chart, cfg.base, cfg.protocol, tol=cfg.tolerances)
            body = {**sample.to_json(), "provenance": cfg.provenance()}
            status = EXIT_OK
        elif args.command == "classify":
            report = classify(cfg.chart, cfg.base, cfg.protocol, cfg.tolerances, manifold=cfg.manifold)
            body = {**report.to_json(), "provenance": cfg.provenance()}
            if report.verdict is Compactness.COMPACT and cfg.cone_policy == "auto":
                try:
                    cert = certify_cone(cfg.chart, cfg.base, report.fixed_point, cfg.protocol, cfg.tolerances)
                    body["cone_certificate"] = cert.to_json()
                except HolonomyError as exc:
                    body["cone_certificate"] = _failure("cone-check", exc, None)
            status = EXIT_FAIL if report.inconsistent else EXIT_OK
        elif args.command == "cone-check":
            cert = certify_cone(cfg.chart, cfg.base, cfg.p_star, cfg.protocol, cfg.tolerances)
            body = {**cert.to_json(), "provenance": cfg.provenance()}
            status = EXIT_OK
        else:  # evidence
            rep = global_noncompactness_evidence(cfg.chart, cfg.base, cfg.noncompactness_k,
                                                 step=cfg.protocol.step, tol=cfg.tolerances)
            body = {**rep.to_json(), "provenance": cfg.provenance()}
            status = EXIT_OK
    except HolonomyError as exc:
        _emit(dumps({**_failure(args.command, exc, cfg), **_meta(start, args)}), args, cfg)
        return EXIT_FAIL
    _emit(dumps({**body, **_meta(start, args)}), args, cfg)
    return status


def cmd_verify(args) -> int:
    if args.list:
        for name, claim in list_checks():
            print(f"{name:24s} {claim}")
        return EXIT_OK
    if args.all == bool(args.config):
        raise ConfigInvalid("verify needs exactly one of a config path or --all")
    if args.all:
        seed = 0 if args.seed is None else args.seed
        configs = catalog_configs(seed, step=args.step, tol_file=args.tol_file)
        cfg = None
    else:
        cfg = _load(args)
        seed = cfg.protocol.seed
        configs = {cfg.manifold: cfg}
    report = run_suite(configs, seed=seed, only=args.check)
    _emit(dumps(report.to_json(meta=not args.no_meta)), args, cfg)
    for r in report.results:
        print(f"{r.status.value:4s} {r.name}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "catalog":
            return cmd_catalog(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_single(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # The reader went away (for example a pager or head); silence the flush at exit.
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

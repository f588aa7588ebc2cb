"""Command-line front end.

Exit codes: 0 on success, 1 when an operation fails, 2 on usage errors.
Standard output carries data; diagnostics and the error line go to stderr.
"""
import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path
from typing import List, Optional

from . import __version__
from .config import Settings, load_settings
from .container import emit, emit_compendium, plan
from .errors import ChronoError, OptionError
from .pkgref import load_bioc_names, parse_ref, parse_refs, render_ref
from .registry import SnapshotRegistry
from .resolver import EXPORT_FORMATS, describe_graph, export_graph, load_lock, resolve
from .scanner import import_renv_lock, import_session_info, scan_dir
from .schemas import DockerizeOptions, ResolvedGraph
from .sysreqs import check_os, load_rules

logger = logging.getLogger(__name__)

DEFAULT_LOCK = "rang.lock"


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YYYY-MM-DD, got {text!r}") from None


def _replacement(text: str):
    old, sep, new = text.partition("=")
    if not sep or not old or not new:
        raise argparse.ArgumentTypeError(f"expected OLD=NEW, got {text!r}")
    return old, new


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # accepted both before and after the subcommand
    default = argparse.SUPPRESS if suppress else None
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--registry", type=Path, default=default,
                        help="fixture registry directory (no network access)")
    parser.add_argument("--cache-dir", type=Path, default=default,
                        help="directory for memoized registry responses")
    parser.add_argument("--config", type=Path, default=default, help="JSON configuration file")
    parser.add_argument("--bioc-names", type=Path, default=default,
                        help="Bioconductor package name list")
    parser.add_argument("--sysreqs-rules", type=Path, default=default,
                        help="system requirements rule table")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0,
                        help="-v for progress, -vv for debugging output")
    return parser


def _container_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cache", action="store_true", help="download every source tarball now")
    parser.add_argument("--lib", help="install packages into this relative library directory")
    parser.add_argument("--materials", type=Path, help="directory copied to /materials")
    parser.add_argument("--image", help="Rocker image: r-ver (default) or rstudio")
    parser.add_argument("--no-rocker", action="store_true", help="always compile R from source on Debian")
    parser.add_argument("--bash", action="store_true", help="start a shell instead of R")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chronoenv",
        description="Resolve R packages as of a date and generate a container build context.",
        parents=[_global_options(suppress=False)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _global_options(suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resolve", parents=[common], help="resolve packages at a snapshot date")
    p.add_argument("refs", nargs="*", help="package references, e.g. quanteda, cran::xml2, owner/repo")
    p.add_argument("--date", type=_date, required=True, help="snapshot date (YYYY-MM-DD)")
    p.add_argument("--os", help="target OS identifier (default from configuration)")
    p.add_argument("--output", type=Path, default=Path(DEFAULT_LOCK), help="lockfile to write")
    p.add_argument("--scan", type=Path, help="scan a project directory for packages")
    p.add_argument("--renv-lock", type=Path, help="import pins from a renv lockfile")
    p.add_argument("--session-info", type=Path, help="import pins from printed session information")
    p.add_argument("--replace", type=_replacement, action="append", default=[], metavar="OLD=NEW",
                   help="replace a scanned or imported reference")
    p.add_argument("--r-version", help="pin the interpreter version explicitly")
    p.add_argument("--suggests", action="store_true", help="also follow Suggests/Enhances of the roots")
    p.set_defaults(handler=cmd_resolve)

    p = sub.add_parser("dockerize", parents=[common], help="write a build context for a lockfile")
    p.add_argument("--lock", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    _container_options(p)
    p.set_defaults(handler=cmd_dockerize)

    p = sub.add_parser("scan", parents=[common], help="list packages used by a project directory")
    p.add_argument("path", type=Path)
    p.set_defaults(handler=cmd_scan)

    p = sub.add_parser("export", parents=[common], help="export a lockfile's graph")
    p.add_argument("--lock", type=Path, required=True)
    p.add_argument("--format", choices=EXPORT_FORMATS, default="dot")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("compendium", parents=[common], help="write a compendium Makefile")
    p.add_argument("--lock", type=Path, required=True)
    p.add_argument("--handle", required=True, help="name stem of the image, container and lockfile")
    p.add_argument("--render-command", help="R expression the render target evaluates")
    p.add_argument("--output", default="Makefile", help="file to write, or - for standard output")
    p.add_argument("--force", action="store_true", help="overwrite an existing Makefile")
    _container_options(p)
    p.set_defaults(handler=cmd_compendium)

    p = sub.add_parser("show", parents=[common], help="summarize a lockfile")
    p.add_argument("--lock", type=Path, required=True)
    p.add_argument("--all-pkgs", action="store_true", help="list every pinned package")
    p.set_defaults(handler=cmd_show)
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format="%(levelname)s %(name)s: %(message)s")


def _settings(args) -> Settings:
    overrides = {}
    for flag, field in (("registry", "REGISTRY"), ("cache_dir", "CACHE"),
                        ("bioc_names", "BIOC_NAMES_FILE"), ("sysreqs_rules", "SYSREQS_RULES_FILE")):
        if getattr(args, flag, None) is not None:
            overrides[field] = getattr(args, flag)
    return load_settings(args.config, **overrides)


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OptionError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_graph(path: Path) -> ResolvedGraph:
    return load_lock(_read(path))


def _container_settings(args, output_dir: Path) -> DockerizeOptions:
    return DockerizeOptions(output_dir=output_dir, image=args.image, no_rocker=args.no_rocker,
                            cache=args.cache, lib=args.lib, materials_dir=args.materials, shell=args.bash)


# Subcommands

def cmd_resolve(args, cfg: Settings) -> int:
    bioc_names = load_bioc_names(cfg.BIOC_NAMES_FILE)
    refs = parse_refs(args.refs, bioc_names)
    imported = []
    if args.scan is not None:
        imported += scan_dir(args.scan, bioc_names, max_workers=cfg.MAX_WORKERS)
    if args.renv_lock is not None:
        imported += import_renv_lock(_read(args.renv_lock))
    if args.session_info is not None:
        imported += import_session_info(_read(args.session_info), bioc_names)
    replacements = {render_ref(parse_ref(old, bioc_names)): parse_ref(new, bioc_names)
                    for old, new in args.replace}
    for ref in imported:
        key = render_ref(ref.unpinned())
        refs.append(replacements.pop(key, ref))
    for key in replacements:
        logger.warning("--replace %s matched no scanned or imported reference", key)
    if not refs:
        raise OptionError("no packages to resolve; give references, --scan, --renv-lock or --session-info")

    os_id = args.os or cfg.DEFAULT_OS
    check_os(os_id, load_rules(cfg.SYSREQS_RULES_FILE))
    registry = SnapshotRegistry.from_settings(cfg)
    graph = resolve(refs, args.date, os_id, registry, r_version=args.r_version,
                    include_suggests=args.suggests, bioc_names=bioc_names, cfg=cfg)
    args.output.write_text(export_graph(graph, "lock"), encoding="utf-8")
    print(f"resolved {len(graph.roots)} root(s) into {len(graph.nodes)} package(s) "
          f"with R {graph.r_version} at {graph.snapshot_date.isoformat()}")
    print(f"lockfile: {args.output}")
    return 0


def cmd_dockerize(args, cfg: Settings) -> int:
    graph = _load_graph(args.lock)
    rules = load_rules(cfg.SYSREQS_RULES_FILE)
    container = plan(graph, _container_settings(args, args.out), rules=rules, cfg=cfg)
    for path in emit(container, force=args.force, cfg=cfg):
        print(path.relative_to(args.out).as_posix())
    return 0


def cmd_scan(args, cfg: Settings) -> int:
    for ref in scan_dir(args.path, load_bioc_names(cfg.BIOC_NAMES_FILE), max_workers=cfg.MAX_WORKERS):
        print(render_ref(ref))
    return 0


def cmd_export(args, cfg: Settings) -> int:
    sys.stdout.write(export_graph(_load_graph(args.lock), args.format))
    return 0


def cmd_compendium(args, cfg: Settings) -> int:
    graph = _load_graph(args.lock)
    container = plan(graph, _container_settings(args, Path(f"{args.handle}docker")),
                     rules=load_rules(cfg.SYSREQS_RULES_FILE), cfg=cfg)
    text = emit_compendium(container, args.handle, args.render_command)
    if args.output == "-":
        sys.stdout.write(text)
        return 0
    target = Path(args.output)
    if target.exists() and not args.force:
        raise OptionError(f"{target} exists (use --force to overwrite)")
    target.write_text(text, encoding="utf-8")
    print(target)
    return 0


def cmd_show(args, cfg: Settings) -> int:
    sys.stdout.write(describe_graph(_load_graph(args.lock), all_pkgs=args.all_pkgs))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "resolve" and not (args.refs or args.scan or args.renv_lock or args.session_info):
            parser.error("resolve needs package references, --scan, --renv-lock or --session-info")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    configure_logging(args.verbose)
    try:
        cfg = _settings(args)
        return args.handler(args, cfg)
    except ChronoError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1

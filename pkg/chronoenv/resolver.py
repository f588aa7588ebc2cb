"""Snapshot-dated dependency resolution, install ordering and graph export."""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from typing import AbstractSet, Dict, List, Optional, Sequence, Tuple

import networkx as nx
from pydantic import ValidationError

from .config import Settings
from .config import settings as default_settings
from .errors import (LockSchemaError, NotAvailableAtDateError, OptionError, PackageNotFoundError,
                     RefParseError)
from .metadata import VersionString, satisfies, version_key
from .pkgref import parse_ref, render_ref
from .registry import SnapshotRegistry
from .schemas import (SOFT_KINDS, STRONG_KINDS, LockFile, PackageRef, ReleaseRecord, ResolvedGraph,
                      ResolvedNode, Source)

logger = logging.getLogger(__name__)

LOCK_SCHEMA_VERSION = 1
EXPORT_FORMATS = ("dot", "edgelist", "lock")


def _note(diagnostics: List[str], message: str) -> None:
    logger.warning(message)
    diagnostics.append(message)


def source_url(ref: PackageRef, record: ReleaseRecord, registry: SnapshotRegistry,
               cfg: Settings = default_settings) -> str:
    """Download locator of the exact source artifact for a pinned release."""
    name, version = ref.name, record.version
    if ref.source == Source.CRAN:
        newest = registry.release_history(ref)[-1]
        if version_key(newest.version) == version_key(version):
            return f"{cfg.CRAN_URL}/src/contrib/{name}_{version}.tar.gz"
        return f"{cfg.CRAN_URL}/src/contrib/Archive/{name}/{name}_{version}.tar.gz"
    if ref.source == Source.BIOC:
        train = record.bioc_release or registry.bioc_version_at(record.published).raw
        return f"{cfg.BIOC_URL}/packages/{train}/bioc/src/contrib/{name}_{version}.tar.gz"
    if ref.source == Source.GITHUB:
        commit = record.commit or ref.pin or version
        return f"{cfg.CODELOAD_URL}/{ref.qualifier}/tar.gz/{commit}"
    return ""


class _Resolution:
    """State of one resolve() call; discarded once the graph is built."""

    def __init__(self, snapshot_date: date, registry: SnapshotRegistry, bioc_names: AbstractSet[str]):
        self.snapshot_date = snapshot_date
        self.registry = registry
        self.bioc_names = bioc_names
        self.diagnostics: List[str] = []

    def dependency_ref(self, name: str) -> PackageRef:
        return PackageRef(source=Source.BIOC if name in self.bioc_names else Source.CRAN, name=name)

    def pin(self, ref: PackageRef, is_root: bool) -> Tuple[PackageRef, Optional[ReleaseRecord], Optional[str]]:
        try:
            return ref, self._pin(ref), None
        except (PackageNotFoundError, NotAvailableAtDateError) as exc:
            if is_root:
                raise
            if ref.source == Source.CRAN and isinstance(exc, PackageNotFoundError):
                # dependencies of Bioconductor packages are often missing from the shipped name list
                bioc_ref = ref.model_copy(update={"source": Source.BIOC})
                try:
                    return bioc_ref, self._pin(bioc_ref), None
                except (PackageNotFoundError, NotAvailableAtDateError):
                    pass
            return ref, None, str(exc)

    def _pin(self, ref: PackageRef) -> ReleaseRecord:
        if ref.pin is None:
            return self.registry.latest_at(ref, self.snapshot_date)
        record = self.registry.release_for_pin(ref, self.snapshot_date)
        if ref.source != Source.LOCAL and record.published > self.snapshot_date:
            raise NotAvailableAtDateError(render_ref(ref), self.snapshot_date, record.published)
        return record


def resolve(refs: Sequence[PackageRef], snapshot_date: date, os: str, registry: SnapshotRegistry,
            *, r_version: Optional[str] = None, include_suggests: bool = False,
            bioc_names: AbstractSet[str] = frozenset(), cfg: Settings = default_settings,
            max_workers: Optional[int] = None) -> ResolvedGraph:
    """Resolve ``refs`` and their strong dependencies as of ``snapshot_date``.

    Every package is pinned to its latest release on or before the date (or to
    the pinned release for ``name@version`` refs). Base packages of the
    interpreter are satisfied by the interpreter and left out of the graph.
    Problems below the roots become diagnostics.
    """
    if not refs:
        raise OptionError("at least one package reference is required")

    era_version = registry.interpreter_version_at(snapshot_date)
    interpreter = VersionString.parse(r_version) if r_version else era_version
    base = registry.base_packages(interpreter.raw)
    state = _Resolution(snapshot_date, registry, bioc_names)
    diagnostics = state.diagnostics
    logger.info("resolving %d package(s) at %s with R %s", len(refs), snapshot_date, interpreter)

    roots: Dict[str, PackageRef] = {}
    for ref in refs:
        if ref.name in base and ref.source in (Source.CRAN, Source.BIOC):
            _note(diagnostics, f"{render_ref(ref)} is a base package satisfied by R {interpreter}; "
                               f"left out of the graph")
            continue
        if ref.name in roots:
            _note(diagnostics, f"{render_ref(ref)} duplicates root {render_ref(roots[ref.name])}; ignored")
            continue
        roots[ref.name] = ref

    pinned: Dict[str, Tuple[PackageRef, ReleaseRecord]] = {}
    wanted = []
    seen = set(roots)
    frontier = [(name, roots[name], True) for name in sorted(roots)]

    with ThreadPoolExecutor(max_workers=max_workers or cfg.MAX_WORKERS) as pool:
        while frontier:
            # map() keeps frontier order, so completion order never leaks into the graph
            results = list(pool.map(lambda item: state.pin(item[1], item[2]), frontier))
            upcoming: Dict[str, PackageRef] = {}
            for (name, _, is_root), (ref, record, problem) in zip(frontier, results):
                if record is None:
                    _note(diagnostics, f"unresolved dependency {render_ref(ref)}: {problem}")
                    continue
                pinned[name] = (ref, record)
                logger.info("pinned %s to %s (published %s)", render_ref(ref), record.version, record.published)
                if record.r_constraint is not None and not satisfies(interpreter, record.r_constraint):
                    _note(diagnostics, f"{name} {record.version} requires R {record.r_constraint}, "
                                       f"resolved interpreter is {interpreter}")
                kinds = STRONG_KINDS + SOFT_KINDS if include_suggests and is_root else STRONG_KINDS
                for dep in record.deps:
                    if dep.kind not in kinds or dep.name in base:
                        continue
                    wanted.append((name, dep))
                    if dep.name not in seen:
                        seen.add(dep.name)
                        upcoming[dep.name] = state.dependency_ref(dep.name)
            frontier = [(name, upcoming[name], False) for name in sorted(upcoming)]

    nodes: Dict[str, ResolvedNode] = {}
    for name in sorted(pinned):
        ref, record = pinned[name]
        nodes[name] = ResolvedNode(
            ref=ref.unpinned(),
            version=record.version,
            published=record.published,
            sysreqs=record.sysreqs,
            source_url=source_url(ref, record, registry, cfg),
        )
        if ref.source == Source.BIOC and registry.has_history(PackageRef(source=Source.CRAN, name=name)):
            _note(diagnostics, f"{name} exists in both Bioconductor and CRAN; using Bioconductor")

    edges = set()
    for src, dep in wanted:
        if dep.name not in nodes:
            continue
        edges.add((src, dep.name, dep.kind))
        if dep.constraint is not None and not satisfies(nodes[dep.name].version, dep.constraint):
            _note(diagnostics, f"{src} requires {dep.name} ({dep.constraint}) but "
                               f"{dep.name} {nodes[dep.name].version} is pinned")

    return ResolvedGraph(
        snapshot_date=snapshot_date,
        r_version=interpreter.raw,
        os=os,
        roots=list(roots.values()),
        nodes=nodes,
        edges=sorted(edges, key=lambda e: (e[0], e[1], e[2].value)),
        diagnostics=diagnostics,
    )


# Install ordering

def order_with_cycles(graph: ResolvedGraph) -> Tuple[List[str], List[str]]:
    """Dependency-first install order plus one diagnostic per broken cycle.

    Ready packages are taken in lexicographic order. A cycle is broken by
    dropping the edge that closes it.
    """
    needs = nx.DiGraph()
    needs.add_nodes_from(sorted(graph.nodes))
    needs.add_edges_from(sorted((src, dst) for src, dst, kind in graph.edges if kind in STRONG_KINDS))
    diagnostics = []
    while True:
        try:
            cycle = nx.find_cycle(needs)
        except nx.NetworkXNoCycle:
            break
        path = " -> ".join([edge[0] for edge in cycle] + [cycle[0][0]])
        src, dst = cycle[-1][0], cycle[-1][1]
        needs.remove_edge(src, dst)
        diagnostics.append(f"dependency cycle {path}; installing {src} without waiting for {dst}")
    order = list(nx.lexicographical_topological_sort(needs.reverse(copy=True)))
    return order, diagnostics


def install_order(graph: ResolvedGraph) -> List[str]:
    order, cycles = order_with_cycles(graph)
    for message in cycles:
        logger.warning(message)
    return order


# Export

def _lock_document(graph: ResolvedGraph) -> dict:
    return {
        "schema_version": LOCK_SCHEMA_VERSION,
        "snapshot_date": graph.snapshot_date.isoformat(),
        "r_version": graph.r_version,
        "os": graph.os,
        "roots": [render_ref(ref) for ref in graph.roots],
        "nodes": {
            name: {
                "source": node.ref.source.value,
                "qualifier": node.ref.qualifier,
                "version": node.version,
                "published": node.published.isoformat(),
                "sysreqs": node.sysreqs,
                "source_url": node.source_url,
            }
            for name, node in graph.nodes.items()
        },
        "edges": sorted([src, dst, kind.value] for src, dst, kind in graph.edges),
        "diagnostics": list(graph.diagnostics),
    }


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_graph(graph: ResolvedGraph, format: str) -> str:
    if format == "lock":
        return json.dumps(_lock_document(graph), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    edges = sorted((src, dst, kind.value) for src, dst, kind in graph.edges)
    if format == "edgelist":
        return "".join(f"{src}\t{dst}\t{kind}\n" for src, dst, kind in edges)
    if format == "dot":
        lines = ["digraph chronoenv {"]
        for name in sorted(graph.nodes):
            label = f"{name}@{graph.nodes[name].version}"
            lines.append(f"  {_dot_quote(name)} [label={_dot_quote(label)}];")
        for src, dst, kind in edges:
            lines.append(f"  {_dot_quote(src)} -> {_dot_quote(dst)} [label={_dot_quote(kind)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise OptionError(f"unknown export format {format!r}; choose one of {', '.join(EXPORT_FORMATS)}")


def _first_error(exc: ValidationError, prefix: str = "") -> Tuple[str, str]:
    err = exc.errors()[0]
    loc = ".".join(str(part) for part in err["loc"])
    field = ".".join(part for part in (prefix, loc) if part) or prefix or "<document>"
    return field, err["msg"].removeprefix("Value error, ")


def load_lock(text: str, diagnostics: Optional[List[str]] = None) -> ResolvedGraph:
    """Rebuild a ResolvedGraph from lockfile text.

    Unknown fields are ignored with a diagnostic so newer lockfiles still load.
    """
    diagnostics = diagnostics if diagnostics is not None else []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LockSchemaError("<document>", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise LockSchemaError("<document>", "expected a JSON object")
    try:
        lock = LockFile.model_validate(data)
    except ValidationError as exc:
        raise LockSchemaError(*_first_error(exc)) from None

    if lock.schema_version > LOCK_SCHEMA_VERSION:
        _note(diagnostics, f"lockfile schema_version {lock.schema_version} is newer than "
                           f"{LOCK_SCHEMA_VERSION}; reading known fields only")
    for key in sorted(lock.model_extra or {}):
        _note(diagnostics, f"unknown lockfile field {key!r} ignored")

    nodes = {}
    for name, entry in lock.nodes.items():
        for key in sorted(entry.model_extra or {}):
            _note(diagnostics, f"unknown field {key!r} on lockfile node {name!r} ignored")
        try:
            ref = PackageRef(source=entry.source, name=name, qualifier=entry.qualifier)
            nodes[name] = ResolvedNode(ref=ref, version=entry.version, published=entry.published,
                                       sysreqs=entry.sysreqs, source_url=entry.source_url)
        except ValidationError as exc:
            raise LockSchemaError(f"nodes.{name}", _first_error(exc)[1]) from None

    try:
        roots = [parse_ref(raw) for raw in lock.roots]
    except RefParseError as exc:
        raise LockSchemaError("roots", str(exc)) from None
    try:
        return ResolvedGraph(
            snapshot_date=lock.snapshot_date,
            r_version=lock.r_version,
            os=lock.os,
            roots=roots,
            nodes=nodes,
            edges=[tuple(edge) for edge in lock.edges],
            diagnostics=lock.diagnostics,
        )
    except ValidationError as exc:
        field, reason = _first_error(exc)
        raise LockSchemaError(field if field != "<document>" else "edges", reason) from None


def describe_graph(graph: ResolvedGraph, all_pkgs: bool = False) -> str:
    """Human-readable summary of a resolved graph."""
    lines = [
        f"snapshot date: {graph.snapshot_date.isoformat()}",
        f"R version: {graph.r_version}",
        f"os: {graph.os}",
        f"packages: {len(graph.nodes)} ({len(graph.roots)} root(s))",
        "roots:",
    ]
    for ref in graph.roots:
        node = graph.nodes.get(ref.name)
        lines.append(f"  {render_ref(ref)} -> {node.version if node else 'unresolved'}")
    if all_pkgs:
        lines.append("all packages:")
        for name in sorted(graph.nodes):
            node = graph.nodes[name]
            lines.append(f"  {name} {node.version} ({node.ref.source.value}, {node.published.isoformat()})")
    if graph.diagnostics:
        lines.append(f"diagnostics: {len(graph.diagnostics)}")
    return "\n".join(lines) + "\n"

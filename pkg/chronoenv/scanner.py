"""Find the R packages a project uses and import pins from other tools' records.

Detection is token based: comments are stripped and string literals masked
line by line before matching ``library()``/``require()``/``requireNamespace()``
calls and ``pkg::fun`` / ``pkg:::fun`` operators. Loader wrappers such as
``pacman::p_load`` are not understood (``pacman`` itself is still reported).
"""
import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import AbstractSet, List, Optional, Tuple

from .errors import ChronoError, ImportSchemaError, ScanError
from .metadata import parse_dcf, parse_dep_field
from .registry import load_base_packages
from .schemas import DEP_FIELDS, STRONG_KINDS, PackageRef, Source

logger = logging.getLogger(__name__)

SCRIPT_SUFFIXES = {".R", ".r"}
NOTEBOOK_SUFFIXES = {".Rmd", ".rmd"}

_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9.]*$")
_LOAD_CALL = re.compile(r"(?<![\w.])(library|require|requireNamespace)\s*\(")
_NAMESPACE_OP = re.compile(r"(?<![\w.])([A-Za-z][A-Za-z0-9.]*):::?(?=[A-Za-z.`])")
_BARE_ARG = re.compile(r"\s*([A-Za-z.][A-Za-z0-9._]*)\s*([,)])")
_CHARACTER_ONLY = re.compile(r"character\.only\s*=\s*(TRUE|T)\b")
_CHUNK_OPEN = re.compile(r"^\s*(`{3,})\s*\{\s*[rR]\b[^}]*\}\s*$")
_FENCE = re.compile(r"^\s*(`{3,})")
_SESSION_TOKEN = re.compile(r"(?<![\w.])([A-Za-z][A-Za-z0-9.]*)_(\d+(?:[.-]\d+)*)(?![\w.-])")
_SESSION_HEADERS = ("other attached packages:", "loaded via a namespace")


def _base_names() -> frozenset:
    names = set()
    for era in load_base_packages().values():
        names.update(era)
    return frozenset(names | {"R"})


def mask_line(line: str, quote: Optional[str] = None) -> Tuple[str, str, Optional[str]]:
    """Strip a trailing comment and blank out string contents.

    Returns ``(code, masked, quote)``: the line without its comment, the same
    text with string contents replaced by spaces (offsets preserved), and the
    quote character still open at the end of the line.
    """
    code, masked = [], []
    i = 0
    while i < len(line):
        ch = line[i]
        if quote:
            if ch == "\\" and i + 1 < len(line):
                code.append(line[i:i + 2])
                masked.append("  ")
                i += 2
                continue
            code.append(ch)
            if ch == quote:
                quote = None
                masked.append(ch)
            else:
                masked.append(" ")
        elif ch == "#":
            break
        else:
            if ch in "\"'`":
                quote = ch
            code.append(ch)
            masked.append(ch)
        i += 1
    return "".join(code), "".join(masked), quote


def _call_argument(code: str, start: int, call: str) -> Tuple[Optional[str], Optional[str]]:
    """Package named by the call whose argument list begins at ``start``."""
    rest = code[start:]
    stripped = rest.lstrip()
    if stripped[:1] in ("'", '"'):
        quote = stripped[0]
        end = stripped.find(quote, 1)
        if end < 0:
            return None, "unterminated string argument"
        return stripped[1:end], None
    if call == "requireNamespace":
        return None, "computed argument"
    m = _BARE_ARG.match(rest)
    if not m:
        return None, "computed argument"
    if m.group(2) == "," and _CHARACTER_ONLY.search(rest.split(")", 1)[0]):
        return None, "character.only with a computed argument"
    return m.group(1), None


def scan_script(text: str, origin: str = "<text>", diagnostics: Optional[List[str]] = None) -> List[str]:
    """Package names referenced by R code."""
    found = set()
    quote = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        code, masked, quote = mask_line(line, quote)
        for m in _LOAD_CALL.finditer(masked):
            name, problem = _call_argument(code, m.end(), m.group(1))
            if problem:
                message = f"{origin}:{lineno}: skipped {m.group(1)}() call ({problem})"
                logger.warning(message)
                if diagnostics is not None:
                    diagnostics.append(message)
            elif name and _NAME.match(name):
                found.add(name)
        for m in _NAMESPACE_OP.finditer(masked):
            found.add(m.group(1))
    return sorted(found)


def extract_chunks(text: str) -> str:
    """Keep only the bodies of ```{r ...} chunks; other lines become blank."""
    out = []
    fence = None
    in_r = False
    for line in text.splitlines():
        if fence is None:
            m = _CHUNK_OPEN.match(line)
            if m:
                fence, in_r = m.group(1), True
            else:
                m = _FENCE.match(line)
                if m:
                    fence, in_r = m.group(1), False
            out.append("")
            continue
        if line.strip().startswith(fence) and not line.strip().strip("`"):
            fence, in_r = None, False
            out.append("")
            continue
        out.append(line if in_r else "")
    return "\n".join(out)


def scan_description(text: str, origin: str = "DESCRIPTION",
                     diagnostics: Optional[List[str]] = None) -> List[str]:
    try:
        fields = parse_dcf(text, diagnostics)
        names = set()
        for kind in STRONG_KINDS:
            names.update(dep.name for dep in parse_dep_field(fields.get(DEP_FIELDS[kind], ""), kind))
    except ChronoError as exc:
        message = f"{origin}: {exc}"
        logger.warning(message)
        if diagnostics is not None:
            diagnostics.append(message)
        return []
    return sorted(names)


def _is_candidate(path: Path) -> bool:
    return path.name == "DESCRIPTION" or path.suffix in SCRIPT_SUFFIXES | NOTEBOOK_SUFFIXES


def _scan_file(path: Path, root: Path) -> Tuple[List[str], List[str]]:
    diagnostics: List[str] = []
    origin = path.relative_to(root).as_posix()
    try:
        raw = path.read_bytes()
    except OSError as exc:
        return [], [f"{origin}: unreadable ({exc.strerror or exc})"]
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.decode("utf-8", errors="replace")
        diagnostics.append(f"{origin}: invalid UTF-8 replaced")
    if path.name == "DESCRIPTION":
        return scan_description(text, origin, diagnostics), diagnostics
    if path.suffix in NOTEBOOK_SUFFIXES:
        text = extract_chunks(text)
    return scan_script(text, origin, diagnostics), diagnostics


def _project_files(root: Path) -> List[Path]:
    files = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        for name in filenames:
            path = Path(dirpath) / name
            if _is_candidate(path):
                files.append(path)
    return sorted(files)


def scan_dir(path: Path, bioc_names: AbstractSet[str] = frozenset(),
             diagnostics: Optional[List[str]] = None, max_workers: int = 4) -> List[PackageRef]:
    """CRAN/Bioconductor references for every package a project directory uses."""
    root = Path(path)
    if not root.is_dir():
        raise ScanError(f"{root} is not a directory")
    try:
        os.listdir(root)
    except OSError as exc:
        raise ScanError(f"cannot read {root}: {exc.strerror or exc}") from None

    files = _project_files(root)
    logger.info("scanning %d file(s) under %s", len(files), root)
    names = set()
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for found, problems in pool.map(lambda p: _scan_file(p, root), files):
            names.update(found)
            for message in problems:
                logger.warning(message)
                if diagnostics is not None:
                    diagnostics.append(message)

    base = _base_names()
    refs = [
        PackageRef(source=Source.BIOC if name in bioc_names else Source.CRAN, name=name)
        for name in names
        if name not in base and _NAME.match(name)
    ]
    return sorted(refs, key=lambda ref: (ref.source.value, ref.name))


# Importers

def import_renv_lock(text: str, diagnostics: Optional[List[str]] = None) -> List[PackageRef]:
    """Pinned references from a renv-style lockfile."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ImportSchemaError(f"renv lockfile is not valid JSON ({exc.msg})") from None
    packages = data.get("Packages") if isinstance(data, dict) else None
    if not isinstance(packages, dict):
        raise ImportSchemaError("renv lockfile has no Packages map")

    refs = []
    for key in sorted(packages):
        entry = packages[key]
        if not isinstance(entry, dict) or "Version" not in entry:
            raise ImportSchemaError(f"Packages.{key}: expected an object with a Version")
        name = entry.get("Package", key)
        source = entry.get("Source", "Repository")
        if source == "GitHub":
            user, repo = entry.get("RemoteUsername"), entry.get("RemoteRepo")
            if not user or not repo:
                raise ImportSchemaError(f"Packages.{key}: GitHub entry lacks RemoteUsername/RemoteRepo")
            refs.append(PackageRef(source=Source.GITHUB, name=repo, qualifier=f"{user}/{repo}",
                                   pin=entry.get("RemoteSha") or entry["Version"]))
        elif source == "Bioconductor":
            refs.append(PackageRef(source=Source.BIOC, name=name, pin=entry["Version"]))
        elif source in ("Repository", "CRAN"):
            refs.append(PackageRef(source=Source.CRAN, name=name, pin=entry["Version"]))
        else:
            message = f"Packages.{key}: source {source!r} is not importable; skipped"
            logger.warning(message)
            if diagnostics is not None:
                diagnostics.append(message)
    return refs


def import_session_info(text: str, bioc_names: AbstractSet[str] = frozenset(),
                        diagnostics: Optional[List[str]] = None) -> List[PackageRef]:
    """Pinned references from printed session information (``name_version`` tokens)."""
    start = min((i for i in (text.find(h) for h in _SESSION_HEADERS) if i >= 0), default=0)
    base = _base_names()
    refs, seen = [], set()
    for m in _SESSION_TOKEN.finditer(text[start:]):
        name, version = m.group(1), m.group(2)
        if name in seen:
            continue
        seen.add(name)
        if name in base:
            logger.debug("skipping base package %s_%s", name, version)
            continue
        source = Source.BIOC if name in bioc_names else Source.CRAN
        refs.append(PackageRef(source=source, name=name, pin=version))
    if not refs:
        message = "no name_version package tokens found in session information"
        logger.warning(message)
        if diagnostics is not None:
            diagnostics.append(message)
    return refs

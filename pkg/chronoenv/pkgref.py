"""Package references: parsing shorthands and rendering the canonical form.

Grammar::

    ref    := [prefix "::"] body ["@" pin]
    prefix := "cran" | "bioc" | "github" | "local"
    body   := name | owner "/" repo | path
"""
import logging
import re
from pathlib import Path
from typing import AbstractSet, Iterable, List, Optional

from pydantic import ValidationError

from .errors import RefParseError
from .schemas import PackageRef, Source, local_name

logger = logging.getLogger(__name__)

_PREFIX = re.compile(r"^([A-Za-z][A-Za-z0-9_]*)::(.*)$", re.DOTALL)

DATA_DIR = Path(__file__).parent / "data"


def _build(source: Source, name: str, qualifier: str, pin: Optional[str], raw: str) -> PackageRef:
    try:
        return PackageRef(source=source, name=name, qualifier=qualifier, pin=pin)
    except ValidationError as exc:
        reason = exc.errors()[0]["msg"].removeprefix("Value error, ")
        raise RefParseError(f"{raw!r}: {reason}") from None


def _split_pin(body: str):
    if "@" in body:
        body, pin = body.rsplit("@", 1)
        return body, pin
    return body, None


def parse_ref(raw: str, bioc_names: AbstractSet[str] = frozenset()) -> PackageRef:
    text = raw.strip() if raw else ""
    if not text:
        raise RefParseError("empty package reference")

    m = _PREFIX.match(text)
    if m:
        prefix, body = m.group(1), m.group(2)
        try:
            source = Source(prefix)
        except ValueError:
            raise RefParseError(f"{raw!r}: unknown prefix {prefix!r}") from None
        if not body:
            raise RefParseError(f"{raw!r}: missing package after prefix")
    else:
        source, body = None, text

    if source == Source.LOCAL:
        return _build(Source.LOCAL, local_name(body), body, None, raw)

    body, pin = _split_pin(body)
    slashes = body.count("/")

    if source == Source.GITHUB or (source is None and slashes):
        if slashes != 1:
            raise RefParseError(f"{raw!r}: github references need exactly one '/' (owner/repo)")
        owner, repo = body.split("/")
        if not owner or not repo:
            raise RefParseError(f"{raw!r}: github references need a non-empty owner and repo")
        return _build(Source.GITHUB, repo, body, pin, raw)

    if slashes:
        raise RefParseError(f"{raw!r}: {source.value} package names cannot contain '/'")
    if source is None:
        source = Source.BIOC if body in bioc_names else Source.CRAN
    return _build(source, body, "", pin, raw)


def render_ref(ref: PackageRef) -> str:
    if ref.source in (Source.GITHUB, Source.LOCAL):
        body = ref.qualifier
    else:
        body = ref.name
    text = f"{ref.source.value}::{body}"
    if ref.pin is not None:
        text += f"@{ref.pin}"
    return text


def parse_refs(raws: Iterable[str], bioc_names: AbstractSet[str] = frozenset()) -> List[PackageRef]:
    return [parse_ref(raw, bioc_names) for raw in raws]


def load_bioc_names(path: Optional[Path] = None) -> frozenset:
    """Read the Bioconductor package-name list (one name per line, ``#`` comments)."""
    path = path or DATA_DIR / "bioc_packages.txt"
    names = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.add(line)
    logger.debug("loaded %d Bioconductor package names from %s", len(names), path)
    return frozenset(names)

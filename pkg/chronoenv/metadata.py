"""DCF (DESCRIPTION) parsing, dependency fields and version ordering."""
import logging
import re
from dataclasses import dataclass
from datetime import date
from enum import IntEnum
from functools import total_ordering
from typing import Dict, Iterable, List, Optional, Tuple, Union

from pydantic import ValidationError

from .errors import DCFParseError, DependencyParseError, VersionParseError
from .schemas import (DEP_FIELDS, VERSION_PATTERN, Constraint, DependencySpec, DepKind,
                      ReleaseRecord)

logger = logging.getLogger(__name__)

_DEP_ELEMENT = re.compile(
    r"^(?P<name>[A-Za-z0-9][A-Za-z0-9._]*)\s*"
    r"(?:\(\s*(?P<op>>=|<=|==|>|<)\s*(?P<ver>[^\s()]+)\s*\))?$"
)


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@total_ordering
@dataclass(frozen=True, eq=False)
class VersionString:
    """A numeric version such as ``1.3.4`` or ``1.2-14``.

    ``.`` and ``-`` separators are equivalent for ordering, and equality
    follows the ordering (``1.0-1 == 1.0.1``).
    """

    components: Tuple[int, ...]
    raw: str

    @classmethod
    def parse(cls, raw: Union[str, "VersionString"]) -> "VersionString":
        if isinstance(raw, VersionString):
            return raw
        text = str(raw).strip()
        if not VERSION_PATTERN.match(text):
            raise VersionParseError(f"invalid version string {raw!r}")
        return cls(tuple(int(part) for part in re.split(r"[.-]", text)), text)

    def __eq__(self, other):
        if not isinstance(other, VersionString):
            return NotImplemented
        return self.components == other.components

    def __lt__(self, other):
        if not isinstance(other, VersionString):
            return NotImplemented
        return self.components < other.components

    def __hash__(self):
        return hash(self.components)

    def __str__(self):
        return self.raw

    @property
    def major_minor(self) -> Tuple[int, int]:
        padded = self.components + (0,)
        return padded[0], padded[1]


def version_key(raw: Union[str, VersionString]) -> Tuple[int, ...]:
    return VersionString.parse(raw).components


def compare_versions(a: Union[str, VersionString], b: Union[str, VersionString]) -> Ordering:
    # tuple comparison already makes a strict prefix the smaller value
    ka, kb = version_key(a), version_key(b)
    if ka < kb:
        return Ordering.LESS
    if ka > kb:
        return Ordering.GREATER
    return Ordering.EQUAL


def satisfies(version: Union[str, VersionString], constraint: Constraint) -> bool:
    order = compare_versions(version, constraint.version)
    return {
        ">=": order >= Ordering.EQUAL,
        "<=": order <= Ordering.EQUAL,
        ">": order == Ordering.GREATER,
        "<": order == Ordering.LESS,
        "==": order == Ordering.EQUAL,
    }[constraint.op]


# DCF

def _note(diagnostics: Optional[List[str]], message: str) -> None:
    logger.warning(message)
    if diagnostics is not None:
        diagnostics.append(message)


def parse_dcf(text: str, diagnostics: Optional[List[str]] = None) -> Dict[str, str]:
    """Parse one DCF paragraph into a field map.

    Continuation lines (leading whitespace) are folded into the previous field
    with a single space. A repeated field overrides the earlier value.
    """
    fields: Dict[str, str] = {}
    last = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line[0] in " \t":
            if last is None:
                raise DCFParseError("continuation line before any field", lineno)
            fields[last] = f"{fields[last]} {line.strip()}".strip()
            continue
        key, sep, value = line.partition(":")
        key = key.rstrip()
        if not sep or not key or re.search(r"\s", key):
            raise DCFParseError(f"expected 'Name: value', got {line!r}", lineno)
        if key in fields:
            _note(diagnostics, f"line {lineno}: duplicate field {key!r} overrides the earlier value")
        fields[key] = value.strip()
        last = key
    return fields


def parse_dcf_paragraphs(text: str, diagnostics: Optional[List[str]] = None) -> List[Dict[str, str]]:
    """Split a multi-record DCF file (PACKAGES, VIEWS) on blank lines."""
    paragraphs = []
    for block in re.split(r"\n\s*\n", text.strip()):
        if block.strip():
            paragraphs.append(parse_dcf(block, diagnostics))
    return paragraphs


# Dependency fields

def parse_dep_field(value: str, kind: DepKind) -> List[DependencySpec]:
    deps = []
    if not value or not value.strip():
        return deps
    for element in value.split(","):
        element = " ".join(element.split())
        if not element:
            continue
        m = _DEP_ELEMENT.match(element)
        if not m:
            raise DependencyParseError(element)
        constraint = None
        if m.group("op"):
            if not VERSION_PATTERN.match(m.group("ver")):
                raise DependencyParseError(element, "invalid version")
            constraint = Constraint(op=m.group("op"), version=m.group("ver"))
        try:
            deps.append(DependencySpec(name=m.group("name"), kind=kind, constraint=constraint))
        except ValidationError:
            raise DependencyParseError(element, f"not allowed in {DEP_FIELDS[kind]}") from None
    return deps


def render_dep_field(deps: Iterable[DependencySpec]) -> str:
    parts = []
    for dep in deps:
        if dep.constraint is None:
            parts.append(dep.name)
        else:
            parts.append(f"{dep.name} ({dep.constraint.op} {dep.constraint.version})")
    return ", ".join(parts)


def release_from_description(fields: Dict[str, str], published: date,
                             diagnostics: Optional[List[str]] = None,
                             **extra) -> ReleaseRecord:
    """Build a ReleaseRecord from parsed DESCRIPTION fields."""
    name = fields.get("Package")
    version = fields.get("Version")
    if not name or not version:
        raise DCFParseError("DESCRIPTION lacks Package or Version", 1)
    VersionString.parse(version)

    deps: List[DependencySpec] = []
    r_constraint = None
    seen = set()
    for kind, field in DEP_FIELDS.items():
        for dep in parse_dep_field(fields.get(field, ""), kind):
            if dep.name == "R":
                r_constraint = dep.constraint
                continue
            if (dep.name, kind) in seen:
                _note(diagnostics, f"{name} {version}: {dep.name} listed twice in {field}")
                continue
            seen.add((dep.name, kind))
            deps.append(dep)

    return ReleaseRecord(
        name=name,
        version=version,
        published=published,
        deps=deps,
        sysreqs=fields.get("SystemRequirements", ""),
        r_constraint=r_constraint,
        **extra,
    )

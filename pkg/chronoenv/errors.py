"""Exception hierarchy.

Every error carries a stable ``code`` that the command line prints in its
machine-readable error line.
"""
from datetime import date
from typing import Iterable, Optional


class ChronoError(Exception):
    """Base class for all chronoenv errors."""

    code = "error"


# parsing

class RefParseError(ChronoError):
    code = "ref-parse"


class DCFParseError(ChronoError):
    code = "dcf-parse"

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DependencyParseError(ChronoError):
    code = "dependency-parse"

    def __init__(self, element: str, reason: str = "malformed constraint"):
        super().__init__(f"{reason} in dependency element {element!r}")
        self.element = element


class VersionParseError(ChronoError):
    code = "version-parse"


# registry

class PackageNotFoundError(ChronoError):
    code = "not-found"

    def __init__(self, ref: str):
        super().__init__(f"package {ref} not found")
        self.ref = ref


class TransportError(ChronoError):
    code = "transport"

    def __init__(self, query: str, reason: str):
        super().__init__(f"{query}: {reason}")
        self.query = query


class NotAvailableAtDateError(ChronoError):
    code = "not-available-at-date"

    def __init__(self, ref: str, requested: date, earliest: Optional[date]):
        when = earliest.isoformat() if earliest else "unknown"
        super().__init__(f"{ref} has no release on or before {requested.isoformat()} "
                         f"(earliest known release: {when})")
        self.ref = ref
        self.requested = requested
        self.earliest = earliest


class UnsupportedEraError(ChronoError):
    code = "unsupported-era"

    def __init__(self, requested: date, earliest: date):
        super().__init__(f"snapshot date {requested.isoformat()} is earlier than "
                         f"{earliest.isoformat()}, the earliest supported interpreter release")
        self.requested = requested
        self.earliest = earliest


class BiocCalendarError(ChronoError):
    code = "bioc-calendar"


class FixtureError(ChronoError):
    code = "fixture"


# resolver

class LockSchemaError(ChronoError):
    code = "lock-schema"

    def __init__(self, field: str, reason: str):
        super().__init__(f"lockfile field {field!r}: {reason}")
        self.field = field


# sysreqs

class UnsupportedOSError(ChronoError):
    code = "unsupported-os"

    def __init__(self, os_id: str, supported: Iterable[str]):
        self.supported = sorted(supported)
        super().__init__(f"unsupported os {os_id!r}; supported: {', '.join(self.supported)}")
        self.os_id = os_id


class RuleTableError(ChronoError):
    code = "sysreqs-rules"


# container

class OptionError(ChronoError):
    code = "option"


class OptionConflictError(OptionError):
    code = "option-conflict"


class OutputExistsError(ChronoError):
    code = "output-exists"


class DownloadError(ChronoError):
    code = "download"

    def __init__(self, package: str, url: str, reason: str):
        super().__init__(f"cannot download {package} from {url}: {reason}")
        self.package = package
        self.url = url


# scanner

class ScanError(ChronoError):
    code = "scan"


class ImportSchemaError(ChronoError):
    code = "import-schema"

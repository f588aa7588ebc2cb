"""Release histories and the interpreter / Bioconductor calendars.

Two backends answer the same queries:

* ``MemoryBackend`` holds release records in memory; ``FixtureBackend`` fills
  it lazily from an on-disk fixture directory::

      r_releases.json              (optional, shipped table otherwise)
      bioc_releases.json           (optional, shipped table otherwise)
      cran/<pkg>.json
      bioc/<bioc_version>/<pkg>.json
      github/<owner>/<repo>.json

  Each package file is a list of ``{version, date, deps: [{name, kind, op?, ver?}],
  sysreqs, r_constraint?, commit?}`` objects.

* ``LiveBackend`` talks to the metadata service, Bioconductor and the code
  hosting API over HTTP and memoizes every response in the cache directory.
"""
import bisect
import json
import logging
import re
import threading
from datetime import date
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional

import httpx

from . import __version__, crud
from .config import Settings
from .config import settings as default_settings
from .database import make_session_factory, session_scope
from .errors import (BiocCalendarError, ChronoError, FixtureError, NotAvailableAtDateError,
                     PackageNotFoundError, TransportError, UnsupportedEraError)
from .metadata import (VersionString, parse_dcf, parse_dcf_paragraphs,
                       release_from_description, version_key)
from .pkgref import render_ref
from .schemas import (BiocRelease, Constraint, DependencySpec, InterpreterRelease, PackageRef,
                      ReleaseRecord, Source)

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
EARLIEST_SUPPORTED = date(2001, 8, 31)

_CONSTRAINT_TEXT = re.compile(r"^\s*(>=|<=|==|>|<)\s*(\S+)\s*$")


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FixtureError(f"{path}: invalid JSON ({exc})") from None


def _release_key(record: ReleaseRecord):
    return record.published, version_key(record.version)


def _best(records: Iterable[ReleaseRecord]) -> ReleaseRecord:
    return max(records, key=_release_key)


def load_interpreter_releases(path: Optional[Path] = None) -> List[InterpreterRelease]:
    path = path or DATA_DIR / "r_releases.json"
    try:
        table = [InterpreterRelease(**row) for row in _read_json(path)]
    except (TypeError, ValueError) as exc:
        raise FixtureError(f"{path}: {exc}") from None
    for prev, cur in zip(table, table[1:]):
        if not (version_key(prev.version) < version_key(cur.version) and prev.released < cur.released):
            raise FixtureError(f"{path}: interpreter table not increasing at {cur.version}")
    return table


def load_bioc_calendar(path: Optional[Path] = None) -> List[BiocRelease]:
    path = path or DATA_DIR / "bioc_releases.json"
    try:
        table = [BiocRelease(**row) for row in _read_json(path)]
    except (TypeError, ValueError) as exc:
        raise FixtureError(f"{path}: {exc}") from None
    for prev, cur in zip(table, table[1:]):
        if prev.start_date >= cur.start_date:
            raise FixtureError(f"{path}: Bioconductor calendar not increasing at {cur.bioc_version}")
    return table


def load_base_packages(path: Optional[Path] = None) -> Dict[str, frozenset]:
    path = path or DATA_DIR / "base_packages.json"
    return {era: frozenset(names) for era, names in _read_json(path).items()}


def _fixture_constraint(value) -> Optional[Constraint]:
    if value is None:
        return None
    if isinstance(value, str):
        m = _CONSTRAINT_TEXT.match(value)
        if not m:
            raise ValueError(f"bad constraint {value!r}")
        return Constraint(op=m.group(1), version=m.group(2))
    return Constraint(op=value["op"], version=value.get("ver", value.get("version")))


def record_from_fixture(name: str, row: dict, source_file, bioc_release: Optional[str] = None) -> ReleaseRecord:
    """Convert one fixture release object; problems are reported against the file."""
    try:
        deps = []
        r_constraint = _fixture_constraint(row.get("r_constraint"))
        for dep in row.get("deps", []):
            constraint = Constraint(op=dep["op"], version=dep["ver"]) if dep.get("op") else None
            if dep["name"] == "R":
                r_constraint = r_constraint or constraint
                continue
            deps.append(DependencySpec(name=dep["name"], kind=dep.get("kind", "imports"),
                                       constraint=constraint))
        return ReleaseRecord(
            name=row.get("package", name),
            version=row["version"],
            published=row["date"],
            deps=deps,
            sysreqs=row.get("sysreqs") or "",
            r_constraint=r_constraint,
            commit=row.get("commit"),
            bioc_release=bioc_release,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FixtureError(f"{source_file}: release {row.get('version')!r}: {exc}") from None


# Backends

class MemoryBackend:
    """Release data held in memory.

    ``cran`` maps package name to records, ``github`` maps ``owner/repo`` to
    records (one per commit) and ``bioc`` maps a Bioconductor version to a
    name-to-records map.
    """

    name = "memory"

    def __init__(self, cran: Optional[Dict[str, List[ReleaseRecord]]] = None,
                 github: Optional[Dict[str, List[ReleaseRecord]]] = None,
                 bioc: Optional[Dict[str, Dict[str, List[ReleaseRecord]]]] = None,
                 r_releases: Optional[List[InterpreterRelease]] = None,
                 bioc_releases: Optional[List[BiocRelease]] = None):
        self.cran = dict(cran or {})
        self.github = dict(github or {})
        self.bioc = {ver: dict(pkgs) for ver, pkgs in (bioc or {}).items()}
        self._r_releases = r_releases
        self._bioc_releases = bioc_releases

    def _load_cran(self, name: str) -> Optional[List[ReleaseRecord]]:
        return self.cran.get(name)

    def _load_github(self, qualifier: str) -> Optional[List[ReleaseRecord]]:
        return self.github.get(qualifier)

    def _load_bioc(self, bioc_version: str, name: str) -> Optional[List[ReleaseRecord]]:
        return self.bioc.get(bioc_version, {}).get(name)

    def _bioc_versions(self) -> List[str]:
        return list(self.bioc)

    def history(self, ref: PackageRef) -> List[ReleaseRecord]:
        if ref.source == Source.CRAN:
            records = self._load_cran(ref.name)
        elif ref.source == Source.GITHUB:
            records = self._load_github(ref.qualifier)
        else:
            raise ValueError(f"{ref.source.value} histories are not served by {self.name} backends")
        if not records:
            raise PackageNotFoundError(render_ref(ref.unpinned()))
        return list(records)

    def bioc_train(self, name: str, bioc_version: str) -> Optional[List[ReleaseRecord]]:
        return self._load_bioc(bioc_version, name)

    def bioc_trains(self, name: str) -> Dict[str, List[ReleaseRecord]]:
        trains = {}
        for ver in self._bioc_versions():
            records = self._load_bioc(ver, name)
            if records:
                trains[ver] = records
        return trains

    def interpreter_releases(self) -> List[InterpreterRelease]:
        return self._r_releases or load_interpreter_releases()

    def bioc_calendar(self) -> List[BiocRelease]:
        return self._bioc_releases or load_bioc_calendar()


class FixtureBackend(MemoryBackend):
    """Hermetic backend reading the fixture directory layout on demand."""

    name = "fixture"

    def __init__(self, root: Path):
        root = Path(root)
        if not root.is_dir():
            raise FixtureError(f"registry fixture {root} is not a directory")
        r_file, bioc_file = root / "r_releases.json", root / "bioc_releases.json"
        super().__init__(
            r_releases=load_interpreter_releases(r_file) if r_file.exists() else None,
            bioc_releases=load_bioc_calendar(bioc_file) if bioc_file.exists() else None,
        )
        self.root = root
        self._files: Dict[Path, Optional[List[ReleaseRecord]]] = {}
        self._lock = threading.Lock()

    def _load_file(self, path: Path, name: str, bioc_release: Optional[str] = None):
        with self._lock:
            if path in self._files:
                return self._files[path]
        records = None
        if path.is_file():
            rows = _read_json(path)
            if not isinstance(rows, list):
                raise FixtureError(f"{path}: expected a list of release objects")
            records = [record_from_fixture(name, row, path, bioc_release) for row in rows]
        with self._lock:
            return self._files.setdefault(path, records)

    def _load_cran(self, name):
        return self._load_file(self.root / "cran" / f"{name}.json", name)

    def _load_github(self, qualifier):
        owner, repo = qualifier.split("/")
        return self._load_file(self.root / "github" / owner / f"{repo}.json", repo)

    def _load_bioc(self, bioc_version, name):
        return self._load_file(self.root / "bioc" / bioc_version / f"{name}.json", name, bioc_version)

    def _bioc_versions(self):
        bioc_dir = self.root / "bioc"
        if not bioc_dir.is_dir():
            return []
        return sorted((p.name for p in bioc_dir.iterdir() if p.is_dir()), key=version_key)


class ResponseCache:
    """Memo of live responses keyed by (endpoint, query), stored with SQLAlchemy."""

    def __init__(self, cache_dir: Path):
        self._factory = make_session_factory(Path(cache_dir))
        self._write_lock = threading.Lock()

    def get(self, endpoint: str, query: str):
        with session_scope(self._factory) as db:
            row = crud.get_response(db, endpoint, query)
            return (row.status, row.body) if row is not None else None

    def put(self, endpoint: str, query: str, status: int, body: str) -> None:
        with self._write_lock, session_scope(self._factory) as db:
            crud.put_response(db, endpoint, query, status, body)


def _crandb_value(value) -> str:
    # the metadata service returns dependency fields as {name: "op version" | "*"}
    if isinstance(value, dict):
        return ", ".join(name if spec in ("*", "") else f"{name} ({spec})" for name, spec in value.items())
    return str(value)


class LiveBackend:
    name = "live"

    def __init__(self, cfg: Settings = default_settings, client: Optional[httpx.Client] = None,
                 cache_dir: Optional[Path] = None):
        self.cfg = cfg
        self.client = client or httpx.Client(
            timeout=cfg.HTTP_TIMEOUT,
            follow_redirects=True,
            headers={"User-Agent": f"chronoenv/{__version__}"},
        )
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self._github_headers = {"Accept": "application/vnd.github+json"}
        if cfg.GITHUB_TOKEN:
            self._github_headers["Authorization"] = f"token {cfg.GITHUB_TOKEN}"
        self._calendar = load_bioc_calendar()
        self._views: Dict[str, Dict[str, dict]] = {}
        self._lock = threading.Lock()

    def _fetch(self, endpoint: str, url: str, params: Optional[dict] = None,
               headers: Optional[dict] = None):
        query = str(httpx.URL(url, params=params)) if params else url
        if self.cache is not None:
            hit = self.cache.get(endpoint, query)
            if hit is not None:
                return hit
        logger.debug("GET %s", query)
        try:
            resp = self.client.get(url, params=params, headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(query, str(exc) or type(exc).__name__) from exc
        if resp.status_code not in (200, 404):
            raise TransportError(query, f"HTTP {resp.status_code}")
        if self.cache is not None:
            self.cache.put(endpoint, query, resp.status_code, resp.text)
        return resp.status_code, resp.text

    def _json(self, query: str, body: str):
        try:
            return json.loads(body)
        except json.JSONDecodeError as exc:
            raise TransportError(query, f"invalid JSON ({exc})") from None

    # CRAN

    def _cran_history(self, name: str) -> List[ReleaseRecord]:
        url = f"{self.cfg.CRANDB_URL}/{name}/all"
        status, body = self._fetch("crandb", url)
        if status == 404:
            raise PackageNotFoundError(f"cran::{name}")
        data = self._json(url, body)
        timeline = data.get("timeline", {})
        records = []
        for version, fields in data.get("versions", {}).items():
            published = timeline.get(version) or fields.get("Date/Publication")
            if not published:
                logger.warning("%s %s has no publication date; skipped", name, version)
                continue
            flat = {key: _crandb_value(value) for key, value in fields.items()}
            try:
                records.append(release_from_description(flat, date.fromisoformat(published[:10])))
            except (ChronoError, ValueError) as exc:
                logger.warning("skipping %s %s: %s", name, version, exc)
        if not records:
            raise PackageNotFoundError(f"cran::{name}")
        return records

    # GitHub

    def _commits(self, ref: PackageRef, until: Optional[date] = None, per_page: int = 100,
                 max_pages: Optional[int] = None) -> list:
        """Commits on the default branch, newest first, following pages until a short one."""
        url = f"{self.cfg.GITHUB_API_URL}/repos/{ref.qualifier}/commits"
        commits = []
        page = 1
        while True:
            params = {"per_page": per_page, "page": page}
            if until is not None:
                params["until"] = f"{until.isoformat()}T23:59:59Z"
            status, body = self._fetch("github", url, params, self._github_headers)
            if status == 404:
                raise PackageNotFoundError(render_ref(ref.unpinned()))
            batch = self._json(url, body)
            commits += batch
            if len(batch) < per_page or (max_pages is not None and page >= max_pages):
                return commits
            page += 1

    def _commit_release(self, ref: PackageRef, commit: dict) -> Optional[ReleaseRecord]:
        sha = commit["sha"]
        # the committer date defines a commit's publication date
        when = date.fromisoformat(commit["commit"]["committer"]["date"][:10])
        url = f"{self.cfg.GITHUB_RAW_URL}/{ref.qualifier}/{sha}/DESCRIPTION"
        status, body = self._fetch("github-raw", url, headers=self._github_headers)
        if status == 404:
            logger.info("%s has no DESCRIPTION at %s", ref.qualifier, sha)
            return None
        return release_from_description(parse_dcf(body), when, commit=sha)

    def _github_history(self, ref: PackageRef) -> List[ReleaseRecord]:
        records = [rec for commit in self._commits(ref) if (rec := self._commit_release(ref, commit))]
        if not records:
            raise PackageNotFoundError(render_ref(ref.unpinned()))
        return records

    def latest(self, ref: PackageRef, when: date) -> Optional[ReleaseRecord]:
        """Fast path: the newest commit on or before ``when`` without listing history."""
        if ref.source != Source.GITHUB:
            return None
        for commit in self._commits(ref, until=when, per_page=1, max_pages=1):
            return self._commit_release(ref, commit)
        raise NotAvailableAtDateError(render_ref(ref.unpinned()), when, None)

    def history(self, ref: PackageRef) -> List[ReleaseRecord]:
        if ref.source == Source.CRAN:
            return self._cran_history(ref.name)
        if ref.source == Source.GITHUB:
            return self._github_history(ref)
        raise ValueError(f"{ref.source.value} histories are not served by the live backend")

    # Bioconductor

    def _bioc_views(self, bioc_version: str) -> Dict[str, dict]:
        with self._lock:
            if bioc_version in self._views:
                return self._views[bioc_version]
        url = f"{self.cfg.BIOC_URL}/packages/{bioc_version}/bioc/VIEWS"
        status, body = self._fetch("bioc", url)
        views = {}
        if status == 200:
            for fields in parse_dcf_paragraphs(body):
                if "Package" in fields:
                    views[fields["Package"]] = fields
        with self._lock:
            return self._views.setdefault(bioc_version, views)

    def bioc_train(self, name: str, bioc_version: str) -> Optional[List[ReleaseRecord]]:
        fields = self._bioc_views(bioc_version).get(name)
        if fields is None:
            return None
        start = next(rel.start_date for rel in self._calendar if rel.bioc_version == bioc_version)
        return [release_from_description(fields, start, bioc_release=bioc_version)]

    def bioc_trains(self, name: str) -> Dict[str, List[ReleaseRecord]]:
        trains = {}
        for rel in self._calendar:
            records = self.bioc_train(name, rel.bioc_version)
            if records:
                trains[rel.bioc_version] = records
        return trains

    def interpreter_releases(self) -> List[InterpreterRelease]:
        return load_interpreter_releases()

    def bioc_calendar(self) -> List[BiocRelease]:
        return self._calendar


# Registry

class SnapshotRegistry:
    """Uniform snapshot-date queries over a backend.

    Answers are memoized for the lifetime of the registry, so repeated
    identical queries return identical answers.
    """

    def __init__(self, backend, base_packages: Optional[Dict[str, frozenset]] = None):
        self.backend = backend
        self._interp = backend.interpreter_releases()
        self._calendar = backend.bioc_calendar()
        self._base = base_packages or load_base_packages()
        self._memo: Dict[tuple, object] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_fixture(cls, root: Path) -> "SnapshotRegistry":
        return cls(FixtureBackend(root))

    @classmethod
    def from_settings(cls, cfg: Settings = default_settings,
                      client: Optional[httpx.Client] = None) -> "SnapshotRegistry":
        if cfg.REGISTRY is not None:
            logger.info("using fixture registry at %s", cfg.REGISTRY)
            return cls.from_fixture(cfg.REGISTRY)
        return cls(LiveBackend(cfg, client=client, cache_dir=cfg.CACHE))

    def _memoized(self, key: tuple, compute: Callable):
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        value = compute()
        with self._lock:
            return self._memo.setdefault(key, value)

    # packages

    def _local_release(self, ref: PackageRef, when: date) -> ReleaseRecord:
        path = Path(ref.qualifier) / "DESCRIPTION"
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise PackageNotFoundError(render_ref(ref)) from None
        except OSError as exc:
            raise TransportError(str(path), str(exc)) from exc
        return release_from_description(parse_dcf(text), when)

    def release_history(self, ref: PackageRef, as_of: Optional[date] = None) -> List[ReleaseRecord]:
        """All known releases of ``ref``, oldest first.

        A local package has a single synthetic release dated ``as_of``
        (today when not given).
        """
        if ref.source == Source.LOCAL:
            return [self._local_release(ref, as_of or date.today())]
        key = ("history", ref.unpinned())

        def compute():
            if ref.source == Source.BIOC:
                by_version: Dict[tuple, ReleaseRecord] = {}
                for records in self.backend.bioc_trains(ref.name).values():
                    for rec in records:
                        vk = version_key(rec.version)
                        if vk not in by_version or rec.published < by_version[vk].published:
                            by_version[vk] = rec
                records = list(by_version.values())
                if not records:
                    raise PackageNotFoundError(render_ref(ref.unpinned()))
            else:
                records = self.backend.history(ref.unpinned())
            return tuple(sorted(records, key=_release_key))

        return list(self._memoized(key, compute))

    def has_history(self, ref: PackageRef) -> bool:
        try:
            self.release_history(ref)
        except PackageNotFoundError:
            return False
        return True

    def latest_at(self, ref: PackageRef, when: date) -> ReleaseRecord:
        """The release with the latest publication date on or before ``when``.

        Same-day releases are broken by the higher version.
        """
        if ref.source == Source.LOCAL:
            return self._local_release(ref, when)
        key = ("latest", ref.unpinned(), when)

        def compute():
            fast = getattr(self.backend, "latest", None)
            if fast is not None:
                record = fast(ref.unpinned(), when)
                if record is not None:
                    return record
            if ref.source == Source.BIOC:
                record = self._bioc_latest(ref, when)
                if record is not None:
                    return record
            history = self.release_history(ref)
            candidates = [rec for rec in history if rec.published <= when]
            if not candidates:
                raise NotAvailableAtDateError(render_ref(ref.unpinned()), when,
                                              history[0].published if history else None)
            return _best(candidates)

        return self._memoized(key, compute)

    def _bioc_latest(self, ref: PackageRef, when: date) -> Optional[ReleaseRecord]:
        try:
            active = self.bioc_version_at(when)
        except BiocCalendarError:
            return None
        train = self.backend.bioc_train(ref.name, active.raw) or []
        candidates = [rec for rec in train if rec.published <= when]
        if candidates:
            return _best(candidates)
        logger.info("%s is not in Bioconductor %s; searching other release trains", ref.name, active)
        return None

    def release_for_pin(self, ref: PackageRef, as_of: Optional[date] = None) -> ReleaseRecord:
        """The release matching ``ref.pin`` (a version, or a commit prefix for GitHub)."""
        if ref.pin is None:
            raise ValueError(f"{render_ref(ref)} is not pinned")
        pin_is_version = bool(re.fullmatch(r"\d+(?:[.-]\d+)*", ref.pin))
        for rec in reversed(self.release_history(ref, as_of)):
            if pin_is_version and version_key(rec.version) == version_key(ref.pin):
                return rec
            if rec.commit and rec.commit.startswith(ref.pin):
                return rec
        raise PackageNotFoundError(render_ref(ref))

    # calendars

    def interpreter_version_at(self, when: date) -> VersionString:
        first = self._interp[0]
        if when < first.released:
            raise UnsupportedEraError(when, first.released)
        idx = bisect.bisect_right([rel.released for rel in self._interp], when) - 1
        return VersionString.parse(self._interp[idx].version)

    def interpreter_release(self, version: str) -> Optional[InterpreterRelease]:
        for rel in self._interp:
            if version_key(rel.version) == version_key(version):
                return rel
        return None

    def bioc_version_at(self, when: date) -> VersionString:
        if not self._calendar or when < self._calendar[0].start_date:
            first = self._calendar[0].start_date.isoformat() if self._calendar else "n/a"
            raise BiocCalendarError(f"{when.isoformat()} precedes the first Bioconductor release ({first})")
        idx = bisect.bisect_right([rel.start_date for rel in self._calendar], when) - 1
        return VersionString.parse(self._calendar[idx].bioc_version)

    def base_packages(self, r_version: str) -> frozenset:
        """Packages bundled with the interpreter ``r_version``."""
        wanted = VersionString.parse(r_version).major_minor
        eras = sorted(self._base, key=version_key)
        chosen = None
        for era in eras:
            if VersionString.parse(era).major_minor <= wanted:
                chosen = era
        return self._base[chosen] if chosen is not None else self._base[eras[0]]

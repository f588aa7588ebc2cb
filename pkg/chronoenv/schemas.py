import re
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator, model_validator

VERSION_PATTERN = re.compile(r"^\d+(?:[.-]\d+)*$")
_BAD_NAME_CHARS = re.compile(r"[\s,()]")


def _check_version(value: str) -> str:
    if not VERSION_PATTERN.match(value):
        raise ValueError(f"invalid version string {value!r}")
    return value


VersionText = Annotated[str, AfterValidator(_check_version)]


def local_name(path: str) -> str:
    """Package name of a local source tree: the last path component."""
    trimmed = path.rstrip("/") or path
    return Path(trimmed).name or trimmed


class Source(str, Enum):
    CRAN = "cran"
    BIOC = "bioc"
    GITHUB = "github"
    LOCAL = "local"


class DepKind(str, Enum):
    DEPENDS = "depends"
    IMPORTS = "imports"
    LINKING_TO = "linking_to"
    SUGGESTS = "suggests"
    ENHANCES = "enhances"


STRONG_KINDS = (DepKind.DEPENDS, DepKind.IMPORTS, DepKind.LINKING_TO)
SOFT_KINDS = (DepKind.SUGGESTS, DepKind.ENHANCES)

# DESCRIPTION field name for each dependency kind
DEP_FIELDS = {
    DepKind.DEPENDS: "Depends",
    DepKind.IMPORTS: "Imports",
    DepKind.LINKING_TO: "LinkingTo",
    DepKind.SUGGESTS: "Suggests",
    DepKind.ENHANCES: "Enhances",
}


# Package references

class PackageRef(BaseModel):
    source: Source
    name: str
    qualifier: str = ""
    pin: Optional[str] = None
    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        if not self.name or _BAD_NAME_CHARS.search(self.name):
            raise ValueError(f"invalid package name {self.name!r}")
        if self.source == Source.GITHUB:
            parts = self.qualifier.split("/")
            if len(parts) != 2 or not all(parts) or re.search(r"\s", self.qualifier):
                raise ValueError(f"github qualifier must be owner/repo, got {self.qualifier!r}")
            if self.name != parts[1]:
                raise ValueError(f"github package name {self.name!r} must match repo {parts[1]!r}")
        elif self.source == Source.LOCAL:
            if not self.qualifier:
                raise ValueError("local reference needs a path")
            if self.pin is not None:
                raise ValueError("local references cannot be pinned")
            if self.name != local_name(self.qualifier):
                raise ValueError(f"local package name {self.name!r} must match the last path component "
                                 f"of {self.qualifier!r}")
        else:
            if self.qualifier:
                raise ValueError(f"{self.source.value} references take no qualifier")
            if "/" in self.name or "@" in self.name:
                raise ValueError(f"invalid package name {self.name!r}")
        if self.pin is not None and (not self.pin or _BAD_NAME_CHARS.search(self.pin) or "@" in self.pin):
            raise ValueError(f"invalid pin {self.pin!r}")
        return self

    def unpinned(self) -> "PackageRef":
        return self.model_copy(update={"pin": None})


# Package metadata

class Constraint(BaseModel):
    op: Literal[">=", "<=", ">", "<", "=="]
    version: VersionText
    model_config = ConfigDict(frozen=True)

    def __str__(self) -> str:
        return f"{self.op} {self.version}"


class DependencySpec(BaseModel):
    name: str
    kind: DepKind
    constraint: Optional[Constraint] = None
    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        if not self.name or _BAD_NAME_CHARS.search(self.name):
            raise ValueError(f"invalid dependency name {self.name!r}")
        if self.name == "R" and self.kind != DepKind.DEPENDS:
            raise ValueError("R may only appear in Depends")
        return self


class ReleaseRecord(BaseModel):
    name: str
    version: VersionText
    published: date
    deps: List[DependencySpec] = Field(default_factory=list)
    sysreqs: str = ""
    r_constraint: Optional[Constraint] = None
    commit: Optional[str] = None
    bioc_release: Optional[str] = None
    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _unique_deps(self):
        seen = set()
        for dep in self.deps:
            key = (dep.name, dep.kind)
            if key in seen:
                raise ValueError(f"duplicate dependency {dep.name} ({dep.kind.value})")
            seen.add(key)
        return self


class InterpreterRelease(BaseModel):
    version: VersionText
    released: date
    model_config = ConfigDict(frozen=True)


class BiocRelease(BaseModel):
    bioc_version: VersionText
    start_date: date
    model_config = ConfigDict(frozen=True)


# Resolution output

class ResolvedNode(BaseModel):
    ref: PackageRef
    version: VersionText
    published: date
    sysreqs: str = ""
    source_url: str = ""
    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        if self.ref.source != Source.LOCAL and not self.source_url:
            raise ValueError(f"{self.ref.name}: source_url is required for {self.ref.source.value} packages")
        return self


Edge = Tuple[str, str, DepKind]


class ResolvedGraph(BaseModel):
    snapshot_date: date
    r_version: VersionText
    os: str
    roots: List[PackageRef]
    nodes: Dict[str, ResolvedNode]
    edges: List[Edge] = Field(default_factory=list)
    diagnostics: List[str] = Field(default_factory=list)
    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check(self):
        for src, dst, _ in self.edges:
            if src not in self.nodes or dst not in self.nodes:
                raise ValueError(f"edge {src} -> {dst} references an unknown package")
        return self


class LockNode(BaseModel):
    source: Source
    qualifier: str = ""
    version: str
    published: date
    sysreqs: str = ""
    source_url: str = ""
    model_config = ConfigDict(extra="allow")


class LockFile(BaseModel):
    schema_version: int
    snapshot_date: date
    r_version: str
    os: str
    roots: List[str]
    nodes: Dict[str, LockNode]
    edges: List[Tuple[str, str, DepKind]]
    diagnostics: List[str] = Field(default_factory=list)
    model_config = ConfigDict(extra="allow")


# System requirements

class SysreqRule(BaseModel):
    pattern: str
    os: str
    packages: List[str] = Field(min_length=1)
    model_config = ConfigDict(frozen=True)

    @field_validator("pattern")
    @classmethod
    def _compiles(cls, value: str) -> str:
        try:
            re.compile(value, re.IGNORECASE)
        except re.error as exc:
            raise ValueError(f"pattern {value!r} does not compile: {exc}") from exc
        return value


# Container planning

class BaseImage(BaseModel):
    kind: Literal["rocker", "debian_source_build"]
    image: str
    digest: Optional[str] = None
    # apt before 0.6 has no --no-install-recommends
    apt_no_recommends: bool = True
    model_config = ConfigDict(frozen=True)

    @property
    def reference(self) -> str:
        return f"{self.image}@{self.digest}" if self.digest else self.image


class InstallStep(BaseModel):
    name: str
    version: str
    source_url: str
    model_config = ConfigDict(frozen=True)


class DockerizeOptions(BaseModel):
    output_dir: Path
    image: Optional[str] = None
    no_rocker: bool = False
    cache: bool = False
    lib: Optional[str] = None
    materials_dir: Optional[Path] = None
    shell: bool = False


class ContainerPlan(BaseModel):
    graph: ResolvedGraph
    base: BaseImage
    build_packages: List[str] = Field(default_factory=list)
    os_packages: List[str]
    install_sequence: List[InstallStep]
    cache: bool = False
    lib_path: Optional[str] = None
    materials_dir: Optional[Path] = None
    output_dir: Path
    local_paths: Dict[str, str] = Field(default_factory=dict)
    shell: bool = False
    interpreter_url: Optional[str] = None
    model_config = ConfigDict(frozen=True)

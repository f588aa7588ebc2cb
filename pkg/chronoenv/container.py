"""Build contexts for resolved graphs: Dockerfile, install script, cache and compendium Makefile.

For R >= 3.1 the Rocker images are used as base; older interpreters are
compiled from source on a Debian image of the matching era.
"""
import json
import logging
import os
import re
import shlex
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path, PurePosixPath
from typing import List, Optional

import httpx

from .config import Settings
from .config import settings as default_settings
from .errors import DownloadError, OptionConflictError, OptionError, OutputExistsError
from .metadata import VersionString
from .pkgref import render_ref
from .resolver import order_with_cycles
from .schemas import (BaseImage, ContainerPlan, DockerizeOptions, InstallStep, ResolvedGraph,
                      Source, SysreqRule)
from .sysreqs import load_rules, map_sysreqs

logger = logging.getLogger(__name__)

DEBIAN_IMAGES = Path(__file__).parent / "data" / "debian_images.json"
ROCKER_IMAGES = ("r-ver", "rstudio")
ROCKER_MIN = VersionString.parse("3.1")
TOOLCHAIN = ("build-essential", "wget")
CONTAINER_HOME = "/chronoenv"
MATERIALS_HOME = "/materials"

_HANDLE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")

DEFAULT_RENDER_COMMAND = "rmarkdown::render('materials/README.Rmd', output_file = '${output_file}')"


def rocker_image(image: str, r_version: str) -> str:
    return f"rocker/{image}:{r_version}"


def interpreter_source_url(r_version: str, cfg: Settings = default_settings) -> str:
    version = VersionString.parse(r_version)
    major = version.components[0]
    # the R-1 series was published as .tgz
    suffix = "tgz" if major == 1 else "tar.gz"
    return f"{cfg.CRAN_URL}/src/base/R-{major}/R-{version.raw}.{suffix}"


def debian_era(r_version: str, table: Optional[Path] = None) -> dict:
    """Debian image entry for compiling ``r_version`` from source."""
    wanted = VersionString.parse(r_version)
    rows = json.loads(Path(table or DEBIAN_IMAGES).read_text(encoding="utf-8"))
    for row in rows:
        if row["below"] is None or wanted < VersionString.parse(row["below"]):
            return row
    return rows[-1]


def _check_lib(lib: Optional[str]) -> Optional[str]:
    if lib is None:
        return None
    path = PurePosixPath(lib)
    if not lib.strip() or path.is_absolute() or ".." in path.parts or "\\" in lib:
        raise OptionError(f"lib must be a relative path without '..' segments, got {lib!r}")
    return path.as_posix()


def plan(graph: ResolvedGraph, options: DockerizeOptions, rules: Optional[List[SysreqRule]] = None,
         cfg: Settings = default_settings, diagnostics: Optional[List[str]] = None) -> ContainerPlan:
    """Decide base image, OS packages and install sequence for ``graph``."""
    if options.image is not None and options.image not in ROCKER_IMAGES:
        raise OptionError(f"image must be one of {', '.join(ROCKER_IMAGES)}, got {options.image!r}")
    lib_path = _check_lib(options.lib)
    if options.materials_dir is not None and not Path(options.materials_dir).is_dir():
        raise OptionError(f"materials directory {options.materials_dir} does not exist")

    r_version = VersionString.parse(graph.r_version)
    interpreter_url = None
    if r_version >= ROCKER_MIN and not options.no_rocker:
        base = BaseImage(kind="rocker", image=rocker_image(options.image or "r-ver", graph.r_version))
        build_packages = []
    else:
        if options.image is not None:
            raise OptionConflictError(
                f"image {options.image!r} needs a Rocker base, but R {graph.r_version} is built from source"
                + (" (no_rocker is set)" if options.no_rocker else ""))
        era = debian_era(graph.r_version)
        base = BaseImage(kind="debian_source_build", image=era["image"], digest=era.get("digest"),
                         apt_no_recommends=era.get("apt_no_recommends", True))
        build_packages = sorted(era["build_packages"])
        interpreter_url = interpreter_source_url(graph.r_version, cfg)

    rules = rules if rules is not None else load_rules(cfg.SYSREQS_RULES_FILE)
    sysreqs = [node.sysreqs for node in graph.nodes.values()]
    os_packages = sorted(set(map_sysreqs(sysreqs, graph.os, rules, diagnostics)) | set(TOOLCHAIN))

    order, cycles = order_with_cycles(graph)
    for message in cycles:
        logger.warning(message)
        if diagnostics is not None:
            diagnostics.append(message)

    local_paths = {}
    steps = []
    for name in order:
        node = graph.nodes[name]
        if node.ref.source == Source.LOCAL:
            local_paths[name] = node.ref.qualifier
        steps.append(InstallStep(name=name, version=node.version, source_url=node.source_url))

    logger.info("planned %s base %s with %d package(s)", base.kind, base.reference, len(steps))
    return ContainerPlan(
        graph=graph,
        base=base,
        build_packages=build_packages,
        os_packages=os_packages,
        install_sequence=steps,
        cache=options.cache,
        lib_path=lib_path,
        materials_dir=options.materials_dir,
        output_dir=options.output_dir,
        local_paths=local_paths,
        shell=options.shell,
        interpreter_url=interpreter_url,
    )


# Rendering

def _cached_tarball(step: InstallStep) -> str:
    return f"cache/{step.name}_{step.version}.tar.gz"


def _interpreter_tarball(plan: ContainerPlan) -> str:
    return plan.interpreter_url.rsplit("/", 1)[-1]


def _apt_install(packages: List[str], no_recommends: bool = True) -> List[str]:
    flags = "-y --no-install-recommends" if no_recommends else "-y"
    lines = ["RUN apt-get update -qq \\",
             f" && apt-get install {flags} \\"]
    lines += [f"    {pkg} \\" for pkg in packages]
    lines += [" && rm -rf /var/lib/apt/lists/*"]
    return lines


def render_install_order(plan: ContainerPlan) -> str:
    return "".join(f"{s.name}\t{s.version}\t{s.source_url}\n" for s in plan.install_sequence)


def render_install_script(plan: ContainerPlan) -> str:
    lines = [
        "#!/bin/sh",
        "# Installs every package of install_order.txt in order; stops at the first failure.",
        "set -e",
        f'CHRONO_HOME="${{CHRONO_HOME:-{CONTAINER_HOME}}}"',
        'cd "$CHRONO_HOME"',
    ]
    install = "R CMD INSTALL"
    if plan.lib_path:
        lines += [
            f'LIB="$CHRONO_HOME/{plan.lib_path}"',
            'mkdir -p "$LIB"',
            'R_LIBS="$LIB${R_LIBS:+:$R_LIBS}"',
            "export R_LIBS",
        ]
        install = 'R CMD INSTALL -l "$LIB"'
    lines += [
        "tab=$(printf '\\t')",
        'while IFS="$tab" read -r name version url; do',
        '    [ -n "$name" ] || continue',
        '    if [ -d "local/$name" ]; then',
        '        src="local/$name"',
        '    elif [ -f "cache/${name}_${version}.tar.gz" ]; then',
        '        src="cache/${name}_${version}.tar.gz"',
        "    else",
        "        mkdir -p downloads",
        '        src="downloads/${name}_${version}.tar.gz"',
        '        wget -q -O "$src" "$url"',
        "    fi",
        '    echo "installing $name $version"',
        f'    {install} "$src"',
        "done < install_order.txt",
    ]
    return "\n".join(lines) + "\n"


def render_dockerfile(plan: ContainerPlan) -> str:
    graph = plan.graph
    lines = [
        f"# snapshot {graph.snapshot_date.isoformat()}, R {graph.r_version}, {graph.os}",
        f"FROM {plan.base.reference}",
        "ENV DEBIAN_FRONTEND=noninteractive",
        f"ENV CHRONO_SNAPSHOT_DATE={graph.snapshot_date.isoformat()}",
    ]
    lines += _apt_install(sorted(set(plan.os_packages) | set(plan.build_packages)),
                          plan.base.apt_no_recommends)

    if plan.base.kind == "debian_source_build":
        tarball = _interpreter_tarball(plan)
        if plan.cache:
            lines.append(f"COPY cache/rsrc/{tarball} /tmp/{tarball}")
        else:
            lines.append(f"RUN wget -q -O /tmp/{tarball} {plan.interpreter_url}")
        lines += [
            "RUN cd /tmp \\",
            f" && tar -xzf {tarball} \\",
            f" && cd R-{graph.r_version} \\",
            " && ./configure --prefix=/usr/local --without-x \\",
            " && make \\",
            " && make install \\",
            f" && cd / && rm -rf /tmp/R-{graph.r_version} /tmp/{tarball}",
        ]

    lines.append(f"COPY install_order.txt install.sh {CONTAINER_HOME}/")
    if plan.cache and any(step.source_url for step in plan.install_sequence):
        lines.append(f"COPY cache {CONTAINER_HOME}/cache")
    if plan.local_paths:
        lines.append(f"COPY local {CONTAINER_HOME}/local")
    if plan.lib_path:
        lines.append(f"ENV R_LIBS={CONTAINER_HOME}/{plan.lib_path}")
    lines.append(f"RUN sh {CONTAINER_HOME}/install.sh")
    if plan.materials_dir is not None:
        # render commands address the materials as materials/... from /
        lines.append(f"COPY materials {MATERIALS_HOME}")
        lines.append("WORKDIR /")

    if plan.shell:
        lines.append('CMD ["/bin/bash"]')
    elif plan.base.kind == "debian_source_build" or plan.base.image.startswith("rocker/r-ver"):
        lines.append('CMD ["R"]')
    return "\n".join(lines) + "\n"


# Emission

def _write_atomic(path: Path, content, mode: int = 0o644) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = content.encode("utf-8") if isinstance(content, str) else content
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, mode)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _download(client: httpx.Client, package: str, url: str, target: Path) -> Path:
    if target.exists():
        return target
    logger.info("downloading %s", url)
    try:
        with client.stream("GET", url) as resp:
            if resp.status_code != 200:
                raise DownloadError(package, url, f"HTTP {resp.status_code}")
            _write_atomic(target, b"".join(resp.iter_bytes()))
    except httpx.HTTPError as exc:
        raise DownloadError(package, url, str(exc) or type(exc).__name__) from exc
    return target


def _copy_tree(src: Path, dst: Path) -> None:
    if dst.exists():
        shutil.rmtree(dst)
    shutil.copytree(src, dst, ignore=shutil.ignore_patterns(".git"))


def emit(plan: ContainerPlan, force: bool = False, client: Optional[httpx.Client] = None,
         cfg: Settings = default_settings) -> List[Path]:
    """Write the build context into ``plan.output_dir``; returns the written paths."""
    out = Path(plan.output_dir)
    if out.exists() and (not out.is_dir() or (any(out.iterdir()) and not force)):
        raise OutputExistsError(f"{out} exists and is not empty (use force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)

    written = []
    for name, text, mode in (
        ("Dockerfile", render_dockerfile(plan), 0o644),
        ("install_order.txt", render_install_order(plan), 0o644),
        ("install.sh", render_install_script(plan), 0o755),
    ):
        _write_atomic(out / name, text, mode)
        written.append(out / name)

    for name in sorted(plan.local_paths):
        _copy_tree(Path(plan.local_paths[name]), out / "local" / name)
        written.append(out / "local" / name)

    if plan.materials_dir is not None:
        _copy_tree(Path(plan.materials_dir), out / "materials")
        written.append(out / "materials")

    if plan.cache:
        jobs = [(step.name, step.source_url, out / _cached_tarball(step))
                for step in plan.install_sequence if step.source_url]
        if plan.interpreter_url:
            jobs.append(("R", plan.interpreter_url, out / "cache" / "rsrc" / _interpreter_tarball(plan)))
        own_client = client is None
        client = client or httpx.Client(timeout=cfg.HTTP_TIMEOUT, follow_redirects=True)
        try:
            with ThreadPoolExecutor(max_workers=cfg.DOWNLOAD_WORKERS) as pool:
                futures = [pool.submit(_download, client, *job) for job in jobs]
                written += [future.result() for future in futures]
        finally:
            if own_client:
                client.close()

    logger.info("wrote build context to %s", out)
    return sorted(written)


# Compendium

def emit_compendium(plan: ContainerPlan, handle: str, render_command: Optional[str] = None) -> str:
    """Makefile driving resolve, build, render, export and rebuild for a compendium."""
    if not handle or not _HANDLE.match(handle) or os.sep in handle or "/" in handle:
        raise OptionError(f"handle must be a plain file name stem, got {handle!r}")
    graph = plan.graph
    roots = " ".join(shlex.quote(render_ref(ref)) for ref in graph.roots)
    dockerize = ["python -m chronoenv dockerize --lock ${handle}.lock --out ${handle}docker --force"]
    if plan.cache:
        dockerize.append("--cache")
    if plan.lib_path:
        dockerize.append(f"--lib {shlex.quote(plan.lib_path)}")
    if plan.materials_dir is not None:
        dockerize.append(f"--materials {shlex.quote(Path(plan.materials_dir).as_posix())}")
    if plan.base.kind == "rocker" and not plan.base.image.startswith("rocker/r-ver:"):
        dockerize.append("--image " + plan.base.image.split("/", 1)[1].split(":", 1)[0])
    if plan.base.kind == "debian_source_build" and VersionString.parse(graph.r_version) >= ROCKER_MIN:
        dockerize.append("--no-rocker")
    if plan.shell:
        dockerize.append("--bash")

    lines = [
        "output_file=reproduced.html",
        f'r_cmd = "{render_command or DEFAULT_RENDER_COMMAND}"',
        f"handle={handle}",
        "local_file=${handle}_README.html",
        "",
        "all: resolve build render",
        '\techo "finished"',
        "resolve:",
        f"\tpython -m chronoenv resolve {roots} --date {graph.snapshot_date.isoformat()} "
        f"--os {graph.os} --r-version {graph.r_version} --output ${{handle}}.lock",
        "\t" + " ".join(dockerize),
        "build: ${handle}docker",
        "\tdocker build -t ${handle}img ${handle}docker",
        "render:",
        '\tdocker run -d --rm --name "${handle}container" -ti ${handle}img',
        "\tdocker exec ${handle}container Rscript -e ${r_cmd}",
        f"\tdocker cp ${{handle}}container:{MATERIALS_HOME}/${{output_file}} ${{local_file}}",
        "\tdocker stop ${handle}container",
        "export:",
        "\tdocker save ${handle}img | gzip > ${handle}img.tar.gz",
        "rebuild: ${handle}img.tar.gz",
        "\tdocker load < ${handle}img.tar.gz",
    ]
    return "\n".join(lines) + "\n"

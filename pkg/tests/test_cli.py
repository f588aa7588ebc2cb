import json
from pathlib import Path

from chronoenv.cli import main
from chronoenv.resolver import load_lock

FIXTURES = Path(__file__).parent / "fixtures"
GOLDENS = Path(__file__).parent / "goldens"
REGISTRY = str(FIXTURES / "registry")
DIAMOND_LOCK = str(GOLDENS / "diamond.lock")


def error_line(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_resolve_writes_lockfile(tmp_path, capsys):
    lock = tmp_path / "quanteda.lock"
    code = main(["resolve", "quanteda", "--date", "2018-10-06", "--registry", REGISTRY, "--output", str(lock)])
    assert code == 0
    out = capsys.readouterr().out
    assert out == f"resolved 1 root(s) into 13 package(s) with R 3.5.1 at 2018-10-06\nlockfile: {lock}\n"
    assert load_lock(lock.read_text()).nodes["quanteda"].version == "1.3.4"


def test_resolve_default_lockfile_name(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["resolve", "yaml", "--date", "2018-10-06", "--registry", REGISTRY]) == 0
    assert capsys.readouterr().out.endswith("lockfile: rang.lock\n")
    assert load_lock(Path("rang.lock").read_text()).nodes["yaml"].version == "2.2.0"


def test_global_options_before_subcommand(tmp_path, capsys):
    lock = tmp_path / "ptproc.lock"
    code = main(["--registry", REGISTRY, "resolve", "ptproc", "--date", "2004-07-01", "--output", str(lock)])
    assert code == 0
    assert "with R 1.9.1" in capsys.readouterr().out


def test_resolve_with_replacement(tmp_path, capsys):
    lock = tmp_path / "replaced.lock"
    code = main(["resolve", "--scan", str(FIXTURES / "corpus" / "meta-analysis"), "--replace",
                 "compute.es=yaml@2.1.19", "--date", "2018-10-06", "--registry", REGISTRY,
                 "--output", str(lock)])
    assert code == 0
    graph = load_lock(lock.read_text())
    assert set(graph.nodes) == {"yaml"}
    assert graph.nodes["yaml"].version == "2.1.19"


def test_resolve_session_info_with_base_packages(tmp_path, capsys):
    session = tmp_path / "sessionInfo.txt"
    session.write_text("loaded via a namespace (and not attached):\n"
                       " [1] compiler_3.5.1 yaml_2.1.19    tools_3.5.1\n")
    lock = tmp_path / "session.lock"
    code = main(["resolve", "--session-info", str(session), "--date", "2018-10-06", "--registry", REGISTRY,
                 "--output", str(lock)])
    assert code == 0
    graph = load_lock(lock.read_text())
    assert set(graph.nodes) == {"yaml"}
    assert graph.nodes["yaml"].version == "2.1.19"


def test_resolve_usage_errors(capsys):
    assert main(["resolve", "--date", "2018-10-06"]) == 2
    assert main(["resolve", "quanteda", "--date", "06/10/2018"]) == 2
    assert main(["resolve", "quanteda"]) == 2
    assert main(["frobnicate"]) == 2


def test_resolve_failure_prints_error_line(tmp_path, capsys):
    code = main(["resolve", "quanteda", "--date", "2017-01-01", "--registry", REGISTRY,
                 "--output", str(tmp_path / "x.lock")])
    assert code == 1
    assert error_line(capsys)["error"] == "not-available-at-date"
    assert not (tmp_path / "x.lock").exists()


def test_resolve_unsupported_os(tmp_path, capsys):
    code = main(["resolve", "quanteda", "--date", "2018-10-06", "--os", "windows-10",
                 "--registry", REGISTRY, "--output", str(tmp_path / "x.lock")])
    assert code == 1
    line = error_line(capsys)
    assert line["error"] == "unsupported-os"
    assert "ubuntu-20.04" in line["message"]


def test_bad_reference(tmp_path, capsys):
    assert main(["resolve", "pypi::requests", "--date", "2018-10-06", "--registry", REGISTRY,
                 "--output", str(tmp_path / "x.lock")]) == 1
    assert error_line(capsys)["error"] == "ref-parse"


def test_scan(capsys):
    assert main(["scan", str(FIXTURES / "corpus" / "meta-analysis")]) == 0
    assert capsys.readouterr().out == "cran::compute.es\n"


def test_scan_missing_directory(tmp_path, capsys):
    assert main(["scan", str(tmp_path / "absent")]) == 1
    assert error_line(capsys)["error"] == "scan"


def test_export_formats(capsys):
    assert main(["export", "--lock", DIAMOND_LOCK, "--format", "edgelist"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "alpha\tbeta\timports"
    assert main(["export", "--lock", DIAMOND_LOCK, "--format", "lock"]) == 0
    assert capsys.readouterr().out == (GOLDENS / "diamond.lock").read_text()
    assert main(["export", "--lock", DIAMOND_LOCK, "--format", "svg"]) == 2


def test_show(capsys):
    assert main(["show", "--lock", DIAMOND_LOCK, "--all-pkgs"]) == 0
    out = capsys.readouterr().out
    assert "R version: 3.6.3" in out
    assert "  gamma 2.0-1 (cran, 2020-01-15)" in out


def test_missing_lockfile(tmp_path, capsys):
    assert main(["show", "--lock", str(tmp_path / "nope.lock")]) == 1
    assert error_line(capsys)["error"] == "option"


def test_corrupt_lockfile(tmp_path, capsys):
    broken = tmp_path / "broken.lock"
    broken.write_text('{"schema_version": 1}')
    assert main(["show", "--lock", str(broken)]) == 1
    assert error_line(capsys)["error"] == "lock-schema"


def test_dockerize(tmp_path, capsys):
    out = tmp_path / "ctx"
    assert main(["dockerize", "--lock", DIAMOND_LOCK, "--out", str(out)]) == 0
    assert capsys.readouterr().out.splitlines() == ["Dockerfile", "install.sh", "install_order.txt"]
    assert (out / "Dockerfile").read_text() == (GOLDENS / "diamond.Dockerfile").read_text()

    assert main(["dockerize", "--lock", DIAMOND_LOCK, "--out", str(out)]) == 1
    assert error_line(capsys)["error"] == "output-exists"
    assert main(["dockerize", "--lock", DIAMOND_LOCK, "--out", str(out), "--force"]) == 0


def test_dockerize_option_conflict(tmp_path, capsys):
    assert main(["dockerize", "--lock", DIAMOND_LOCK, "--out", str(tmp_path / "ctx"),
                 "--no-rocker", "--image", "rstudio"]) == 1
    assert error_line(capsys)["error"] == "option-conflict"


def test_compendium_to_stdout(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    Path("meta-analysis").mkdir()
    assert main(["compendium", "--lock", DIAMOND_LOCK, "--handle", "oser", "--cache",
                 "--materials", "meta-analysis", "--output", "-"]) == 0
    assert capsys.readouterr().out == (GOLDENS / "oser.Makefile").read_text()


def test_compendium_file_needs_force(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["compendium", "--lock", DIAMOND_LOCK, "--handle", "oser"]) == 0
    assert Path("Makefile").read_text().startswith("output_file=reproduced.html\n")
    assert main(["compendium", "--lock", DIAMOND_LOCK, "--handle", "oser"]) == 1
    assert error_line(capsys)["error"] == "option"
    assert main(["compendium", "--lock", DIAMOND_LOCK, "--handle", "oser", "--force"]) == 0

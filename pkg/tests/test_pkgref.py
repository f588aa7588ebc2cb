import random

import pytest
from pydantic import ValidationError

from chronoenv.errors import RefParseError
from chronoenv.pkgref import load_bioc_names, parse_ref, parse_refs, render_ref
from chronoenv.schemas import PackageRef, Source

BIOC = frozenset({"S4Vectors", "Sushi", "biomaRt"})


def test_bare_name_defaults_to_cran():
    ref = parse_ref("quanteda")
    assert ref == PackageRef(source=Source.CRAN, name="quanteda")
    assert render_ref(ref) == "cran::quanteda"


def test_bare_name_in_bioc_list():
    assert parse_ref("S4Vectors", BIOC).source == Source.BIOC
    # an explicit prefix wins over the list
    assert parse_ref("cran::S4Vectors", BIOC).source == Source.CRAN


def test_github_shorthand_and_prefix():
    ref = parse_ref("cran/maxent")
    assert ref.source == Source.GITHUB
    assert ref.name == "maxent"
    assert ref.qualifier == "cran/maxent"
    assert parse_ref("github::cran/maxent") == ref
    assert render_ref(ref) == "github::cran/maxent"


def test_pins():
    assert parse_ref("quanteda@1.3.4").pin == "1.3.4"
    ref = parse_ref("MathiasHarrer/dmetar@a1b2c3d")
    assert ref.pin == "a1b2c3d"
    assert render_ref(ref) == "github::MathiasHarrer/dmetar@a1b2c3d"


def test_local_ref():
    ref = parse_ref("local::./pkgs/mypkg")
    assert ref.source == Source.LOCAL
    assert ref.name == "mypkg"
    assert ref.qualifier == "./pkgs/mypkg"
    assert render_ref(ref) == "local::./pkgs/mypkg"


@pytest.mark.parametrize("raw", [
    "",
    "   ",
    "pypi::requests",
    "cran::",
    "a/b/c",
    "github::onlyowner",
    "cran::owner/repo",
    "bad name",
    "quanteda@",
])
def test_rejects_malformed(raw):
    with pytest.raises(RefParseError):
        parse_ref(raw)


@pytest.mark.parametrize("fields", [
    {"source": Source.GITHUB, "name": "hilgardpkg", "qualifier": "Joe-Hilgard/hilgard"},
    {"source": Source.GITHUB, "name": "hilgard", "qualifier": "Joe Hilgard/hilgard"},
    {"source": Source.GITHUB, "name": "hilgard", "qualifier": "Joe-Hilgard/hilgard\t"},
    {"source": Source.LOCAL, "name": "mypkg", "qualifier": "./src"},
])
def test_ref_must_survive_rendering(fields):
    with pytest.raises(ValidationError):
        PackageRef(**fields)


def test_github_owner_with_space_is_rejected():
    with pytest.raises(RefParseError):
        parse_ref("github::Joe Hilgard/hilgard")


def test_local_name_ignores_trailing_slash():
    ref = PackageRef(source=Source.LOCAL, name="mypkg", qualifier="./pkgs/mypkg/")
    assert parse_ref(render_ref(ref)) == ref


def test_parse_refs_keeps_order():
    refs = parse_refs(["Sushi", "quanteda", "cran/maxent"], BIOC)
    assert [render_ref(r) for r in refs] == ["bioc::Sushi", "cran::quanteda", "github::cran/maxent"]


def test_shipped_bioc_names():
    names = load_bioc_names()
    assert {"S4Vectors", "Sushi", "biomaRt"} <= names
    assert "quanteda" not in names


def test_bioc_names_file_comments(tmp_path):
    path = tmp_path / "names.txt"
    path.write_text("# curated\nFoo\n\nBar  # trailing\n")
    assert load_bioc_names(path) == frozenset({"Foo", "Bar"})


def _random_ref(rng):
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    name = rng.choice(letters) + "".join(rng.choice(letters + "0123456789.") for _ in range(rng.randint(1, 8)))
    kind = rng.choice([Source.CRAN, Source.BIOC, Source.GITHUB])
    pin = rng.choice([None, f"{rng.randint(0, 9)}.{rng.randint(0, 20)}-{rng.randint(1, 9)}"])
    if kind == Source.GITHUB:
        return PackageRef(source=kind, name=name, qualifier=f"owner{rng.randint(0, 99)}/{name}", pin=pin)
    return PackageRef(source=kind, name=name, pin=pin)


def test_render_parse_inverse():
    rng = random.Random(20181006)
    for _ in range(10_000):
        ref = _random_ref(rng)
        assert parse_ref(render_ref(ref)) == ref

import random
from datetime import date

import pytest

from chronoenv.errors import DCFParseError, DependencyParseError, VersionParseError
from chronoenv.metadata import (Ordering, VersionString, compare_versions, parse_dcf,
                                parse_dcf_paragraphs, parse_dep_field, release_from_description,
                                render_dep_field, satisfies)
from chronoenv.schemas import Constraint, DepKind

QUANTEDA_DESCRIPTION = """\
Package: quanteda
Version: 1.3.4
Title: Quantitative Analysis of Textual Data
Depends: R (>= 3.1.0), methods
Imports: Matrix (>= 1.2), data.table (>= 1.9.6),
    stringi,
        fastmatch
LinkingTo: Rcpp (>= 0.12.12), RcppParallel
Suggests: testthat
SystemRequirements: C++11
"""


# versions

def test_version_ordering_examples():
    assert compare_versions("1.2-14", "1.2.3") == Ordering.GREATER
    assert compare_versions("1.0", "1.0.0") == Ordering.LESS
    assert compare_versions("1.0-1", "1.0.1") == Ordering.EQUAL
    assert compare_versions("0.20-35", "0.20-38") == Ordering.LESS
    assert VersionString.parse("3.5.1") > VersionString.parse("3.1")


@pytest.mark.parametrize("raw", ["", "1.a", "v1.0", "1..2", "-1"])
def test_version_rejects(raw):
    with pytest.raises(VersionParseError):
        VersionString.parse(raw)


def _random_version(rng):
    parts = [str(rng.randint(0, 12)) for _ in range(rng.randint(1, 4))]
    text = parts[0]
    for part in parts[1:]:
        text += rng.choice(".-") + part
    return text


def test_version_order_is_total_and_consistent():
    rng = random.Random(7)
    for _ in range(10_000):
        a, b, c = (_random_version(rng) for _ in range(3))
        ab, ba = compare_versions(a, b), compare_versions(b, a)
        assert ab == -ba
        if ab <= Ordering.EQUAL and compare_versions(b, c) <= Ordering.EQUAL:
            assert compare_versions(a, c) <= Ordering.EQUAL
        assert (VersionString.parse(a) == VersionString.parse(b)) == (ab == Ordering.EQUAL)


def test_satisfies():
    assert satisfies("1.2-14", Constraint(op=">=", version="1.2"))
    assert not satisfies("1.5", Constraint(op=">=", version="2.0"))
    assert satisfies("3.5.1", Constraint(op="<", version="4.0"))
    assert satisfies("1.0-1", Constraint(op="==", version="1.0.1"))


# DCF

def test_parse_dcf_folds_continuations():
    fields = parse_dcf(QUANTEDA_DESCRIPTION)
    assert fields["Package"] == "quanteda"
    assert fields["Imports"] == "Matrix (>= 1.2), data.table (>= 1.9.6), stringi, fastmatch"
    assert fields["SystemRequirements"] == "C++11"


def test_parse_dcf_errors_carry_line():
    with pytest.raises(DCFParseError) as exc:
        parse_dcf("Package: x\nnot a field\n")
    assert exc.value.line == 2
    with pytest.raises(DCFParseError):
        parse_dcf("  leading continuation\nPackage: x\n")


def test_parse_dcf_duplicate_key_is_diagnostic():
    diagnostics = []
    fields = parse_dcf("Version: 1.0\nVersion: 1.1\n", diagnostics)
    assert fields["Version"] == "1.1"
    assert len(diagnostics) == 1


def test_parse_dcf_paragraphs():
    views = parse_dcf_paragraphs("Package: a\nVersion: 1.0\n\nPackage: b\nVersion: 2.0\n")
    assert [p["Package"] for p in views] == ["a", "b"]
    assert parse_dcf("") == {}


# dependency fields

def test_parse_dep_field():
    deps = parse_dep_field("R (>= 3.1.0), methods,Matrix(>=1.2) , ", DepKind.DEPENDS)
    assert [d.name for d in deps] == ["R", "methods", "Matrix"]
    assert deps[0].constraint == Constraint(op=">=", version="3.1.0")
    assert deps[2].constraint == Constraint(op=">=", version="1.2")
    assert parse_dep_field("", DepKind.IMPORTS) == []


@pytest.mark.parametrize("value", ["Matrix (>= )", "Matrix (~> 1.2)", "Matrix (>= 1.2", "R (>= 3.0)"])
def test_parse_dep_field_rejects(value):
    with pytest.raises(DependencyParseError):
        parse_dep_field(value, DepKind.IMPORTS)


def test_render_dep_field_round_trip():
    text = "Matrix (>= 1.2), stringi, Rcpp (== 0.12.19)"
    assert render_dep_field(parse_dep_field(text, DepKind.IMPORTS)) == text


def test_release_from_description():
    record = release_from_description(parse_dcf(QUANTEDA_DESCRIPTION), date(2018, 9, 5))
    assert record.version == "1.3.4"
    assert record.r_constraint == Constraint(op=">=", version="3.1.0")
    assert record.sysreqs == "C++11"
    kinds = {(d.name, d.kind) for d in record.deps}
    assert ("Rcpp", DepKind.LINKING_TO) in kinds
    assert ("testthat", DepKind.SUGGESTS) in kinds
    assert all(d.name != "R" for d in record.deps)


def test_release_from_description_duplicate_dependency():
    diagnostics = []
    fields = {"Package": "x", "Version": "1.0", "Imports": "a, a (>= 1.0)"}
    record = release_from_description(fields, date(2020, 1, 1), diagnostics)
    assert [d.name for d in record.deps] == ["a"]
    assert diagnostics

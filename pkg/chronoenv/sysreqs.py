"""Map free-text SystemRequirements declarations to OS packages."""
import json
import logging
import re
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional

from pydantic import ValidationError

from .errors import RuleTableError, UnsupportedOSError
from .schemas import SysreqRule

logger = logging.getLogger(__name__)

DEFAULT_RULES = Path(__file__).parent / "data" / "sysreqs_rules.json"


@lru_cache(maxsize=None)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern, re.IGNORECASE)


def load_rules(path: Optional[Path] = None) -> List[SysreqRule]:
    """Load and validate a rule table (a JSON list of {pattern, os, packages})."""
    path = Path(path) if path else DEFAULT_RULES
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise RuleTableError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise RuleTableError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(rows, list):
        raise RuleTableError(f"{path}: expected a list of rules")

    rules, seen = [], set()
    for index, row in enumerate(rows):
        try:
            rule = SysreqRule.model_validate(row)
        except ValidationError as exc:
            reason = exc.errors()[0]["msg"].removeprefix("Value error, ")
            raise RuleTableError(f"{path}: rule {index}: {reason}") from None
        if (rule.pattern, rule.os) in seen:
            raise RuleTableError(f"{path}: rule {index}: duplicate pattern {rule.pattern!r} for {rule.os}")
        seen.add((rule.pattern, rule.os))
        rules.append(rule)
    logger.debug("loaded %d sysreqs rules from %s", len(rules), path)
    return rules


def supported_os(rules: Iterable[SysreqRule]) -> List[str]:
    return sorted({rule.os for rule in rules})


def check_os(os: str, rules: Iterable[SysreqRule]) -> None:
    known = supported_os(rules)
    if os not in known:
        raise UnsupportedOSError(os, known)


def map_sysreqs(sysreqs_texts: Iterable[str], os: str, rules: List[SysreqRule],
                diagnostics: Optional[List[str]] = None) -> List[str]:
    """Sorted, deduplicated OS packages for the requirement texts on ``os``.

    Text no rule recognises is reported verbatim as a diagnostic.
    """
    check_os(os, rules)
    table = [rule for rule in rules if rule.os == os]
    packages = set()
    for text in sorted(set(sysreqs_texts)):
        if not text or not text.strip():
            continue
        hits = [rule for rule in table if _compiled(rule.pattern).search(text)]
        if not hits:
            message = f"no system package rule matches requirement {text!r} on {os}"
            logger.warning(message)
            if diagnostics is not None:
                diagnostics.append(message)
            continue
        for rule in hits:
            packages.update(rule.packages)
    return sorted(packages)

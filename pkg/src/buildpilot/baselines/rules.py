"""File-presence build rules: look at the repo root, emit a fixed recipe.

The bootstrap rule is the canonical one; the rest extend the same idea to
the other common build systems so the method has reasonable coverage. No
model calls are involved anywhere in this module.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from buildpilot.errors import NoRuleMatched
from buildpilot.navigator.extract import InstructionPlan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuildRule:
    rule_id: str
    required_files: frozenset
    commands: tuple
    priority: int

    def __post_init__(self) -> None:
        if not self.required_files:
            raise ValueError(f"rule {self.rule_id}: required_files is empty")
        if not self.commands:
            raise ValueError(f"rule {self.rule_id}: commands is empty")

    def matches(self, root_files) -> bool:
        return self.required_files <= set(root_files)


DEFAULT_RULES = (
    BuildRule("autotools-bootstrap", frozenset({"bootstrap.sh", "Makefile.am"}),
              ("./bootstrap.sh", "./configure", "make"), 1),
    BuildRule("autotools-autogen", frozenset({"autogen.sh"}),
              ("./autogen.sh", "./configure", "make"), 2),
    BuildRule("configure", frozenset({"configure"}),
              ("./configure", "make"), 3),
    BuildRule("cmake", frozenset({"CMakeLists.txt"}),
              ("mkdir -p build", "cd build && cmake ..", "cd build && make"), 4),
    BuildRule("make", frozenset({"Makefile"}),
              ("make",), 5),
)


def detect_build_rule(root_files, table=DEFAULT_RULES) -> InstructionPlan:
    """First rule by priority whose required files all sit at the repo root.

    Matching is case-sensitive on exact file names; the result depends only
    on set membership, never on enumeration order.
    """
    if not table:
        raise ValueError("rule table is empty")
    priorities = [rule.priority for rule in table]
    if len(set(priorities)) != len(priorities):
        raise ValueError("rule priorities must be unique within a table")
    present = set(root_files)
    for rule in sorted(table, key=lambda r: r.priority):
        if rule.matches(present):
            logger.debug("rule %s matched", rule.rule_id)
            return InstructionPlan(
                steps=tuple(rule.commands),
                source_path=f"rule:{rule.rule_id}",
                notes=f"matched files: {', '.join(sorted(rule.required_files))}",
            )
    raise NoRuleMatched(
        "no build rule matched the repository root "
        f"({len(present)} files present)")

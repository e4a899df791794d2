"""Tree-format directory listings: rendering and parsing.

The renderer produces classic tree(1)-style output from (relpath, is_dir)
entries; the parser reconstructs the set of relative paths from such text.
Both live together so the round-trip stays in one place.
"""

from __future__ import annotations

CAP_MARKER = "(listing capped)"
_BRANCH = "├── "
_LAST = "└── "
_PIPE = "│   "
_BLANK = "    "


def build_tree(entries: list[tuple[str, bool]]) -> dict:
    """Nest flat (relpath, is_dir) rows into {name: subtree-or-None}."""
    root: dict = {}
    for relpath, is_dir in entries:
        parts = relpath.split("/")
        node = root
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        if is_dir:
            existing = node.get(parts[-1])
            if not isinstance(existing, dict):
                node[parts[-1]] = {}
        else:
            node.setdefault(parts[-1], None)
    return root


def render_tree(
    root_label: str,
    entries: list[tuple[str, bool]],
    max_entries: int = 800,
    depth_capped: bool = False,
) -> str:
    """Render entries as tree text, cutting off after max_entries lines."""
    tree = build_tree(entries)
    lines = [root_label]
    budget = [max_entries]
    capped = [depth_capped]

    def walk(node: dict, prefix: str) -> None:
        names = sorted(node)
        for i, name in enumerate(names):
            if budget[0] <= 0:
                capped[0] = True
                return
            last = i == len(names) - 1
            lines.append(prefix + (_LAST if last else _BRANCH) + name)
            budget[0] -= 1
            child = node[name]
            if isinstance(child, dict):
                walk(child, prefix + (_BLANK if last else _PIPE))

    walk(tree, "")
    if capped[0]:
        lines.append(CAP_MARKER)
    return "\n".join(lines)


def parse_tree_paths(text: str) -> set[str]:
    """Recover the relative paths present in render_tree output."""
    paths: set[str] = set()
    stack: list[str] = []
    for line in text.splitlines()[1:]:
        if not line or line == CAP_MARKER:
            continue
        depth = 0
        rest = line
        while rest.startswith(_PIPE) or rest.startswith(_BLANK):
            rest = rest[len(_PIPE):]
            depth += 1
        if rest.startswith(_BRANCH) or rest.startswith(_LAST):
            name = rest[len(_BRANCH):]
        else:
            continue
        del stack[depth:]
        stack.append(name)
        paths.add("/".join(stack))
    return paths

"""Tree rendering/parsing round-trip."""

from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from buildpilot.sandbox.listing import CAP_MARKER, parse_tree_paths, render_tree


def test_render_basic_shape():
    entries = [
        ("README.md", False),
        ("src", True),
        ("src/hello.c", False),
        ("Makefile", False),
    ]
    text = render_tree("/workspace/demo", entries)
    lines = text.splitlines()
    assert lines[0] == "/workspace/demo"
    assert "├── Makefile" in lines
    assert "├── README.md" in lines
    assert "└── src" in lines
    assert "    └── hello.c" in lines
    assert CAP_MARKER not in text


def test_parse_recovers_paths():
    entries = [
        ("README.md", False),
        ("docs", True),
        ("docs/guide.md", False),
        ("src", True),
        ("src/core", True),
        ("src/core/main.c", False),
    ]
    text = render_tree("/repo", entries)
    assert parse_tree_paths(text) == {
        "README.md", "docs", "docs/guide.md", "src", "src/core", "src/core/main.c",
    }


def test_entry_cap_appends_marker():
    entries = [(f"f{i:03d}.txt", False) for i in range(10)]
    text = render_tree("/repo", entries, max_entries=3)
    assert CAP_MARKER in text
    assert len([l for l in text.splitlines() if l.endswith(".txt")]) == 3


def test_depth_cap_flag_appends_marker():
    text = render_tree("/repo", [("a", True)], depth_capped=True)
    assert text.splitlines()[-1] == CAP_MARKER


_name = st.text(alphabet="abcdefgh", min_size=1, max_size=4)


@given(st.lists(st.lists(_name, min_size=1, max_size=4), min_size=1, max_size=12))
def test_roundtrip_property(path_parts):
    paths = {"/".join(parts) for parts in path_parts}
    # every ancestor directory must exist as an entry, as a real walk produces
    entries = {}
    for p in paths:
        parts = p.split("/")
        for i in range(1, len(parts)):
            entries["/".join(parts[:i])] = True
        entries.setdefault(p, False)
    flat = sorted(entries.items())
    text = render_tree("/r", [(p, d) for p, d in flat], max_entries=10_000)
    assert parse_tree_paths(text) == set(entries)

"""Shared hypothesis strategies plus the acceptance-criteria summary hook."""

import hypothesis.strategies as st

from vlprep.grounding import GROUNDING_TAGS, GridBox, QuadGrid, Ref, Text

# One line per acceptance criterion, echoed after the run so the verdicts
# survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)

grid_coords = st.integers(0, 999)
grid_points = st.tuples(grid_coords, grid_coords)


@st.composite
def grid_boxes(draw):
    x1 = draw(grid_coords)
    x2 = draw(st.integers(x1, 999))
    y1 = draw(grid_coords)
    y2 = draw(st.integers(y1, 999))
    return GridBox(x1, y1, x2, y2)


quad_grids = st.builds(QuadGrid, grid_points, grid_points, grid_points, grid_points)

regions = st.one_of(
    st.lists(grid_boxes(), min_size=1, max_size=3).map(tuple),
    st.lists(quad_grids, min_size=1, max_size=3).map(tuple),
)


def _tag_free(s: str) -> bool:
    return all(tag not in s for tag in GROUNDING_TAGS)


tag_free_text = st.text().filter(_tag_free)
nonempty_tag_free_text = st.text(min_size=1).filter(_tag_free)

refs = st.builds(Ref, tag_free_text, regions)


@st.composite
def markup_asts(draw):
    """Canonical ASTs: no empty text nodes, no two adjacent text nodes."""
    n_refs = draw(st.integers(0, 4))
    nodes = []
    for k in range(n_refs + 1):
        if draw(st.booleans()):
            nodes.append(Text(draw(nonempty_tag_free_text)))
        if k < n_refs:
            nodes.append(draw(refs))
    return nodes

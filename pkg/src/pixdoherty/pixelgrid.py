"""Binary pixel-grid layouts: the search genome and the surrogate input.

A layout is a ``rows x cols`` array of metal (1) and dielectric (0) cells
with four feeds, one at the center of each edge.  On an odd edge the feed is
the middle cell; on an even edge it is the two middle cells tied together,
so the feed sits exactly on the edge center and every square symmetry maps
feeds onto feeds.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NonSquareGrid, ParseError

MAX_ENUMERATION_CELLS = 16


class Edge(str, enum.Enum):
    WEST = "W"
    NORTH = "N"
    EAST = "E"
    SOUTH = "S"


class Role(str, enum.Enum):
    MAIN = "Main"
    AUX = "Aux"
    OUTPUT = "Output"
    SPARE = "Spare"


# port k+1 lives on CANONICAL_EDGES[k]
CANONICAL_EDGES = (Edge.WEST, Edge.NORTH, Edge.EAST, Edge.SOUTH)
CANONICAL_ROLES = (Role.MAIN, Role.AUX, Role.OUTPUT, Role.SPARE)


def _center_indices(n):
    return (n // 2,) if n % 2 else (n // 2 - 1, n // 2)


def edge_cells(edge: Edge, rows: int, cols: int) -> tuple[tuple[int, int], ...]:
    edge = Edge(edge)
    if edge is Edge.WEST:
        return tuple((r, 0) for r in _center_indices(rows))
    if edge is Edge.EAST:
        return tuple((r, cols - 1) for r in _center_indices(rows))
    if edge is Edge.NORTH:
        return tuple((0, c) for c in _center_indices(cols))
    return tuple((rows - 1, c) for c in _center_indices(cols))


@dataclass(frozen=True)
class PortFeed:
    edge: Edge
    cell: tuple[int, int]
    role: Role
    cells: tuple[tuple[int, int], ...] = ()

    @classmethod
    def at(cls, edge, role, rows, cols) -> "PortFeed":
        cells = edge_cells(edge, rows, cols)
        centre = {Edge.WEST: (rows // 2, 0), Edge.EAST: (rows // 2, cols - 1),
                  Edge.NORTH: (0, cols // 2), Edge.SOUTH: (rows - 1, cols // 2)}[Edge(edge)]
        return cls(Edge(edge), centre, Role(role), cells)


def default_ports(rows: int, cols: int, roles=CANONICAL_ROLES) -> tuple[PortFeed, ...]:
    return tuple(PortFeed.at(e, r, rows, cols) for e, r in zip(CANONICAL_EDGES, roles))


class PixelLayout:
    """Immutable binary layout with four edge-center feeds."""

    __slots__ = ("cells", "ports", "pixel_size_mm", "overlap_fraction", "_key")

    def __init__(self, cells, ports=None, pixel_size_mm=1.8, overlap_fraction=0.20, force_ports=True):
        arr = np.array(cells, dtype=np.uint8, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 3 or arr.shape[1] < 3:
            raise ValueError(f"cells must be a 2-D grid of at least 3x3, got shape {arr.shape}")
        if np.any(arr > 1):
            raise ValueError("cells must be 0 or 1")
        rows, cols = arr.shape
        ports = default_ports(rows, cols) if ports is None else tuple(ports)
        if len(ports) != 4 or len({p.edge for p in ports}) != 4:
            raise ValueError("exactly four ports on distinct edges are required")
        for p in ports:
            if tuple(p.cells) != edge_cells(p.edge, rows, cols):
                raise ValueError(f"port {p.role.value} is not at the center of edge {p.edge.value}")
        if not 0.0 <= overlap_fraction < 0.5:
            raise ValueError("overlap_fraction must lie in [0, 0.5)")
        if force_ports:
            for p in ports:
                for rc in p.cells:
                    arr[rc] = 1
        arr.setflags(write=False)
        self.cells = arr
        self.ports = ports
        self.pixel_size_mm = float(pixel_size_mm)
        self.overlap_fraction = float(overlap_fraction)
        self._key = None

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    @property
    def shape(self):
        return self.cells.shape

    @property
    def density(self) -> float:
        return float(self.cells.mean())

    def port(self, role) -> PortFeed:
        role = Role(role)
        for p in self.ports:
            if p.role is role:
                return p
        raise KeyError(role)

    def port_cells(self) -> list[tuple[int, int]]:
        return [rc for p in self.ports for rc in p.cells]

    def ports_metal(self) -> bool:
        return all(self.cells[rc] == 1 for rc in self.port_cells())

    def with_cells(self, cells, force_ports=True) -> "PixelLayout":
        return PixelLayout(cells, self.ports, self.pixel_size_mm, self.overlap_fraction, force_ports)

    def key(self) -> bytes:
        if self._key is None:
            self._key = np.packbits(self.cells).tobytes() + bytes(self.shape)
        return self._key

    def __eq__(self, other):
        if not isinstance(other, PixelLayout):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.cells, other.cells)
            and self.ports == other.ports
            and self.pixel_size_mm == other.pixel_size_mm
            and self.overlap_fraction == other.overlap_fraction
        )

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"PixelLayout({self.rows}x{self.cols}, density={self.density:.3f})"

    @property
    def physical_size_mm(self) -> float:
        """Edge length including the metal overlap on the outermost pixels."""
        return (self.cols + self.overlap_fraction) * self.pixel_size_mm


def _as_rng(rng_or_seed):
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return np.random.default_rng(rng_or_seed)


def random_layout(rows=15, cols=15, density_mean=0.5, density_std=0.15, rng_seed=None, ports=None) -> PixelLayout:
    """Random layout whose metal fraction is drawn from a clipped normal.

    Each cell is metal independently with the drawn probability; feed cells
    are then forced to metal.  ``rng_seed`` may be an int or a Generator.
    """
    rng = _as_rng(rng_seed)
    d = float(np.clip(rng.normal(density_mean, density_std), 0.05, 0.95))
    cells = rng.random((rows, cols)) < d
    return PixelLayout(cells.astype(np.uint8), ports)


_NEIGHBORS8 = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


def metal_component(cells: np.ndarray, start) -> set:
    """Cells reachable from ``start`` through metal under 8-connectivity (iterative DFS)."""
    rows, cols = cells.shape
    if not cells[start]:
        return set()
    seen = {tuple(start)}
    stack = [tuple(start)]
    while stack:
        r, c = stack.pop()
        for dr, dc in _NEIGHBORS8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols and cells[rr, cc] and (rr, cc) not in seen:
                seen.add((rr, cc))
                stack.append((rr, cc))
    return seen


def is_connected(layout: PixelLayout, required_ports=CANONICAL_ROLES) -> bool:
    """True iff every required feed lies in a single metal component."""
    feeds = [layout.port(r) for r in required_ports]
    if not feeds:
        return True
    cells = [rc for p in feeds for rc in p.cells]
    if not all(layout.cells[rc] for rc in cells):
        return False
    comp = metal_component(layout.cells, cells[0])
    return all(rc in comp for rc in cells)


# --- square symmetries -------------------------------------------------
# element k in 0..7: rotate by (k % 4) quarter turns counter-clockwise,
# after transposing when k >= 4.
D4_NAMES = ("id", "rot90", "rot180", "rot270", "transpose", "transpose_rot90",
            "antitranspose", "transpose_rot270")


def d4_apply(grid: np.ndarray, element: int) -> np.ndarray:
    g = grid.T if element >= 4 else grid
    return np.rot90(g, element % 4)


def _probe(n=5):
    return np.arange(n * n).reshape(n, n)


def d4_compose(a: int, b: int) -> int:
    """Element equal to applying ``b`` first and then ``a``."""
    p = _probe()
    target = d4_apply(d4_apply(p, b), a)
    for k in range(8):
        if np.array_equal(d4_apply(p, k), target):
            return k
    raise AssertionError("D4 not closed")  # unreachable


def d4_inverse(a: int) -> int:
    return next(k for k in range(8) if d4_compose(a, k) == 0)


def port_permutation(layout: PixelLayout, element: int) -> np.ndarray:
    """``perm[i]`` is the original port whose feed lands on port ``i`` after ``element``.

    Transformed S-parameters are ``S'[i, j] = S[perm[i], perm[j]]``.
    """
    if layout.rows != layout.cols:
        raise NonSquareGrid(f"symmetries need a square grid, got {layout.shape}")
    label = np.full(layout.shape, -1, dtype=int)
    for k, p in enumerate(layout.ports):
        for rc in p.cells:
            label[rc] = k
    moved = d4_apply(label, element)
    perm = np.empty(4, dtype=int)
    for i, p in enumerate(layout.ports):
        src = {int(moved[rc]) for rc in p.cells}
        if len(src) != 1 or -1 in src:
            raise AssertionError("feed cells did not map onto a feed")  # geometry guarantees this
        perm[i] = src.pop()
    return perm


def transform(layout: PixelLayout, element: int) -> PixelLayout:
    if layout.rows != layout.cols:
        raise NonSquareGrid(f"symmetries need a square grid, got {layout.shape}")
    return layout.with_cells(d4_apply(layout.cells, element), force_ports=False)


def augment(layout: PixelLayout, s4=None) -> list[tuple[PixelLayout, object, int]]:
    """All eight square symmetries of ``layout`` with correspondingly permuted S-parameters.

    Feeds stay on their edges (roles follow edges), so each transformed
    layout's 4-port matrix is a simultaneous row/column permutation of
    ``s4``; nothing is re-simulated.

    Returns:
        list of ``(layout', s4', element)``; ``s4'`` is None when ``s4`` is.
    """
    from .netalg import permute_ports

    if layout.rows != layout.cols:
        raise NonSquareGrid(f"symmetries need a square grid, got {layout.shape}")
    out = []
    for k in range(8):
        lay = transform(layout, k)
        s = None if s4 is None else permute_ports(s4, port_permutation(layout, k))
        out.append((lay, s, k))
    return out


# --- text format ---------------------------------------------------------
HEADER_TAG = "PIXELGRID"


def to_text(layout: PixelLayout) -> str:
    ports = ",".join(f"{p.edge.value}:{p.role.value}" for p in layout.ports)
    head = (f"{HEADER_TAG} rows={layout.rows} cols={layout.cols} pixel_mm={layout.pixel_size_mm!r} "
            f"overlap={layout.overlap_fraction!r} ports={ports}")
    body = ["".join("1" if v else "0" for v in row) for row in layout.cells]
    return "\n".join([head] + body) + "\n"


def from_text(text: str) -> PixelLayout:
    if not text or not text.strip():
        raise ParseError("empty layout text", 1)
    lines = text.splitlines()
    head = lines[0].split()
    if not head or head[0] != HEADER_TAG:
        raise ParseError(f"header must start with {HEADER_TAG}", 1, 1)
    fields = {}
    for tok in head[1:]:
        if "=" not in tok:
            raise ParseError(f"malformed header field {tok!r}", 1)
        k, v = tok.split("=", 1)
        fields[k] = v
    try:
        rows, cols = int(fields["rows"]), int(fields["cols"])
        pixel = float(fields.get("pixel_mm", 1.8))
        overlap = float(fields.get("overlap", 0.2))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}", 1) from None
    ports = None
    if "ports" in fields:
        try:
            pairs = [item.split(":") for item in fields["ports"].split(",")]
            ports = [PortFeed.at(Edge(e), Role(r), rows, cols) for e, r in pairs]
        except ValueError as exc:
            raise ParseError(f"bad port list: {exc}", 1) from None
    body = [ln for ln in lines[1:]]
    while body and not body[-1].strip():
        body.pop()
    if len(body) < rows:
        raise ParseError(f"expected {rows} grid rows, missing row {len(body) + 1}", len(body) + 2)
    if len(body) > rows:
        raise ParseError(f"expected {rows} grid rows, found extra data", rows + 2)
    cells = np.zeros((rows, cols), dtype=np.uint8)
    for r, ln in enumerate(body):
        if len(ln) != cols:
            raise ParseError(f"row {r + 1} has {len(ln)} cells, expected {cols}", r + 2, min(len(ln), cols) + 1)
        for c, ch in enumerate(ln):
            if ch == "1":
                cells[r, c] = 1
            elif ch != "0":
                raise ParseError(f"invalid cell character {ch!r}", r + 2, c + 1)
    try:
        return PixelLayout(cells, ports, pixel, overlap, force_ports=False)
    except ValueError as exc:
        raise ParseError(str(exc), 1) from None


def design_space_size(rows: int, cols: int) -> int:
    return 2 ** (rows * cols)


def enumerate_layouts(rows: int, cols: int):
    """Yield every layout of a tiny grid (feeds forced to metal, duplicates skipped)."""
    if rows * cols > MAX_ENUMERATION_CELLS:
        raise ValueError(f"refusing to enumerate 2^{rows * cols} layouts (limit {MAX_ENUMERATION_CELLS} cells)")
    seen = set()
    for bits in itertools.product((0, 1), repeat=rows * cols):
        lay = PixelLayout(np.array(bits, dtype=np.uint8).reshape(rows, cols))
        if lay.key() not in seen:
            seen.add(lay.key())
            yield lay

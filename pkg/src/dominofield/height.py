"""Thurston height fields, exact expected heights, hole heights, h-tilde.

Heights live on lattice vertices; vertex (a, b) is the lower-left corner of
square (a, b).  Crossing a directed edge with a white square on its left
raises the height by 3 if the edge crosses a domino of the tiling and
lowers it by 1 otherwise; the reference vertex (lexicographically smallest,
always on the outer boundary) is pinned to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentTiling, MissingHarmonicData
from .kasteleyn import KasteleynSystem, Tiling
from .region import PolyominoRegion, is_white

# directed step -> (left square, right square) as offsets from the tail vertex
_LEFT_RIGHT = {
    (1, 0): ((0, 0), (0, -1)),
    (-1, 0): ((-1, -1), (-1, 0)),
    (0, 1): ((-1, 0), (0, 0)),
    (0, -1): ((0, -1), (-1, -1)),
}


@dataclass(frozen=True)
class HeightField:
    values: dict  # vertex -> int

    def __getitem__(self, v):
        return self.values[v]


@dataclass(frozen=True)
class ExpectedHeightField:
    values: dict  # vertex -> float

    def __getitem__(self, v):
        return self.values[v]


@dataclass(frozen=True)
class HoleHeights:
    Z: np.ndarray
    vertices: tuple  # designated lattice vertex per hole


def region_vertices(squares):
    verts = set()
    for (i, j) in squares:
        verts.update(((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)))
    return verts


def _directed_edges(squares, verts, v):
    """Yield (head, left_square, right_square) for region edges leaving v."""
    a, b = v
    for step, (loff, roff) in _LEFT_RIGHT.items():
        w = (a + step[0], b + step[1])
        if w not in verts:
            continue
        left = (a + loff[0], b + loff[1])
        right = (a + roff[0], b + roff[1])
        if left in squares or right in squares:
            yield w, left, right


def _propagate(squares, verts, increment):
    """Assign heights from the reference vertex; verify closure on all edges."""
    ref = min(verts)
    h = {ref: increment(None, None, zero=True)}
    stack = [ref]
    while stack:
        v = stack.pop()
        hv = h[v]
        for w, left, right in _directed_edges(squares, verts, v):
            d = increment(left, right)
            if w in h:
                if h[w] != hv + d:
                    raise InconsistentTiling(
                        f"height increments do not close between {v} and {w}"
                    )
            else:
                h[w] = hv + d
                stack.append(w)
    return h


def height_field(region, tiling: Tiling) -> HeightField:
    """Integer height field of one tiling; raises InconsistentTiling if corrupt."""
    squares = getattr(region, "squares", region)
    verts = region_vertices(squares)
    partner = tiling.partner()

    def increment(left, right, zero=False):
        if zero:
            return 0
        crossed = partner.get(left) == right and right is not None
        if is_white(left):
            return 3 if crossed else -1
        return -3 if crossed else 1

    values = _propagate(squares, verts, increment)
    return HeightField(values=values)


def edge_probability_map(system: KasteleynSystem):
    """P(domino {w,b}) for every adjacent white/black pair, from one inverse."""
    M = system.inverse_real
    probs = {}
    for wi, w in enumerate(system.whites):
        for bi, wr in system._adj[wi]:
            p = abs(wr * M[bi, wi])
            probs[(w, system.blacks[bi])] = min(p, 1.0)
    return probs


def expected_height_field(system: KasteleynSystem, region) -> ExpectedHeightField:
    """Exact E[h] on all vertices via single-edge probabilities (no Monte Carlo)."""
    squares = getattr(region, "squares", region)
    verts = region_vertices(squares)
    probs = edge_probability_map(system)

    def cross_prob(left, right):
        if left in squares and right in squares:
            key = (left, right) if is_white(left) else (right, left)
            return probs.get(key, 0.0)
        return 0.0

    def increment(left, right, zero=False):
        if zero:
            return 0.0
        p = cross_prob(left, right)
        mean = 4.0 * p - 1.0
        return mean if is_white(left) else -mean

    # float closure is not exact; propagate on a spanning tree only
    ref = min(verts)
    h = {ref: 0.0}
    stack = [ref]
    while stack:
        v = stack.pop()
        hv = h[v]
        for w, left, right in _directed_edges(squares, verts, v):
            if w not in h:
                h[w] = hv + increment(left, right)
                stack.append(w)
    return ExpectedHeightField(values=h)


def designated_hole_vertices(region: PolyominoRegion):
    """One lattice vertex per hole: the smallest corner of the added square."""
    return tuple(min(((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)))
                 for (i, j) in region.added_squares)


def hole_heights(region: PolyominoRegion, field: HeightField,
                 expected: ExpectedHeightField, vertices=None) -> HoleHeights:
    if vertices is None:
        vertices = designated_hole_vertices(region)
    Z = np.array([field[v] - expected[v] for v in vertices])
    return HoleHeights(Z=Z, vertices=tuple(vertices))


def hole_and_centered(region: PolyominoRegion, tiling: Tiling,
                      expected: ExpectedHeightField, harmonic_fields,
                      query_points=()):
    """Hole heights Z and the corrected field h-tilde at query points.

    query_points are continuum coordinates; each is snapped to the nearest
    lattice vertex of the region.  harmonic_fields supplies the gridded
    harmonic measures f_j (one per hole) for the correction term.
    """
    field = height_field(region, tiling)
    Z = hole_heights(region, field, expected)
    g = region.genus
    if g > 0:
        if harmonic_fields is None or len(harmonic_fields) < g:
            raise MissingHarmonicData(f"need {g} harmonic measures, got "
                                      f"{0 if harmonic_fields is None else len(harmonic_fields)}")
    verts = [nearest_vertex(region, p) for p in query_points]
    out = np.empty(len(verts))
    for k, v in enumerate(verts):
        x, y = region.vertex_to_continuum(v)
        corr = 0.0
        for j in range(g):
            corr += Z.Z[j] * harmonic_fields[j].interpolate(x, y)
        out[k] = field[v] - expected[v] - corr
    return Z, out


def nearest_vertex(region: PolyominoRegion, point):
    """Region vertex nearest to a continuum point."""
    x, y = point
    a = round(x / region.eps + 0.5)
    b = round(y / region.eps + 0.5)
    verts = region_vertices(region.squares)
    if (a, b) in verts:
        return (a, b)
    return min(verts, key=lambda v: (v[0] - x / region.eps - 0.5) ** 2
               + (v[1] - y / region.eps - 0.5) ** 2)


def height_field_to_csv(region: PolyominoRegion, field) -> str:
    """CSV dump (x, y, h) in continuum coordinates, sorted by vertex."""
    lines = ["x,y,h"]
    for v in sorted(field.values):
        x, y = region.vertex_to_continuum(v)
        lines.append(f"{x!r},{y!r},{field.values[v]!r}")
    return "\n".join(lines) + "\n"

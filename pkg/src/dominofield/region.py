"""Temperleyan polyominoes on the square lattice.

Squares are unit lattice squares centered at integer points (i, j) and
identified by those integers.  The checkerboard splits them into four
classes: W0 (both even), W1 (both odd), B0 ((1,0) mod 2), B1 ((0,1) mod 2).
An even polyomino has every corner square of class B1; a Temperleyan
polyomino is an even polyomino with one black square removed from the outer
boundary and one black square added along each hole boundary.

Lattice vertices are corners of squares: vertex (a, b) is the lower-left
corner of square (a, b), i.e. the point (a - 1/2, b - 1/2) in lattice units.
Continuum coordinates are lattice units times the scale eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InfeasibleGeometry, UnbalancedRegion

W0, W1, B0, B1 = "W0", "W1", "B0", "B1"

_CLASS_CHAR = {W0: "w", W1: "W", B0: "b", B1: "B"}


def color_of(square):
    """Color class of a lattice square (i, j)."""
    i, j = square
    if i % 2 == 0:
        return W0 if j % 2 == 0 else B1
    return B0 if j % 2 == 0 else W1


def is_white(square):
    i, j = square
    return (i + j) % 2 == 0


def is_black(square):
    return not is_white(square)


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class RectilinearPolygon:
    """Axis-aligned polygon; vertices in order, closing edge implied."""

    vertices: tuple

    def __post_init__(self):
        vs = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", vs)
        n = len(vs)
        if n < 4:
            raise ValueError("rectilinear polygon needs at least 4 vertices")
        for k in range(n):
            x0, y0 = vs[k]
            x1, y1 = vs[(k + 1) % n]
            if not ((x0 == x1) ^ (y0 == y1)):
                raise ValueError("polygon edges must be axis-aligned and nondegenerate")


def rectangle(x0, y0, x1, y1):
    """Axis-aligned rectangle as a counterclockwise rectilinear polygon."""
    return RectilinearPolygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


@dataclass(frozen=True)
class DomainSpec:
    """Continuum domain: outer component, holes, one marked point per component.

    marked_points[0] lies on the outer boundary, marked_points[j] on the
    boundary of holes[j-1].
    """

    outer: object
    holes: tuple = ()
    marked_points: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        object.__setattr__(
            self, "marked_points", tuple((float(x), float(y)) for x, y in self.marked_points)
        )
        if len(self.marked_points) != 1 + len(self.holes):
            raise ValueError("need exactly one marked point per boundary component")

    @property
    def genus(self):
        return len(self.holes)


@dataclass(frozen=True)
class PolyominoRegion:
    """A marked polyomino in lattice units, with scale eps to the continuum."""

    squares: frozenset
    eps: float
    boundary_loops: tuple  # tuple of loops, each a tuple of vertices; loop 0 outer
    removed_square: tuple
    added_squares: tuple
    genus: int

    @property
    def whites(self):
        return sorted((s for s in self.squares if is_white(s)), key=lambda s: (s[1], s[0]))

    @property
    def blacks(self):
        return sorted((s for s in self.squares if is_black(s)), key=lambda s: (s[1], s[0]))

    def vertices(self):
        out = set()
        for (i, j) in self.squares:
            out.update(((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)))
        return out

    def vertex_to_continuum(self, v):
        return ((v[0] - 0.5) * self.eps, (v[1] - 0.5) * self.eps)

    def square_to_continuum(self, s):
        return (s[0] * self.eps, s[1] * self.eps)


def _snap(value, parity):
    """Nearest integer of given parity (0 even, 1 odd); ties go down."""
    lo = math.floor(value)
    if lo % 2 != parity:
        lo -= 1
    hi = lo + 2
    return lo if value - lo <= hi - value else hi


def _polygon_orientation(vertices):
    area2 = 0.0
    n = len(vertices)
    for k in range(n):
        x0, y0 = vertices[k]
        x1, y1 = vertices[(k + 1) % n]
        area2 += x0 * y1 - x1 * y0
    return 1.0 if area2 > 0 else -1.0


def _snap_polygon(poly, eps, solid_inside):
    """Snap polygon edges to half-integer cut lines with the required parity.

    Vertical cuts sit beside an even column on the solid (region) side,
    horizontal cuts beside an odd row.  solid_inside says whether the region
    lies inside this polygon (outer component) or outside it (hole).
    Returns the snapped vertex list in lattice units.
    """
    verts = [(x / eps, y / eps) for x, y in poly.vertices]
    orient = _polygon_orientation(verts)
    n = len(verts)
    cuts = []  # per edge: ('v', x) or ('h', y)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        if x0 == x1:  # vertical edge
            # CCW interior is on the left of (dx,dy); flip for holes.
            interior_left = orient > 0
            going_up = y1 > y0
            inside_is_minus_x = interior_left == going_up
            solid_minus_x = inside_is_minus_x == solid_inside
            if solid_minus_x:
                col = _snap(x0 - 0.5, 0)
                cuts.append(("v", col + 0.5))
            else:
                col = _snap(x0 + 0.5, 0)
                cuts.append(("v", col - 0.5))
        else:  # horizontal edge
            interior_left = orient > 0
            going_right = x1 > x0
            inside_is_minus_y = interior_left != going_right
            solid_minus_y = inside_is_minus_y == solid_inside
            if solid_minus_y:
                row = _snap(y0 - 0.5, 1)
                cuts.append(("h", row + 0.5))
            else:
                row = _snap(y0 + 0.5, 1)
                cuts.append(("h", row - 0.5))
    snapped = []
    for k in range(n):
        prev = cuts[k - 1]
        cur = cuts[k]
        if prev[0] == cur[0]:
            raise InfeasibleGeometry("consecutive parallel edges after snapping")
        x = prev[1] if prev[0] == "v" else cur[1]
        y = prev[1] if prev[0] == "h" else cur[1]
        snapped.append((x, y))
    xs = [v[0] for v in snapped]
    ys = [v[1] for v in snapped]
    if max(xs) - min(xs) < 2.5 or max(ys) - min(ys) < 2.5:
        raise InfeasibleGeometry(
            "polygon collapses below 3 squares after parity snapping; decrease eps"
        )
    return snapped


def _point_in_polygon(px, py, verts):
    """Even-odd rule; points never lie on edges (edges at half-integers)."""
    inside = False
    n = len(verts)
    for k in range(n):
        x0, y0 = verts[k]
        x1, y1 = verts[(k + 1) % n]
        if (y0 > py) != (y1 > py):
            xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            if px < xcross:
                inside = not inside
    return inside


def _rasterize_polygon(poly, eps, solid_inside):
    verts = _snap_polygon(poly, eps, solid_inside)
    xs = [v[0] for v in verts]
    ys = [v[1] for v in verts]
    squares = set()
    for i in range(math.floor(min(xs)), math.ceil(max(xs)) + 1):
        for j in range(math.floor(min(ys)), math.ceil(max(ys)) + 1):
            if _point_in_polygon(i, j, verts):
                squares.add((i, j))
    return squares


def _rasterize_circle(circ, eps, is_hole):
    """Staircase disk as a union of 3-row strips with parity-aligned extremes.

    Outer disks use odd strip anchors and even column extremes; holes the
    opposite, so every staircase corner square of the resulting polyomino
    has class B1.
    """
    cx, cy, r = circ.cx / eps, circ.cy / eps, circ.r / eps
    if r < 2.5:
        raise InfeasibleGeometry("circle radius below 3 squares at this eps; decrease eps")
    row_parity = 0 if is_hole else 1
    col_parity = 1 if is_hole else 0
    squares = set()
    j0 = _snap(cy - r, row_parity)
    j1 = _snap(cy + r, row_parity)
    j = j0
    while j <= j1 - 2:
        # strip rows j..j+2; width limited by the most extreme row
        worst = max(abs(j - cy), abs(j + 2 - cy))
        if worst < r:
            half = math.sqrt(r * r - worst * worst)
            ilo = _snap(cx - half + 1, col_parity)
            ihi = _snap(cx + half - 1, col_parity)
            if ilo < cx - half - 0.5:
                ilo += 2
            if ihi > cx + half + 0.5:
                ihi -= 2
            if ihi >= ilo:
                for i in range(ilo, ihi + 1):
                    for jj in (j, j + 1, j + 2):
                        squares.add((i, jj))
        j += 2
    if not squares:
        raise InfeasibleGeometry("circle rasterized to an empty region")
    return squares


def _rasterize(shape, eps, solid_inside):
    if isinstance(shape, Circle):
        return _rasterize_circle(shape, eps, is_hole=not solid_inside)
    if isinstance(shape, RectilinearPolygon):
        return _rasterize_polygon(shape, eps, solid_inside)
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def _vertex_census(squares):
    """Map vertex -> in-region squares among the four around it."""
    census = {}
    for s in squares:
        i, j = s
        for v in ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)):
            census.setdefault(v, []).append(s)
    return census


def corner_squares(squares):
    """Corner squares of the polyomino with their boundary corner vertices.

    At a convex corner the single in-region square at the vertex; at a
    concave corner the square diagonally opposite the single missing one.
    Returns list of (vertex, square).  Pinch vertices (two diagonal squares)
    are reported with square None.
    """
    out = []
    census = _vertex_census(squares)
    for v, around in census.items():
        a, b = v
        all4 = [(a - 1, b - 1), (a, b - 1), (a - 1, b), (a, b)]
        inside = [s for s in all4 if s in squares]
        if len(inside) == 1:
            out.append((v, inside[0]))
        elif len(inside) == 3:
            (missing,) = [s for s in all4 if s not in squares]
            diag = (all4[0] if missing == all4[3] else
                    all4[3] if missing == all4[0] else
                    all4[1] if missing == all4[2] else all4[2])
            out.append((v, diag))
        elif len(inside) == 2:
            s0, s1 = inside
            if s0[0] != s1[0] and s0[1] != s1[1]:
                out.append((v, None))  # pinch
    return out


def _boundary_edges(squares):
    """Directed boundary edges (v, w) keeping the region on the left."""
    edges = set()
    for s in squares:
        i, j = s
        if (i, j - 1) not in squares:  # south side, region above: walk east
            edges.add(((i, j), (i + 1, j)))
        if (i + 1, j) not in squares:  # east side: walk north
            edges.add(((i + 1, j), (i + 1, j + 1)))
        if (i, j + 1) not in squares:  # north side: walk west
            edges.add(((i + 1, j + 1), (i, j + 1)))
        if (i - 1, j) not in squares:  # west side: walk south
            edges.add(((i, j + 1), (i, j)))
    return edges


def trace_boundary_loops(squares):
    """Closed boundary loops as vertex tuples; loop 0 is the outer one.

    At pinch vertices the walk takes the rightmost turn so each loop stays
    closed; the validator reports pinches separately.
    """
    edges = _boundary_edges(squares)
    by_tail = {}
    for e in edges:
        by_tail.setdefault(e[0], []).append(e)
    loops = []
    remaining = set(edges)
    while remaining:
        start = min(remaining)
        loop = [start[0]]
        e = start
        while True:
            remaining.discard(e)
            head = e[1]
            if head == start[0]:
                break
            loop.append(head)
            cands = [c for c in by_tail.get(head, ()) if c in remaining]
            if not cands:
                break  # open walk; validator will flag
            if len(cands) == 1:
                e = cands[0]
            else:
                # rightmost turn relative to incoming direction
                dx, dy = head[0] - e[0][0], head[1] - e[0][1]
                def turn_key(c):
                    ex, ey = c[1][0] - c[0][0], c[1][1] - c[0][1]
                    return -(dx * ey - dy * ex)
                e = min(cands, key=turn_key)
        loops.append(tuple(loop))
    def loop_key(lp):
        xs = [v[0] for v in lp]
        ys = [v[1] for v in lp]
        return (min(xs), min(ys), -max(xs), -max(ys))
    loops.sort(key=loop_key)
    return tuple(loops)


def _hole_components(squares):
    """Connected components of missing squares enclosed by the region."""
    if not squares:
        return []
    xs = [s[0] for s in squares]
    ys = [s[1] for s in squares]
    x0, x1 = min(xs) - 1, max(xs) + 1
    y0, y1 = min(ys) - 1, max(ys) + 1
    missing = {
        (i, j)
        for i in range(x0, x1 + 1)
        for j in range(y0, y1 + 1)
        if (i, j) not in squares
    }
    comps = []
    seen = set()
    for start in sorted(missing):
        if start in seen:
            continue
        comp = set()
        stack = [start]
        seen.add(start)
        touches_border = False
        while stack:
            (i, j) = stack.pop()
            comp.add((i, j))
            if i in (x0, x1) or j in (y0, y1):
                touches_border = True
            for n in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if n in missing and n not in seen:
                    seen.add(n)
                    stack.append(n)
        if not touches_border:
            comps.append(comp)
    return comps


def _squares_on_loop(squares, loop):
    """Squares with at least one side on the given boundary loop."""
    loop_edges = set()
    n = len(loop)
    for k in range(n):
        a, b = loop[k], loop[(k + 1) % n]
        loop_edges.add(frozenset((a, b)))
    out = set()
    for s in squares:
        i, j = s
        corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
        for k in range(4):
            if frozenset((corners[k], corners[(k + 1) % 4])) in loop_edges:
                out.add(s)
                break
    return out


def _nearest_square(cands, point_lattice):
    px, py = point_lattice
    return min(cands, key=lambda s: ((s[0] - px) ** 2 + (s[1] - py) ** 2, s[0], s[1]))


def build_temperleyan(spec: DomainSpec, eps: float) -> PolyominoRegion:
    """Rasterize spec at scale eps into a validated Temperleyan polyomino."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    outer_sq = _rasterize(spec.outer, eps, solid_inside=True)
    hole_sqs = [_rasterize(h, eps, solid_inside=False) for h in spec.holes]
    even_poly = set(outer_sq)
    for hs in hole_sqs:
        if not hs <= even_poly:
            raise InfeasibleGeometry("hole extends outside the outer component")
        even_poly -= hs

    bad = [c for c in corner_squares(even_poly) if c[1] is None or color_of(c[1]) != B1]
    if bad:
        raise InfeasibleGeometry(
            f"{len(bad)} corner square(s) violate the B1 corner condition "
            f"(first at vertex {bad[0][0]})"
        )

    comps = _hole_components(even_poly)
    if len(comps) != len(spec.holes):
        raise InfeasibleGeometry(
            f"expected {len(spec.holes)} holes after rasterization, found {len(comps)}"
        )

    loops = trace_boundary_loops(even_poly)
    outer_loop = loops[0]

    d0 = (spec.marked_points[0][0] / eps, spec.marked_points[0][1] / eps)
    outer_blacks = {s for s in _squares_on_loop(even_poly, outer_loop) if is_black(s)}
    if not outer_blacks:
        raise InfeasibleGeometry("no black square on the outer boundary")
    removed = _nearest_square(outer_blacks, d0)

    added = []
    for j, hole in enumerate(spec.holes):
        dj = (spec.marked_points[j + 1][0] / eps, spec.marked_points[j + 1][1] / eps)
        # the rasterized component whose centroid is nearest the hole's marked point
        comp = min(
            comps,
            key=lambda c: (sum(s[0] for s in c) / len(c) - dj[0]) ** 2
            + (sum(s[1] for s in c) / len(c) - dj[1]) ** 2,
        )
        rim_blacks = {
            s
            for s in comp
            if is_black(s)
            and any(
                n in even_poly
                for n in ((s[0] + 1, s[1]), (s[0] - 1, s[1]), (s[0], s[1] + 1), (s[0], s[1] - 1))
            )
        }
        if not rim_blacks:
            raise InfeasibleGeometry(f"no black square available on the rim of hole {j}")
        added.append(_nearest_square(rim_blacks, dj))

    final = (even_poly - {removed}) | set(added)
    nw = sum(1 for s in final if is_white(s))
    nb = len(final) - nw
    if nw != nb:
        raise UnbalancedRegion(f"{nw} white vs {nb} black squares after marking")

    final_loops = trace_boundary_loops(final)
    region = PolyominoRegion(
        squares=frozenset(final),
        eps=float(eps),
        boundary_loops=final_loops,
        removed_square=removed,
        added_squares=tuple(added),
        genus=len(spec.holes),
    )
    return region


@dataclass
class RegionDiagnostics:
    passed: bool
    issues: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    white_count: int = 0
    black_count: int = 0
    corner_violations: int = 0
    loop_count: int = 0

    def __str__(self):
        lines = [f"region check: {'pass' if self.passed else 'FAIL'}"]
        lines.append(f"  whites={self.white_count} blacks={self.black_count}")
        lines.append(f"  loops={self.loop_count} corner_violations={self.corner_violations}")
        for msg in self.issues:
            lines.append(f"  issue: {msg}")
        for msg in self.warnings:
            lines.append(f"  warning: {msg}")
        return "\n".join(lines)


def _flat_run_length(even_poly, marked):
    """Longest straight even-polyomino boundary run through a marked square's sides."""
    i, j = marked
    best = 0
    for di, dj in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        nbr = (i + di, j + dj)
        if (marked in even_poly) == (nbr in even_poly):
            continue  # side not on the boundary
        ti, tj = (1, 0) if di == 0 else (0, 1)
        run = 1
        for sgn in (1, -1):
            k = 1
            while True:
                a = (i + sgn * k * ti, j + sgn * k * tj)
                b = (a[0] + di, a[1] + dj)
                if (a in even_poly) == (b in even_poly):
                    break
                run += 1
                k += 1
        best = max(best, run)
    return best


def validate_region(region: PolyominoRegion) -> RegionDiagnostics:
    """Diagnostics for the PolyominoRegion invariants; never raises."""
    diag = RegionDiagnostics(passed=True)
    squares = set(region.squares)
    diag.white_count = sum(1 for s in squares if is_white(s))
    diag.black_count = len(squares) - diag.white_count
    if diag.white_count != diag.black_count:
        diag.issues.append(
            f"color balance defect {abs(diag.white_count - diag.black_count)}"
        )

    even_poly = (squares - set(region.added_squares)) | {region.removed_square}
    corners = corner_squares(even_poly)
    bad = [c for c in corners if c[1] is None or color_of(c[1]) != B1]
    diag.corner_violations = len(bad)
    if bad:
        diag.issues.append(f"{len(bad)} corner-condition violations on the even polyomino")

    loops = trace_boundary_loops(squares)
    diag.loop_count = len(loops)
    if diag.loop_count != region.genus + 1:
        diag.issues.append(
            f"{diag.loop_count} boundary loops, expected {region.genus + 1}"
        )
    for k, lp in enumerate(loops):
        if len(set(lp)) != len(lp):
            diag.issues.append(f"boundary loop {k} is not simple")

    if not is_black(region.removed_square):
        diag.issues.append("removed square not black")
    if region.removed_square in squares:
        diag.issues.append("removed square still present in region")
    else:
        outer_sqs = _squares_on_loop(even_poly, trace_boundary_loops(even_poly)[0])
        if region.removed_square not in outer_sqs:
            diag.issues.append("removed square not on the outer boundary")

    for a in region.added_squares:
        if not is_black(a):
            diag.issues.append(f"added square {a} not black")
        if a not in squares:
            diag.issues.append(f"added square {a} missing from region")
        nbrs = [(a[0] + 1, a[1]), (a[0] - 1, a[1]), (a[0], a[1] + 1), (a[0], a[1] - 1)]
        if not any(n in even_poly for n in nbrs):
            diag.issues.append(f"added square {a} not edge-adjacent to the region")

    for marked in (region.removed_square, *region.added_squares):
        if _flat_run_length(even_poly, marked) < 4:
            diag.warnings.append(f"boundary not flat in a 4-square window at {marked}")

    diag.passed = not diag.issues
    return diag


def region_to_text(region: PolyominoRegion) -> str:
    """Text-grid dump: class letters, '.' outside, 'R' removed, 'A' added."""
    squares = region.squares
    pts = set(squares) | {region.removed_square}
    xs = [s[0] for s in pts]
    ys = [s[1] for s in pts]
    lines = []
    for j in range(max(ys), min(ys) - 1, -1):
        row = []
        for i in range(min(xs), max(xs) + 1):
            s = (i, j)
            if s == region.removed_square:
                row.append("R")
            elif s in region.added_squares:
                row.append("A")
            elif s in squares:
                row.append(_CLASS_CHAR[color_of(s)])
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines)

"""Kasteleyn linear algebra: counting, edge probabilities, exact sampling.

The exposed matrix K follows the complex convention K(w, b) = 1 for
horizontal neighbors and i for vertical ones.  Sampling and probabilities
run on a gauge-equivalent real matrix (1 horizontal, (-1)^x vertical) so
all conditional linear algebra stays in float64; |det| of both matrices
equals the number of tilings of the region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidEdge, RegionTooLarge, SolverDiverged, UnbalancedRegion, Untileable
from .region import is_black, is_white

ENUMERATION_GUARD = 24
_FLUSH = 48

_NEIGHBOR_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _square_set(region):
    squares = getattr(region, "squares", region)
    return frozenset(tuple(s) for s in squares)


@dataclass(frozen=True)
class Tiling:
    """Perfect matching as (white, black) pairs sorted by white square."""

    dominoes: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "dominoes", tuple(sorted(self.dominoes, key=lambda d: (d[0][1], d[0][0])))
        )

    def partner(self):
        out = {}
        for w, b in self.dominoes:
            out[w] = b
            out[b] = w
        return out

    def __len__(self):
        return len(self.dominoes)


def tiling_to_text(tiling: Tiling) -> str:
    return "\n".join(f"{w[0]},{w[1]}-{b[0]},{b[1]}" for w, b in tiling.dominoes)


def tiling_from_text(text: str) -> Tiling:
    dominoes = []
    for line in text.strip().splitlines():
        wpart, bpart = line.split("-")
        w = tuple(int(t) for t in wpart.split(","))
        b = tuple(int(t) for t in bpart.split(","))
        dominoes.append((w, b))
    return Tiling(tuple(dominoes))


class KasteleynSystem:
    """Immutable Kasteleyn matrix data for one region."""

    def __init__(self, region):
        squares = _square_set(region)
        whites = sorted((s for s in squares if is_white(s)), key=lambda s: (s[1], s[0]))
        blacks = sorted((s for s in squares if is_black(s)), key=lambda s: (s[1], s[0]))
        if len(whites) != len(blacks):
            raise UnbalancedRegion(f"{len(whites)} white vs {len(blacks)} black squares")
        self.region = region
        self.whites = whites
        self.blacks = blacks
        self.white_index = {w: k for k, w in enumerate(whites)}
        self.black_index = {b: k for k, b in enumerate(blacks)}
        n = len(whites)
        self.K = np.zeros((n, n), dtype=complex)
        self._K_real = np.zeros((n, n))
        # adjacency list: for each white, (black position, real weight)
        self._adj = []
        for wi, (x, y) in enumerate(whites):
            row = []
            for dx, dy in _NEIGHBOR_OFFSETS:
                b = (x + dx, y + dy)
                bi = self.black_index.get(b)
                if bi is None:
                    continue
                self.K[wi, bi] = 1.0 if dy == 0 else 1.0j
                wr = 1.0 if dy == 0 else (-1.0) ** x
                self._K_real[wi, bi] = wr
                row.append((bi, wr))
            self._adj.append(sorted(row))

    @property
    def size(self):
        return len(self.whites)

    @cached_property
    def log_abs_det(self):
        if self.size == 0:
            return 0.0
        sign, logdet = np.linalg.slogdet(self.K)
        return logdet if sign != 0 else -math.inf

    @cached_property
    def inverse_real(self):
        """Inverse of the real-gauge matrix, indexed (black, white)."""
        try:
            return np.linalg.inv(self._K_real)
        except np.linalg.LinAlgError as exc:
            raise Untileable("Kasteleyn matrix singular: region is untileable") from exc

    def real_weight(self, w, b):
        return self._K_real[self.white_index[w], self.black_index[b]]


def build_system(region) -> KasteleynSystem:
    return KasteleynSystem(region)


@dataclass(frozen=True)
class TilingCount:
    log_count: float
    exact: int | None

    def __float__(self):
        return self.log_count


def _gauss_mul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _gauss_div_exact(a, b):
    d = b[0] * b[0] + b[1] * b[1]
    re, im = a[0] * b[0] + a[1] * b[1], a[1] * b[0] - a[0] * b[1]
    if re % d or im % d:
        raise ArithmeticError("non-exact Gaussian-integer division in Bareiss elimination")
    return (re // d, im // d)


def _bareiss_abs_det(K):
    """Exact |det| of a Gaussian-integer matrix via fraction-free elimination."""
    n = K.shape[0]
    if n == 0:
        return 1
    A = [[(int(K[i, j].real), int(K[i, j].imag)) for j in range(n)] for i in range(n)]
    prev = (1, 0)
    for r in range(n - 1):
        if A[r][r] == (0, 0):
            for i in range(r + 1, n):
                if A[i][r] != (0, 0):
                    A[r], A[i] = A[i], A[r]
                    break
            else:
                return 0
        for i in range(r + 1, n):
            for k in range(r + 1, n):
                num = tuple(
                    x - y
                    for x, y in zip(_gauss_mul(A[r][r], A[i][k]), _gauss_mul(A[i][r], A[r][k]))
                )
                A[i][k] = _gauss_div_exact(num, prev)
            A[i][r] = (0, 0)
        prev = A[r][r]
    det = A[n - 1][n - 1]
    mag2 = det[0] * det[0] + det[1] * det[1]
    root = math.isqrt(mag2)
    if root * root != mag2:
        raise ArithmeticError(f"|det|^2 = {mag2} is not a perfect square")
    return root


def count_tilings(system: KasteleynSystem) -> TilingCount:
    """log|det K|, plus the exact integer count for small regions."""
    exact = None
    if 2 * system.size <= ENUMERATION_GUARD:
        exact = _bareiss_abs_det(system.K)
        log_count = math.log(exact) if exact > 0 else -math.inf
        return TilingCount(log_count=log_count, exact=exact)
    return TilingCount(log_count=system.log_abs_det, exact=None)


def enumerate_tilings(region) -> list[Tiling]:
    """Exhaustive backtracking on the lowest uncovered square."""
    squares = _square_set(region)
    if len(squares) > ENUMERATION_GUARD:
        raise RegionTooLarge(f"{len(squares)} squares exceeds guard {ENUMERATION_GUARD}")
    results = []
    acc = []

    def rec(uncovered):
        if not uncovered:
            results.append(
                Tiling(tuple((d if is_white(d[0]) else (d[1], d[0])) for d in acc))
            )
            return
        s = min(uncovered, key=lambda t: (t[1], t[0]))
        x, y = s
        for dx, dy in _NEIGHBOR_OFFSETS:
            t = (x + dx, y + dy)
            if t in uncovered:
                acc.append((s, t))
                rec(uncovered - {s, t})
                acc.pop()

    rec(frozenset(squares))
    return results


def _validate_edges(system, edges):
    seen = set()
    norm = []
    for e in edges:
        a, b = tuple(e[0]), tuple(e[1])
        if is_black(a):
            a, b = b, a
        if a not in system.white_index or b not in system.black_index:
            raise InvalidEdge(f"edge {e} leaves the region")
        if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
            raise InvalidEdge(f"squares {a} and {b} are not adjacent")
        if a in seen or b in seen:
            raise InvalidEdge(f"edges overlap at {a if a in seen else b}")
        seen.update((a, b))
        norm.append((a, b))
    return norm


def edge_probabilities(system: KasteleynSystem, edges) -> float:
    """Probability that all listed dominoes occur together in a uniform tiling."""
    edges = _validate_edges(system, edges)
    if system.log_abs_det == -math.inf:
        raise Untileable("region has no tilings")
    M = system.inverse_real
    k = len(edges)
    sub = np.empty((k, k))
    wfac = 1.0
    for i, (wi, bi) in enumerate(edges):
        wfac *= system.real_weight(wi, bi)
        for j, (wj, _) in enumerate(edges):
            sub[i, j] = M[system.black_index[bi], system.white_index[wj]]
    p = abs(wfac * np.linalg.det(sub))
    return min(p, 1.0)


def sample_exact(system: KasteleynSystem, rng_seed) -> Tiling:
    """Draw one exactly uniform tiling by sequential conditioning.

    Whites are processed in row-major order; after each placement the
    conditional inverse is advanced by a Schur-complement rank-1 update,
    buffered and flushed through a matrix product for speed.
    """
    if system.log_abs_det == -math.inf:
        raise Untileable("region has no tilings")
    rng = np.random.default_rng(rng_seed)
    n = system.size
    M = np.asfortranarray(system.inverse_real.copy())
    Ubuf = np.empty((n, _FLUSH), order="F")
    Vbuf = np.empty((_FLUSH, n))
    nbuf = 0
    used_black = np.zeros(n, dtype=bool)
    pairs = []

    def flush():
        nonlocal nbuf
        if nbuf:
            M[...] -= Ubuf[:, :nbuf] @ Vbuf[:nbuf, :]
            nbuf = 0

    for wi in range(n):
        cands = [(bi, wr) for bi, wr in system._adj[wi] if not used_black[bi]]
        if not cands:
            raise SolverDiverged(f"no available partner for white {system.whites[wi]}")
        col = M[:, wi].copy()
        if nbuf:
            col -= Ubuf[:, :nbuf] @ Vbuf[:nbuf, wi]
        probs = np.array([abs(wr * col[bi]) for bi, wr in cands])
        total = probs.sum()
        if not (0.5 < total < 1.5):
            # numerical drift: flush pending updates and retry once
            flush()
            col = M[:, wi].copy()
            probs = np.array([abs(wr * col[bi]) for bi, wr in cands])
            total = probs.sum()
            if not (0.1 < total < 1.9):
                raise SolverDiverged(
                    f"conditional probabilities sum to {total:.3g} at white {wi}"
                )
        probs /= total
        pick = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        pick = min(pick, len(cands) - 1)
        bi, _ = cands[pick]
        used_black[bi] = True
        pairs.append((system.whites[wi], system.blacks[bi]))
        if wi == n - 1:
            break
        row = M[bi, :].copy()
        if nbuf:
            row -= Ubuf[bi, :nbuf] @ Vbuf[:nbuf, :]
        pivot = col[bi]
        if pivot == 0.0:
            raise SolverDiverged("zero pivot during conditioning")
        Ubuf[:, nbuf] = col
        Vbuf[nbuf, :] = row / pivot
        nbuf += 1
        if nbuf == _FLUSH:
            flush()

    return Tiling(tuple(pairs))

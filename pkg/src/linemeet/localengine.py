"""Deterministic coloring primitives on path-like power subgraphs.

Everything here simulates synchronous full-information rounds: a k-round
computation on ``G^k[U]`` is a pure function of each member's radius k*rounds
host neighborhood.  The operations return (or can report) the exact number of
simulated rounds, which the ruling-set schedule and its termination radii are
built from, so round counts must be content-independent: they depend on the
declared palette, never on which colors actually occur.

Max degree 2 covers chains, rings, and triangles of members; list coloring
stretches to max degree 16 by decomposing edges into rank-difference classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Iterator, Mapping

import numpy as np

from .logstar import ceil_log2
from .world import NeighborhoodSnapshot, World


class EngineError(ValueError):
    """Violated precondition: improper coloring, degree too high, short list."""


# Exported round-count bounds: three_color_rounds(p) <= SLOPE*log_star(p) + OFFSET
# for every palette p >= 1 (pinned by tests across the tetration ladder).
COLOR_ROUNDS_SLOPE = 4
COLOR_ROUNDS_OFFSET = 30


def _gather(arr: np.ndarray, idx: np.ndarray, fill: int) -> np.ndarray:
    """arr[idx] with -1 entries of idx mapped to a fill value."""
    safe = np.clip(idx, 0, None)
    return np.where(idx >= 0, arr[safe], fill)


@dataclass(frozen=True)
class ColorAssignment:
    """A proper coloring of a power subgraph's members.

    ``members`` is sorted by coordinate and aligned with ``colors``; all
    colors are < palette.
    """

    members: np.ndarray
    colors: np.ndarray
    palette: int

    def color_of(self, position: int) -> int:
        idx = np.searchsorted(self.members, position)
        if idx >= len(self.members) or self.members[idx] != position:
            raise EngineError(f"{position} is not a member")
        return int(self.colors[idx])

    def as_dict(self) -> dict[int, int]:
        return {int(p): int(c) for p, c in zip(self.members, self.colors)}


@dataclass(frozen=True)
class LocalityCertificate:
    """Per-member host-graph radii from which outputs were reproduced."""

    radii: dict[int, int]
    declared_bound: int

    def max_radius(self) -> int:
        return max(self.radii.values(), default=0)


class PowerSubgraph:
    """``G^k[U]``: members of a host world, adjacent within host distance k.

    Adjacency is materialized as a rank matrix (``-1`` padded) so the
    coloring passes are numpy gathers.  On cycle hosts whose member span
    wraps around, adjacency falls back to an explicit scan.
    """

    def __init__(self, host: World, members: Iterable[int], power: int):
        if power < 1:
            raise EngineError(f"power must be >= 1, got {power}")
        listed = [int(p) for p in members]
        arr = np.array(sorted(set(listed)), dtype=np.int64)
        if arr.size != len(listed):
            raise EngineError("duplicate members")
        self.host = host
        self.members = arr
        self.power = int(power)
        self.labels = host.labels_at(arr) if arr.size else np.empty(0, dtype=np.int64)
        self._build_adjacency()

    def _build_adjacency(self) -> None:
        m = self.members.size
        if m == 0:
            self.nbrs = np.empty((0, 0), dtype=np.int64)
            self.degrees = np.empty(0, dtype=np.int64)
            self.max_degree = 0
            return
        c, k = self.members, self.power
        host = self.host
        wraps = (host.topology == "cycle"
                 and host.n - (int(c[-1]) - int(c[0])) <= k and m > 1)
        if wraps and 2 * k >= host.n:
            deg = np.full(m, m - 1, dtype=np.int64)
            t = np.arange(m - 1, dtype=np.int64)[None, :]
            idx = np.arange(m, dtype=np.int64)[:, None]
            nbrs = np.where(t >= idx, t + 1, t).astype(np.int64)
        elif wraps:
            # members within +-k form one circular rank window around each node
            ext = np.concatenate([c - host.n, c, c + host.n])
            lo = np.searchsorted(ext, c - k, side="left")
            hi = np.searchsorted(ext, c + k, side="right")
            deg = hi - lo - 1
            dmax = int(deg.max())
            t = np.arange(dmax, dtype=np.int64)[None, :]
            raw = lo[:, None] + t
            self_pos = (np.arange(m, dtype=np.int64) + m)[:, None]
            raw = np.where(raw >= self_pos, raw + 1, raw)
            nbrs = raw % m
            nbrs[t >= deg[:, None]] = -1
        else:
            lo = np.searchsorted(c, c - k, side="left")
            hi = np.searchsorted(c, c + k, side="right")
            deg = hi - lo - 1
            dmax = int(deg.max())
            t = np.arange(dmax, dtype=np.int64)[None, :]
            raw = lo[:, None] + t
            idx = np.arange(m, dtype=np.int64)[:, None]
            nbrs = np.where(raw >= idx, raw + 1, raw)
            nbrs[t >= deg[:, None]] = -1
        self.nbrs = nbrs
        self.degrees = deg
        self.max_degree = int(deg.max())

    def require_degree(self, bound: int) -> None:
        if self.max_degree > bound:
            raise EngineError(
                f"max degree {self.max_degree} exceeds {bound} for this operation")

    @property
    def pair(self) -> tuple[np.ndarray, np.ndarray]:
        """(first, second) neighbor rank arrays for degree <= 2 graphs."""
        self.require_degree(2)
        if self.nbrs.shape[1] >= 2:
            return self.nbrs[:, 0], self.nbrs[:, 1]
        if self.nbrs.shape[1] == 1:
            return self.nbrs[:, 0], np.full(self.members.size, -1, dtype=np.int64)
        none = np.full(self.members.size, -1, dtype=np.int64)
        return none, none

    def edges(self) -> Iterator[tuple[int, int]]:
        """All member-rank edges (i < j); oracle-friendly, not a hot path."""
        for i in range(self.members.size):
            for j in self.nbrs[i]:
                if j > i:
                    yield i, int(j)

    def check_proper(self, colors: np.ndarray) -> None:
        bad = _gather(colors, self.nbrs.ravel(), -1).reshape(self.nbrs.shape)
        if np.any(bad == colors[:, None]):
            raise EngineError("coloring is not proper on the subgraph")


# -- degree <= 2 three-coloring pipeline ---------------------------------------


def _squared_cv_round(colors: np.ndarray, palette: int, labels: np.ndarray,
                      nA: np.ndarray, nB: np.ndarray) -> tuple[np.ndarray, int]:
    """One two-slot bit-index reduction round.

    Each member emits one entry per incident edge: the lowest bit position k
    where its color differs from that neighbor's, paired with its own bit
    there.  A missing neighbor contributes the self-consistent filler (k=0,
    own bit 0).  Entries are ordered by neighbor label, so the new color is
    invariant under reflections of the line.  Properness: every entry (k, b)
    of x satisfies bit_k(color_x) = b, and for an edge uv some slot of u holds
    k* = lowest differing bit of (c_u, c_v); equal new colors would force
    bit_k*(c_u) = bit_k*(c_v), contradicting the choice of k*.
    """
    bits = max(1, ceil_log2(max(palette, 2)))
    width = 2 * bits

    def entry(nbr: np.ndarray) -> np.ndarray:
        nc = _gather(colors, nbr, 0)
        diff = colors ^ nc
        low = diff & -diff
        k = np.bitwise_count((low - 1).astype(np.uint64)).astype(np.int64)
        k = np.where(nbr >= 0, np.minimum(k, 62), 0)
        b = (colors >> k) & 1
        return 2 * k + b

    eA, eB = entry(nA), entry(nB)
    sentinel = np.int64(2**63 - 1)
    lA = _gather(labels, nA, sentinel)
    lB = _gather(labels, nB, sentinel)
    first = np.where(lA <= lB, eA, eB)
    second = np.where(lA <= lB, eB, eA)
    return first * width + second, width * width


def _kw_stage(colors: np.ndarray, palette: int, nA: np.ndarray,
              nB: np.ndarray) -> tuple[np.ndarray, int]:
    """Three sub-rounds folding blocks of 6 colors onto their low halves.

    Offsets 5, 4, 3 recolor in turn to the smallest free color among
    {6b, 6b+1, 6b+2} of their own block b; adjacent same-offset members sit in
    distinct blocks, so parallel recoloring stays proper.  The closing
    relabel 6b+j -> 3b+j is a palette renaming, not a communication round.
    """
    c = colors.copy()
    for offset in (5, 4, 3):
        sel = (c % 6) == offset
        if sel.any():
            cA = _gather(c, nA, -1)
            cB = _gather(c, nB, -1)
            base = (c // 6) * 6
            target = base.copy()
            for _ in range(2):
                target = np.where(sel & ((target == cA) | (target == cB)), target + 1, target)
            c = np.where(sel, target, c)
    return (c // 6) * 3 + (c % 6), 3 * ((palette + 5) // 6)


def three_color_rounds(palette: int) -> int:
    """Simulated rounds the pipeline takes to reach palette <= 3.

    Driven purely by the palette value, so it equals the executed count for
    any member content; this is what makes schedules computable offline.
    """
    if palette < 1:
        raise EngineError(f"palette must be >= 1, got {palette}")
    m, rounds = int(palette), 0
    while m > 3:
        squared = (2 * max(1, ceil_log2(max(m, 2)))) ** 2
        if squared < m:
            m, rounds = squared, rounds + 1
        else:
            m, rounds = 3 * ((m + 5) // 6), rounds + 3
    return rounds


def _three_color(labels: np.ndarray, nA: np.ndarray, nB: np.ndarray,
                 init_colors: np.ndarray, palette: int) -> tuple[np.ndarray, int]:
    """Run the pipeline; returns (colors in [0,3), executed rounds)."""
    c, m, rounds = init_colors.astype(np.int64), int(palette), 0
    while m > 3:
        squared = (2 * max(1, ceil_log2(max(m, 2)))) ** 2
        if squared < m:
            c, m = _squared_cv_round(c, m, labels, nA, nB)
            rounds += 1
        else:
            c, m = _kw_stage(c, m, nA, nB)
            rounds += 3
    return c, rounds


def _check_pair_proper(c: np.ndarray, nA: np.ndarray, nB: np.ndarray) -> bool:
    return not (np.any(_gather(c, nA, -1) == c) or np.any(_gather(c, nB, -1) == c))


def _greedy_mis(colors3: np.ndarray, nA: np.ndarray, nB: np.ndarray) -> np.ndarray:
    """Three color-class sweeps turning a 3-coloring into an MIS flag array."""
    in_s = np.zeros(colors3.shape, dtype=bool)
    for color in (0, 1, 2):
        blocked = _gather(in_s, nA, False) | _gather(in_s, nB, False)
        in_s |= (colors3 == color) & ~blocked
    return in_s


def mis_rounds(palette: int) -> int:
    """Simulated rounds for :func:`mis` starting from the given palette."""
    return three_color_rounds(palette) + 3


# -- public operations ---------------------------------------------------------


def _init_coloring(sub: PowerSubgraph, palette: int | None,
                   base: int) -> tuple[np.ndarray, int]:
    """Label-based initial coloring: color = label - base, palette = bound.

    ``base`` is the smallest label the caller's contract admits (1 for raw
    labels, a class lower bound when members all share a label class); the
    palette counts the admissible values starting there.
    """
    init = sub.labels - base
    if palette is None:
        palette = int(init.max()) + 1 if init.size else 1
    if init.size and (int(init.min()) < 0 or int(init.max()) >= palette):
        raise EngineError(
            f"member labels fall outside [{base}, {base + palette - 1}]")
    return init, int(palette)


def cv_reduce_round(sub: PowerSubgraph, colors: ColorAssignment) -> ColorAssignment:
    """One color-reduction round on a degree <= 2 subgraph.

    Applies the two-slot bit-index step; if that would not shrink the palette
    (already at a constant-size palette) the input is returned unchanged, so
    iterating is always safe.
    """
    sub.require_degree(2)
    if not np.array_equal(colors.members, sub.members):
        raise EngineError("color assignment is for different members")
    sub.check_proper(colors.colors)
    nA, nB = sub.pair
    new, new_palette = _squared_cv_round(colors.colors, colors.palette,
                                         sub.labels, nA, nB)
    if new_palette >= colors.palette:
        return colors
    return ColorAssignment(sub.members, new, new_palette)


def color_path_constant(sub: PowerSubgraph, palette: int | None = None,
                        base: int = 1) -> tuple[ColorAssignment, int]:
    """Proper 3-coloring of a degree <= 2 subgraph, plus simulated rounds.

    Starts from the shifted label coloring (values label - base, bounded by
    ``palette`` when given, else by the largest occurring value) and
    alternates squared bit-index rounds with block-folding stages until the
    palette is at most 3.
    """
    sub.require_degree(2)
    if sub.members.size == 0:
        return ColorAssignment(sub.members, np.empty(0, dtype=np.int64), 3), 0
    init, bound = _init_coloring(sub, palette, base)
    nA, nB = sub.pair
    colors, rounds = _three_color(sub.labels, nA, nB, init, bound)
    assert rounds == three_color_rounds(bound)
    return ColorAssignment(sub.members, colors, min(3, bound)), rounds


def mis(sub: PowerSubgraph, palette: int | None = None,
        base: int = 1) -> set[int]:
    """Maximal independent set of a degree <= 2 subgraph.

    3-colors the members, then adds color classes 0, 1, 2 greedily; the
    result is independent and dominating regardless of member geometry
    (chains, rings, triangles).
    """
    assignment, _ = color_path_constant(sub, palette, base)
    nA, nB = sub.pair
    flags = _greedy_mis(assignment.colors, nA, nB)
    return {int(p) for p in sub.members[flags]}


# -- list coloring up to degree 16 ---------------------------------------------


def _difference_classes(sub: PowerSubgraph) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split edges by rank difference d; each class has degree <= 2.

    Member i's class-d neighbors can only be ranks i-d and i+d, so every
    class is a disjoint union of paths (rings, on wrapped cycles) and the
    classes cover all edges because adjacency windows are contiguous in the
    (circular) rank order.
    """
    m = sub.members.size
    c, k = sub.members, sub.power
    idx = np.arange(m, dtype=np.int64)
    host = sub.host
    classes: list[tuple[np.ndarray, np.ndarray]] = []
    if m > 1 and host.topology == "cycle" and host.n - (int(c[-1]) - int(c[0])) <= k:
        n = host.n
        for d in range(1, m // 2 + 1):
            fwd = (idx + d) % m
            back = (idx - d) % m
            gap_f = (c[fwd] - c) % n
            nB = np.where(np.minimum(gap_f, n - gap_f) <= k, fwd, -1)
            if 2 * d == m:
                nA = np.full(m, -1, dtype=np.int64)  # antipodal pair appears once
            else:
                gap_b = (c - c[back]) % n
                nA = np.where(np.minimum(gap_b, n - gap_b) <= k, back, -1)
            if (nA >= 0).any() or (nB >= 0).any():
                classes.append((nA, nB))
        return classes
    lo = np.searchsorted(c, c - k, side="left")
    hi = np.searchsorted(c, c + k, side="right")
    max_d = int(max((idx - lo).max(initial=0), (hi - 1 - idx).max(initial=0)))
    for d in range(1, max_d + 1):
        left = idx - d
        right = idx + d
        nA = np.where(left >= lo, left, -1)
        nB = np.where(right <= hi - 1, right, -1)
        if (nA >= 0).any() or (nB >= 0).any():
            classes.append((nA, nB))
    return classes


def _sweep_reduce(colors: np.ndarray, palette: int, target: int,
                  nbrs: np.ndarray) -> tuple[np.ndarray, int]:
    """Recolor classes target..palette-1 to the smallest free color < target."""
    c = colors.copy()
    rounds = 0
    for value in range(palette - 1, target - 1, -1):
        sel = c == value
        rounds += 1
        if not sel.any():
            continue
        nc = _gather(c, nbrs.ravel(), -1).reshape(nbrs.shape)
        used = np.zeros((c.size, target), dtype=bool)
        ok = (nc >= 0) & (nc < target)
        rows = np.broadcast_to(np.arange(c.size)[:, None], nbrs.shape)[ok]
        used[rows, nc[ok]] = True
        free = np.argmin(used, axis=1)
        if np.any(used[np.arange(c.size), free] & sel):
            raise EngineError("no free color during sweep reduction")
        c = np.where(sel, free, c)
    return c, rounds


def list_color_rounds(sub_or_classes: "PowerSubgraph | int", palette: int) -> int:
    """Simulated-round formula for :func:`list_color` (content-independent).

    ``sub_or_classes`` may be the subgraph or directly its number of
    rank-difference classes.
    """
    if isinstance(sub_or_classes, PowerSubgraph):
        dd = len(_difference_classes(sub_or_classes))
    else:
        dd = int(sub_or_classes)
    if dd == 0:
        return 0
    pipeline = three_color_rounds(palette) + _merge_schedule_cost(dd)
    return min(pipeline, palette)


def _merge_schedule_cost(dd: int) -> int:
    """Sweep count of the merge tree plus the final list-assignment sweeps.

    Merges at one tree level run in parallel (disjoint difference classes),
    so a level costs the maximum over its pairs, and the very last merge
    skips reduction in favor of sweeping the product palette directly.
    """
    sizes = [(3, 2)] * dd  # (palette, degree bound) per difference class
    cost = 0
    while len(sizes) > 1:
        nxt, level = [], 0
        for a in range(0, len(sizes) - 1, 2):
            (p1, d1), (p2, d2) = sizes[a], sizes[a + 1]
            prod, deg = p1 * p2, d1 + d2
            if len(sizes) > 2:
                level = max(level, prod - (deg + 1))
                nxt.append((deg + 1, deg))
            else:
                nxt.append((prod, deg))
        if len(sizes) % 2:
            nxt.append(sizes[-1])
        sizes = nxt
        cost += level
    cost += sizes[0][0]
    return cost


def _final_assign(colors: np.ndarray, palette: int, nbrs: np.ndarray,
                  lists: list[list[int]]) -> tuple[np.ndarray, int]:
    """Give every member a list color, sweeping proper-color classes in order."""
    final = np.full(colors.shape, -1, dtype=np.int64)
    rounds = 0
    for value in range(palette):
        sel = colors == value
        rounds += 1
        if not sel.any():
            continue
        nc = _gather(final, nbrs.ravel(), -1).reshape(nbrs.shape)
        for i in np.flatnonzero(sel):
            taken = set(int(x) for x in nc[i] if x >= 0)
            for cand in lists[i]:
                if cand not in taken:
                    final[i] = cand
                    break
            else:
                raise EngineError(f"list exhausted at member rank {i}")
    return final, rounds


def list_color(sub: PowerSubgraph, lists: Mapping[int, Iterable[int]],
               palette: int | None = None, base: int = 1) -> ColorAssignment:
    """Deterministic list coloring for max degree <= 16.

    Every member's list must hold at least degree+1 colors.  Lists are read
    in sorted order so the outcome is independent of the mapping's iteration
    order.
    """
    assignment, _ = _list_color_impl(sub, lists, palette, base)
    return assignment


def _list_color_impl(sub: PowerSubgraph, lists: Mapping[int, Iterable[int]],
                     palette: int | None = None,
                     base: int = 1) -> tuple[ColorAssignment, int]:
    sub.require_degree(16)
    m = sub.members.size
    if m == 0:
        return ColorAssignment(sub.members, np.empty(0, dtype=np.int64), 0), 0
    ordered: list[list[int]] = []
    for rank, p in enumerate(sub.members):
        try:
            lst = sorted(int(x) for x in lists[int(p)])
        except KeyError:
            raise EngineError(f"no list for member {int(p)}") from None
        if len(lst) < int(sub.degrees[rank]) + 1:
            raise EngineError(
                f"list of member {int(p)} has {len(lst)} colors for degree {int(sub.degrees[rank])}")
        ordered.append(lst)
    init, palette = _init_coloring(sub, palette, base)
    classes = _difference_classes(sub)
    if not classes:
        colors = np.array([lst[0] for lst in ordered], dtype=np.int64)
        top = int(colors.max()) + 1 if m else 1
        return ColorAssignment(sub.members, colors, top), 0
    rounds = 0
    pipeline_cost = three_color_rounds(palette) + _merge_schedule_cost(len(classes))
    if palette <= pipeline_cost:
        # small palettes: sweep the shifted label coloring directly
        work, work_palette = init, palette
    else:
        # (colors, palette, constituent class pair arrays) per partial coloring
        parts: list[tuple[np.ndarray, int, list]] = []
        leaf_rounds = 0
        for nA, nB in classes:
            colors3, r = _three_color(sub.labels, nA, nB, init, palette)
            leaf_rounds = max(leaf_rounds, r)
            parts.append((colors3, 3, [(nA, nB)]))
        rounds += leaf_rounds
        while len(parts) > 1:
            nxt, level = [], 0
            for a in range(0, len(parts) - 1, 2):
                c1, p1, e1 = parts[a]
                c2, p2, e2 = parts[a + 1]
                prod = c1 * p2 + c2
                pp, edges = p1 * p2, e1 + e2
                if len(parts) > 2:
                    union = np.column_stack([col for pair in edges for col in pair])
                    target = 2 * len(edges) + 1
                    prod, r = _sweep_reduce(prod, pp, target, union)
                    level = max(level, r)
                    nxt.append((prod, target, edges))
                else:
                    nxt.append((prod, pp, edges))
            if len(parts) % 2:
                nxt.append(parts[-1])
            parts = nxt
            rounds += level
        work, work_palette, _ = parts[0]
    final, r = _final_assign(work, work_palette, sub.nbrs, ordered)
    rounds += r
    sub.check_proper(final)
    top = int(final.max()) + 1
    expected = list_color_rounds(len(classes), palette)
    assert rounds == expected, (rounds, expected)
    return ColorAssignment(sub.members, final, top), rounds


# -- locality certification ----------------------------------------------------


def certify_locality(sub: PowerSubgraph, outputs: Mapping[int, Any],
                     recompute: Callable[[NeighborhoodSnapshot], Any],
                     declared_bound: int,
                     sample: Iterable[int] | None = None) -> LocalityCertificate:
    """Find, per member, a snapshot radius that reproduces its output.

    ``recompute`` must rebuild the member's output from nothing but a host
    snapshot centered there.  The declared bound is checked first and a
    mismatch there is a purity failure; below it, the smallest reproducing
    radius is located by bisection and re-verified.
    """
    radii: dict[int, int] = {}
    targets = list(sample) if sample is not None else [int(p) for p in sub.members]
    for p in targets:
        want = outputs[p]
        if recompute(sub.host.snapshot(p, declared_bound)) != want:
            raise EngineError(
                f"output of member {p} not reproducible at declared bound {declared_bound}")
        lo, hi = 0, declared_bound
        while lo < hi:
            mid = (lo + hi) // 2
            if recompute(sub.host.snapshot(p, mid)) == want:
                hi = mid
            else:
                lo = mid + 1
        if recompute(sub.host.snapshot(p, lo)) != want:
            lo = declared_bound
        radii[p] = lo
    return LocalityCertificate(radii, declared_bound)

"""Incrementally updatable AABB tree (dynamic BVH).

One implementation serves both accelerated searches: ray queries over faces
and reverse-radius point queries over boundary vertices. The tree stores fat
leaf bounds (tight bounds inflated by a margin) so small element motion skips
restructuring; true-geometry checks are delegated to a per-payload callback,
keeping the tree payload-agnostic.

Insertion picks the sibling minimizing total surface-area cost via
branch-and-bound descent, then applies local rotations along the changed
ancestor path. Readers share the tree through a readers-writer lock; a writer
is exclusive.
"""
from __future__ import annotations

import heapq
import threading
from typing import Callable, NamedTuple, Optional

from .errors import DuplicatePayload, UnknownLeaf
from .geometry import Aabb, Ray

FACE = "face"
BOUNDARY_VERTEX = "bvertex"


class LeafPayload(NamedTuple):
    kind: str               # FACE or BOUNDARY_VERTEX
    planar_mesh_id: int
    element_id: int


class _RwLock:
    """Readers-writer lock: many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _Node:
    __slots__ = ("lx", "ly", "lz", "hx", "hy", "hz",
                 "parent", "child1", "child2", "payload",
                 "tlx", "tly", "tlz", "thx", "thy", "thz")

    def __init__(self):
        self.parent = -1
        self.child1 = -1
        self.child2 = -1
        self.payload = None


def _sa(lx, ly, lz, hx, hy, hz) -> float:
    dx = hx - lx; dy = hy - ly; dz = hz - lz
    return 2.0 * (dx * dy + dy * dz + dz * dx)


class DynamicBvh:
    """Rooted binary AABB tree over live leaves, supporting insert, remove,
    in-place update, ray queries, and reverse point queries."""

    def __init__(self, margin: float = 0.05):
        self.margin = float(margin)
        self._nodes: list[_Node] = []
        self._free: list[int] = []
        self.root: int = -1
        self._leaf_of: dict[LeafPayload, int] = {}
        self.visits = 0          # instrumented node-visit counter
        self.lock = _RwLock()

    # -- bookkeeping --------------------------------------------------------

    def __len__(self) -> int:
        return len(self._leaf_of)

    def leaf_for(self, payload: LeafPayload) -> Optional[int]:
        return self._leaf_of.get(payload)

    def payloads(self) -> set[LeafPayload]:
        return set(self._leaf_of)

    def reset_visits(self):
        self.visits = 0

    def _alloc(self) -> int:
        if self._free:
            i = self._free.pop()
            n = self._nodes[i]
            n.parent = -1
            n.child1 = -1
            n.child2 = -1
            n.payload = None
            return i
        self._nodes.append(_Node())
        return len(self._nodes) - 1

    def _release(self, i: int):
        self._nodes[i].payload = None
        self._free.append(i)

    @staticmethod
    def _box6(box) -> tuple:
        if isinstance(box, Aabb):
            lo, hi = box.lo, box.hi
            return (float(lo[0]), float(lo[1]), float(lo[2]),
                    float(hi[0]), float(hi[1]), float(hi[2]))
        t = tuple(float(x) for x in box)
        if len(t) != 6:
            raise ValueError("expected Aabb or 6 floats")
        return t

    # -- mutation -----------------------------------------------------------

    def insert(self, payload: LeafPayload, tight) -> int:
        self.lock.acquire_write()
        try:
            if payload in self._leaf_of:
                raise DuplicatePayload(f"{payload} already in tree")
            leaf = self._alloc()
            n = self._nodes[leaf]
            n.payload = payload
            self._set_leaf_bounds(leaf, self._box6(tight))
            self._insert_leaf(leaf)
            self._leaf_of[payload] = leaf
            return leaf
        finally:
            self.lock.release_write()

    def remove(self, leaf: int):
        self.lock.acquire_write()
        try:
            payload = self._checked_leaf(leaf)
            self._remove_leaf(leaf)
            self._release(leaf)
            del self._leaf_of[payload]
        finally:
            self.lock.release_write()

    def update(self, leaf: int, new_tight):
        """No-op while the new tight bounds stay inside the stored fat
        bounds; otherwise the leaf is re-inserted (same leaf id)."""
        self.lock.acquire_write()
        try:
            self._checked_leaf(leaf)
            n = self._nodes[leaf]
            t = self._box6(new_tight)
            n.tlx, n.tly, n.tlz, n.thx, n.thy, n.thz = t
            if (n.lx <= t[0] and n.ly <= t[1] and n.lz <= t[2]
                    and n.hx >= t[3] and n.hy >= t[4] and n.hz >= t[5]):
                return
            self._remove_leaf(leaf)
            self._set_leaf_bounds(leaf, t)
            self._insert_leaf(leaf)
        finally:
            self.lock.release_write()

    def _checked_leaf(self, leaf: int) -> LeafPayload:
        if not (0 <= leaf < len(self._nodes)):
            raise UnknownLeaf(f"leaf {leaf} out of range")
        payload = self._nodes[leaf].payload
        if payload is None or self._leaf_of.get(payload) != leaf:
            raise UnknownLeaf(f"leaf {leaf} not live")
        return payload

    def _set_leaf_bounds(self, leaf: int, t6: tuple):
        n = self._nodes[leaf]
        n.tlx, n.tly, n.tlz, n.thx, n.thy, n.thz = t6
        m = self.margin
        n.lx = t6[0] - m; n.ly = t6[1] - m; n.lz = t6[2] - m
        n.hx = t6[3] + m; n.hy = t6[4] + m; n.hz = t6[5] + m

    def _insert_leaf(self, leaf: int):
        if self.root == -1:
            self.root = leaf
            self._nodes[leaf].parent = -1
            return
        nd = self._nodes
        L = nd[leaf]
        llx, lly, llz, lhx, lhy, lhz = L.lx, L.ly, L.lz, L.hx, L.hy, L.hz
        leaf_sa = _sa(llx, lly, llz, lhx, lhy, lhz)

        # greedy descent first: a good initial bound slashes the exact
        # branch-and-bound exploration below
        best = -1
        best_cost = float("inf")
        i = self.root
        inherited = 0.0
        while True:
            n = nd[i]
            ulx = llx if llx < n.lx else n.lx
            uly = lly if lly < n.ly else n.ly
            ulz = llz if llz < n.lz else n.lz
            uhx = lhx if lhx > n.hx else n.hx
            uhy = lhy if lhy > n.hy else n.hy
            uhz = lhz if lhz > n.hz else n.hz
            direct = _sa(ulx, uly, ulz, uhx, uhy, uhz)
            cost = inherited + direct
            if cost < best_cost:
                best_cost = cost
                best = i
            if n.child1 == -1:
                break
            inherited += direct - _sa(n.lx, n.ly, n.lz, n.hx, n.hy, n.hz)
            if inherited + leaf_sa >= best_cost:
                break
            c1 = nd[n.child1]
            c2 = nd[n.child2]
            g1 = _sa(llx if llx < c1.lx else c1.lx,
                     lly if lly < c1.ly else c1.ly,
                     llz if llz < c1.lz else c1.lz,
                     lhx if lhx > c1.hx else c1.hx,
                     lhy if lhy > c1.hy else c1.hy,
                     lhz if lhz > c1.hz else c1.hz)
            g2 = _sa(llx if llx < c2.lx else c2.lx,
                     lly if lly < c2.ly else c2.ly,
                     llz if llz < c2.lz else c2.lz,
                     lhx if lhx > c2.hx else c2.hx,
                     lhy if lhy > c2.hy else c2.hy,
                     lhz if lhz > c2.hz else c2.hz)
            i = n.child1 if g1 <= g2 else n.child2

        # exact branch-and-bound with the warm bound
        heap = [(0.0, self.root)]
        while heap:
            inherited, i = heapq.heappop(heap)
            if inherited + leaf_sa >= best_cost:
                break  # heap is cost-ordered: nothing better remains
            n = nd[i]
            ulx = llx if llx < n.lx else n.lx
            uly = lly if lly < n.ly else n.ly
            ulz = llz if llz < n.lz else n.lz
            uhx = lhx if lhx > n.hx else n.hx
            uhy = lhy if lhy > n.hy else n.hy
            uhz = lhz if lhz > n.hz else n.hz
            direct = _sa(ulx, uly, ulz, uhx, uhy, uhz)
            cost = inherited + direct
            if cost < best_cost:
                best_cost = cost
                best = i
            if n.child1 != -1:
                child_inherited = inherited + direct - _sa(n.lx, n.ly, n.lz,
                                                           n.hx, n.hy, n.hz)
                if child_inherited + leaf_sa < best_cost:
                    heapq.heappush(heap, (child_inherited, n.child1))
                    heapq.heappush(heap, (child_inherited, n.child2))

        sibling = best
        old_parent = nd[sibling].parent
        new_parent = self._alloc()
        p = nd[new_parent]
        p.parent = old_parent
        p.child1 = sibling
        p.child2 = leaf
        nd[sibling].parent = new_parent
        nd[leaf].parent = new_parent
        if old_parent == -1:
            self.root = new_parent
        else:
            gp = nd[old_parent]
            if gp.child1 == sibling:
                gp.child1 = new_parent
            else:
                gp.child2 = new_parent
        self._refit_upward(new_parent)

    def _remove_leaf(self, leaf: int):
        """Unlink a leaf; sibling is promoted into the parent's slot."""
        parent = self._nodes[leaf].parent
        if parent == -1:
            self.root = -1
            return
        p = self._nodes[parent]
        sibling = p.child2 if p.child1 == leaf else p.child1
        grand = p.parent
        self._nodes[sibling].parent = grand
        if grand == -1:
            self.root = sibling
        else:
            g = self._nodes[grand]
            if g.child1 == parent:
                g.child1 = sibling
            else:
                g.child2 = sibling
            self._refit_upward(grand)
        self._release(parent)
        self._nodes[leaf].parent = -1

    def _refit_upward(self, i: int):
        nd = self._nodes
        while i != -1:
            self._rotate(i)
            n = nd[i]
            a = nd[n.child1]
            b = nd[n.child2]
            n.lx = a.lx if a.lx < b.lx else b.lx
            n.ly = a.ly if a.ly < b.ly else b.ly
            n.lz = a.lz if a.lz < b.lz else b.lz
            n.hx = a.hx if a.hx > b.hx else b.hx
            n.hy = a.hy if a.hy > b.hy else b.hy
            n.hz = a.hz if a.hz > b.hz else b.hz
            i = n.parent

    def _rotate(self, i: int):
        """Try swapping a child of node i with a grandchild when that shrinks
        the internal child's surface area. Only the changed path is visited
        after a mutation, so bounds elsewhere stay valid."""
        nd = self._nodes
        n = nd[i]
        c1, c2 = n.child1, n.child2
        best_gain = 0.0
        best_swap = None
        for child, other in ((c1, c2), (c2, c1)):
            ch = nd[child]
            if ch.child1 == -1:
                continue
            cur = _sa(ch.lx, ch.ly, ch.lz, ch.hx, ch.hy, ch.hz)
            o = nd[other]
            for keep, out in ((ch.child1, ch.child2), (ch.child2, ch.child1)):
                k = nd[keep]
                lx = k.lx if k.lx < o.lx else o.lx
                ly = k.ly if k.ly < o.ly else o.ly
                lz = k.lz if k.lz < o.lz else o.lz
                hx = k.hx if k.hx > o.hx else o.hx
                hy = k.hy if k.hy > o.hy else o.hy
                hz = k.hz if k.hz > o.hz else o.hz
                gain = cur - _sa(lx, ly, lz, hx, hy, hz)
                if gain > best_gain:
                    best_gain = gain
                    best_swap = (child, out, other,
                                 (lx, ly, lz, hx, hy, hz))
        if best_swap is None:
            return
        child, out, other, box = best_swap
        ch = nd[child]
        # swap `out` (grandchild) with `other` (child of i)
        if ch.child1 == out:
            ch.child1 = other
        else:
            ch.child2 = other
        nd[other].parent = child
        if n.child1 == other:
            n.child1 = out
        else:
            n.child2 = out
        nd[out].parent = i
        ch.lx, ch.ly, ch.lz, ch.hx, ch.hy, ch.hz = box

    # -- queries ------------------------------------------------------------

    def query_ray(self, ray: Ray, hit_test: Callable[[LeafPayload], Optional[float]],
                  slack: float = 0.0) -> list[tuple[LeafPayload, float]]:
        """Payloads whose true geometry intersects the ray segment.

        hit_test resolves each candidate's geometry and returns the hit
        distance t, or None. Traversal prunes by slab tests against fat
        bounds over [0, ray.range + slack].
        """
        out = []
        self.lock.acquire_read()
        try:
            if self.root == -1:
                return out
            ox, oy, oz = float(ray.origin[0]), float(ray.origin[1]), float(ray.origin[2])
            dx, dy, dz = float(ray.dir[0]), float(ray.dir[1]), float(ray.dir[2])
            tmax = ray.range + slack
            # 1e300 instead of inf keeps 0*inv finite for axis-aligned rays
            ix = (1.0 / dx) if dx != 0.0 else 1e300
            iy = (1.0 / dy) if dy != 0.0 else 1e300
            iz = (1.0 / dz) if dz != 0.0 else 1e300
            nd = self._nodes
            stack = [self.root]
            visits = 0
            while stack:
                i = stack.pop()
                n = nd[i]
                visits += 1
                # inline slab test
                t0 = 0.0; t1 = tmax
                ta = (n.lx - ox) * ix; tb = (n.hx - ox) * ix
                if ta > tb: ta, tb = tb, ta
                if ta > t0: t0 = ta
                if tb < t1: t1 = tb
                if t0 > t1:
                    continue
                ta = (n.ly - oy) * iy; tb = (n.hy - oy) * iy
                if ta > tb: ta, tb = tb, ta
                if ta > t0: t0 = ta
                if tb < t1: t1 = tb
                if t0 > t1:
                    continue
                ta = (n.lz - oz) * iz; tb = (n.hz - oz) * iz
                if ta > tb: ta, tb = tb, ta
                if ta > t0: t0 = ta
                if tb < t1: t1 = tb
                if t0 > t1:
                    continue
                if n.child1 == -1:
                    t = hit_test(n.payload)
                    if t is not None:
                        out.append((n.payload, t))
                else:
                    stack.append(n.child1)
                    stack.append(n.child2)
            self.visits += visits
            return out
        finally:
            self.lock.release_read()

    def query_point(self, p, containment_test: Callable[[LeafPayload], bool]
                    ) -> list[LeafPayload]:
        """Payloads whose stored region contains p (reverse radius search:
        the radius lives on the data, not the query)."""
        out = []
        self.lock.acquire_read()
        try:
            if self.root == -1:
                return out
            px, py, pz = float(p[0]), float(p[1]), float(p[2])
            nd = self._nodes
            stack = [self.root]
            visits = 0
            while stack:
                i = stack.pop()
                n = nd[i]
                visits += 1
                if (px < n.lx or px > n.hx or py < n.ly or py > n.hy
                        or pz < n.lz or pz > n.hz):
                    continue
                if n.child1 == -1:
                    if containment_test(n.payload):
                        out.append(n.payload)
                else:
                    stack.append(n.child1)
                    stack.append(n.child2)
            self.visits += visits
            return out
        finally:
            self.lock.release_read()

    # -- diagnostics ---------------------------------------------------------

    def validate(self) -> list[str]:
        """Structural audit; returns human-readable violations (empty = ok)."""
        problems = []
        nd = self._nodes
        seen = set()
        live_leaves = 0
        if self.root != -1:
            if nd[self.root].parent != -1:
                problems.append("root has a parent")
            stack = [self.root]
            while stack:
                i = stack.pop()
                if i in seen:
                    problems.append(f"node {i} reachable twice")
                    break
                seen.add(i)
                n = nd[i]
                kids = (n.child1, n.child2)
                if (kids[0] == -1) != (kids[1] == -1):
                    problems.append(f"node {i} has exactly one child")
                    continue
                if kids[0] == -1:
                    live_leaves += 1
                    if n.payload is None:
                        problems.append(f"leaf {i} missing payload")
                    elif self._leaf_of.get(n.payload) != i:
                        problems.append(f"leaf {i} not indexed")
                    if (n.lx > n.tlx or n.ly > n.tly or n.lz > n.tlz
                            or n.hx < n.thx or n.hy < n.thy or n.hz < n.thz):
                        problems.append(f"leaf {i} fat bounds exclude tight bounds")
                else:
                    if n.payload is not None:
                        problems.append(f"internal node {i} carries payload")
                    for c in kids:
                        ch = nd[c]
                        if ch.parent != i:
                            problems.append(f"child {c} disowns parent {i}")
                        if (ch.lx < n.lx - 1e-12 or ch.ly < n.ly - 1e-12
                                or ch.lz < n.lz - 1e-12 or ch.hx > n.hx + 1e-12
                                or ch.hy > n.hy + 1e-12 or ch.hz > n.hz + 1e-12):
                            problems.append(f"node {i} bounds exclude child {c}")
                        stack.append(c)
        if live_leaves != len(self._leaf_of):
            problems.append(f"{live_leaves} reachable leaves, "
                            f"{len(self._leaf_of)} registered")
        for payload, leaf in self._leaf_of.items():
            if leaf not in seen:
                problems.append(f"registered leaf {leaf} unreachable")
                break
        return problems

"""Dynamic BVH tests: structural audits and brute-force query oracles."""
import numpy as np
import pytest

from planarmap.bvh import BOUNDARY_VERTEX, FACE, DynamicBvh, LeafPayload
from planarmap.errors import DuplicatePayload, UnknownLeaf
from planarmap.geometry import ray_from_measurement


def payload(i, kind=FACE):
    return LeafPayload(kind, 0, i)


def random_boxes(rng, n, span=10.0, size=0.5):
    lo = rng.uniform(0, span, size=(n, 3))
    hi = lo + rng.uniform(0.01, size, size=(n, 3))
    return np.concatenate([lo, hi], axis=1)


def brute_ray_hits(boxes_fat, ray, tmax):
    """Vectorized slab test over fat boxes."""
    o = ray.origin
    d = ray.dir
    t0 = np.zeros(len(boxes_fat))
    t1 = np.full(len(boxes_fat), tmax)
    for k in range(3):
        lo = boxes_fat[:, k]
        hi = boxes_fat[:, 3 + k]
        if abs(d[k]) > 1e-300:
            ta = (lo - o[k]) / d[k]
            tb = (hi - o[k]) / d[k]
            swap = ta > tb
            ta[swap], tb[swap] = tb[swap], ta[swap].copy()
            t0 = np.maximum(t0, ta)
            t1 = np.minimum(t1, tb)
        else:
            outside = (o[k] < lo) | (o[k] > hi)
            t1 = np.where(outside, -1.0, t1)
    return np.nonzero(t0 <= t1)[0]


def test_insert_into_empty_becomes_root():
    t = DynamicBvh(0.05)
    leaf = t.insert(payload(0), (0, 0, 0, 1, 1, 1))
    assert t.root == leaf
    assert len(t) == 1
    assert t.validate() == []


def test_two_disjoint_boxes():
    t = DynamicBvh(0.0)
    t.insert(payload(0), (0, 0, 0, 1, 1, 1))
    t.insert(payload(1), (5, 5, 5, 6, 6, 6))
    assert len(t) == 2
    assert t.validate() == []
    root = t._nodes[t.root]
    assert root.child1 != -1 and root.child2 != -1
    assert (root.lx, root.ly, root.lz) == (0, 0, 0)
    assert (root.hx, root.hy, root.hz) == (6, 6, 6)


def test_duplicate_payload_rejected():
    t = DynamicBvh()
    t.insert(payload(0), (0, 0, 0, 1, 1, 1))
    with pytest.raises(DuplicatePayload):
        t.insert(payload(0), (2, 2, 2, 3, 3, 3))


def test_insert_remove_roundtrip_empty():
    t = DynamicBvh()
    leaf = t.insert(payload(7), (0, 0, 0, 1, 1, 1))
    t.remove(leaf)
    assert len(t) == 0
    assert t.root == -1
    assert t.validate() == []


def test_remove_unknown():
    t = DynamicBvh()
    with pytest.raises(UnknownLeaf):
        t.remove(123)
    leaf = t.insert(payload(0), (0, 0, 0, 1, 1, 1))
    t.remove(leaf)
    with pytest.raises(UnknownLeaf):
        t.remove(leaf)


def test_exhaustive_random_removal_n64():
    rng = np.random.default_rng(0)
    boxes = random_boxes(rng, 64)
    t = DynamicBvh(0.05)
    leaves = []
    for i, b in enumerate(boxes):
        leaves.append(t.insert(payload(i), tuple(b)))
        assert t.validate() == []
    order = rng.permutation(64)
    for k, idx in enumerate(order):
        t.remove(leaves[idx])
        assert t.validate() == [], f"after removal {k}"
        assert len(t) == 64 - k - 1
    assert t.root == -1


def test_update_within_fat_margin_is_noop():
    t = DynamicBvh(margin=0.5)
    leaf = t.insert(payload(0), (0, 0, 0, 1, 1, 1))
    root_before = t.root
    t.update(leaf, (0.1, 0.1, 0.1, 1.1, 1.1, 1.1))
    assert t.root == root_before
    assert t.validate() == []


def test_update_far_move_requeries_correctly():
    t = DynamicBvh(margin=0.05)
    for i in range(20):
        t.insert(payload(i), (i, 0, 0, i + 0.5, 0.5, 0.5))
    leaf = t.insert(payload(99), (0, 5, 0, 0.5, 5.5, 0.5))
    t.update(leaf, (10, 5, 0, 10.5, 5.5, 0.5))
    assert t.validate() == []
    hit_t = lambda p: 1.0
    ray_old = ray_from_measurement([0.25, 4, 0.25], [0.25, 7, 0.25])
    ray_new = ray_from_measurement([10.25, 4, 0.25], [10.25, 7, 0.25])
    old_hits = [p for p, _ in t.query_ray(ray_old, hit_t)]
    new_hits = [p for p, _ in t.query_ray(ray_new, hit_t)]
    assert payload(99) not in old_hits
    assert payload(99) in new_hits


def test_update_keeps_leaf_id():
    t = DynamicBvh(margin=0.01)
    leaf = t.insert(payload(0), (0, 0, 0, 1, 1, 1))
    t.insert(payload(1), (3, 3, 3, 4, 4, 4))
    t.update(leaf, (8, 8, 8, 9, 9, 9))  # far outside fat bounds
    assert t.leaf_for(payload(0)) == leaf
    assert t.validate() == []


def test_query_empty_tree():
    t = DynamicBvh()
    ray = ray_from_measurement([0, 0, 0], [1, 0, 0])
    assert t.query_ray(ray, lambda p: 1.0) == []
    assert t.query_point([0, 0, 0], lambda p: True) == []


def test_query_point_sphere_semantics():
    t = DynamicBvh(0.0)
    center = np.array([0.0, 0.0, 0.0])
    r = 1.0
    t.insert(payload(0, BOUNDARY_VERTEX), (-1, -1, -1, 1, 1, 1))

    def contains(p):
        return bool(np.linalg.norm(center - q) <= r)

    q = np.array([0.5, 0, 0])
    assert t.query_point(q, contains) == [payload(0, BOUNDARY_VERTEX)]
    q = np.array([2.0, 0, 0])
    assert t.query_point(q, contains) == []


def test_random_queries_vs_brute_force():
    rng = np.random.default_rng(17)
    n = 2000
    boxes = random_boxes(rng, n)
    t = DynamicBvh(margin=0.05)
    for i, b in enumerate(boxes):
        t.insert(payload(i), tuple(b))
    fat = boxes.copy()
    fat[:, :3] -= 0.05
    fat[:, 3:] += 0.05
    for _ in range(300):
        o = rng.uniform(-1, 11, size=3)
        e = rng.uniform(-1, 11, size=3)
        if np.linalg.norm(e - o) < 1e-6:
            continue
        ray = ray_from_measurement(o, e)
        got = sorted(p.element_id for p, _ in t.query_ray(ray, lambda p: 0.0))
        want = sorted(brute_ray_hits(fat, ray, ray.range))
        assert got == want


def test_query_point_vs_brute_force_spheres():
    rng = np.random.default_rng(23)
    n = 2000
    centers = rng.uniform(0, 10, size=(n, 3))
    radii = rng.uniform(0.05, 1.0, size=n)
    t = DynamicBvh(margin=0.05)
    for i, (c, r) in enumerate(zip(centers, radii)):
        t.insert(payload(i, BOUNDARY_VERTEX),
                 (c[0] - r, c[1] - r, c[2] - r, c[0] + r, c[1] + r, c[2] + r))
    for _ in range(300):
        q = rng.uniform(0, 10, size=3)

        def contains(p):
            i = p.element_id
            return bool(np.linalg.norm(centers[i] - q) <= radii[i])

        got = sorted(p.element_id for p in t.query_point(q, contains))
        want = sorted(np.nonzero(
            np.linalg.norm(centers - q, axis=1) <= radii)[0])
        assert got == want


def test_mixed_mutation_history_vs_brute_force():
    rng = np.random.default_rng(5)
    t = DynamicBvh(margin=0.05)
    live = {}
    next_id = 0
    for step in range(1500):
        op = rng.random()
        if op < 0.5 or not live:
            b = random_boxes(rng, 1)[0]
            leaf = t.insert(payload(next_id), tuple(b))
            live[next_id] = (leaf, b)
            next_id += 1
        elif op < 0.75:
            k = int(rng.choice(list(live)))
            t.remove(live.pop(k)[0])
        else:
            k = int(rng.choice(list(live)))
            leaf, _ = live[k]
            b = random_boxes(rng, 1)[0]
            t.update(leaf, tuple(b))
            live[k] = (leaf, b)
    assert t.validate() == []
    tight = np.array([b for _, b in live.values()])
    ids = np.array(list(live))
    for _ in range(100):
        q = rng.uniform(0, 10, size=3)
        inside = ((tight[:, :3] - 0.05 <= q) & (q <= tight[:, 3:] + 0.05)).all(axis=1)
        want = sorted(ids[inside])
        got = sorted(p.element_id for p in t.query_point(q, lambda p: True))
        assert got == want


def test_total_internal_area_beats_chain():
    """Sanity: branch-and-bound insertion produces a cheaper tree than a
    degenerate insertion-order chain."""
    rng = np.random.default_rng(9)
    boxes = random_boxes(rng, 1000)
    t = DynamicBvh(margin=0.0)
    for i, b in enumerate(boxes):
        t.insert(payload(i), tuple(b))
    assert t.validate() == []

    def sa(b):
        d = b[3:] - b[:3]
        return 2 * (d[0] * d[1] + d[1] * d[2] + d[2] * d[0])

    def internal_area(tree):
        total = 0.0
        stack = [tree.root]
        while stack:
            i = stack.pop()
            n = tree._nodes[i]
            if n.child1 != -1:
                total += sa(np.array([n.lx, n.ly, n.lz, n.hx, n.hy, n.hz]))
                stack.extend((n.child1, n.child2))
        return total

    # chain tree: each new leaf pairs with the whole current tree
    chain_total = 0.0
    acc = boxes[0].copy()
    for b in boxes[1:]:
        acc[:3] = np.minimum(acc[:3], b[:3])
        acc[3:] = np.maximum(acc[3:], b[3:])
        chain_total += sa(acc)
    assert internal_area(t) <= chain_total


def test_query_visits_sublinear():
    rng = np.random.default_rng(31)
    t = DynamicBvh(margin=0.0)
    n = 4096
    boxes = random_boxes(rng, n, span=40.0, size=0.2)
    for i, b in enumerate(boxes):
        t.insert(payload(i), tuple(b))
    t.reset_visits()
    queries = rng.uniform(0, 40, size=(200, 3))
    for q in queries:
        t.query_point(q, lambda p: True)
    mean_visits = t.visits / len(queries)
    assert mean_visits < 2 * n + 1  # strictly less than node count
    assert mean_visits < 0.05 * n   # localized queries prune hard

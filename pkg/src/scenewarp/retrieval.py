"""Scene retrieval: geometric descriptors and a hierarchical k-means vocabulary tree."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from .scene_model import Scene, ScenarioError, load_scene

N_ORIENT, N_RADIAL, N_CURV = 8, 4, 4
DIM = N_ORIENT * N_RADIAL * N_CURV
RADIAL_EDGES = np.array([30.0, 60.0, 90.0])
CURVATURE_EDGES = np.array([0.005, 0.02, 0.05])
TILE_SIZE = 200.0
INDEX_VERSION = 1
KMEANS_ITERS = 20
KMEANS_RESTARTS = 5
EXTRA_LEAVES = 3


@dataclass(frozen=True)
class SceneDescriptor:
    values: np.ndarray
    is_zero: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (DIM,):
            raise ValueError(f"descriptor must have {DIM} values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass
class CorpusEntry:
    id: str
    tile: Optional[Scene] = None
    source: str = ""


def _point_features(lane: np.ndarray):
    pts = geo.resample_uniform(lane, 1.0)
    if len(pts) < 2:
        return pts, np.zeros(len(pts)), np.zeros(len(pts))
    d = np.diff(pts, axis=0)
    ang = np.arctan2(d[:, 1], d[:, 0])
    ang = np.append(ang, ang[-1])
    curv = np.zeros(len(pts))
    if len(pts) >= 3:
        r = geo.circumradius_many(pts[:-2], pts[1:-1], pts[2:])
        curv[1:-1] = 1.0 / r
        curv[0], curv[-1] = curv[1], curv[-2]
    return pts, ang, curv


def scene_descriptor(scene: Scene) -> SceneDescriptor:
    """128-bin joint histogram of orientation x radial distance x curvature.

    Orientation is measured against the scene's mean travel direction (the doubled-angle
    axis when directions cancel), and distance from the centroid, so the histogram does
    not change when the scene is rotated.
    """
    if not scene.lanes:
        raise ScenarioError("cannot describe a scene without lanes")
    feats = [_point_features(l) for l in scene.lanes]
    pts = np.vstack([f[0] for f in feats])
    ang = np.concatenate([f[1] for f in feats])
    curv = np.concatenate([f[2] for f in feats])
    c, s = np.cos(ang).sum(), np.sin(ang).sum()
    if math.hypot(c, s) > 1e-6 * len(ang):
        ref = math.atan2(s, c)
    else:
        ref = 0.5 * math.atan2(np.sin(2 * ang).sum(), np.cos(2 * ang).sum())
    rel = np.mod(ang - ref + math.pi / N_ORIENT, 2 * math.pi)
    o_bin = np.minimum((rel / (2 * math.pi / N_ORIENT)).astype(int), N_ORIENT - 1)
    radial = np.hypot(*(pts - pts.mean(axis=0)).T)
    r_bin = np.searchsorted(RADIAL_EDGES, radial, side="right")
    k_bin = np.searchsorted(CURVATURE_EDGES, curv, side="right")
    flat = (o_bin * N_RADIAL + r_bin) * N_CURV + k_bin
    hist = np.bincount(flat, minlength=DIM).astype(float)
    norm = np.linalg.norm(hist)
    if norm == 0:
        return SceneDescriptor(hist, is_zero=True)
    return SceneDescriptor(hist / norm)


# ---------------------------------------------------------------------------
# k-means


def kmeans(data: np.ndarray, k: int, rng: np.random.Generator, iters: int = KMEANS_ITERS,
           restarts: int = KMEANS_RESTARTS):
    """Lloyd's algorithm with k-means++ seeding; returns (centroids, labels).

    Keeps the restart with the lowest inertia. Labels come from a final assignment
    to the returned centroids, so descending by nearest centroid always lands where
    a point was stored.
    """
    best = None
    for _ in range(restarts):
        centers = _lloyd(data, k, rng, iters)
        dist = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        inertia = dist[np.arange(len(data)), labels].sum()
        if best is None or inertia < best[0]:
            best = (inertia, centers, labels)
    return best[1], best[2]


def _lloyd(data: np.ndarray, k: int, rng: np.random.Generator, iters: int) -> np.ndarray:
    n = len(data)
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    d2 = ((data - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else int(rng.integers(n))
        centers[j] = data[idx]
        d2 = np.minimum(d2, ((data - centers[j]) ** 2).sum(axis=1))
    labels = None
    for _ in range(iters):
        dist = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = dist.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = data[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                own = dist[np.arange(n), labels]
                far = int(own.argmax())
                centers[j] = data[far]
                labels[far] = j
    return centers


@dataclass
class Node:
    centroid: np.ndarray
    children: list = field(default_factory=list)
    members: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class VocabTree:
    branching: int
    depth: int
    root: Node
    entries: list
    descriptors: np.ndarray
    seed: int = 0

    def leaves(self) -> list:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out


def _split(node: Node, data: np.ndarray, level: int, branching: int, depth: int, seed: int, path: tuple):
    idx = np.asarray(node.members)
    if level >= depth or len(idx) < branching:
        return
    rng = np.random.default_rng([seed, *path])
    centers, labels = kmeans(data[idx], branching, rng)
    for j in range(branching):
        sub = idx[labels == j]
        if len(sub) == 0:
            continue
        child = Node(centers[j].copy(), members=sub.tolist())
        _split(child, data, level + 1, branching, depth, seed, path + (j,))
        if not child.is_leaf:
            child.members = []
        node.children.append(child)


def build_vocab_tree(corpus: Sequence[CorpusEntry], branching: int = 10, depth: int = 3, seed: int = 0,
                     descriptors: Optional[np.ndarray] = None) -> VocabTree:
    if branching < 2 or depth < 1:
        raise ValueError("branching must be >= 2 and depth >= 1")
    if len(corpus) < branching:
        raise ValueError(f"corpus has {len(corpus)} entries, fewer than branching {branching}")
    if descriptors is None:
        descriptors = np.vstack([scene_descriptor(e.tile).values for e in corpus])
    data = np.asarray(descriptors, dtype=float)
    root = Node(data.mean(axis=0), members=list(range(len(data))))
    _split(root, data, 0, branching, depth, seed, ())
    if not root.is_leaf:
        root.members = []
    return VocabTree(branching, depth, root, list(corpus), data, seed)


def query_descriptor(tree: VocabTree, q: np.ndarray, k: int = 10) -> list:
    """Best-bin-first search: the descended leaf, then nearby leaves until k hits
    and EXTRA_LEAVES further leaves have been examined."""
    if not tree.entries:
        raise ValueError("empty tree")
    q = np.asarray(q, dtype=float)
    heap = [(0.0, 0, tree.root)]
    tick = 1
    found, leaves_seen = [], 0
    while heap:
        _, _, node = heapq.heappop(heap)
        # greedy descent; unexplored siblings wait in the queue
        while not node.is_leaf:
            cents = np.vstack([c.centroid for c in node.children])
            dist = np.linalg.norm(cents - q, axis=1)
            best = int(dist.argmin())
            for j, child in enumerate(node.children):
                if j != best:
                    heapq.heappush(heap, (float(dist[j]), tick, child))
                    tick += 1
            node = node.children[best]
        found.extend(node.members)
        leaves_seen += 1
        if len(found) >= k and leaves_seen > EXTRA_LEAVES:
            break
    idx = np.asarray(found)
    dist = np.linalg.norm(tree.descriptors[idx] - q, axis=1)
    order = np.lexsort((idx, dist))[:k]
    return [(tree.entries[idx[i]], float(dist[i])) for i in order]


def query(tree: VocabTree, q: Scene, k: int = 10) -> list:
    return query_descriptor(tree, scene_descriptor(q).values, k)


# ---------------------------------------------------------------------------
# corpus and index files


def load_corpus(directory) -> list:
    entries = []
    for path in sorted(Path(directory).glob("*.json")):
        tile = load_scene(path)
        span = np.ptp(np.vstack(tile.lanes), axis=0)
        if np.any(span > TILE_SIZE + 1e-6):
            raise ScenarioError(f"{path}: tile spans {span[0]:.1f} x {span[1]:.1f} m, larger than 200 x 200 m")
        entries.append(CorpusEntry(path.stem, tile, str(path)))
    return entries


def _node_to_dict(node: Node) -> dict:
    d = {"centroid": node.centroid.tolist()}
    if node.is_leaf:
        d["members"] = [int(m) for m in node.members]
    else:
        d["children"] = [_node_to_dict(c) for c in node.children]
    return d


def _node_from_dict(d: dict) -> Node:
    node = Node(np.asarray(d["centroid"], dtype=float), members=list(d.get("members", [])))
    node.children = [_node_from_dict(c) for c in d.get("children", [])]
    return node


def save_index(tree: VocabTree, path) -> None:
    doc = {
        "version": INDEX_VERSION,
        "branching": tree.branching,
        "depth": tree.depth,
        "seed": tree.seed,
        "entries": [{"id": e.id, "source": e.source} for e in tree.entries],
        "descriptors": tree.descriptors.tolist(),
        "root": _node_to_dict(tree.root),
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_index(path) -> VocabTree:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != INDEX_VERSION:
        raise ValueError(f"unsupported index version {doc.get('version')!r}")
    entries = [CorpusEntry(e["id"], None, e.get("source", "")) for e in doc["entries"]]
    return VocabTree(doc["branching"], doc["depth"], _node_from_dict(doc["root"]), entries,
                     np.asarray(doc["descriptors"], dtype=float), doc.get("seed", 0))

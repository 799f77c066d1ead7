"""Regression trees fitted to gradient statistics, in three growth modes."""

from __future__ import annotations

import heapq
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

GROWTH_MODES = ("symmetric", "leafwise", "depthwise")
LEAF = -1


@dataclass
class Tree:
    """Flat binary tree. Node 0 is the root; ``feature == -1`` marks a leaf.

    ``cover`` is the number of training rows reaching each node and is what the
    Shapley explainer uses as the background distribution.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    depth: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def max_depth(self) -> int:
        return int(self.depth.max()) if self.depth.size else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            fx = np.where(internal, f, 0)
            go_left = X[rows, fx] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
            cover=np.asarray(d["cover"], dtype=float),
            depth=np.asarray(d["depth"], dtype=np.int64),
        )


@dataclass
class GrowParams:
    growth: str = "depthwise"
    max_depth: int | None = 6
    num_leaves: int = 31
    l1: float = 0.0
    l2: float = 1.0
    min_child_weight: float = 1.0
    min_split_gain: float = 0.0
    n_jobs: int = 1


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.cover, self.depth = [], [], []

    def add(self, value: float, cover: float, depth: int) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.cover.append(cover)
        self.depth.append(depth)
        return len(self.feature) - 1

    def add_many(self, values, covers, depth: int) -> list:
        n = len(values)
        start = len(self.feature)
        self.feature += [LEAF] * n
        self.threshold += [0.0] * n
        self.left += [LEAF] * n
        self.right += [LEAF] * n
        self.value += [float(v) for v in values]
        self.cover += [float(c) for c in covers]
        self.depth += [depth] * n
        return list(range(start, start + n))

    def split(self, node: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right
        self.value[node] = 0.0

    def build(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=float),
            cover=np.asarray(self.cover, dtype=float),
            depth=np.asarray(self.depth, dtype=np.int64),
        )


def _soft(G, alpha):
    if alpha == 0:
        return G
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def _score(G, H, p: GrowParams):
    den = H + p.l2
    with np.errstate(divide="ignore", invalid="ignore"):
        s = _soft(G, p.l1) ** 2 / den
    return np.where(den > 0, s, 0.0)


def leaf_value(G: float, H: float, p: GrowParams) -> float:
    den = H + p.l2
    if den <= 0:
        return 0.0
    return float(-_soft(np.float64(G), p.l1) / den)


class _Context:
    """Binned training data, gradient statistics and histogram construction for one tree."""

    def __init__(self, Xb, thresholds, g, h, features, params: GrowParams):
        self.Xb = Xb
        self.thresholds = thresholds
        self.g = g
        self.h = h
        self.features = np.asarray(features, dtype=np.int64)
        self.p = params
        self.nbins = np.array([thresholds[f].size + 1 for f in self.features], dtype=np.int64)
        self.B = int(self.nbins.max()) if self.nbins.size else 1
        k = self.features.size
        # split after bin b exists only for b < nbins - 1
        self.valid_bin = np.arange(self.B)[None, :] < (self.nbins[:, None] - 1)
        self.offsets = (np.arange(k) * self.B)[None, :]

    def _hist_chunk(self, rows, cols):
        sub = self.Xb[np.ix_(rows, self.features[cols])].astype(np.int64) + (np.arange(cols.size) * self.B)[None, :]
        flat = sub.ravel()
        size = cols.size * self.B
        G = np.bincount(flat, weights=np.repeat(self.g[rows], cols.size), minlength=size)
        H = np.bincount(flat, weights=np.repeat(self.h[rows], cols.size), minlength=size)
        C = np.bincount(flat, minlength=size).astype(float)
        shape = (cols.size, self.B)
        return G.reshape(shape), H.reshape(shape), C.reshape(shape)

    def histogram(self, rows):
        k = self.features.size
        if self.p.n_jobs <= 1 or k < 2:
            return self._hist_chunk(rows, np.arange(k))
        chunks = [c for c in np.array_split(np.arange(k), min(self.p.n_jobs, k)) if c.size]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: self._hist_chunk(rows, c), chunks))
        return tuple(np.vstack([part[i] for part in parts]) for i in range(3))

    def gains(self, hist, G, H, enforce_child_weight=True):
        """Split gain for every (feature, bin) candidate; invalid candidates are -inf."""
        Gh, Hh, Ch = hist
        GL, HL, CL = np.cumsum(Gh, axis=1), np.cumsum(Hh, axis=1), np.cumsum(Ch, axis=1)
        GR, HR = G - GL, H - HL
        CR = Ch.sum(axis=1, keepdims=True) - CL
        gain = 0.5 * (_score(GL, HL, self.p) + _score(GR, HR, self.p) - _score(np.float64(G), np.float64(H), self.p))
        ok = self.valid_bin.copy()
        if enforce_child_weight:
            ok &= (CL > 0) & (CR > 0) & (HL >= self.p.min_child_weight) & (HR >= self.p.min_child_weight)
        return np.where(ok, gain, -np.inf)


@dataclass
class _Node:
    id: int
    rows: np.ndarray
    depth: int
    G: float
    H: float
    hist: tuple | None = None
    best: tuple | None = None  # (gain, feature position, bin)


def _find_best(ctx: _Context, node: _Node):
    if node.rows.size < 2 or not np.any(ctx.g[node.rows] != 0):
        return None
    if node.hist is None:
        node.hist = ctx.histogram(node.rows)
    gain = ctx.gains(node.hist, node.G, node.H)
    flat = int(np.argmax(gain))  # first maximum: lowest feature, then lowest threshold
    best = float(gain.flat[flat])
    if not np.isfinite(best) or best < ctx.p.min_split_gain:
        return None
    fpos, b = divmod(flat, ctx.B)
    return best, fpos, b


def _split_rows(ctx: _Context, node: _Node, fpos: int, b: int):
    f = ctx.features[fpos]
    go_left = ctx.Xb[node.rows, f] <= b
    return node.rows[go_left], node.rows[~go_left]


def _children(ctx, builder, node, fpos, b):
    left_rows, right_rows = _split_rows(ctx, node, fpos, b)
    f = int(ctx.features[fpos])
    thr = float(ctx.thresholds[f][b])
    kids = []
    for rows in (left_rows, right_rows):
        G, H = float(ctx.g[rows].sum()), float(ctx.h[rows].sum())
        nid = builder.add(leaf_value(G, H, ctx.p), float(rows.size), node.depth + 1)
        kids.append(_Node(nid, rows, node.depth + 1, G, H))
    builder.split(node.id, f, thr, kids[0].id, kids[1].id)
    # histogram subtraction: build the smaller child, derive the larger
    if node.hist is not None:
        small, large = (kids[0], kids[1]) if kids[0].rows.size <= kids[1].rows.size else (kids[1], kids[0])
        small.hist = ctx.histogram(small.rows)
        large.hist = tuple(ph - sh for ph, sh in zip(node.hist, small.hist))
    return kids


def _root(ctx, builder, rows):
    G, H = float(ctx.g[rows].sum()), float(ctx.h[rows].sum())
    nid = builder.add(leaf_value(G, H, ctx.p), float(rows.size), 0)
    return _Node(nid, rows, 0, G, H)


def _grow_depthwise(ctx, rows) -> Tree:
    builder = _Builder()
    level = [_root(ctx, builder, rows)]
    max_depth = 6 if ctx.p.max_depth is None else ctx.p.max_depth
    while level:
        nxt = []
        for node in level:
            if node.depth >= max_depth:
                continue
            best = _find_best(ctx, node)
            if best is not None:
                nxt.extend(_children(ctx, builder, node, best[1], best[2]))
            node.hist = None
        level = nxt
    return builder.build()


def _grow_leafwise(ctx, rows) -> Tree:
    builder = _Builder()
    root = _root(ctx, builder, rows)
    heap = []
    max_depth = ctx.p.max_depth

    def push(node):
        if max_depth is not None and node.depth >= max_depth:
            return
        best = _find_best(ctx, node)
        if best is not None:
            node.best = best
            heapq.heappush(heap, (-best[0], node.id, node))

    push(root)
    n_leaves = 1
    while heap and n_leaves < ctx.p.num_leaves:
        _, _, node = heapq.heappop(heap)
        kids = _children(ctx, builder, node, node.best[1], node.best[2])
        node.hist = None
        n_leaves += 1
        for kid in kids:
            push(kid)
    return builder.build()


def _grow_symmetric(ctx, rows) -> Tree:
    """Oblivious tree: every node at a given depth shares one (feature, threshold)."""
    builder = _Builder()
    ids = [_root(ctx, builder, rows).id]
    max_depth = 6 if ctx.p.max_depth is None else ctx.p.max_depth
    k, B = ctx.features.size, ctx.B
    g, h = ctx.g[rows], ctx.h[rows]
    Xb = ctx.Xb[np.ix_(rows, ctx.features)].astype(np.int64)
    pos = np.zeros(rows.size, dtype=np.int64)  # index of each row's node within the level
    col_off = (np.arange(k) * B)[None, :]
    for depth in range(max_depth):
        if not np.any(g != 0):
            break
        L = len(ids)
        # nodes holding fewer than two rows contribute exactly zero gain to every candidate
        counts = np.bincount(pos, minlength=L)
        busy = counts >= 2
        if not busy.any():
            break
        remap = np.cumsum(busy) - 1
        sel = busy[pos]
        M = int(busy.sum())
        flat = (remap[pos[sel]][:, None] * (k * B) + col_off + Xb[sel]).ravel()
        size = M * k * B
        Gh = np.bincount(flat, weights=np.repeat(g[sel], k), minlength=size).reshape(M, k, B)
        Hh = np.bincount(flat, weights=np.repeat(h[sel], k), minlength=size).reshape(M, k, B)
        GL, HL = np.cumsum(Gh, axis=2), np.cumsum(Hh, axis=2)
        Gn, Hn = GL[:, :1, -1:], HL[:, :1, -1:]
        gain = 0.5 * (_score(GL, HL, ctx.p) + _score(Gn - GL, Hn - HL, ctx.p) - _score(Gn, Hn, ctx.p))
        total = np.where(ctx.valid_bin, gain.sum(axis=0), -np.inf)
        best_flat = int(np.argmax(total))
        best = float(total.flat[best_flat])
        if not np.isfinite(best) or best < ctx.p.min_split_gain:
            break
        fpos, b = divmod(best_flat, B)
        f = int(ctx.features[fpos])
        thr = float(ctx.thresholds[f][b])
        pos = 2 * pos + (Xb[:, fpos] > b)
        cnt = np.bincount(pos, minlength=2 * L)
        Gc = np.bincount(pos, weights=g, minlength=2 * L)
        Hc = np.bincount(pos, weights=h, minlength=2 * L)
        den = Hc + ctx.p.l2
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(den > 0, -_soft(Gc, ctx.p.l1) / den, 0.0)
        kids = builder.add_many(vals, cnt, depth + 1)
        for i, nid in enumerate(ids):
            builder.split(nid, f, thr, kids[2 * i], kids[2 * i + 1])
        ids = kids
    return builder.build()


def grow_tree(Xb, thresholds, g, h, rows, features, params: GrowParams) -> Tree:
    if params.growth not in GROWTH_MODES:
        raise ValueError(f"unknown growth mode {params.growth!r}; expected one of {GROWTH_MODES}")
    ctx = _Context(Xb, thresholds, g, h, features, params)
    rows = np.asarray(rows, dtype=np.int64)
    if params.growth == "depthwise":
        return _grow_depthwise(ctx, rows)
    if params.growth == "leafwise":
        return _grow_leafwise(ctx, rows)
    return _grow_symmetric(ctx, rows)

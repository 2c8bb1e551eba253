"""Flow-guided spatio-temporal grouping with a streaming hierarchy.

The voxel graph connects each voxel to its 8 in-frame neighbors and, for
t > 0, to the 9 voxels around its backward-flow target in the previous frame.
Level 0 groups voxels by the minimum-internal-difference criterion; higher
levels rebuild the graph over regions, weighting edges by color histogram
distance optionally fused with per-frame flow histogram distance, and regroup
with a geometrically growing threshold constant.

Streaming processes the video in subsequences of `subseq_len` frames.  Each
window spans the previous and the current subsequence; voxels of the previous
one enter pre-grouped into their already-emitted regions at every level, those
regions never merge with each other, and a region extended by new voxels keeps
its label.  Emitted labels are therefore final the moment a window closes, and
a video no longer than one subsequence reduces exactly to the non-streaming
build.

Voxel ids within a window are x + y*W + t*W*H, t counted from the window's
first frame.  Edges live in structured arrays of EDGE_DTYPE with fields
(a, b, w); ties in the grouping sweep break by (w, min id, max id).
"""

from dataclasses import dataclass, field

import numpy as np

from .imageops import round_half_up
from .unionfind import Forest

EDGE_DTYPE = np.dtype([("a", np.int64), ("b", np.int64), ("w", np.float64)])
CHI2_EPS = 1e-12
_COLOR_NORM = 255.0 * np.sqrt(3.0)


@dataclass(frozen=True)
class StreamConfig:
    subseq_len: int = 3
    levels: int = 6
    k0: float = 5.0
    k_growth: float = 2.0
    min_size: int = 10
    color_bins: int = 8
    flow_bins: int = 9
    flow_range: float = 16.0
    use_flow_edges: bool = True
    use_flow_feature: bool = True

    def __post_init__(self):
        if self.subseq_len < 1 or self.levels < 1 or self.min_size < 1:
            raise ValueError("subseq_len, levels, min_size must be >= 1")
        if self.k0 <= 0 or self.flow_range <= 0:
            raise ValueError("k0 and flow_range must be > 0")
        if self.k_growth <= 1:
            raise ValueError("k_growth must be > 1")
        if self.color_bins < 2 or self.flow_bins < 2:
            raise ValueError("histogram bin counts must be >= 2")


@dataclass
class RegionRecord:
    id: int
    size: int
    color_hist: np.ndarray   # (3, color_bins), each row sums to 1
    flow_hists: dict         # frame index -> (2, flow_bins), rows sum to 1
    frames_present: frozenset


@dataclass
class SegmentationHierarchy:
    levels: list          # LabelVolume per level, finest first
    region_tables: list   # list of RegionRecord per level

    def num_regions(self, level: int) -> int:
        return len(self.region_tables[level])


# ---------------------------------------------------------------- edges

def make_edges(a, b, w) -> np.ndarray:
    e = np.empty(len(a), dtype=EDGE_DTYPE)
    e["a"] = a
    e["b"] = b
    e["w"] = w
    return e


def _color_weights(colors: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = colors[a] - colors[b]
    return np.sqrt(np.sum(d * d, axis=1)) / _COLOR_NORM


def build_spatial_edges(window: np.ndarray) -> np.ndarray:
    """8-neighborhood edges inside every frame of the window.

    Weight is Euclidean RGB distance normalized to [0, 1].
    """
    t_len, h, w = window.shape[:3]
    colors = window.reshape(-1, 3).astype(np.float64)
    base = np.arange(h * w, dtype=np.int64).reshape(h, w)
    frame_off = np.arange(t_len, dtype=np.int64) * (h * w)
    chunks = []
    for src, dst in (
        (base[:, :-1], base[:, 1:]),      # east
        (base[:-1, :], base[1:, :]),      # south
        (base[:-1, :-1], base[1:, 1:]),   # south-east
        (base[:-1, 1:], base[1:, :-1]),   # south-west
    ):
        a = (src.ravel()[None, :] + frame_off[:, None]).ravel()
        b = (dst.ravel()[None, :] + frame_off[:, None]).ravel()
        chunks.append(make_edges(a, b, _color_weights(colors, a, b)))
    if not chunks:
        return np.empty(0, dtype=EDGE_DTYPE)
    return np.concatenate(chunks)


def build_temporal_edges(window: np.ndarray, flows, use_flow_edges: bool) -> np.ndarray:
    """Backward temporal edges: voxel (x, y, t) to the 9 voxels around
    (round(x+u), round(y+v)) in frame t-1, targets outside the frame dropped.

    With use_flow_edges off (or flows None) u = v = 0 and the set reduces to
    the grid 26-neighborhood's temporal part.  Duplicate pairs keep the
    minimum weight.
    """
    t_len, h, w = window.shape[:3]
    if t_len < 2:
        return np.empty(0, dtype=EDGE_DTYPE)
    colors = window.reshape(-1, 3).astype(np.float64)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    src_base = (xs + ys * w).astype(np.int64)
    chunks = []
    for t in range(1, t_len):
        if use_flow_edges and flows is not None:
            u = np.asarray(flows[t - 1][..., 0], dtype=np.float64)
            v = np.asarray(flows[t - 1][..., 1], dtype=np.float64)
        else:
            u = np.zeros((h, w))
            v = np.zeros((h, w))
        bx = round_half_up(xs + u).astype(np.int64)
        by = round_half_up(ys + v).astype(np.int64)
        src = src_base + t * h * w
        for m in (-1, 0, 1):
            for n in (-1, 0, 1):
                tx = bx + m
                ty = by + n
                ok = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
                a = src[ok]
                b = (tx[ok] + ty[ok] * w + (t - 1) * h * w)
                chunks.append(make_edges(a, b, _color_weights(colors, a, b)))
    edges = np.concatenate(chunks) if chunks else np.empty(0, dtype=EDGE_DTYPE)
    if edges.size == 0:
        return edges
    # dedup (a, b) keeping the minimum weight
    order = np.lexsort((edges["w"], edges["b"], edges["a"]))
    edges = edges[order]
    keep = np.r_[True, (edges["a"][1:] != edges["a"][:-1])
                 | (edges["b"][1:] != edges["b"][:-1])]
    return edges[keep]


# ---------------------------------------------------------------- grouping

def _fh_sweep(forest: Forest, ea, eb, ew, order, k: float, min_size: int) -> None:
    """Ascending-weight merge sweep plus the small-component cleanup pass.

    Components whose marks are both set never merge (streaming freeze).
    """
    find = forest.find
    union = forest.union
    size = forest.size
    internal = forest.internal
    mark = forest.mark
    for i in order:
        a = find(ea[i])
        b = find(eb[i])
        if a == b or (mark[a] >= 0 and mark[b] >= 0):
            continue
        w = ew[i]
        lim_a = internal[a] + k / size[a]
        lim_b = internal[b] + k / size[b]
        if w <= (lim_a if lim_a < lim_b else lim_b):
            r = union(a, b)
            if w > internal[r]:
                internal[r] = w
    for i in order:
        a = find(ea[i])
        b = find(eb[i])
        if a == b or (mark[a] >= 0 and mark[b] >= 0):
            continue
        if size[a] < min_size or size[b] < min_size:
            r = union(a, b)
            w = ew[i]
            if w > internal[r]:
                internal[r] = w


def _edge_order(edges: np.ndarray) -> list:
    mn = np.minimum(edges["a"], edges["b"])
    mx = np.maximum(edges["a"], edges["b"])
    return np.lexsort((mx, mn, edges["w"])).tolist()


def _labels_from_forest(forest: Forest, first_occ: np.ndarray, counter: int):
    """Assign labels to roots: marked roots keep their mark, fresh roots get
    counter, counter+1, ... ordered by first occurrence.

    first_occ[i] is the first-voxel key of item i; items are the forest nodes.
    Returns (label per item, new counter, {label: root}).
    """
    n = len(first_occ)
    roots = np.fromiter((forest.find(i) for i in range(n)), dtype=np.int64, count=n)
    uroots, inv = np.unique(roots, return_inverse=True)
    root_first = np.full(len(uroots), np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(root_first, inv, first_occ)
    marks = np.array([forest.mark[r] for r in uroots], dtype=np.int64)
    labels_u = marks.copy()
    fresh = marks < 0
    fresh_rank = np.argsort(np.argsort(root_first[fresh], kind="stable"), kind="stable")
    labels_u[fresh] = counter + fresh_rank
    by_label = {int(lab): int(r) for lab, r in zip(labels_u, uroots)}
    return labels_u[inv], counter + int(fresh.sum()), by_label


def segment_level0(edges: np.ndarray, num_voxels: int, k0: float, min_size: int) -> np.ndarray:
    """Group voxels; returns dense labels (first-occurrence order) per voxel id."""
    if edges.size and int(max(edges["a"].max(), edges["b"].max())) >= num_voxels:
        raise ValueError("edge endpoint out of range")
    forest = Forest(num_voxels)
    ea = edges["a"].tolist()
    eb = edges["b"].tolist()
    ew = edges["w"].tolist()
    _fh_sweep(forest, ea, eb, ew, _edge_order(edges), k0, min_size)
    labels, _, _ = _labels_from_forest(
        forest, np.arange(num_voxels, dtype=np.int64), 0)
    return labels


# ---------------------------------------------------------------- distances

def chi2_distance(h, g) -> float:
    """0.5 * sum((h-g)^2 / (h+g+eps)) for normalized histograms; in [0, 1]."""
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if h.shape != g.shape:
        raise ValueError("histogram lengths differ")
    return float(_chi2_rows(h, g))


def _chi2_rows(ha: np.ndarray, hb: np.ndarray) -> np.ndarray:
    d = ha - hb
    return 0.5 * np.sum(d * d / (ha + hb + CHI2_EPS), axis=-1)


def color_distance(a: RegionRecord, b: RegionRecord) -> float:
    """Mean per-channel chi-squared distance of the color histograms."""
    return float(np.mean(_chi2_rows(a.color_hist, b.color_hist), axis=-1))


def flow_distance(a: RegionRecord, b: RegionRecord) -> float:
    """Mean over common frames of the mean u/v histogram chi-squared distance.

    No common frame means no motion evidence and distance 0.
    """
    common = sorted(set(a.flow_hists) & set(b.flow_hists))
    if not common:
        return 0.0
    total = 0.0
    for t in common:
        cu = float(_chi2_rows(a.flow_hists[t][0], b.flow_hists[t][0]))
        cv = float(_chi2_rows(a.flow_hists[t][1], b.flow_hists[t][1]))
        total += (cu + cv) / 2.0
    return total / len(common)


def combine_distance(d_c: float, d_f: float) -> float:
    """Fuse color and flow distances: (1 - (1-d_c)(1-d_f))^2."""
    if not (0.0 <= d_c <= 1.0 and 0.0 <= d_f <= 1.0):
        raise ValueError("distances must be in [0, 1]")
    return (1.0 - (1.0 - d_c) * (1.0 - d_f)) ** 2


# ---------------------------------------------------------------- features

def _color_bin(channel: np.ndarray, bins: int) -> np.ndarray:
    return (channel.astype(np.int64) * bins) // 256


def _flow_bin(component: np.ndarray, bins: int, radius: float) -> np.ndarray:
    clamped = np.clip(np.asarray(component, dtype=np.float64), -radius, radius)
    b = np.floor((clamped + radius) * bins / (2.0 * radius)).astype(np.int64)
    return np.clip(b, 0, bins - 1)


class _NodeFeatures:
    """Window-local histograms for the dense nodes of one hierarchy level."""

    def __init__(self, node_index: np.ndarray, num_nodes: int, colors_u8: np.ndarray,
                 flows, dims, config: StreamConfig):
        t_len, h, w = dims
        cb = config.color_bins
        self.color = np.zeros((num_nodes, 3, cb), dtype=np.float64)
        for c in range(3):
            bins = _color_bin(colors_u8[:, c], cb)
            counts = np.bincount(node_index * cb + bins, minlength=num_nodes * cb)
            self.color[:, c, :] = counts.reshape(num_nodes, cb)
        self.color /= self.color.sum(axis=-1, keepdims=True)
        self.flow = []       # per frame t >= 1: (u_hist, v_hist, present)
        if flows is None or t_len < 2:
            return
        fb = config.flow_bins
        for t in range(1, t_len):
            nodes_t = node_index[t * h * w:(t + 1) * h * w]
            field = np.asarray(flows[t - 1], dtype=np.float64)
            hists = []
            for comp in range(2):
                bins = _flow_bin(field[..., comp].ravel(), fb, config.flow_range)
                counts = np.bincount(nodes_t * fb + bins, minlength=num_nodes * fb)
                hist = counts.reshape(num_nodes, fb).astype(np.float64)
                mass = hist.sum(axis=-1, keepdims=True)
                hists.append(np.divide(hist, mass, out=np.zeros_like(hist),
                                       where=mass > 0))
            present = np.bincount(nodes_t, minlength=num_nodes) > 0
            self.flow.append((hists[0], hists[1], present))


def extract_region_features(labels: np.ndarray, frames: np.ndarray, flows,
                            config: StreamConfig) -> list:
    """RegionRecords (ascending label) with window-relative frame indices."""
    labels = np.asarray(labels)
    if labels.shape != frames.shape[:3]:
        raise ValueError("labels and frames disagree on dimensions")
    t_len, h, w = labels.shape
    if flows is not None and len(flows) not in (0, t_len - 1):
        raise ValueError("need one flow field per consecutive frame pair")
    region_labels, node_index = np.unique(labels.ravel(), return_inverse=True)
    nn = len(region_labels)
    if flows is not None and len(flows) == 0:
        flows = None
    feats = _NodeFeatures(node_index, nn, frames.reshape(-1, 3), flows,
                          (t_len, h, w), config)
    sizes = np.bincount(node_index, minlength=nn)
    frames_of = [set() for _ in range(nn)]
    per_frame = node_index.reshape(t_len, h * w)
    for t in range(t_len):
        for node in np.unique(per_frame[t]):
            frames_of[node].add(t)
    records = []
    for i, lab in enumerate(region_labels):
        fh = {}
        for t, (uh, vh, present) in enumerate(feats.flow, start=1):
            if present[i]:
                fh[t] = np.stack([uh[i], vh[i]])
        records.append(RegionRecord(id=int(lab), size=int(sizes[i]),
                                    color_hist=feats.color[i], flow_hists=fh,
                                    frames_present=frozenset(frames_of[i])))
    return records


# ---------------------------------------------------------------- hierarchy

def _region_pairs(edges: np.ndarray, node_index: np.ndarray, num_nodes: int):
    """Unique adjacent node pairs (pa < pb) inherited from the voxel edges."""
    if edges.size == 0:
        return (np.empty(0, dtype=np.int64),) * 2
    na = node_index[edges["a"]]
    nb = node_index[edges["b"]]
    differ = na != nb
    pmin = np.minimum(na[differ], nb[differ]).astype(np.int64)
    pmax = np.maximum(na[differ], nb[differ]).astype(np.int64)
    keys = np.unique(pmin * num_nodes + pmax)
    return keys // num_nodes, keys % num_nodes


def _group_level(prev_flat: np.ndarray, edges: np.ndarray, colors_u8: np.ndarray,
                 flows, dims, config: StreamConfig, level: int, counter: int,
                 size_of: dict, delta_of: dict, parent_of: dict,
                 p_size: dict, p_int: dict):
    """One hierarchy level: regroup the regions of prev_flat.

    size_of/delta_of describe the previous level's regions (cumulative voxel
    size and this-window growth); parent_of maps old previous-level labels to
    their already-emitted label at this level, whose cumulative size and
    internal difference come from p_size/p_int.
    """
    node_labels, node_first, node_index = np.unique(
        prev_flat, return_index=True, return_inverse=True)
    nn = len(node_labels)
    feats = _NodeFeatures(node_index, nn, colors_u8, flows if config.use_flow_feature else None,
                          dims, config)
    pa, pb = _region_pairs(edges, node_index, nn)
    dc = np.mean(_chi2_rows(feats.color[pa], feats.color[pb]), axis=-1)
    if config.use_flow_feature and feats.flow:
        df = np.zeros(len(pa))
        cnt = np.zeros(len(pa))
        for uh, vh, present in feats.flow:
            both = present[pa] & present[pb]
            if not both.any():
                continue
            cu = _chi2_rows(uh[pa[both]], uh[pb[both]])
            cv = _chi2_rows(vh[pa[both]], vh[pb[both]])
            df[both] += (cu + cv) / 2.0
            cnt[both] += 1.0
        df = np.divide(df, cnt, out=np.zeros_like(df), where=cnt > 0)
        weights = (1.0 - (1.0 - dc) * (1.0 - df)) ** 2
    else:
        weights = dc

    forest = Forest(nn, sizes=[size_of[int(lab)] for lab in node_labels])
    if parent_of:
        group = {}
        for i, lab in enumerate(node_labels):
            parent = parent_of.get(int(lab))
            if parent is not None:
                group.setdefault(parent, []).append(i)
        for parent, members in group.items():
            root = forest.find(members[0])
            for m in members[1:]:
                root = forest.union(root, forest.find(m))
            forest.size[root] = p_size[parent] + sum(
                delta_of.get(int(node_labels[m]), 0) for m in members)
            forest.internal[root] = p_int[parent]
            forest.mark[root] = parent

    la = node_labels[pa]
    lb = node_labels[pb]
    order = np.lexsort((lb, la, weights)).tolist()
    _fh_sweep(forest, pa.tolist(), pb.tolist(), weights.tolist(), order,
              config.k0 * config.k_growth ** level, config.min_size)
    node_out, counter, by_label = _labels_from_forest(forest, node_first, counter)
    sizes_now = {lab: forest.size[r] for lab, r in by_label.items()}
    ints_now = {lab: forest.internal[r] for lab, r in by_label.items()}
    return node_out[node_index], counter, sizes_now, ints_now


def _window_edges(frames_w: np.ndarray, flows_w, config: StreamConfig) -> np.ndarray:
    spatial = build_spatial_edges(frames_w)
    temporal = build_temporal_edges(frames_w, flows_w, config.use_flow_edges)
    if temporal.size == 0:
        return spatial
    return np.concatenate([spatial, temporal])


class _StreamState:
    """Per-level label counters plus cumulative size / internal-difference
    tables for every label still alive in the newest subsequence."""

    def __init__(self, levels: int):
        self.counters = [0] * levels
        self.sizes = [dict() for _ in range(levels)]
        self.ints = [dict() for _ in range(levels)]


def _window_pass(frames_w: np.ndarray, flows_w, config: StreamConfig,
                 old_labels, state: _StreamState):
    """Segment one window; old_labels (per level, covering the window's first
    frames) carry the frozen result of the previous subsequence."""
    t_len, h, w = frames_w.shape[:3]
    n = t_len * h * w
    colors_u8 = frames_w.reshape(-1, 3)
    edges = _window_edges(frames_w, flows_w, config)
    ea = edges["a"].tolist()
    eb = edges["b"].tolist()
    ew = edges["w"].tolist()

    forest = Forest(n)
    if old_labels is not None:
        flat_old = old_labels[0].ravel()
        order = np.argsort(flat_old, kind="stable")
        sorted_lab = flat_old[order]
        starts = np.flatnonzero(np.r_[True, sorted_lab[1:] != sorted_lab[:-1]])
        bounds = np.r_[starts, len(sorted_lab)]
        for g in range(len(starts)):
            ids = order[bounds[g]:bounds[g + 1]]
            root = forest.find(int(ids[0]))
            for vid in ids[1:]:
                root = forest.union(root, forest.find(int(vid)))
            lab = int(sorted_lab[bounds[g]])
            forest.size[root] = state.sizes[0][lab]
            forest.internal[root] = state.ints[0][lab]
            forest.mark[root] = lab
    _fh_sweep(forest, ea, eb, ew, _edge_order(edges), config.k0, config.min_size)
    flat, counter, by_label = _labels_from_forest(
        forest, np.arange(n, dtype=np.int64), state.counters[0])
    state.counters[0] = counter
    sizes_now = {lab: forest.size[r] for lab, r in by_label.items()}
    ints_now = {lab: forest.internal[r] for lab, r in by_label.items()}
    delta_now = {lab: s - state.sizes[0].get(lab, 0) for lab, s in sizes_now.items()}
    state.sizes[0].update(sizes_now)
    state.ints[0].update(ints_now)

    levels_flat = [flat]
    for level in range(1, config.levels):
        parent_of = {}
        if old_labels is not None:
            prev_old = old_labels[level - 1].ravel()
            _, first_idx = np.unique(prev_old, return_index=True)
            cur_old = old_labels[level].ravel()
            parent_of = {int(prev_old[i]): int(cur_old[i]) for i in first_idx}
        flat, counter, sizes_now, ints_now = _group_level(
            levels_flat[-1], edges, colors_u8, flows_w, (t_len, h, w), config,
            level, state.counters[level], sizes_now, delta_now, parent_of,
            state.sizes[level], state.ints[level])
        state.counters[level] = counter
        delta_now = {lab: s - state.sizes[level].get(lab, 0)
                     for lab, s in sizes_now.items()}
        state.sizes[level].update(sizes_now)
        state.ints[level].update(ints_now)
        levels_flat.append(flat)
    return [lf.reshape(t_len, h, w) for lf in levels_flat]


def _check_video(seq: np.ndarray, flows) -> None:
    if seq.ndim != 4 or seq.shape[3] != 3:
        raise ValueError("video must have shape (T, H, W, 3)")
    if flows is not None:
        if len(flows) != seq.shape[0] - 1:
            raise ValueError("need one flow field per consecutive frame pair")
        for f in flows:
            if np.asarray(f).shape != (seq.shape[1], seq.shape[2], 2):
                raise ValueError("flow field dimensions disagree with frames")


def build_hierarchy(level0: np.ndarray, frames: np.ndarray, flows,
                    config: StreamConfig = StreamConfig()) -> SegmentationHierarchy:
    """Grow the full hierarchy above a given finest segmentation.

    level0 labels are compacted to dense first-occurrence order; each higher
    level regroups the previous level's regions with threshold constant
    k0 * k_growth^level.
    """
    frames = np.asarray(frames)
    _check_video(frames, flows)
    level0 = np.asarray(level0)
    if level0.shape != frames.shape[:3]:
        raise ValueError("level0 and frames disagree on dimensions")
    t_len, h, w = level0.shape
    labs, first, inv = np.unique(level0.ravel(), return_index=True,
                                 return_inverse=True)
    rank = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    flat = rank[inv].astype(np.int64)

    colors_u8 = frames.reshape(-1, 3)
    edges = _window_edges(frames, flows, config)
    counts = np.bincount(flat, minlength=len(labs))
    sizes_now = {i: int(c) for i, c in enumerate(counts)}
    delta_now = dict(sizes_now)
    counters = [int(len(labs))] + [0] * (config.levels - 1)

    levels_flat = [flat]
    for level in range(1, config.levels):
        flat, counters[level], sizes_now, ints_now = _group_level(
            levels_flat[-1], edges, colors_u8, flows, (t_len, h, w), config,
            level, 0, sizes_now, delta_now, {}, {}, {})
        delta_now = dict(sizes_now)
        levels_flat.append(flat)

    volumes = [lf.reshape(t_len, h, w) for lf in levels_flat]
    tables = [extract_region_features(vol, frames, flows, config)
              for vol in volumes]
    return SegmentationHierarchy(levels=volumes, region_tables=tables)


def stream_segment(seq: np.ndarray, flows,
                   config: StreamConfig = StreamConfig()) -> SegmentationHierarchy:
    """Segment a video in streaming windows of subseq_len frames.

    Window i spans subsequences v_{i-1} and v_i; the previous subsequence
    enters pre-grouped into its emitted regions at every level and those
    labels are never rewritten, so output for a prefix of the stream does not
    depend on later frames.  A video of at most subseq_len frames gives the
    single-window result of segment_level0 + build_hierarchy exactly.
    """
    seq = np.asarray(seq)
    _check_video(seq, flows)
    t_total = seq.shape[0]
    h, w = seq.shape[1], seq.shape[2]
    state = _StreamState(config.levels)
    out = [np.empty((t_total, h, w), dtype=np.int64) for _ in range(config.levels)]
    starts = list(range(0, t_total, config.subseq_len))
    for wi, s in enumerate(starts):
        end = min(s + config.subseq_len, t_total)
        f0 = s if wi == 0 else starts[wi - 1]
        frames_w = seq[f0:end]
        flows_w = None
        if flows is not None and end - f0 >= 2:
            flows_w = [flows[j] for j in range(f0, end - 1)]
        old = None if wi == 0 else [out[l][f0:s] for l in range(config.levels)]
        volumes = _window_pass(frames_w, flows_w, config, old, state)
        for l in range(config.levels):
            out[l][s:end] = volumes[l][s - f0:]
        # drop bookkeeping for labels that left the stream
        for l in range(config.levels):
            alive = set(np.unique(out[l][s:end]).tolist())
            state.sizes[l] = {k: v for k, v in state.sizes[l].items() if k in alive}
            state.ints[l] = {k: v for k, v in state.ints[l].items() if k in alive}
    tables = [extract_region_features(vol, seq, flows, config) for vol in out]
    return SegmentationHierarchy(levels=out, region_tables=tables)

"""Hierarchical affine motion-layer segmentation over supervoxel regions.

Per frame pair, regions seeded from the supervoxel segmentation get affine
models fitted to the backward flow by RANSAC.  Regions merge bottom-up when
their models explain each other's appearance: region i is warped into a fixed
p x q canonical patch once under its own model and once under the other
region's, and the directed divergence compares the two patches.  The merge
distance is the max of the two directions, so it is symmetric even though the
directed divergences generally are not.  An optional Potts-model smoothing
of the final labeling and forward-warp label association across frame pairs
complete the streaming driver.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .affine import AffineModel, apply_point_matrix, invert_point_map
from .graphcut import alpha_expansion, labeling_energy
from .imageops import bilinear_sample, luma_f64, round_half_up
from .rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)

DIVERGENCE_KAPPA = 64.0


@dataclass(frozen=True)
class RansacParams:
    inlier_tol: float = 0.5
    iterations: int = 200
    min_pixels: int = 12

    def __post_init__(self):
        if self.inlier_tol <= 0 or self.iterations < 1 or self.min_pixels < 3:
            raise ValueError("invalid RANSAC parameters")


@dataclass
class MotionRegion:
    id: int
    pixels: np.ndarray        # (n, 2) int columns (x, y)
    model: AffineModel

    @property
    def n(self) -> int:
        return len(self.pixels)


@dataclass
class CanonicalPatch:
    width: int
    height: int
    values: np.ndarray        # (height, width) grayscale
    valid_mask: np.ndarray    # (height, width) bool


@dataclass
class MotionHierarchy:
    levels: list              # per level: (labels (H, W), {label: AffineModel})
    tau_schedule: list


@dataclass
class MotionPairResult:
    pair: int                 # labeling lives on the grid of frame `pair`
    hierarchy: MotionHierarchy
    tracked_labels: np.ndarray
    tracked_models: dict


# ---------------------------------------------------------------- fitting

def fit_affine_ransac(pixels: np.ndarray, flow: np.ndarray, seed: int,
                      params: RansacParams = RansacParams()) -> AffineModel:
    """Fit u = a1+a2 x+a3 y, v = a4+a5 x+a6 y to the flow at the given pixels.

    Samples 3-pixel exact solutions from a seeded splitmix64 stream, keeps the
    largest inlier set (residual norm <= inlier_tol), and refits it by least
    squares.  Regions smaller than min_pixels get the translation-only model
    (mean flow); if every sample is collinear the whole region is fit directly.
    """
    pixels = np.asarray(pixels)
    if len(pixels) == 0:
        raise ValueError("cannot fit a model to an empty region")
    xs = pixels[:, 0].astype(np.float64)
    ys = pixels[:, 1].astype(np.float64)
    us = np.asarray(flow[pixels[:, 1], pixels[:, 0], 0], dtype=np.float64)
    vs = np.asarray(flow[pixels[:, 1], pixels[:, 0], 1], dtype=np.float64)
    n = len(pixels)
    if n < params.min_pixels:
        return AffineModel(a1=float(us.mean()), a4=float(vs.mean()))

    rng = SplitMix64(seed)
    best_count = -1
    best_inliers = None
    tol2 = params.inlier_tol ** 2
    for _ in range(params.iterations):
        i = rng.next_below(n)
        j = rng.next_below(n)
        while j == i:
            j = rng.next_below(n)
        k = rng.next_below(n)
        while k == i or k == j:
            k = rng.next_below(n)
        # twice the signed triangle area; zero means collinear
        area = ((xs[j] - xs[i]) * (ys[k] - ys[i])
                - (xs[k] - xs[i]) * (ys[j] - ys[i]))
        if area == 0.0:
            continue
        design = np.array([[1.0, xs[i], ys[i]],
                           [1.0, xs[j], ys[j]],
                           [1.0, xs[k], ys[k]]])
        rhs = np.array([[us[i], vs[i]], [us[j], vs[j]], [us[k], vs[k]]])
        coef = np.linalg.solve(design, rhs)
        mu = coef[0, 0] + coef[1, 0] * xs + coef[2, 0] * ys
        mv = coef[0, 1] + coef[1, 1] * xs + coef[2, 1] * ys
        resid2 = (mu - us) ** 2 + (mv - vs) ** 2
        count = int(np.count_nonzero(resid2 <= tol2))
        if count > best_count:
            best_count = count
            best_inliers = resid2 <= tol2
    if best_inliers is None:
        return AffineModel.fit_lstsq(xs, ys, us, vs)
    sel = best_inliers
    return AffineModel.fit_lstsq(xs[sel], ys[sel], us[sel], vs[sel])


# ---------------------------------------------------------------- canonical

def warp_to_canonical(frame_gray: np.ndarray, region: MotionRegion,
                      transform: AffineModel, p: int, q: int) -> CanonicalPatch:
    """Warp a region into the p x q canonical grid under `transform`.

    The region's pixels displaced by the transform define a bounding box that
    is mapped affinely onto the grid; every canonical pixel is bilinearly
    sampled at its preimage in the source frame.  Valid canonical pixels are
    those whose preimage falls inside the frame and (after rounding) inside
    the region.  A singular transform yields an all-invalid patch; a
    degenerate bounding box axis is treated as 1 px wide.
    """
    if p < 2 or q < 2:
        raise ValueError("canonical size must be at least 2x2")
    if region.n == 0:
        raise ValueError("empty region")
    h, w = frame_gray.shape
    xs = region.pixels[:, 0].astype(np.float64)
    ys = region.pixels[:, 1].astype(np.float64)
    u, v = transform.uv(xs, ys)
    dx = xs + u
    dy = ys + v
    x_lo, x_hi = float(dx.min()), float(dx.max())
    y_lo, y_hi = float(dy.min()), float(dy.max())
    # degenerate box axes get one pixel of extent; sub-pixel spans are floored
    # the same way so thin regions warp consistently under nearby models.
    # the widened span is centered on the box so that a frame-edge pixel lands
    # mid-strip instead of exactly on the validity boundary
    span_x = x_hi - x_lo
    span_y = y_hi - y_lo
    if span_x < 1.0:
        x_lo = 0.5 * (x_lo + x_hi) - 0.5
        span_x = 1.0
    if span_y < 1.0:
        y_lo = 0.5 * (y_lo + y_hi) - 0.5
        span_y = 1.0

    cx, cy = np.meshgrid(np.arange(p, dtype=np.float64),
                         np.arange(q, dtype=np.float64))
    gx = x_lo + cx * (span_x / (p - 1))
    gy = y_lo + cy * (span_y / (q - 1))
    try:
        inv = invert_point_map(transform)
    except ValueError:
        return CanonicalPatch(p, q, np.zeros((q, p)), np.zeros((q, p), dtype=bool))
    sx, sy = apply_point_matrix(inv, gx, gy)

    in_frame = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    member = np.zeros((h, w), dtype=bool)
    member[region.pixels[:, 1], region.pixels[:, 0]] = True
    rx = np.clip(round_half_up(sx).astype(np.int64), 0, w - 1)
    ry = np.clip(round_half_up(sy).astype(np.int64), 0, h - 1)
    valid = in_frame & member[ry, rx]
    values = np.where(valid, bilinear_sample(frame_gray, sx, sy), 0.0)
    return CanonicalPatch(p, q, values, valid)


def directed_divergence(region_i: MotionRegion, region_k: MotionRegion,
                        frame_gray: np.ndarray, p: int, q: int,
                        mode: str = "penalized") -> float:
    """How badly region k's model explains region i's content.

    Region i is warped to canonical coordinates under both models; the
    default form is the mean absolute patch difference over jointly valid
    pixels plus DIVERGENCE_KAPPA * (1 - joint/union), so identical models
    give exactly 0 and barely-overlapping warps are penalized.  mode
    "literal" instead divides the summed difference by region i's pixel
    count.  No jointly valid pixel gives +inf.
    """
    patch_a = warp_to_canonical(frame_gray, region_i, region_i.model, p, q)
    patch_b = warp_to_canonical(frame_gray, region_i, region_k.model, p, q)
    joint = patch_a.valid_mask & patch_b.valid_mask
    n_joint = int(np.count_nonzero(joint))
    if n_joint == 0:
        return float("inf")
    diff = float(np.abs(patch_a.values[joint] - patch_b.values[joint]).sum())
    if mode == "literal":
        return diff / region_i.n
    if mode != "penalized":
        raise ValueError(f"unknown divergence mode {mode!r}")
    n_union = int(np.count_nonzero(patch_a.valid_mask | patch_b.valid_mask))
    return diff / n_joint + DIVERGENCE_KAPPA * (1.0 - n_joint / n_union)


def region_distance(region_i: MotionRegion, region_k: MotionRegion,
                    frame_gray: np.ndarray, p: int, q: int,
                    mode: str = "penalized") -> float:
    """Symmetric merge distance: max of the two directed divergences."""
    return max(directed_divergence(region_i, region_k, frame_gray, p, q, mode),
               directed_divergence(region_k, region_i, frame_gray, p, q, mode))


# ---------------------------------------------------------------- merging

def _label_adjacency(labels: np.ndarray):
    """4-connected adjacency pairs between distinct labels."""
    pairs = set()
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        differ = a != b
        lo = np.minimum(a[differ], b[differ])
        hi = np.maximum(a[differ], b[differ])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return pairs


def merge_pass(regions: list, adjacency, tau: float, frame_gray: np.ndarray,
               flow: np.ndarray, p: int, q: int, seed: int,
               ransac: RansacParams = RansacParams(),
               mode: str = "penalized") -> list:
    """First-fit merging: scan regions ascending by id, merge the first
    adjacent region within tau, refit the merged model, and rescan; sweeps
    repeat until stable.  Returns the surviving regions, ascending by id."""
    by_id = {r.id: r for r in regions}
    neigh = {r.id: set() for r in regions}
    for a, b in adjacency:
        if a in neigh and b in neigh and a != b:
            neigh[a].add(b)
            neigh[b].add(a)
    merges = 0
    changed = True
    while changed:
        changed = False
        for rid in sorted(by_id):
            if rid not in by_id:
                continue
            rescan = True
            while rescan:
                rescan = False
                region = by_id[rid]
                for other_id in sorted(neigh[rid]):
                    other = by_id[other_id]
                    dist = region_distance(region, other, frame_gray, p, q, mode)
                    if dist <= tau:
                        keep, drop = min(rid, other_id), max(rid, other_id)
                        pixels = np.concatenate([by_id[keep].pixels,
                                                 by_id[drop].pixels])
                        model = fit_affine_ransac(
                            pixels, flow, derive_seed(seed, 3, merges), ransac)
                        merges += 1
                        merged_neigh = (neigh[keep] | neigh[drop]) - {keep, drop}
                        for nb in neigh[drop]:
                            neigh[nb].discard(drop)
                            if nb != keep:
                                neigh[nb].add(keep)
                        for nb in neigh[keep] - merged_neigh:
                            neigh[nb].discard(keep)
                        del by_id[drop], neigh[drop]
                        by_id[keep] = MotionRegion(keep, pixels, model)
                        neigh[keep] = merged_neigh
                        rid = keep
                        changed = True
                        rescan = True
                        break
    return [by_id[rid] for rid in sorted(by_id)]


def _regions_from_labels(labels: np.ndarray, flow: np.ndarray, seed: int,
                         ransac: RansacParams):
    """Connected components of the labeling, each with a fitted model.

    Component ids follow first occurrence in row-major scan order.
    """
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int64)
    next_id = 0
    for lab in np.unique(labels):
        cc, num = ndimage.label(labels == lab)
        for c in range(1, num + 1):
            comp[cc == c] = next_id
            next_id += 1
    # renumber by first occurrence so ids are scan-order deterministic
    flat = comp.ravel()
    _, first, inv = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    comp = rank[inv].reshape(h, w).astype(np.int64)
    regions = []
    for rid in range(comp.max() + 1):
        ys, xs = np.nonzero(comp == rid)
        pixels = np.column_stack([xs, ys]).astype(np.int64)
        model = fit_affine_ransac(pixels, flow, derive_seed(seed, 1, rid), ransac)
        regions.append(MotionRegion(int(rid), pixels, model))
    return comp, regions


def _labels_of(regions: list, shape) -> np.ndarray:
    out = np.full(shape, -1, dtype=np.int64)
    for r in regions:
        out[r.pixels[:, 1], r.pixels[:, 0]] = r.id
    return out


def clean_small_components(labels: np.ndarray, min_region: int,
                           affinity: np.ndarray = None) -> np.ndarray:
    """Absorb connected components smaller than min_region into a 4-adjacent
    component, preferring neighbors that agree with `affinity` (an auxiliary
    labeling: fragments sliced off a cell of it rejoin that cell first), then
    longest shared boundary, then lower component id.

    Slicing a volumetric segmentation by one frame leaves fragments far below
    any minimum size the segmentation itself guarantees; those fragments are
    too small to carry a meaningful motion model, so they are merged by shape
    before any model is fitted.  Smallest component first; ids follow
    first occurrence in row-major scan order.
    """
    h, w = labels.shape
    comp = np.full((h, w), -1, dtype=np.int64)
    next_id = 0
    for lab in np.unique(labels):
        cc, num = ndimage.label(labels == lab)
        for c in range(1, num + 1):
            comp[cc == c] = next_id
            next_id += 1
    while True:
        sizes = np.bincount(comp.ravel(), minlength=next_id)
        live = np.nonzero(sizes)[0]
        small = live[sizes[live] < min_region]
        if small.size == 0 or live.size == 1:
            break
        order = np.argsort(sizes[small], kind="stable")
        tgt = int(small[order[0]])
        mask = comp == tgt
        border = np.zeros(next_id, dtype=np.int64)
        border_aff = np.zeros(next_id, dtype=np.int64)
        for axis, side in ((0, 1), (0, -1), (1, 1), (1, -1)):
            nb = np.roll(comp, side, axis=axis)
            if axis == 0:
                nb[0 if side == 1 else -1, :] = tgt
            else:
                nb[:, 0 if side == 1 else -1] = tgt
            touched = nb[mask]
            outside = touched != tgt
            border += np.bincount(touched[outside], minlength=next_id)
            if affinity is not None:
                aff_nb = np.roll(affinity, side, axis=axis)
                if axis == 0:
                    aff_nb[0 if side == 1 else -1, :] = -1
                else:
                    aff_nb[:, 0 if side == 1 else -1] = -1
                same = outside & (aff_nb[mask] == affinity[mask])
                border_aff += np.bincount(touched[same], minlength=next_id)
        if not border.any():
            break
        best = int(np.argmax(border_aff)) if border_aff.any() else int(np.argmax(border))
        comp[mask] = best
    flat = comp.ravel()
    _, first, inv = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return rank[inv].reshape(h, w).astype(np.int64)


def motion_hierarchy(init_labels: np.ndarray, frame: np.ndarray,
                     flow: np.ndarray, schedule, p: int = 64, q: int = 64,
                     seed: int = 0, ransac: RansacParams = RansacParams(),
                     mode: str = "penalized") -> MotionHierarchy:
    """Level 0 = connected components of init_labels with RANSAC models;
    level l+1 = merge_pass of level l at tau = schedule[l]."""
    schedule = list(schedule)
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("tau schedule must be strictly increasing")
    frame_gray = luma_f64(frame) if frame.ndim == 3 else frame.astype(np.float64)
    comp, regions = _regions_from_labels(init_labels, flow, seed, ransac)
    levels = [(comp, {r.id: r.model for r in regions})]
    for li, tau in enumerate(schedule):
        adjacency = _label_adjacency(_labels_of(regions, comp.shape))
        regions = merge_pass(regions, adjacency, tau, frame_gray, flow, p, q,
                             derive_seed(seed, 2, li), ransac, mode)
        levels.append((_labels_of(regions, comp.shape),
                       {r.id: r.model for r in regions}))
    return MotionHierarchy(levels=levels, tau_schedule=schedule)


# ---------------------------------------------------------------- MRF

def mrf_smooth(labels: np.ndarray, models: dict, frame_pair, lam: float) -> np.ndarray:
    """Potts smoothing of a motion labeling.

    frame_pair is (previous, current) in time order; the data cost of label l
    at pixel x is |current(x) - previous(x + uv_l(x))| on grayscale with
    bilinear sampling, 255 where the sample leaves the frame.  lambda weights
    the 4-neighbor boundary penalty.  Returns the relabeled frame; label ids
    are preserved.
    """
    prev, cur = frame_pair
    prev_gray = luma_f64(prev) if prev.ndim == 3 else prev.astype(np.float64)
    cur_gray = luma_f64(cur) if cur.ndim == 3 else cur.astype(np.float64)
    h, w = labels.shape
    ids = sorted(models)
    missing = set(np.unique(labels).tolist()) - set(ids)
    if missing:
        raise ValueError(f"labels without a model: {sorted(missing)}")
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    costs = np.empty((len(ids), h, w))
    for i, lab in enumerate(ids):
        u, v = models[lab].uv(xs, ys)
        px = xs + u
        py = ys + v
        inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
        warped = bilinear_sample(prev_gray, px, py)
        costs[i] = np.where(inside, np.abs(cur_gray - warped), 255.0)
    to_index = {lab: i for i, lab in enumerate(ids)}
    init = np.vectorize(to_index.get, otypes=[np.int64])(labels)
    out = alpha_expansion(costs, lam, init)
    back = np.array(ids, dtype=np.int64)
    return back[out]


def motion_energy(labels: np.ndarray, models: dict, frame_pair, lam: float) -> float:
    """Energy of a labeling under mrf_smooth's objective (for assertions)."""
    prev, cur = frame_pair
    prev_gray = luma_f64(prev) if prev.ndim == 3 else prev.astype(np.float64)
    cur_gray = luma_f64(cur) if cur.ndim == 3 else cur.astype(np.float64)
    h, w = labels.shape
    ids = sorted(models)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    costs = np.empty((len(ids), h, w))
    for i, lab in enumerate(ids):
        u, v = models[lab].uv(xs, ys)
        px = xs + u
        py = ys + v
        inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
        costs[i] = np.where(inside, np.abs(cur_gray - bilinear_sample(prev_gray, px, py)), 255.0)
    to_index = {lab: i for i, lab in enumerate(ids)}
    idx = np.vectorize(to_index.get, otypes=[np.int64])(labels)
    return labeling_energy(idx, costs, lam)


# ---------------------------------------------------------------- tracking

def _forward_rasterize(labels: np.ndarray, models: dict, shape) -> np.ndarray:
    """Push every region one frame forward through its model's inverse point
    map; first write wins.  Smaller regions write first so that a moving
    object keeps its leading edge when it collides with the background's
    rasterization (foreground occludes).  Unclaimed pixels get -1."""
    out = np.full(shape, -1, dtype=np.int64)
    h, w = shape
    sizes = {lab: int(np.count_nonzero(labels == lab)) for lab in models}
    for lab in sorted(models, key=lambda l: (sizes[l], l)):
        mask = labels == lab
        if not mask.any():
            continue
        try:
            fwd = invert_point_map(models[lab])
        except ValueError:
            log.warning("label %d has a singular model; not warped", lab)
            continue
        ys, xs = np.nonzero(mask)
        px, py = apply_point_matrix(fwd, xs.astype(np.float64), ys.astype(np.float64))
        ix = round_half_up(px).astype(np.int64)
        iy = round_half_up(py).astype(np.int64)
        ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        ix, iy = ix[ok], iy[ok]
        empty = out[iy, ix] == -1
        out[iy[empty], ix[empty]] = lab
    return out


def associate_temporal(prev_labels: np.ndarray, cur_labels: np.ndarray,
                       prev_models: dict, next_fresh: int,
                       overlap_frac: float = 0.3):
    """Map current-pair region labels onto the previous pair's labels.

    Previous regions are forward-warped by their models; each current region
    adopts the previous label with maximal overlap if that overlap is at
    least overlap_frac of the region's area.  The mapping is injective: a
    previous label contested by several regions goes to the largest overlap
    (ties to the lower current label), everyone else gets fresh labels from
    next_fresh upward.  Returns (mapping dict, advanced next_fresh).
    """
    warped = _forward_rasterize(prev_labels, prev_models, cur_labels.shape)
    cur_ids = [int(c) for c in np.unique(cur_labels)]
    claims = {}
    for cid in cur_ids:
        mask = cur_labels == cid
        area = int(np.count_nonzero(mask))
        hit = warped[mask]
        hit = hit[hit >= 0]
        if hit.size:
            vals, counts = np.unique(hit, return_counts=True)
            best = int(np.argmax(counts))   # ties: np.unique sorts, so lower label
            if counts[best] >= overlap_frac * area:
                claims[cid] = (int(vals[best]), int(counts[best]))
    winners = {}
    for cid in sorted(claims):
        prev_lab, count = claims[cid]
        cur_best = winners.get(prev_lab)
        if cur_best is None or count > cur_best[1]:
            winners[prev_lab] = (cid, count)
    mapping = {}
    taken = {prev_lab: cid for prev_lab, (cid, _) in winners.items()}
    for cid in cur_ids:
        assigned = None
        if cid in claims and taken.get(claims[cid][0]) == cid:
            assigned = claims[cid][0]
        if assigned is None:
            assigned = next_fresh
            next_fresh += 1
        mapping[cid] = assigned
    return mapping, next_fresh


def run_motion_stream(seq: np.ndarray, flows, supervoxels, level_pick: int,
                      schedule, p: int = 64, q: int = 64,
                      ransac: RansacParams = RansacParams(),
                      mrf_lambda: float = 8.0, use_mrf: bool = False,
                      seed: int = 0, mode: str = "penalized",
                      min_region: int = 12) -> list:
    """Motion-layer segmentation per frame pair with consistent labels.

    Pair t (grid of frame t, t in [1, T-1]) is initialized from the
    supervoxel slice at frame 1 for the first pair; afterwards from the
    forward-warped previous result (holes filled from the nearest labeled
    pixel) refined by the supervoxel slice at frame t, so region boundaries
    are re-derived from appearance every pair instead of accumulating
    rasterization error.  The top hierarchy level, optionally MRF-smoothed,
    is associated with the previous pair's output to keep object labels
    stable.
    """
    seq = np.asarray(seq)
    if seq.shape[0] < 2:
        raise ValueError("need at least two frames")
    if len(flows) != seq.shape[0] - 1:
        raise ValueError("need one flow field per consecutive frame pair")
    results = []
    prev_tracked = None
    prev_models = None
    next_fresh = 0
    for t in range(1, seq.shape[0]):
        flow = np.asarray(flows[t - 1], dtype=np.float64)
        sv_slice = np.asarray(supervoxels.levels[level_pick][t]).astype(np.int64)
        if prev_tracked is None:
            init = sv_slice
        else:
            warped = _forward_rasterize(prev_tracked, prev_models,
                                        prev_tracked.shape)
            if (warped < 0).any():
                _, (iy, ix) = ndimage.distance_transform_edt(
                    warped < 0, return_indices=True)
                warped = warped[iy, ix]
            # refine the warped labeling with the current supervoxel slice:
            # cells of the intersection keep the warp's motion identity but
            # their boundaries come from the frame's own segmentation
            init = warped * (int(sv_slice.max()) + 1) + sv_slice
        if min_region > 1:
            init = clean_small_components(init, min_region, affinity=sv_slice)
        hier = motion_hierarchy(init, seq[t], flow, schedule, p, q,
                                derive_seed(seed, 4, t), ransac, mode)
        top_labels, top_models = hier.levels[-1]
        if use_mrf and len(top_models) > 1:
            top_labels = mrf_smooth(top_labels, top_models,
                                    (seq[t - 1], seq[t]), mrf_lambda)
            top_models = {lab: top_models[lab]
                          for lab in np.unique(top_labels).tolist()}
        if prev_tracked is None:
            tracked = top_labels
            tracked_models = dict(top_models)
            next_fresh = max(tracked_models, default=-1) + 1
        else:
            mapping, next_fresh = associate_temporal(
                prev_tracked, top_labels, prev_models, next_fresh)
            lut_src = np.array(sorted(mapping), dtype=np.int64)
            lut_dst = np.array([mapping[k] for k in sorted(mapping)], dtype=np.int64)
            pos = np.searchsorted(lut_src, top_labels)
            tracked = lut_dst[pos]
            tracked_models = {mapping[k]: m for k, m in top_models.items()}
        results.append(MotionPairResult(pair=t, hierarchy=hier,
                                        tracked_labels=tracked,
                                        tracked_models=tracked_models))
        prev_tracked = tracked
        prev_models = tracked_models
    return results
